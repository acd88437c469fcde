#include "redout/losses.hpp"

#include <cmath>

#include "redout/nn.hpp"

namespace redout {

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) {
    warn("cosine_similarity: zero vector, similarity set to 0");
    return 0.0;
  }
  return dot(a, b) / (na * nb);
}

Value info_nce_per_sample(Tape& tape, Value z_alpha, Value z_beta, double tau) {
  if (z_alpha.rows() < 2) throw std::invalid_argument("info_nce: batch must have N >= 2");
  if (z_alpha.rows() != z_beta.rows() || z_alpha.cols() != z_beta.cols())
    throw std::invalid_argument("info_nce: view shapes differ");
  Value an = tape.normalize_rows(z_alpha);
  Value bn = tape.normalize_rows(z_beta);
  Value cross = tape.diagonal(tape.matmul_nt(an, bn));  // positive-pair sims
  Value self = tape.matmul_nt(an, an);                  // within-view sims
  return tape.info_nce_terms(cross, self, tau);
}

LossValue info_nce(const DenseMatrix& z_alpha, const DenseMatrix& z_beta, double tau) {
  Tape tape;
  Value terms = info_nce_per_sample(tape, tape.constant(z_alpha), tape.constant(z_beta), tau);
  LossValue out;
  out.per_sample = terms.matrix().data();
  double s = 0.0;
  for (double v : out.per_sample) s += v;
  out.scalar = s / static_cast<double>(out.per_sample.size());
  return out;
}

std::vector<int> pseudo_labels(const DenseMatrix& z_graph) {
  std::vector<int> labels(z_graph.rows());
  for (int i = 0; i < z_graph.rows(); ++i) {
    int best = 0;
    for (int j = 1; j < z_graph.cols(); ++j)
      if (z_graph.at(i, j) > z_graph.at(i, best)) best = j;
    labels[i] = best;
  }
  return labels;
}

Value cri_per_sample(Tape& tape, Value z_graph, Value z_tree, const std::vector<int>& labels,
                     double epsilon) {
  if (z_graph.rows() < 1) throw std::invalid_argument("cri_loss: empty batch");
  if (z_graph.rows() != z_tree.rows() || z_graph.cols() != z_tree.cols())
    throw std::invalid_argument("cri_loss: view shapes differ");
  Value gn = tape.normalize_rows(z_graph);
  Value tn = tape.normalize_rows(z_tree);
  // sims[a][b] = sim(Z_a, ZT_b): anchor tree embedding in the columns.
  Value sims = tape.matmul_nt(gn, tn);
  return tape.cri_terms(sims, labels, epsilon);
}

LossValue cri_loss(const DenseMatrix& z_graph, const DenseMatrix& z_tree,
                   const std::vector<int>& labels, double epsilon) {
  Tape tape;
  Value terms =
      cri_per_sample(tape, tape.constant(z_graph), tape.constant(z_tree), labels, epsilon);
  LossValue out;
  out.per_sample = terms.matrix().data();
  double s = 0.0;
  for (double v : out.per_sample) s += v;
  out.scalar = s / static_cast<double>(out.per_sample.size());
  return out;
}

LossValue total_loss(const LossValue& l_cl, const LossValue& l_cri, double lambda) {
  if (l_cl.per_sample.size() != l_cri.per_sample.size())
    throw std::invalid_argument("total_loss: per-sample vectors not aligned");
  for (double v : l_cl.per_sample)
    if (!std::isfinite(v)) throw NumericError("total_loss: contrastive term not finite");
  for (double v : l_cri.per_sample)
    if (!std::isfinite(v)) throw NumericError("total_loss: conditional-redundancy term not finite");
  LossValue out;
  out.per_sample.resize(l_cl.per_sample.size());
  for (size_t i = 0; i < out.per_sample.size(); ++i)
    out.per_sample[i] = l_cl.per_sample[i] + lambda * l_cri.per_sample[i];
  out.scalar = l_cl.scalar + lambda * l_cri.scalar;
  return out;
}

}  // namespace redout
