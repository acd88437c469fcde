#pragma once

#include <optional>
#include <vector>

#include "redout/autodiff.hpp"
#include "redout/matrix.hpp"

namespace redout {

struct LossConfig {
  double tau = 0.2;        // contrastive temperature
  double lambda = 0.01;    // trade-off between the two terms
  double epsilon = 1e-12;  // floor inside logs of empirical means
};

struct ScoreReport {
  std::vector<double> per_graph_score;  // higher means more likely OOD
  std::optional<std::vector<bool>> is_ood;
  std::optional<double> auc;
};

struct LossValue {
  double scalar = 0.0;
  std::vector<double> per_sample;
};

/// dot(a,b) / (|a| |b|); zero vectors give 0 with a warning.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

/// Contrastive loss with positives sim(alpha_i, beta_i) and negatives drawn
/// within the alpha view:
///   term_i = -log( e^{sim(a_i,b_i)/tau} / sum_{j!=i} e^{sim(a_i,a_j)/tau} )
/// Tape variant returns N x 1 per-sample terms; gradients flow through both
/// inputs. Plain variant evaluates on a scratch tape.
Value info_nce_per_sample(Tape& tape, Value z_alpha, Value z_beta, double tau);
LossValue info_nce(const DenseMatrix& z_alpha, const DenseMatrix& z_beta, double tau);

/// Row-wise argmax (softmax is monotone); ties go to the lowest index.
std::vector<int> pseudo_labels(const DenseMatrix& z_graph);

/// Conditional redundancy terms:
///   term_i = sim(Z_i, ZT_i) - log( mean_{j in pool(i)} e^{sim(Z_j, ZT_i)} )
/// with pool(i) the same-pseudo-label group excluding i (singleton groups
/// fall back to the whole batch). No temperature inside the similarities.
Value cri_per_sample(Tape& tape, Value z_graph, Value z_tree, const std::vector<int>& labels,
                     double epsilon);
LossValue cri_loss(const DenseMatrix& z_graph, const DenseMatrix& z_tree,
                   const std::vector<int>& labels, double epsilon = 1e-12);

/// L = L_Cl + lambda * L_CRI, with the per-sample decomposition used as the
/// per-graph OOD score. Throws NumericError naming the non-finite term.
LossValue total_loss(const LossValue& l_cl, const LossValue& l_cri, double lambda);

}  // namespace redout
