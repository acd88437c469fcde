#include "redout/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace redout {

const DenseMatrix& Value::matrix() const { return tape->value_of(*this); }
const DenseMatrix& Value::grad() const { return tape->nodes_[id].grad; }

double Value::scalar() const {
  const DenseMatrix& m = matrix();
  if (m.rows() != 1 || m.cols() != 1) throw std::invalid_argument("Value::scalar: not 1x1");
  return m.at(0, 0);
}

Value Tape::push(DenseMatrix value, bool requires_grad, std::function<void()> backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Value{this, static_cast<int>(nodes_.size()) - 1};
}

Value Tape::leaf(DenseMatrix m, bool requires_grad) {
  return push(std::move(m), requires_grad, nullptr);
}

void Tape::backward(Value loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: value from another tape");
  const DenseMatrix& lv = value_of(loss);
  if (lv.rows() != 1 || lv.cols() != 1) throw std::invalid_argument("backward: loss must be 1x1");
  for (auto& n : nodes_)
    if (n.requires_grad && n.grad.empty()) n.grad = DenseMatrix(n.value.rows(), n.value.cols());
  nodes_[loss.id].grad = DenseMatrix(1, 1, 1.0);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.requires_grad && n.backward) n.backward();
  }
}

void Tape::clear() { nodes_.clear(); }

namespace {
inline void accumulate(DenseMatrix& into, const DenseMatrix& inc) { into += inc; }
}  // namespace

Value Tape::add(Value a, Value b) {
  DenseMatrix out = value_of(a);
  out += value_of(b);
  bool rg = needs(a) || needs(b);
  Value r{this, size()};
  return push(std::move(out), rg, [this, a, b, r]() {
    const DenseMatrix& g = grad_of(r);
    if (needs(a)) accumulate(grad_of(a), g);
    if (needs(b)) accumulate(grad_of(b), g);
  });
}

Value Tape::sub(Value a, Value b) {
  DenseMatrix out = value_of(a);
  out -= value_of(b);
  bool rg = needs(a) || needs(b);
  Value r{this, size()};
  return push(std::move(out), rg, [this, a, b, r]() {
    const DenseMatrix& g = grad_of(r);
    if (needs(a)) accumulate(grad_of(a), g);
    if (needs(b)) {
      DenseMatrix neg = g;
      neg *= -1.0;
      accumulate(grad_of(b), neg);
    }
  });
}

Value Tape::scale(Value a, double s) {
  DenseMatrix out = value_of(a);
  out *= s;
  Value r{this, size()};
  return push(std::move(out), needs(a), [this, a, s, r]() {
    DenseMatrix g = grad_of(r);
    g *= s;
    accumulate(grad_of(a), g);
  });
}

Value Tape::matmul(Value a, Value b) {
  DenseMatrix out = redout::matmul(value_of(a), value_of(b));
  bool rg = needs(a) || needs(b);
  Value r{this, size()};
  return push(std::move(out), rg, [this, a, b, r]() {
    const DenseMatrix& g = grad_of(r);
    if (needs(a)) accumulate(grad_of(a), redout::matmul_nt(g, value_of(b)));
    if (needs(b)) accumulate(grad_of(b), redout::matmul_tn(value_of(a), g));
  });
}

Value Tape::matmul_nt(Value a, Value b) {
  DenseMatrix out = redout::matmul_nt(value_of(a), value_of(b));
  bool rg = needs(a) || needs(b);
  Value r{this, size()};
  return push(std::move(out), rg, [this, a, b, r]() {
    const DenseMatrix& g = grad_of(r);
    if (needs(a)) accumulate(grad_of(a), redout::matmul(g, value_of(b)));
    if (needs(b)) accumulate(grad_of(b), redout::matmul_tn(g, value_of(a)));
  });
}

Value Tape::add_rowvec(Value m, Value bias) {
  const DenseMatrix& mm = value_of(m);
  const DenseMatrix& bb = value_of(bias);
  if (bb.rows() != 1 || bb.cols() != mm.cols())
    throw std::invalid_argument("add_rowvec: bias must be 1 x cols");
  DenseMatrix out = mm;
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out.at(i, j) += bb.at(0, j);
  bool rg = needs(m) || needs(bias);
  Value r{this, size()};
  return push(std::move(out), rg, [this, m, bias, r]() {
    const DenseMatrix& g = grad_of(r);
    if (needs(m)) accumulate(grad_of(m), g);
    if (needs(bias)) accumulate(grad_of(bias), colsum(g));
  });
}

Value Tape::relu(Value a) {
  DenseMatrix out = value_of(a);
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  Value r{this, size()};
  return push(std::move(out), needs(a), [this, a, r]() {
    const DenseMatrix& g = grad_of(r);
    const DenseMatrix& in = value_of(a);
    DenseMatrix ga(in.rows(), in.cols());
    for (size_t i = 0; i < ga.data().size(); ++i)
      ga.data()[i] = in.data()[i] > 0.0 ? g.data()[i] : 0.0;
    accumulate(grad_of(a), ga);
  });
}

Value Tape::mean_all(Value a) {
  const DenseMatrix& m = value_of(a);
  double s = 0.0;
  for (double v : m.data()) s += v;
  const double inv = m.size() > 0 ? 1.0 / static_cast<double>(m.size()) : 0.0;
  DenseMatrix out(1, 1, s * inv);
  Value r{this, size()};
  return push(std::move(out), needs(a), [this, a, r, inv]() {
    const double g = grad_of(r).at(0, 0) * inv;
    DenseMatrix ga(value_of(a).rows(), value_of(a).cols(), g);
    accumulate(grad_of(a), ga);
  });
}

Value Tape::mean_rows(Value a) {
  DenseMatrix out = colmean(value_of(a));
  const int rows = value_of(a).rows();
  Value r{this, size()};
  return push(std::move(out), needs(a), [this, a, r, rows]() {
    const DenseMatrix& g = grad_of(r);
    DenseMatrix ga(rows, g.cols());
    const double inv = rows > 0 ? 1.0 / rows : 0.0;
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < g.cols(); ++j) ga.at(i, j) = g.at(0, j) * inv;
    accumulate(grad_of(a), ga);
  });
}

Value Tape::concat_cols(const std::vector<Value>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int rows = value_of(parts[0]).rows();
  int cols = 0;
  for (Value p : parts) {
    if (value_of(p).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += value_of(p).cols();
  }
  DenseMatrix out(rows, cols);
  int off = 0;
  for (Value p : parts) {
    const DenseMatrix& m = value_of(p);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < m.cols(); ++j) out.at(i, off + j) = m.at(i, j);
    off += m.cols();
  }
  bool rg = false;
  for (Value p : parts) rg = rg || needs(p);
  std::vector<Value> saved = parts;
  Value r{this, size()};
  return push(std::move(out), rg, [this, saved, r]() {
    const DenseMatrix& g = grad_of(r);
    int off2 = 0;
    for (Value p : saved) {
      const int pc = value_of(p).cols();
      if (needs(p)) {
        DenseMatrix gp(g.rows(), pc);
        for (int i = 0; i < g.rows(); ++i)
          for (int j = 0; j < pc; ++j) gp.at(i, j) = g.at(i, off2 + j);
        accumulate(grad_of(p), gp);
      }
      off2 += pc;
    }
  });
}

Value Tape::stack_rows(const std::vector<Value>& parts) {
  if (parts.empty()) throw std::invalid_argument("stack_rows: no parts");
  const int cols = value_of(parts[0]).cols();
  DenseMatrix out(static_cast<int>(parts.size()), cols);
  for (size_t i = 0; i < parts.size(); ++i) {
    const DenseMatrix& m = value_of(parts[i]);
    if (m.rows() != 1 || m.cols() != cols) throw std::invalid_argument("stack_rows: need 1 x d rows");
    for (int j = 0; j < cols; ++j) out.at(static_cast<int>(i), j) = m.at(0, j);
  }
  bool rg = false;
  for (Value p : parts) rg = rg || needs(p);
  std::vector<Value> saved = parts;
  Value r{this, size()};
  return push(std::move(out), rg, [this, saved, r]() {
    const DenseMatrix& g = grad_of(r);
    for (size_t i = 0; i < saved.size(); ++i) {
      if (!needs(saved[i])) continue;
      DenseMatrix gp(1, g.cols());
      for (int j = 0; j < g.cols(); ++j) gp.at(0, j) = g.at(static_cast<int>(i), j);
      accumulate(grad_of(saved[i]), gp);
    }
  });
}

Value Tape::neighbor_sum(Value h, const Graph& graph) {
  const DenseMatrix& m = value_of(h);
  if (m.rows() != graph.node_count())
    throw std::invalid_argument("neighbor_sum: rows != node count");
  DenseMatrix out(m.rows(), m.cols());
  for (int v = 0; v < graph.node_count(); ++v) {
    double* ov = out.row(v);
    for (int u : graph.neighbors(v)) {
      const double* mu = m.row(u);
      for (int j = 0; j < m.cols(); ++j) ov[j] += mu[j];
    }
  }
  Value r{this, size()};
  // The adjacency operator is symmetric, so the backward pass is the same sum.
  return push(std::move(out), needs(h), [this, h, &graph, r]() {
    const DenseMatrix& g = grad_of(r);
    DenseMatrix gh(g.rows(), g.cols());
    for (int v = 0; v < graph.node_count(); ++v) {
      double* gv = gh.row(v);
      for (int u : graph.neighbors(v)) {
        const double* gu = g.row(u);
        for (int j = 0; j < g.cols(); ++j) gv[j] += gu[j];
      }
    }
    accumulate(grad_of(h), gh);
  });
}

Value Tape::group_sum_rows(Value h, std::vector<std::vector<int>> groups) {
  const DenseMatrix& m = value_of(h);
  DenseMatrix out(static_cast<int>(groups.size()), m.cols());
  for (size_t t = 0; t < groups.size(); ++t)
    for (int src : groups[t]) {
      const double* ms = m.row(src);
      double* ot = out.row(static_cast<int>(t));
      for (int j = 0; j < m.cols(); ++j) ot[j] += ms[j];
    }
  Value r{this, size()};
  auto saved = std::make_shared<std::vector<std::vector<int>>>(std::move(groups));
  return push(std::move(out), needs(h), [this, h, saved, r]() {
    const DenseMatrix& g = grad_of(r);
    DenseMatrix gh(value_of(h).rows(), g.cols());
    for (size_t t = 0; t < saved->size(); ++t)
      for (int src : (*saved)[t]) {
        const double* gt = g.row(static_cast<int>(t));
        double* gs = gh.row(src);
        for (int j = 0; j < g.cols(); ++j) gs[j] += gt[j];
      }
    accumulate(grad_of(h), gh);
  });
}

Value Tape::gather_rows(Value h, std::vector<int> rows) {
  const DenseMatrix& m = value_of(h);
  DenseMatrix out(static_cast<int>(rows.size()), m.cols());
  for (size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < m.cols(); ++j) out.at(static_cast<int>(i), j) = m.at(rows[i], j);
  Value r{this, size()};
  auto saved = std::make_shared<std::vector<int>>(std::move(rows));
  return push(std::move(out), needs(h), [this, h, saved, r]() {
    const DenseMatrix& g = grad_of(r);
    DenseMatrix gh(value_of(h).rows(), g.cols());
    for (size_t i = 0; i < saved->size(); ++i)
      for (int j = 0; j < g.cols(); ++j) gh.at((*saved)[i], j) += g.at(static_cast<int>(i), j);
    accumulate(grad_of(h), gh);
  });
}

Value Tape::diagonal(Value m) {
  const DenseMatrix& mm = value_of(m);
  if (mm.rows() != mm.cols()) throw std::invalid_argument("diagonal: matrix not square");
  DenseMatrix out(mm.rows(), 1);
  for (int i = 0; i < mm.rows(); ++i) out.at(i, 0) = mm.at(i, i);
  Value r{this, size()};
  return push(std::move(out), needs(m), [this, m, r]() {
    const DenseMatrix& g = grad_of(r);
    DenseMatrix gm(g.rows(), g.rows());
    for (int i = 0; i < g.rows(); ++i) gm.at(i, i) = g.at(i, 0);
    accumulate(grad_of(m), gm);
  });
}

Value Tape::normalize_rows(Value a) {
  const DenseMatrix& m = value_of(a);
  DenseMatrix out = m;
  std::vector<double> norms(m.rows(), 0.0);
  int zero_rows = 0;
  for (int i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < m.cols(); ++j) s += m.at(i, j) * m.at(i, j);
    norms[i] = std::sqrt(s);
    if (norms[i] == 0.0) {
      ++zero_rows;
      continue;
    }
    for (int j = 0; j < m.cols(); ++j) out.at(i, j) /= norms[i];
  }
  if (zero_rows > 0)
    warn("normalize_rows: " + std::to_string(zero_rows) +
         " zero embedding row(s), similarity treated as 0");
  Value r{this, size()};
  auto saved = std::make_shared<std::vector<double>>(std::move(norms));
  return push(std::move(out), needs(a), [this, a, saved, r]() {
    // d/dx (x/||x||) = (g - y (y . g)) / ||x||  with y the normalized row.
    const DenseMatrix& g = grad_of(r);
    const DenseMatrix& y = value_of(r);
    DenseMatrix ga(g.rows(), g.cols());
    for (int i = 0; i < g.rows(); ++i) {
      const double norm = (*saved)[i];
      if (norm == 0.0) continue;
      double yg = 0.0;
      for (int j = 0; j < g.cols(); ++j) yg += y.at(i, j) * g.at(i, j);
      for (int j = 0; j < g.cols(); ++j)
        ga.at(i, j) = (g.at(i, j) - y.at(i, j) * yg) / norm;
    }
    accumulate(grad_of(a), ga);
  });
}

Value Tape::squared_norm(Value a) {
  const DenseMatrix& m = value_of(a);
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  Value r{this, size()};
  return push(DenseMatrix(1, 1, s), needs(a), [this, a, r]() {
    const double g = grad_of(r).at(0, 0);
    DenseMatrix ga = value_of(a);
    ga *= 2.0 * g;
    accumulate(grad_of(a), ga);
  });
}

Value Tape::info_nce_terms(Value cross, Value self, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("info_nce_terms: tau must be positive");
  const DenseMatrix& c = value_of(cross);
  const DenseMatrix& s = value_of(self);
  const int n = s.rows();
  if (s.cols() != n || c.rows() != n || c.cols() != 1)
    throw std::invalid_argument("info_nce_terms: want N x 1 cross and N x N self");
  if (n < 2) throw std::invalid_argument("info_nce_terms: batch must have at least 2 samples");

  DenseMatrix out(n, 1);
  DenseMatrix softmax(n, n);  // off-diagonal negative weights, saved for backward
  for (int i = 0; i < n; ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j)
      if (j != i) row_max = std::max(row_max, s.at(i, j) / tau);
    double z = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) z += std::exp(s.at(i, j) / tau - row_max);
    for (int j = 0; j < n; ++j)
      if (j != i) softmax.at(i, j) = std::exp(s.at(i, j) / tau - row_max) / z;
    out.at(i, 0) = -c.at(i, 0) / tau + std::log(z) + row_max;
  }
  bool rg = needs(cross) || needs(self);
  Value r{this, size()};
  auto sm = std::make_shared<DenseMatrix>(std::move(softmax));
  return push(std::move(out), rg, [this, cross, self, tau, sm, r]() {
    const DenseMatrix& g = grad_of(r);
    const int nn = g.rows();
    if (needs(cross)) {
      DenseMatrix gc(nn, 1);
      for (int i = 0; i < nn; ++i) gc.at(i, 0) = -g.at(i, 0) / tau;
      accumulate(grad_of(cross), gc);
    }
    if (needs(self)) {
      DenseMatrix gs(nn, nn);
      for (int i = 0; i < nn; ++i)
        for (int j = 0; j < nn; ++j)
          if (j != i) gs.at(i, j) = g.at(i, 0) * sm->at(i, j) / tau;
      accumulate(grad_of(self), gs);
    }
  });
}

std::vector<std::vector<int>> cri_negative_pools(const std::vector<int>& labels) {
  const int n = static_cast<int>(labels.size());
  std::vector<std::vector<int>> by_label;
  {
    std::vector<std::pair<int, int>> order;  // (label, index)
    order.reserve(n);
    for (int i = 0; i < n; ++i) order.emplace_back(labels[i], i);
    std::sort(order.begin(), order.end());
    for (int i = 0; i < n; ++i) {
      if (i == 0 || order[i].first != order[i - 1].first) by_label.emplace_back();
      by_label.back().push_back(order[i].second);
    }
    for (auto& g : by_label) std::sort(g.begin(), g.end());
  }
  std::vector<int> group_of(n);
  for (size_t gi = 0; gi < by_label.size(); ++gi)
    for (int i : by_label[gi]) group_of[i] = static_cast<int>(gi);

  std::vector<std::vector<int>> pools(n);
  for (int i = 0; i < n; ++i) {
    const auto& group = by_label[group_of[i]];
    if (group.size() >= 2) {
      for (int j : group)
        if (j != i) pools[i].push_back(j);
    } else if (n >= 2) {
      for (int j = 0; j < n; ++j)
        if (j != i) pools[i].push_back(j);
    } else {
      pools[i].push_back(i);
    }
  }
  return pools;
}

Value Tape::cri_terms(Value sims, const std::vector<int>& labels, double log_floor) {
  const DenseMatrix& s = value_of(sims);
  const int n = s.rows();
  if (s.cols() != n) throw std::invalid_argument("cri_terms: want N x N sims");
  if (n < 1) throw std::invalid_argument("cri_terms: empty batch");
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("cri_terms: label count mismatch");

  auto pools = cri_negative_pools(labels);
  DenseMatrix out(n, 1);
  DenseMatrix weights(n, n);  // column i: softmax over pool(i), saved for backward
  for (int i = 0; i < n; ++i) {
    const auto& pool = pools[i];
    double col_max = -std::numeric_limits<double>::infinity();
    for (int j : pool) col_max = std::max(col_max, s.at(j, i));
    double z = 0.0;
    for (int j : pool) z += std::exp(s.at(j, i) - col_max);
    const double log_mean =
        std::log(std::max(z, log_floor)) + col_max - std::log(static_cast<double>(pool.size()));
    for (int j : pool) weights.at(j, i) = std::exp(s.at(j, i) - col_max) / z;
    out.at(i, 0) = s.at(i, i) - log_mean;
  }
  Value r{this, size()};
  auto w = std::make_shared<DenseMatrix>(std::move(weights));
  return push(std::move(out), needs(sims), [this, sims, w, r]() {
    const DenseMatrix& g = grad_of(r);
    const int nn = g.rows();
    DenseMatrix gs(nn, nn);
    for (int i = 0; i < nn; ++i) {
      gs.at(i, i) += g.at(i, 0);
      for (int j = 0; j < nn; ++j) gs.at(j, i) -= g.at(i, 0) * w->at(j, i);
    }
    accumulate(grad_of(sims), gs);
  });
}

}  // namespace redout
