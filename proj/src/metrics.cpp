#include "redout/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace redout {

namespace {

void check_two_classes(const std::vector<double>& scores, const std::vector<bool>& is_ood) {
  if (scores.size() != is_ood.size()) throw std::invalid_argument("auc: length mismatch");
  const size_t pos = static_cast<size_t>(std::count(is_ood.begin(), is_ood.end(), true));
  if (pos == 0 || pos == is_ood.size())
    throw std::invalid_argument("auc: need at least one ID and one OOD label");
}

}  // namespace

double auc(const std::vector<double>& scores, const std::vector<bool>& is_ood) {
  check_two_classes(scores, is_ood);
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&scores](size_t a, size_t b) { return scores[a] < scores[b]; });

  // Midranks over tie runs, then the rank-sum U statistic.
  std::vector<double> rank(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based midrank
    for (size_t t = i; t <= j; ++t) rank[order[t]] = mid;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  size_t pos = 0;
  for (size_t t = 0; t < n; ++t)
    if (is_ood[t]) {
      rank_sum_pos += rank[t];
      ++pos;
    }
  const size_t neg = n - pos;
  const double u = rank_sum_pos - 0.5 * static_cast<double>(pos) * (pos + 1);
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double auc_trapezoid(const std::vector<double>& scores, const std::vector<bool>& is_ood) {
  check_two_classes(scores, is_ood);
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&scores](size_t a, size_t b) { return scores[a] > scores[b]; });

  const double pos = static_cast<double>(std::count(is_ood.begin(), is_ood.end(), true));
  const double neg = static_cast<double>(n) - pos;
  double area = 0.0;
  double tp = 0.0, fp = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    double dtp = 0.0, dfp = 0.0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (is_ood[order[j]])
        dtp += 1.0;
      else
        dfp += 1.0;
      ++j;
    }
    // Threshold moves across the whole tie block at once.
    area += (dfp / neg) * (tp + 0.5 * dtp) / pos;
    tp += dtp;
    fp += dfp;
    i = j;
  }
  return area;
}

void export_density(const ScoreReport& report, int bins, const std::string& path) {
  if (bins < 2) throw std::invalid_argument("export_density: bins must be >= 2");
  if (!report.is_ood) throw std::invalid_argument("export_density: report has no labels");
  const auto& scores = report.per_graph_score;
  const auto& labels = *report.is_ood;
  if (scores.empty() || scores.size() != labels.size())
    throw std::invalid_argument("export_density: malformed report");

  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  double lo = *lo_it, hi = *hi_it;
  if (lo == hi) hi = lo + 1.0;  // all scores equal: one-bin-wide range
  const double width = (hi - lo) / bins;

  std::vector<double> id_counts(bins, 0.0), ood_counts(bins, 0.0);
  double id_total = 0.0, ood_total = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    int b = static_cast<int>((scores[i] - lo) / width);
    b = std::clamp(b, 0, bins - 1);
    if (labels[i]) {
      ood_counts[b] += 1.0;
      ood_total += 1.0;
    } else {
      id_counts[b] += 1.0;
      id_total += 1.0;
    }
  }

  std::ofstream out(path);
  if (!out) throw LoadError("export_density: cannot write " + path);
  out.precision(17);
  out << "bin_left,id_density,ood_density\n";
  for (int b = 0; b < bins; ++b) {
    const double idd = id_total > 0 ? id_counts[b] / (id_total * width) : 0.0;
    const double oodd = ood_total > 0 ? ood_counts[b] / (ood_total * width) : 0.0;
    out << (lo + b * width) << "," << idd << "," << oodd << "\n";
  }
}

}  // namespace redout
