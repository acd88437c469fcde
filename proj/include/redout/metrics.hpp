#pragma once

#include <string>
#include <vector>

#include "redout/losses.hpp"

namespace redout {

/// Mann-Whitney rank AUC with half credit for ties: the probability that a
/// random OOD score exceeds a random ID score. Needs both classes present.
double auc(const std::vector<double>& scores, const std::vector<bool>& is_ood);

/// Trapezoidal integration under the ROC curve; agrees with the rank
/// statistic to floating-point accuracy.
double auc_trapezoid(const std::vector<double>& scores, const std::vector<bool>& is_ood);

/// Two normalized score histograms over a shared range, written as CSV
/// lines "bin_left,id_density,ood_density". Densities integrate to 1.
void export_density(const ScoreReport& report, int bins, const std::string& path);

}  // namespace redout
