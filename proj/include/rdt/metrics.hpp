#pragma once

#include <optional>
#include <vector>

#include "rdt/common.hpp"

namespace rdt {

// Area under the ROC curve via the Mann-Whitney rank statistic with mid-rank
// tie handling.  Absent when only one class is present.
std::optional<double> auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Area under the precision-recall curve, trapezoidal over tie groups.
// Absent when there is no positive example.
std::optional<double> auprc(const std::vector<double>& scores, const std::vector<int>& labels);

// Mean squared error between the positive-class score and the binary label.
double brier(const std::vector<double>& scores, const std::vector<int>& labels);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& actual);

}  // namespace rdt
