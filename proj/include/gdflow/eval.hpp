#pragma once

#include <utility>
#include <vector>

namespace gdflow::eval {

// Fill every ground-truth anomaly segment that contains at least one
// predicted-anomalous point; predictions outside segments are untouched.
std::vector<int> point_adjust(const std::vector<int>& preds, const std::vector<int>& labels);

// Point-adjusted F1 of the prediction (score > tau) after adjustment.
double f1_pa_at(const std::vector<double>& scores, const std::vector<int>& labels, double tau);

// Sweep tau over all distinct scores plus +-inf sentinels; returns the
// (tau*, best point-adjusted F1) pair, ties resolved toward the smallest tau.
std::pair<double, double> best_f1_search(const std::vector<double>& scores,
                                         const std::vector<int>& labels);

// Rank-based AUROC with midrank tie handling.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Average-precision form of the area under the precision-recall curve.
double auprc(const std::vector<double>& scores, const std::vector<int>& labels);

} // namespace gdflow::eval
