#pragma once

#include "gdflow/autodiff.hpp"

#include <string>
#include <vector>

namespace gdflow::objective {

// Linear-interpolation quantile of raw values (no gradient).
double quantile(std::vector<double> values, double q);

// Training loss over flattened per-(window, sensor) log-likelihoods:
// -quantile lifts the lower tail, -mean is the no_quantile ablation.
ad::Var q_nll_loss(ad::Var lls, double q);
ad::Var mean_nll_loss(ad::Var lls);

// Window score from its per-sensor LLs; higher = more anomalous.
double score_from_lls(const std::vector<double>& sensor_lls, double q,
                      bool use_quantile = true);

// Threshold rule: normal iff score <= tau.
inline bool is_anomalous(double score, double tau) { return score > tau; }

struct ScoreRecord {
    long window_id = 0;
    std::string profile_id;
    int start = 0;
    double score = 0.0;
    std::vector<double> sensor_lls;
    bool anomalous = false;
};

} // namespace gdflow::objective
