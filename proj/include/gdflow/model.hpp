#pragma once

#include "gdflow/config.hpp"
#include "gdflow/data.hpp"
#include "gdflow/encoder.hpp"
#include "gdflow/flow.hpp"
#include "gdflow/objective.hpp"

#include <string>
#include <utility>
#include <vector>

namespace gdflow {

// Encoder + flow with everything needed to reproduce scores: config snapshot,
// normalization stats, resolved window length, and the decision threshold.
struct GdflowModel {
    RunConfig cfg;
    int window = 0;
    data::NormStats stats;
    double tau = 0.0;
    int best_epoch = -1;
    encoder::EncoderParams enc;
    flow::FlowParams flw;

    static GdflowModel init(const RunConfig& cfg, int window, Rng& rng);

    // Persistent parameter tensors in a fixed order shared with Bound::params.
    std::vector<std::pair<std::string, Array*>> parameters();

    struct Bound {
        encoder::EncoderVars enc;
        flow::FlowVars flw;
        std::vector<ad::Var> params;
    };
    Bound bind(ad::Tape& tape, bool trainable, long* clamp_count = nullptr) const;

    // Per-(window, sensor) log-likelihoods, flattened to (b*n).
    static ad::Var window_lls(const Bound& bound, const Array& windows, int substeps = 1);

    // Forward-only per-window scores under this model's q / ablation settings.
    std::vector<double> score_windows(const Array& windows) const;
    std::vector<std::vector<double>> window_sensor_lls(const Array& windows) const;

    void save(const std::string& path);
    static GdflowModel load(const std::string& path);
};

} // namespace gdflow
