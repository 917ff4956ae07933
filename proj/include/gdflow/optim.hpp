#pragma once

#include "gdflow/array.hpp"

namespace gdflow {

// Decoupled-weight-decay Adam. Moments live next to their parameter.
struct AdamWConfig {
    double lr = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 5e-4;
};

class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    // Registers a parameter slot; moments start at zero.
    int add_slot(const Shape& shape);

    // One update on param `slot` in place. All slots stepped together share
    // the step counter; call begin_step() once per optimization step.
    void begin_step() { ++step_; }
    void update(int slot, Array& param, const Array& grad);

    long step_count() const { return step_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    AdamWConfig cfg_;
    long step_ = 0;
    std::vector<Array> m_, v_;
};

} // namespace gdflow
