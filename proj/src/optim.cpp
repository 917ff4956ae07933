#include "gdflow/optim.hpp"

#include <cmath>

namespace gdflow {

int AdamW::add_slot(const Shape& shape) {
    m_.emplace_back(shape);
    v_.emplace_back(shape);
    return static_cast<int>(m_.size()) - 1;
}

void AdamW::update(int slot, Array& param, const Array& grad) {
    if (slot < 0 || static_cast<std::size_t>(slot) >= m_.size())
        throw NumericError("AdamW: unknown slot");
    Array& m = m_[static_cast<std::size_t>(slot)];
    Array& v = v_[static_cast<std::size_t>(slot)];
    if (!param.same_shape(m) || !grad.same_shape(m))
        throw ShapeError("AdamW: parameter/gradient shape mismatch");
    if (step_ < 1) throw NumericError("AdamW: begin_step() not called");

    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < param.size(); ++i) {
        param[i] *= 1.0 - cfg_.lr * cfg_.weight_decay;
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grad[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        param[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    check_finite(param, "adamw_step");
}

} // namespace gdflow
