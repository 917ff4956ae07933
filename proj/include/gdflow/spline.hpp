#pragma once

#include "gdflow/array.hpp"

namespace gdflow {

// Natural cubic spline through one window of samples, knots at t = 0..w-1.
// Immutable after fit; carries no gradient (the path depends only on data).
class SplinePath {
public:
    // window: (sensors, w) samples, w >= 2.
    static SplinePath fit(const Array& window);

    int sensors() const { return sensors_; }
    int knots() const { return knots_; }
    double t_begin() const { return 0.0; }
    double t_end() const { return static_cast<double>(knots_ - 1); }

    // Per-sensor value / first derivative at t in [0, w-1].
    void eval(double t, double* out) const;
    void eval_derivative(double t, double* out) const;

    Array eval(double t) const {
        Array out({sensors_});
        eval(t, out.data());
        return out;
    }
    Array eval_derivative(double t) const {
        Array out({sensors_});
        eval_derivative(t, out.data());
        return out;
    }

    // Coefficient (a,b,c,d) of sensor s on interval [i, i+1].
    const double* coeffs(int sensor, int interval) const {
        return coef_.data() +
               (static_cast<std::size_t>(sensor) * (knots_ - 1) + interval) * 4;
    }

private:
    SplinePath(int sensors, int knots) : sensors_(sensors), knots_(knots) {}
    void locate(double t, int& interval, double& u) const;

    int sensors_ = 0;
    int knots_ = 0;
    std::vector<double> coef_; // (sensors, knots-1, 4) row-major
};

} // namespace gdflow
