#include "gdflow/spline.hpp"

#include "gdflow/errors.hpp"

#include <cmath>

namespace gdflow {

SplinePath SplinePath::fit(const Array& window) {
    if (window.rank() != 2)
        throw ShapeError("spline fit expects (sensors, w), got " + shape_str(window.shape()));
    const int n = window.dim(0);
    const int w = window.dim(1);
    if (w < 2) throw NumericError("spline fit needs at least 2 knots, got " + std::to_string(w));
    if (!window.all_finite()) throw NumericError("non-finite sample in spline fit");

    SplinePath path(n, w);
    path.coef_.assign(static_cast<std::size_t>(n) * (w - 1) * 4, 0.0);

    // Natural boundary: second derivatives m[0] = m[w-1] = 0; interior rows
    // m[i-1] + 4 m[i] + m[i+1] = 6 (y[i+1] - 2 y[i] + y[i-1]), solved by the
    // Thomas algorithm. w == 2 has no interior rows and degenerates to linear.
    std::vector<double> m(w), cp(w), dp(w);
    for (int s = 0; s < n; ++s) {
        const double* y = window.data() + static_cast<std::size_t>(s) * w;
        std::fill(m.begin(), m.end(), 0.0);
        const int interior = w - 2;
        if (interior > 0) {
            for (int i = 1; i <= interior; ++i) {
                double rhs = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]);
                if (i == 1) {
                    cp[i] = 1.0 / 4.0;
                    dp[i] = rhs / 4.0;
                } else {
                    double denom = 4.0 - cp[i - 1];
                    cp[i] = 1.0 / denom;
                    dp[i] = (rhs - dp[i - 1]) / denom;
                }
            }
            for (int i = interior; i >= 1; --i)
                m[i] = dp[i] - (i == interior ? 0.0 : cp[i] * m[i + 1]);
        }
        double* c = path.coef_.data() + static_cast<std::size_t>(s) * (w - 1) * 4;
        for (int i = 0; i < w - 1; ++i) {
            c[4 * i + 0] = y[i];
            c[4 * i + 1] = (y[i + 1] - y[i]) - (2.0 * m[i] + m[i + 1]) / 6.0;
            c[4 * i + 2] = m[i] / 2.0;
            c[4 * i + 3] = (m[i + 1] - m[i]) / 6.0;
        }
    }
    return path;
}

void SplinePath::locate(double t, int& interval, double& u) const {
    if (!(t >= t_begin() && t <= t_end()))
        throw NumericError("spline query t=" + std::to_string(t) + " outside [0, " +
                           std::to_string(knots_ - 1) + "]");
    interval = static_cast<int>(std::floor(t));
    if (interval > knots_ - 2) interval = knots_ - 2;
    u = t - interval;
}

void SplinePath::eval(double t, double* out) const {
    int i;
    double u;
    locate(t, i, u);
    for (int s = 0; s < sensors_; ++s) {
        const double* c = coeffs(s, i);
        out[s] = c[0] + u * (c[1] + u * (c[2] + u * c[3]));
    }
}

void SplinePath::eval_derivative(double t, double* out) const {
    int i;
    double u;
    locate(t, i, u);
    for (int s = 0; s < sensors_; ++s) {
        const double* c = coeffs(s, i);
        out[s] = c[1] + u * (2.0 * c[2] + 3.0 * u * c[3]);
    }
}

} // namespace gdflow
