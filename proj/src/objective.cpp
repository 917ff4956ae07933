#include "gdflow/objective.hpp"

#include "gdflow/errors.hpp"

#include <algorithm>
#include <cmath>

namespace gdflow::objective {

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw NumericError("quantile of empty sequence");
    if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quantile level outside [0, 1]");
    for (double v : values)
        if (!std::isfinite(v)) throw NumericError("non-finite value in quantile");
    std::sort(values.begin(), values.end());
    double p = q * (values.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(p));
    double frac = p - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

ad::Var q_nll_loss(ad::Var lls, double q) {
    if (lls.shape().size() != 1)
        throw ShapeError("loss expects flattened LLs, got " + shape_str(lls.shape()));
    return ad::neg(ad::quantile(lls, q));
}

ad::Var mean_nll_loss(ad::Var lls) {
    if (lls.shape().size() != 1)
        throw ShapeError("loss expects flattened LLs, got " + shape_str(lls.shape()));
    return ad::neg(ad::mean_all(lls));
}

double score_from_lls(const std::vector<double>& sensor_lls, double q, bool use_quantile) {
    if (sensor_lls.empty()) throw NumericError("score of empty LL set");
    if (use_quantile) return -quantile(sensor_lls, q);
    double sum = 0.0;
    for (double v : sensor_lls) sum += v;
    return -(sum / static_cast<double>(sensor_lls.size()));
}

} // namespace gdflow::objective
