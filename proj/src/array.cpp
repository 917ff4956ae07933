#include "gdflow/array.hpp"

#include <cmath>

namespace gdflow {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        if (d <= 0) throw ShapeError("non-positive extent in shape " + shape_str(s));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Array Array::full(Shape shape, double v) {
    Array out(std::move(shape));
    for (auto& x : out.data_) x = v;
    return out;
}

Array Array::uniform(Shape shape, Rng& rng, double lo, double hi) {
    Array out(std::move(shape));
    for (auto& x : out.data_) x = rng.uniform(lo, hi);
    return out;
}

bool Array::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void check_finite(const Array& a, const char* op) {
    if (!a.all_finite())
        throw NumericError(std::string(op) + ": non-finite output");
}

namespace kern {

void matmul(const double* a, const double* b, double* c, int m, int k, int n,
            bool accumulate) {
    if (!accumulate)
        for (int i = 0; i < m * n; ++i) c[i] = 0.0;
    // i-k-j order: streams through B and C rows contiguously.
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_at_b(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        const double* brow = b + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_a_bt(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

} // namespace kern

} // namespace gdflow
