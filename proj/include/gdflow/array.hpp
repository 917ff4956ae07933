#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "gdflow/errors.hpp"
#include "gdflow/rng.hpp"

namespace gdflow {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

// Dense row-major tensor of 64-bit floats. Plain value type; all model
// arithmetic lives in the kernels below and in the autodiff ops.
class Array {
public:
    Array() = default;

    explicit Array(Shape shape)
        : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

    Array(Shape shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_numel(shape_))
            throw ShapeError("Array: data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }

    static Array scalar(double v) { return Array({}, {v}); }
    static Array full(Shape shape, double v);
    static Array zeros_like(const Array& a) { return Array(a.shape()); }
    static Array uniform(Shape shape, Rng& rng, double lo, double hi);

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double item() const {
        if (data_.size() != 1) throw ShapeError("Array::item: not a scalar");
        return data_[0];
    }

    bool all_finite() const;
    bool same_shape(const Array& other) const { return shape_ == other.shape_; }

private:
    Shape shape_;
    std::vector<double> data_;
};

// Raw kernels shared by the autodiff ops, the optimizer, and test oracles.
namespace kern {

// C (m x n) = A (m x k) * B (k x n); accumulate adds into C instead of overwriting.
void matmul(const double* a, const double* b, double* c, int m, int k, int n,
            bool accumulate);

// C += A^T * B with A (m x k), B (m x n), C (k x n).
void matmul_at_b(const double* a, const double* b, double* c, int m, int k, int n);

// C += A * B^T with A (m x k), B (n x k), C (m x n).
void matmul_a_bt(const double* a, const double* b, double* c, int m, int k, int n);

} // namespace kern

void check_finite(const Array& a, const char* op);

} // namespace gdflow
