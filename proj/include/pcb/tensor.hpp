#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "pcb/rng.hpp"

namespace pcb {

/// Ordered list of 1 to 5 positive extents. Row-major, last axis fastest.
class Shape {
public:
    static constexpr std::size_t kMaxRank = 5;

    Shape() = default;
    Shape(std::initializer_list<std::size_t> dims);
    explicit Shape(std::vector<std::size_t> dims);

    std::size_t rank() const { return dims_.size(); }
    std::size_t operator[](std::size_t axis) const { return dims_[axis]; }
    std::span<const std::size_t> dims() const { return dims_; }

    /// Product of extents.
    std::size_t numel() const { return numel_; }

    std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;

private:
    void validate();

    std::vector<std::size_t> dims_;
    std::size_t numel_ = 0;
};

/// Dense float32 array. Operations return new tensors and leave inputs intact.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<float> data);

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    std::size_t rank() const { return shape_.rank(); }
    std::size_t dim(std::size_t axis) const { return shape_[axis]; }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }
    float* ptr() { return data_.data(); }
    const float* ptr() const { return data_.data(); }

    float& operator[](std::size_t flat) { return data_[flat]; }
    float operator[](std::size_t flat) const { return data_[flat]; }

    /// Multi-index access; index count must equal rank.
    float& at(std::initializer_list<std::size_t> index);
    float at(std::initializer_list<std::size_t> index) const;

    std::size_t flat_index(std::initializer_list<std::size_t> index) const;

    void fill(float value);

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<float> data_;
};

Tensor zeros(const Shape& shape);
Tensor full(const Shape& shape, float value);

/// Every element drawn uniformly from [lo, hi). Throws std::invalid_argument if lo >= hi.
Tensor random_uniform(const Shape& shape, float lo, float hi, RngStream& rng);

/// Same data viewed under a new shape with the same element count.
Tensor reshape(const Tensor& x, const Shape& shape);

/// [m,k] x [k,n] -> [m,n]. Rows are computed in parallel; each output element
/// accumulates over k in ascending order regardless of thread count.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor map(const Tensor& x, const std::function<float(float)>& fn);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float factor);

/// a += factor * b, in place.
void axpy_inplace(Tensor& a, float factor, const Tensor& b);

Tensor identity(std::size_t n);

bool all_finite(const Tensor& x);

/// Debug-build check that a public operation left no NaN/Inf behind.
void debug_assert_finite(const Tensor& x, const char* where);

}  // namespace pcb
