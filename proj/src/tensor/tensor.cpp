#include "pcb/tensor.hpp"

#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "pcb/error.hpp"

namespace pcb {

Shape::Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { validate(); }

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { validate(); }

void Shape::validate() {
    if (dims_.empty() || dims_.size() > kMaxRank)
        throw ShapeError(fmt::format("shape rank must be 1..{}, got {}", kMaxRank, dims_.size()));
    std::size_t n = 1;
    for (const auto d : dims_) {
        if (d == 0) throw ShapeError(fmt::format("shape {} has a zero extent", str()));
        if (n > std::numeric_limits<std::size_t>::max() / d)
            throw ShapeError(fmt::format("shape {} overflows the element count", str()));
        n *= d;
    }
    numel_ = n;
}

std::string Shape::str() const { return fmt::format("[{}]", fmt::join(dims_, ",")); }

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_.numel(), 0.0f) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.numel())
        throw ShapeError(fmt::format("data length {} does not match shape {}", data_.size(), shape_.str()));
}

std::size_t Tensor::flat_index(std::initializer_list<std::size_t> index) const {
    if (index.size() != rank())
        throw ShapeError(fmt::format("index of rank {} for tensor of shape {}", index.size(), shape_.str()));
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (const auto i : index) {
        if (i >= shape_[axis]) throw std::out_of_range(fmt::format("index {} out of range on axis {}", i, axis));
        flat = flat * shape_[axis] + i;
        ++axis;
    }
    return flat;
}

float& Tensor::at(std::initializer_list<std::size_t> index) { return data_[flat_index(index)]; }

float Tensor::at(std::initializer_list<std::size_t> index) const { return data_[flat_index(index)]; }

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

Tensor zeros(const Shape& shape) { return Tensor(shape); }

Tensor full(const Shape& shape, float value) {
    Tensor t(shape);
    t.fill(value);
    return t;
}

Tensor random_uniform(const Shape& shape, float lo, float hi, RngStream& rng) {
    if (!(lo < hi)) throw std::invalid_argument(fmt::format("random_uniform: lo ({}) must be < hi ({})", lo, hi));
    Tensor t(shape);
    const float span = hi - lo;
    const float top = std::nextafter(hi, lo);
    for (auto& v : t.data()) {
        const float x = lo + span * rng.uniform_float();
        v = x < hi ? x : top;
    }
    return t;
}

Tensor reshape(const Tensor& x, const Shape& shape) {
    if (shape.numel() != x.size())
        throw ShapeError(fmt::format("cannot reshape {} to {}", x.shape().str(), shape.str()));
    auto data = x.data();
    return Tensor(shape, std::vector<float>(data.begin(), data.end()));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError(fmt::format("matmul needs rank-2 operands, got {} and {}", a.shape().str(), b.shape().str()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw ShapeError(fmt::format("matmul inner dimension mismatch: {} x {}", a.shape().str(), b.shape().str()));
    Tensor out({m, n});
    const float* pa = a.ptr();
    const float* pb = b.ptr();
    float* po = out.ptr();
#pragma omp parallel for schedule(static) if (m * k * n > (1u << 16))
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        float* row = po + i * n;
        for (std::size_t t = 0; t < k; ++t) {
            const float av = pa[i * k + t];
            const float* brow = pb + t * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
        }
    }
    debug_assert_finite(out, "matmul");
    return out;
}

Tensor map(const Tensor& x, const std::function<float(float)>& fn) {
    Tensor out(x.shape());
    auto src = x.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fn(src[i]);
    debug_assert_finite(out, "map");
    return out;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", op, a.shape().str(), b.shape().str()));
}

template <typename Op>
Tensor zip(const Tensor& a, const Tensor& b, const char* name, Op op) {
    require_same_shape(a, b, name);
    Tensor out(a.shape());
    const float* pa = a.ptr();
    const float* pb = b.ptr();
    float* po = out.ptr();
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) po[i] = op(pa[i], pb[i]);
    debug_assert_finite(out, name);
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return zip(a, b, "add", [](float x, float y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return zip(a, b, "sub", [](float x, float y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return zip(a, b, "mul", [](float x, float y) { return x * y; });
}

Tensor scale(const Tensor& x, float factor) {
    Tensor out(x.shape());
    const float* px = x.ptr();
    float* po = out.ptr();
    for (std::size_t i = 0; i < x.size(); ++i) po[i] = px[i] * factor;
    debug_assert_finite(out, "scale");
    return out;
}

void axpy_inplace(Tensor& a, float factor, const Tensor& b) {
    require_same_shape(a, b, "axpy");
    float* pa = a.ptr();
    const float* pb = b.ptr();
    for (std::size_t i = 0; i < a.size(); ++i) pa[i] += factor * pb[i];
}

Tensor identity(std::size_t n) {
    Tensor out({n, n});
    for (std::size_t i = 0; i < n; ++i) out[i * n + i] = 1.0f;
    return out;
}

bool all_finite(const Tensor& x) {
    for (const float v : x.data())
        if (!std::isfinite(v)) return false;
    return true;
}

void debug_assert_finite([[maybe_unused]] const Tensor& x, [[maybe_unused]] const char* where) {
#ifndef NDEBUG
    if (!all_finite(x)) throw std::logic_error(fmt::format("non-finite value produced by {}", where));
#endif
}

}  // namespace pcb
