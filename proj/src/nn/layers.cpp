#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pcb/error.hpp"
#include "pcb/nn/layers.hpp"

namespace pcb::nn {

std::size_t pool_output_extent(std::size_t input, std::size_t window) {
    if (window == 0 || window > input)
        throw ShapeError(fmt::format("pool window extent {} exceeds input extent {}", window, input));
    return input / window;
}

PoolResult maxpool3d_forward(const Tensor& input, const MaxPool3dLayer& layer) {
    if (input.rank() != 4) throw ShapeError(fmt::format("maxpool3d input must be [ch,T,H,W], got {}", input.shape().str()));
    const std::size_t C = input.dim(0), T = input.dim(1), H = input.dim(2), W = input.dim(3);
    const auto& win = layer.window;
    const std::size_t To = pool_output_extent(T, win.t);
    const std::size_t Ho = pool_output_extent(H, win.h);
    const std::size_t Wo = pool_output_extent(W, win.w);

    PoolResult r{Tensor({C, To, Ho, Wo}), PoolIndices{input.shape(), Shape{C, To, Ho, Wo}, {}}};
    r.indices.argmax.resize(r.output.size());
    const float* in = input.ptr();
    float* out = r.output.ptr();
    std::size_t* arg = r.indices.argmax.data();

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(C); ++c) {
        for (std::size_t t = 0; t < To; ++t)
            for (std::size_t h = 0; h < Ho; ++h)
                for (std::size_t x = 0; x < Wo; ++x) {
                    // Window scanned in ascending flat order; strict > keeps the first maximum.
                    std::size_t best = ((c * T + t * win.t) * H + h * win.h) * W + x * win.w;
                    float best_v = in[best];
                    for (std::size_t dt = 0; dt < win.t; ++dt)
                        for (std::size_t dh = 0; dh < win.h; ++dh)
                            for (std::size_t dw = 0; dw < win.w; ++dw) {
                                const std::size_t idx =
                                    ((c * T + t * win.t + dt) * H + h * win.h + dh) * W + x * win.w + dw;
                                if (in[idx] > best_v) {
                                    best_v = in[idx];
                                    best = idx;
                                }
                            }
                    const std::size_t o = ((c * To + t) * Ho + h) * Wo + x;
                    out[o] = best_v;
                    arg[o] = best;
                }
    }
    return r;
}

Tensor maxpool3d_backward(const PoolIndices& indices, const Tensor& grad_out) {
    if (grad_out.shape() != indices.output_shape || indices.argmax.size() != grad_out.size())
        throw ShapeError(fmt::format("maxpool3d_backward: grad_out {} does not match recorded output {}",
                                     grad_out.shape().str(), indices.output_shape.str()));
    Tensor grad_in(indices.input_shape);
    float* gi = grad_in.ptr();
    const float* go = grad_out.ptr();
    // Windows do not overlap, so every input cell receives at most one contribution.
    for (std::size_t i = 0; i < grad_out.size(); ++i) {
        const std::size_t target = indices.argmax[i];
        if (target >= grad_in.size()) throw ShapeError("maxpool3d_backward: stale argmax index");
        gi[target] += go[i];
    }
    return grad_in;
}

namespace {

void check_dense(const Tensor& x, const DenseLayer& layer) {
    if (layer.weights.rank() != 2 || layer.bias.rank() != 1 || layer.bias.dim(0) != layer.weights.dim(1))
        throw ShapeError("dense layer needs weights [in,out] and bias [out]");
    if (x.rank() != 1 || x.dim(0) != layer.in_features())
        throw ShapeError(fmt::format("dense input {} does not match in_features {}", x.shape().str(),
                                     layer.in_features()));
}

}  // namespace

Tensor dense_forward(const Tensor& x, const DenseLayer& layer) {
    check_dense(x, layer);
    const std::size_t n = layer.out_features();
    Tensor row = matmul(reshape(x, {1, x.size()}), layer.weights);
    Tensor out({n});
    for (std::size_t j = 0; j < n; ++j) out[j] = row[j] + layer.bias[j];
    return out;
}

DenseGrads dense_backward(const Tensor& x, const DenseLayer& layer, const Tensor& grad_out) {
    check_dense(x, layer);
    const std::size_t in = layer.in_features(), n = layer.out_features();
    if (grad_out.shape() != Shape{n})
        throw ShapeError(fmt::format("dense grad_out {} does not match out_features {}", grad_out.shape().str(), n));
    DenseGrads g{Tensor({in}), Tensor({in, n}), grad_out};
    const float* w = layer.weights.ptr();
    const float* gy = grad_out.ptr();
    float* gw = g.weights.ptr();
    float* gx = g.input.ptr();
#pragma omp parallel for schedule(static) if (in * n > (1u << 15))
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(in); ++i) {
        const float xi = x[i];
        const float* wrow = w + i * n;
        float* grow = gw + i * n;
        float acc = 0.0f;
        for (std::size_t j = 0; j < n; ++j) {
            grow[j] = xi * gy[j];
            acc += wrow[j] * gy[j];
        }
        gx[i] = acc;
    }
    return g;
}

Tensor relu_forward(const Tensor& x) {
    Tensor out(x.shape());
    const float* px = x.ptr();
    float* po = out.ptr();
    for (std::size_t i = 0; i < x.size(); ++i) po[i] = px[i] > 0.0f ? px[i] : 0.0f;
    return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
    if (x.shape() != grad_out.shape())
        throw ShapeError(fmt::format("relu_backward shape mismatch {} vs {}", x.shape().str(), grad_out.shape().str()));
    Tensor out(x.shape());
    const float* px = x.ptr();
    const float* pg = grad_out.ptr();
    float* po = out.ptr();
    for (std::size_t i = 0; i < x.size(); ++i) po[i] = px[i] > 0.0f ? pg[i] : 0.0f;
    return out;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::size_t label) {
    if (logits.rank() != 1 || logits.size() < 2)
        throw ShapeError(fmt::format("softmax_cross_entropy needs logits [k>=2], got {}", logits.shape().str()));
    const std::size_t k = logits.size();
    if (label >= k) throw std::out_of_range(fmt::format("label {} out of range for {} classes", label, k));

    const float* z = logits.ptr();
    const double zmax = *std::max_element(z, z + k);
    double denom = 0.0;
    for (std::size_t i = 0; i < k; ++i) denom += std::exp(static_cast<double>(z[i]) - zmax);
    const double log_denom = std::log(denom);

    LossResult r{static_cast<float>(log_denom - (static_cast<double>(z[label]) - zmax)), Tensor({k})};
    for (std::size_t i = 0; i < k; ++i) {
        const double p = std::exp(static_cast<double>(z[i]) - zmax - log_denom);
        r.grad_logits[i] = static_cast<float>(p - (i == label ? 1.0 : 0.0));
    }
    return r;
}

}  // namespace pcb::nn
