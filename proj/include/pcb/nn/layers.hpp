#pragma once

#include <cstddef>
#include <vector>

#include "pcb/tensor.hpp"

namespace pcb::nn {

/// Valid (unpadded), stride-1 3D cross-correlation.
/// weights: [out_ch, in_ch, k_t, k_h, k_w]; bias: [out_ch].
struct Conv3dLayer {
    Tensor weights;
    Tensor bias;

    std::size_t out_channels() const { return weights.dim(0); }
    std::size_t in_channels() const { return weights.dim(1); }
};

struct Conv3dGrads {
    Tensor input;  // empty when the caller did not ask for it
    Tensor weights;
    Tensor bias;
};

/// Kernel selection. `Reference` is the serial seven-loop implementation kept
/// for testing and benchmarking; `Direct` is the OpenMP vector kernel used in
/// training. Both are deterministic: every output element is accumulated in a
/// fixed order that does not depend on the thread count.
enum class ConvAlgo { Reference, Direct };

/// Output extent of a valid convolution along one axis.
std::size_t conv_output_extent(std::size_t input, std::size_t kernel);

/// input [in_ch, T, H, W] -> [out_ch, T-k_t+1, H-k_h+1, W-k_w+1].
Tensor conv3d_forward(const Tensor& input, const Conv3dLayer& layer, ConvAlgo algo = ConvAlgo::Direct);

Conv3dGrads conv3d_backward(const Tensor& input, const Conv3dLayer& layer, const Tensor& grad_out,
                            bool need_input_grad = true, ConvAlgo algo = ConvAlgo::Direct);

struct PoolWindow {
    std::size_t t = 2;
    std::size_t h = 2;
    std::size_t w = 2;

    friend bool operator==(const PoolWindow&, const PoolWindow&) = default;
};

/// Non-overlapping max pooling (stride = window). Trailing elements that do
/// not fill a window are dropped.
struct MaxPool3dLayer {
    PoolWindow window;
};

std::size_t pool_output_extent(std::size_t input, std::size_t window);

/// Flat input index of the maximum of every output cell, plus the shapes it
/// was recorded against.
struct PoolIndices {
    Shape input_shape;
    Shape output_shape;
    std::vector<std::size_t> argmax;
};

struct PoolResult {
    Tensor output;
    PoolIndices indices;
};

/// input [ch, T, H, W]. Ties resolve to the lowest flat input index.
PoolResult maxpool3d_forward(const Tensor& input, const MaxPool3dLayer& layer);

Tensor maxpool3d_backward(const PoolIndices& indices, const Tensor& grad_out);

/// Affine map x W + b. weights: [in, out]; bias: [out]; x: [in].
struct DenseLayer {
    Tensor weights;
    Tensor bias;

    std::size_t in_features() const { return weights.dim(0); }
    std::size_t out_features() const { return weights.dim(1); }
};

struct DenseGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

Tensor dense_forward(const Tensor& x, const DenseLayer& layer);
DenseGrads dense_backward(const Tensor& x, const DenseLayer& layer, const Tensor& grad_out);

Tensor relu_forward(const Tensor& x);
/// Subgradient at 0 is 0.
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

struct LossResult {
    float loss = 0.0f;
    Tensor grad_logits;
};

/// -log softmax(logits)[label] with max subtraction; grad = softmax - onehot.
LossResult softmax_cross_entropy(const Tensor& logits, std::size_t label);

namespace reference {

Tensor conv3d_forward(const Tensor& input, const Conv3dLayer& layer);
Conv3dGrads conv3d_backward(const Tensor& input, const Conv3dLayer& layer, const Tensor& grad_out,
                            bool need_input_grad);

}  // namespace reference

}  // namespace pcb::nn
