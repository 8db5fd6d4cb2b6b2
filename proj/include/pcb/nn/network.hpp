#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "pcb/nn/layers.hpp"
#include "pcb/rng.hpp"
#include "pcb/tensor.hpp"

namespace pcb::nn {

/// Output channel counts of the two convolution layers.
struct FilterPair {
    std::size_t conv1 = 16;
    std::size_t conv2 = 16;

    std::string label() const;  // "16 - 16"
    std::string key() const;    // "16-16"
    friend bool operator==(const FilterPair&, const FilterPair&) = default;
};

/// The six configurations compared in the experiments, in reporting order.
inline constexpr std::array<FilterPair, 6> kStandardFilterPairs{{
    {16, 16}, {32, 32}, {32, 64}, {64, 64}, {64, 128}, {128, 32},
}};

FilterPair parse_filter_pair(const std::string& text);

/// Clip geometry [channels, frames, height, width].
struct Geometry {
    std::size_t channels = 1;
    std::size_t frames = 16;
    std::size_t height = 60;
    std::size_t width = 80;

    Shape shape() const { return Shape{channels, frames, height, width}; }
    friend bool operator==(const Geometry&, const Geometry&) = default;
};

struct NetworkConfig {
    FilterPair pair;
    std::size_t num_classes = 2;
    Geometry geometry;
    std::size_t kernel = 3;
    PoolWindow pool{2, 2, 2};
    std::size_t hidden = 128;

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Shapes after each stage, computed from the valid-conv and floor-pool rules.
struct StageShapes {
    Shape conv1, pool1, conv2, pool2;
    std::size_t flatten = 0;
};

/// Throws ShapeError when any stage collapses to a zero extent.
StageShapes stage_shapes(const NetworkConfig& config);

/// conv1 -> relu -> pool1 -> conv2 -> relu -> pool2 -> flatten -> dense -> relu -> dense.
struct Network {
    NetworkConfig config;
    Conv3dLayer conv1;
    MaxPool3dLayer pool1;
    Conv3dLayer conv2;
    MaxPool3dLayer pool2;
    DenseLayer dense_hidden;
    DenseLayer dense_out;

    /// Learnable tensors in checkpoint order: conv1 w/b, conv2 w/b, hidden w/b, out w/b.
    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;
};

/// He-uniform weights (limit sqrt(6 / fan_in)) and zero biases.
Network init_network(FilterPair pair, std::size_t num_classes, Geometry geometry, RngStream& rng);
Network init_network(const NetworkConfig& config, RngStream& rng);

/// Intermediate values retained for the backward pass.
struct ForwardTrace {
    Tensor input;
    Tensor conv1_out, relu1_out;
    PoolIndices pool1_idx;
    Tensor pool1_out;
    Tensor conv2_out, relu2_out;
    PoolIndices pool2_idx;
    Tensor flat;
    Tensor hidden_pre, hidden_out;
    Tensor logits;
};

Tensor forward(const Network& net, const Tensor& clip);
ForwardTrace forward_trace(const Network& net, const Tensor& clip);

/// Gradients in parameters() order.
std::vector<Tensor> backward(const Network& net, const ForwardTrace& trace, const Tensor& grad_logits);

/// Lowest index among the maximal logits.
std::size_t argmax(const Tensor& logits);

}  // namespace pcb::nn
