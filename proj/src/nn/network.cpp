#include "pcb/nn/network.hpp"

#include <cmath>
#include <regex>

#include <fmt/format.h>

#include "pcb/error.hpp"

namespace pcb::nn {

std::string FilterPair::label() const { return fmt::format("{} - {}", conv1, conv2); }

std::string FilterPair::key() const { return fmt::format("{}-{}", conv1, conv2); }

FilterPair parse_filter_pair(const std::string& text) {
    static const std::regex re(R"(\s*(\d+)\s*[-x,]\s*(\d+)\s*)");
    std::smatch m;
    if (!std::regex_match(text, m, re)) throw ValidationError(fmt::format("invalid filter pair '{}'", text));
    const FilterPair p{std::stoul(m[1]), std::stoul(m[2])};
    if (p.conv1 == 0 || p.conv2 == 0) throw ValidationError(fmt::format("filter counts must be positive: '{}'", text));
    return p;
}

StageShapes stage_shapes(const NetworkConfig& c) {
    const auto& g = c.geometry;
    if (g.channels == 0 || c.pair.conv1 == 0 || c.pair.conv2 == 0 || c.num_classes < 2 || c.hidden == 0)
        throw ShapeError("network configuration has a zero extent");
    StageShapes s;
    s.conv1 = Shape{c.pair.conv1, conv_output_extent(g.frames, c.kernel), conv_output_extent(g.height, c.kernel),
                    conv_output_extent(g.width, c.kernel)};
    s.pool1 = Shape{c.pair.conv1, pool_output_extent(s.conv1[1], c.pool.t), pool_output_extent(s.conv1[2], c.pool.h),
                    pool_output_extent(s.conv1[3], c.pool.w)};
    s.conv2 = Shape{c.pair.conv2, conv_output_extent(s.pool1[1], c.kernel), conv_output_extent(s.pool1[2], c.kernel),
                    conv_output_extent(s.pool1[3], c.kernel)};
    s.pool2 = Shape{c.pair.conv2, pool_output_extent(s.conv2[1], c.pool.t), pool_output_extent(s.conv2[2], c.pool.h),
                    pool_output_extent(s.conv2[3], c.pool.w)};
    s.flatten = s.pool2.numel();
    return s;
}

std::vector<Tensor*> Network::parameters() {
    return {&conv1.weights, &conv1.bias, &conv2.weights, &conv2.bias,
            &dense_hidden.weights, &dense_hidden.bias, &dense_out.weights, &dense_out.bias};
}

std::vector<const Tensor*> Network::parameters() const {
    return {&conv1.weights, &conv1.bias, &conv2.weights, &conv2.bias,
            &dense_hidden.weights, &dense_hidden.bias, &dense_out.weights, &dense_out.bias};
}

namespace {

Tensor he_uniform(const Shape& shape, std::size_t fan_in, RngStream rng) {
    const auto limit = static_cast<float>(std::sqrt(6.0 / static_cast<double>(fan_in)));
    return random_uniform(shape, -limit, limit, rng);
}

}  // namespace

Network init_network(const NetworkConfig& config, RngStream& rng) {
    // Validates the geometry before allocating anything.
    const StageShapes s = stage_shapes(config);
    const std::size_t k = config.kernel;
    const std::size_t c_in = config.geometry.channels;
    const std::size_t f1 = config.pair.conv1, f2 = config.pair.conv2;

    Network net;
    net.config = config;
    net.conv1 = {he_uniform({f1, c_in, k, k, k}, c_in * k * k * k, rng.substream(1)), Tensor({f1})};
    net.pool1 = {config.pool};
    net.conv2 = {he_uniform({f2, f1, k, k, k}, f1 * k * k * k, rng.substream(2)), Tensor({f2})};
    net.pool2 = {config.pool};
    net.dense_hidden = {he_uniform({s.flatten, config.hidden}, s.flatten, rng.substream(3)), Tensor({config.hidden})};
    net.dense_out = {he_uniform({config.hidden, config.num_classes}, config.hidden, rng.substream(4)),
                     Tensor({config.num_classes})};
    return net;
}

Network init_network(FilterPair pair, std::size_t num_classes, Geometry geometry, RngStream& rng) {
    NetworkConfig config;
    config.pair = pair;
    config.num_classes = num_classes;
    config.geometry = geometry;
    return init_network(config, rng);
}

ForwardTrace forward_trace(const Network& net, const Tensor& clip) {
    const auto& g = net.config.geometry;
    if (clip.shape() != g.shape())
        throw ShapeError(fmt::format("clip shape {} does not match network geometry {}", clip.shape().str(),
                                     g.shape().str()));
    ForwardTrace tr;
    tr.input = clip;
    tr.conv1_out = conv3d_forward(clip, net.conv1);
    tr.relu1_out = relu_forward(tr.conv1_out);
    auto p1 = maxpool3d_forward(tr.relu1_out, net.pool1);
    tr.pool1_out = std::move(p1.output);
    tr.pool1_idx = std::move(p1.indices);
    tr.conv2_out = conv3d_forward(tr.pool1_out, net.conv2);
    tr.relu2_out = relu_forward(tr.conv2_out);
    auto p2 = maxpool3d_forward(tr.relu2_out, net.pool2);
    tr.pool2_idx = std::move(p2.indices);
    const std::size_t flat_len = p2.output.size();
    if (flat_len != net.dense_hidden.in_features())
        throw ShapeError(fmt::format("flatten length {} does not match dense input {}", flat_len,
                                     net.dense_hidden.in_features()));
    tr.flat = reshape(p2.output, {flat_len});
    tr.hidden_pre = dense_forward(tr.flat, net.dense_hidden);
    tr.hidden_out = relu_forward(tr.hidden_pre);
    tr.logits = dense_forward(tr.hidden_out, net.dense_out);
    return tr;
}

Tensor forward(const Network& net, const Tensor& clip) { return forward_trace(net, clip).logits; }

std::vector<Tensor> backward(const Network& net, const ForwardTrace& tr, const Tensor& grad_logits) {
    auto out_g = dense_backward(tr.hidden_out, net.dense_out, grad_logits);
    auto hidden_g = dense_backward(tr.flat, net.dense_hidden, relu_backward(tr.hidden_pre, out_g.input));
    Tensor grad_pool2 = reshape(hidden_g.input, tr.pool2_idx.output_shape);
    Tensor grad_relu2 = maxpool3d_backward(tr.pool2_idx, grad_pool2);
    auto conv2_g = conv3d_backward(tr.pool1_out, net.conv2, relu_backward(tr.conv2_out, grad_relu2), true);
    Tensor grad_relu1 = maxpool3d_backward(tr.pool1_idx, conv2_g.input);
    auto conv1_g = conv3d_backward(tr.input, net.conv1, relu_backward(tr.conv1_out, grad_relu1), false);

    std::vector<Tensor> grads;
    grads.reserve(8);
    grads.push_back(std::move(conv1_g.weights));
    grads.push_back(std::move(conv1_g.bias));
    grads.push_back(std::move(conv2_g.weights));
    grads.push_back(std::move(conv2_g.bias));
    grads.push_back(std::move(hidden_g.weights));
    grads.push_back(std::move(hidden_g.bias));
    grads.push_back(std::move(out_g.weights));
    grads.push_back(std::move(out_g.bias));
    return grads;
}

std::size_t argmax(const Tensor& logits) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best]) best = i;
    return best;
}

}  // namespace pcb::nn
