#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

#include <fmt/format.h>

#include "pcb/error.hpp"
#include "pcb/nn/layers.hpp"

namespace pcb::nn {

std::size_t conv_output_extent(std::size_t input, std::size_t kernel) {
    if (kernel == 0 || kernel > input)
        throw ShapeError(fmt::format("kernel extent {} exceeds input extent {}", kernel, input));
    return input - kernel + 1;
}

namespace {

struct ConvDims {
    std::size_t C, T, H, W;      // input
    std::size_t O, KT, KH, KW;   // kernel
    std::size_t To, Ho, Wo;      // output
};

ConvDims check_conv(const Tensor& input, const Conv3dLayer& layer) {
    if (input.rank() != 4) throw ShapeError(fmt::format("conv3d input must be [ch,T,H,W], got {}", input.shape().str()));
    if (layer.weights.rank() != 5)
        throw ShapeError(fmt::format("conv3d weights must be rank 5, got {}", layer.weights.shape().str()));
    if (layer.bias.rank() != 1 || layer.bias.dim(0) != layer.weights.dim(0))
        throw ShapeError("conv3d bias length must equal output channels");
    ConvDims d{};
    d.C = input.dim(0);
    d.T = input.dim(1);
    d.H = input.dim(2);
    d.W = input.dim(3);
    d.O = layer.weights.dim(0);
    if (layer.weights.dim(1) != d.C)
        throw ShapeError(fmt::format("conv3d channel mismatch: input has {}, weights expect {}", d.C, layer.weights.dim(1)));
    d.KT = layer.weights.dim(2);
    d.KH = layer.weights.dim(3);
    d.KW = layer.weights.dim(4);
    d.To = conv_output_extent(d.T, d.KT);
    d.Ho = conv_output_extent(d.H, d.KH);
    d.Wo = conv_output_extent(d.W, d.KW);
    return d;
}

void check_grad_out(const ConvDims& d, const Tensor& grad_out) {
    if (grad_out.shape() != Shape{d.O, d.To, d.Ho, d.Wo})
        throw ShapeError(fmt::format("conv3d grad_out shape {} does not match forward output [{},{},{},{}]",
                                     grad_out.shape().str(), d.O, d.To, d.Ho, d.Wo));
}

}  // namespace

namespace reference {

Tensor conv3d_forward(const Tensor& input, const Conv3dLayer& layer) {
    const ConvDims d = check_conv(input, layer);
    Tensor out({d.O, d.To, d.Ho, d.Wo});
    for (std::size_t o = 0; o < d.O; ++o)
        for (std::size_t t = 0; t < d.To; ++t)
            for (std::size_t h = 0; h < d.Ho; ++h)
                for (std::size_t x = 0; x < d.Wo; ++x) {
                    float acc = layer.bias[o];
                    for (std::size_t c = 0; c < d.C; ++c)
                        for (std::size_t dt = 0; dt < d.KT; ++dt)
                            for (std::size_t dh = 0; dh < d.KH; ++dh)
                                for (std::size_t dw = 0; dw < d.KW; ++dw)
                                    acc += input.at({c, t + dt, h + dh, x + dw}) *
                                           layer.weights.at({o, c, dt, dh, dw});
                    out.at({o, t, h, x}) = acc;
                }
    return out;
}

Conv3dGrads conv3d_backward(const Tensor& input, const Conv3dLayer& layer, const Tensor& grad_out,
                            bool need_input_grad) {
    const ConvDims d = check_conv(input, layer);
    check_grad_out(d, grad_out);
    Conv3dGrads g{need_input_grad ? Tensor(input.shape()) : Tensor(), Tensor(layer.weights.shape()),
                  Tensor(layer.bias.shape())};
    for (std::size_t o = 0; o < d.O; ++o)
        for (std::size_t t = 0; t < d.To; ++t)
            for (std::size_t h = 0; h < d.Ho; ++h)
                for (std::size_t x = 0; x < d.Wo; ++x) {
                    const float go = grad_out.at({o, t, h, x});
                    g.bias[o] += go;
                    for (std::size_t c = 0; c < d.C; ++c)
                        for (std::size_t dt = 0; dt < d.KT; ++dt)
                            for (std::size_t dh = 0; dh < d.KH; ++dh)
                                for (std::size_t dw = 0; dw < d.KW; ++dw) {
                                    g.weights.at({o, c, dt, dh, dw}) += go * input.at({c, t + dt, h + dh, x + dw});
                                    if (need_input_grad)
                                        g.input.at({c, t + dt, h + dh, x + dw}) +=
                                            go * layer.weights.at({o, c, dt, dh, dw});
                                }
                }
    return g;
}

}  // namespace reference

namespace {

// The direct kernels work on 16-lane float vectors. Rows are copied into
// zero-padded buffers whose width is a whole number of vectors plus the
// kernel overhang, so every vector load stays in bounds and padding lanes
// contribute zeros.
constexpr std::size_t kLanes = 16;
typedef float vec __attribute__((vector_size(kLanes * sizeof(float))));

inline vec load(const float* p) {
    vec v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

inline void store(float* p, vec v) { std::memcpy(p, &v, sizeof v); }

inline float lane_sum(vec v) {
    float s = 0.0f;
    for (std::size_t i = 0; i < kLanes; ++i) s += v[i];
    return s;
}

inline std::size_t round_up(std::size_t n) { return (n + kLanes - 1) / kLanes * kLanes; }

/// [C, T, H, W] with every row copied into a zeroed row of width `wp` at
/// column offset `left`.
struct Padded {
    std::vector<float> data;
    std::size_t T = 0, H = 0, W = 0;

    const float* row(std::size_t c, std::size_t t, std::size_t h) const { return data.data() + ((c * T + t) * H + h) * W; }
};

Padded pad_rows(const float* src, std::size_t C, std::size_t T, std::size_t H, std::size_t W, std::size_t left,
                std::size_t wp) {
    Padded p;
    p.T = T;
    p.H = H;
    p.W = wp;
    p.data.assign(C * T * H * wp, 0.0f);
    for (std::size_t r = 0; r < C * T * H; ++r) std::copy(src + r * W, src + (r + 1) * W, p.data.data() + r * wp + left);
    return p;
}

/// Correlation geometry. Output plane t reads input planes t + dt - t_pad;
/// planes outside the input count as zeros and are skipped, likewise rows.
struct Window {
    std::size_t C, KT, KH, KW;
    std::size_t To, Ho, Wo;
    std::size_t t_pad = 0, h_pad = 0;
};

/// Tap range [lo, hi) whose source index o + k - pad falls inside [0, n).
inline std::pair<std::size_t, std::size_t> valid_taps(std::size_t o, std::size_t pad, std::size_t k, std::size_t n) {
    const std::size_t lo = pad > o ? pad - o : 0;
    const std::size_t hi = std::min(k, n + pad - o);
    return {lo, std::max(lo, hi)};
}

/// Correlation of `in` with weights [O, C, KT, KH, KW] into out [O, To, Ho, Wo]
/// for output channels o0..o0+NB at plane t. The NB channels share every input
/// vector load. Each output element accumulates its bias (or zero), then c,
/// dt, dh, dw in ascending order.
template <std::size_t NB>
void correlate_block(const Padded& in, const float* wt, const float* bias, float* out, std::size_t o0, std::size_t t,
                     const Window& w) {
    const std::size_t taps = w.KT * w.KH * w.KW;
    const std::size_t per_o = w.C * taps;
    const auto [dt_lo, dt_hi] = valid_taps(t, w.t_pad, w.KT, in.T);
    float tail[NB][kLanes];
    for (std::size_t h = 0; h < w.Ho; ++h) {
        const auto [dh_lo, dh_hi] = valid_taps(h, w.h_pad, w.KH, in.H);
        for (std::size_t x0 = 0; x0 < w.Wo; x0 += kLanes) {
            vec acc[NB];
            for (std::size_t j = 0; j < NB; ++j) {
                const float b = bias ? bias[o0 + j] : 0.0f;
                acc[j] = vec{} + b;
            }
            for (std::size_t c = 0; c < w.C; ++c)
                for (std::size_t dt = dt_lo; dt < dt_hi; ++dt)
                    for (std::size_t dh = dh_lo; dh < dh_hi; ++dh) {
                        const float* src = in.row(c, t + dt - w.t_pad, h + dh - w.h_pad) + x0;
                        const float* k = wt + o0 * per_o + c * taps + (dt * w.KH + dh) * w.KW;
                        for (std::size_t dw = 0; dw < w.KW; ++dw) {
                            const vec v = load(src + dw);
                            for (std::size_t j = 0; j < NB; ++j) acc[j] += v * k[j * per_o + dw];
                        }
                    }
            const std::size_t n = std::min(kLanes, w.Wo - x0);
            for (std::size_t j = 0; j < NB; ++j) {
                float* dst = out + (((o0 + j) * w.To + t) * w.Ho + h) * w.Wo + x0;
                if (n == kLanes) {
                    store(dst, acc[j]);
                } else {
                    store(tail[j], acc[j]);
                    std::copy(tail[j], tail[j] + n, dst);
                }
            }
        }
    }
}

void correlate(const Padded& in, const float* wt, const float* bias, float* out, std::size_t O, const Window& w) {
    constexpr std::size_t kBlock = 8;
    const std::size_t blocks = (O + kBlock - 1) / kBlock;
    const auto tasks = static_cast<std::ptrdiff_t>(blocks * w.To);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t task = 0; task < tasks; ++task) {
        const std::size_t o0 = static_cast<std::size_t>(task) / w.To * kBlock;
        const std::size_t t = static_cast<std::size_t>(task) % w.To;
        if (o0 + kBlock <= O) {
            correlate_block<kBlock>(in, wt, bias, out, o0, t, w);
        } else {
            for (std::size_t o = o0; o < O; ++o) correlate_block<1>(in, wt, bias, out, o, t, w);
        }
    }
}

Tensor direct_forward(const Tensor& input, const Conv3dLayer& layer) {
    const ConvDims d = check_conv(input, layer);
    Tensor out({d.O, d.To, d.Ho, d.Wo});
    const Padded in = pad_rows(input.ptr(), d.C, d.T, d.H, d.W, 0, round_up(d.Wo) + d.KW - 1);
    correlate(in, layer.weights.ptr(), layer.bias.ptr(), out.ptr(), d.O, {d.C, d.KT, d.KH, d.KW, d.To, d.Ho, d.Wo});
    debug_assert_finite(out, "conv3d_forward");
    return out;
}

/// Weight gradient of NB output channels against one input channel. Each tap
/// keeps one vector accumulator per output channel for a whole output time
/// slice; slice totals are summed in t order in double.
template <std::size_t NB, std::size_t KW>
void weight_grad_block(const Padded& in, const Padded& go, float* gw, std::size_t o0, std::size_t c, std::size_t C,
                       std::size_t KT, std::size_t KH, std::size_t To, std::size_t Ho, std::size_t Wo) {
    const std::size_t taps = KT * KH * KW;
    for (std::size_t dt = 0; dt < KT; ++dt)
        for (std::size_t dh = 0; dh < KH; ++dh) {
            double total[NB][KW] = {};
            for (std::size_t t = 0; t < To; ++t) {
                vec acc[NB][KW] = {};
                for (std::size_t h = 0; h < Ho; ++h) {
                    const float* src = in.row(c, t + dt, h + dh);
                    for (std::size_t x0 = 0; x0 < Wo; x0 += kLanes) {
                        vec v[KW];
                        for (std::size_t dw = 0; dw < KW; ++dw) v[dw] = load(src + x0 + dw);
                        for (std::size_t j = 0; j < NB; ++j) {
                            const vec g = load(go.row(o0 + j, t, h) + x0);
                            for (std::size_t dw = 0; dw < KW; ++dw) acc[j][dw] += g * v[dw];
                        }
                    }
                }
                for (std::size_t j = 0; j < NB; ++j)
                    for (std::size_t dw = 0; dw < KW; ++dw) total[j][dw] += lane_sum(acc[j][dw]);
            }
            for (std::size_t j = 0; j < NB; ++j)
                for (std::size_t dw = 0; dw < KW; ++dw)
                    gw[((o0 + j) * C + c) * taps + (dt * KH + dh) * KW + dw] = static_cast<float>(total[j][dw]);
        }
}

/// 3x3x3 kernels: one output channel against one input channel with all 27
/// taps held in vector accumulators, so each gradient row is read once.
void weight_grad_cube(const Padded& in, const float* go, float* gw, const ConvDims& d) {
    const auto tasks = static_cast<std::ptrdiff_t>(d.O * d.C);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t task = 0; task < tasks; ++task) {
        const std::size_t o = static_cast<std::size_t>(task) / d.C, c = static_cast<std::size_t>(task) % d.C;
        double total[27] = {};
        for (std::size_t t = 0; t < d.To; ++t) {
            vec acc[27] = {};
            for (std::size_t h = 0; h < d.Ho; ++h) {
                const float* grow = go + ((o * d.To + t) * d.Ho + h) * d.Wo;
                const float* rows[9];
                for (std::size_t dt = 0; dt < 3; ++dt)
                    for (std::size_t dh = 0; dh < 3; ++dh) rows[dt * 3 + dh] = in.row(c, t + dt, h + dh);
                for (std::size_t x0 = 0; x0 < d.Wo; x0 += kLanes) {
                    vec g{};
                    if (x0 + kLanes <= d.Wo) {
                        g = load(grow + x0);
                    } else {
                        for (std::size_t i = 0; x0 + i < d.Wo; ++i) g[i] = grow[x0 + i];
                    }
                    for (std::size_t r = 0; r < 9; ++r)
                        for (std::size_t dw = 0; dw < 3; ++dw) acc[r * 3 + dw] += g * load(rows[r] + x0 + dw);
                }
            }
            for (std::size_t i = 0; i < 27; ++i) total[i] += lane_sum(acc[i]);
        }
        float* dst = gw + (o * d.C + c) * 27;
        for (std::size_t i = 0; i < 27; ++i) dst[i] = static_cast<float>(total[i]);
    }
}

template <std::size_t KW>
void weight_grad(const Padded& in, const Padded& go, float* gw, const ConvDims& d) {
    constexpr std::size_t kBlock = 4;
    const std::size_t blocks = (d.O + kBlock - 1) / kBlock;
    const auto tasks = static_cast<std::ptrdiff_t>(blocks * d.C);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t task = 0; task < tasks; ++task) {
        const std::size_t o0 = static_cast<std::size_t>(task) / d.C * kBlock;
        const std::size_t c = static_cast<std::size_t>(task) % d.C;
        if (o0 + kBlock <= d.O) {
            weight_grad_block<kBlock, KW>(in, go, gw, o0, c, d.C, d.KT, d.KH, d.To, d.Ho, d.Wo);
        } else {
            for (std::size_t o = o0; o < d.O; ++o)
                weight_grad_block<1, KW>(in, go, gw, o, c, d.C, d.KT, d.KH, d.To, d.Ho, d.Wo);
        }
    }
}

/// Any kernel width, one output channel and one tap row at a time.
void weight_grad_wide(const Padded& in, const Padded& go, float* gw, const ConvDims& d) {
    const std::size_t taps = d.KT * d.KH * d.KW;
    const auto tasks = static_cast<std::ptrdiff_t>(d.O * d.C);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t task = 0; task < tasks; ++task) {
        const std::size_t o = static_cast<std::size_t>(task) / d.C, c = static_cast<std::size_t>(task) % d.C;
        std::vector<vec> acc(d.KW);
        std::vector<double> total(d.KW);
        for (std::size_t dt = 0; dt < d.KT; ++dt)
            for (std::size_t dh = 0; dh < d.KH; ++dh) {
                std::fill(total.begin(), total.end(), 0.0);
                for (std::size_t t = 0; t < d.To; ++t) {
                    std::fill(acc.begin(), acc.end(), vec{});
                    for (std::size_t h = 0; h < d.Ho; ++h)
                        for (std::size_t x0 = 0; x0 < d.Wo; x0 += kLanes) {
                            const vec g = load(go.row(o, t, h) + x0);
                            for (std::size_t dw = 0; dw < d.KW; ++dw) acc[dw] += g * load(in.row(c, t + dt, h + dh) + x0 + dw);
                        }
                    for (std::size_t dw = 0; dw < d.KW; ++dw) total[dw] += lane_sum(acc[dw]);
                }
                for (std::size_t dw = 0; dw < d.KW; ++dw)
                    gw[(o * d.C + c) * taps + (dt * d.KH + dh) * d.KW + dw] = static_cast<float>(total[dw]);
            }
    }
}

Conv3dGrads direct_backward(const Tensor& input, const Conv3dLayer& layer, const Tensor& grad_out,
                            bool need_input_grad) {
    const ConvDims d = check_conv(input, layer);
    check_grad_out(d, grad_out);
    Conv3dGrads g{need_input_grad ? Tensor(input.shape()) : Tensor(), Tensor(layer.weights.shape()),
                  Tensor(layer.bias.shape())};
    const float* go = grad_out.ptr();
    const std::size_t plane = d.To * d.Ho * d.Wo;
    const auto O = static_cast<std::ptrdiff_t>(d.O);

    float* gb = g.bias.ptr();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t o = 0; o < O; ++o) {
        double acc = 0.0;
        const float* src = go + o * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += src[i];
        gb[o] = static_cast<float>(acc);
    }

    // Gradient rows padded with zeros to whole vectors; the input rows get
    // the same width plus the kernel overhang.
    const std::size_t wr = round_up(d.Wo);
    {
        const Padded in = pad_rows(input.ptr(), d.C, d.T, d.H, d.W, 0, wr + d.KW - 1);
        if (d.KT == 3 && d.KH == 3 && d.KW == 3) {
            weight_grad_cube(in, go, g.weights.ptr(), d);
        } else {
            const Padded gop = pad_rows(go, d.O, d.To, d.Ho, d.Wo, 0, wr);
            switch (d.KW) {
                case 1: weight_grad<1>(in, gop, g.weights.ptr(), d); break;
                case 2: weight_grad<2>(in, gop, g.weights.ptr(), d); break;
                case 3: weight_grad<3>(in, gop, g.weights.ptr(), d); break;
                case 4: weight_grad<4>(in, gop, g.weights.ptr(), d); break;
                case 5: weight_grad<5>(in, gop, g.weights.ptr(), d); break;
                default: weight_grad_wide(in, gop, g.weights.ptr(), d); break;
            }
        }
    }

    if (need_input_grad) {
        // The input gradient is a full correlation of the output gradient with
        // the kernel flipped in every axis and transposed in channels, so it
        // reuses the forward kernel with the gradient offset by the kernel
        // extent. Planes and rows outside the gradient are skipped.
        const std::size_t taps = d.KT * d.KH * d.KW;
        std::vector<float> flipped(d.C * d.O * taps);
        const float* wt = layer.weights.ptr();
        for (std::size_t o = 0; o < d.O; ++o)
            for (std::size_t c = 0; c < d.C; ++c)
                for (std::size_t i = 0; i < taps; ++i) flipped[(c * d.O + o) * taps + (taps - 1 - i)] = wt[(o * d.C + c) * taps + i];
        const Padded full = pad_rows(go, d.O, d.To, d.Ho, d.Wo, d.KW - 1, round_up(d.W) + d.KW - 1);
        correlate(full, flipped.data(), nullptr, g.input.ptr(), d.C,
                  {d.O, d.KT, d.KH, d.KW, d.T, d.H, d.W, d.KT - 1, d.KH - 1});
    }
    return g;
}

}  // namespace

Tensor conv3d_forward(const Tensor& input, const Conv3dLayer& layer, ConvAlgo algo) {
    return algo == ConvAlgo::Reference ? reference::conv3d_forward(input, layer) : direct_forward(input, layer);
}

Conv3dGrads conv3d_backward(const Tensor& input, const Conv3dLayer& layer, const Tensor& grad_out,
                            bool need_input_grad, ConvAlgo algo) {
    return algo == ConvAlgo::Reference ? reference::conv3d_backward(input, layer, grad_out, need_input_grad)
                                       : direct_backward(input, layer, grad_out, need_input_grad);
}

}  // namespace pcb::nn
