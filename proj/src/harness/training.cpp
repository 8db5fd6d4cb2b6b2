#include "pcb/harness/training.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "pcb/error.hpp"
#include "pcb/nn/fp_mode.hpp"
#include "pcb/rng.hpp"

namespace pcb::harness {

namespace {

constexpr std::array<std::string_view, 3> kApproachNames{"BinaryTrain_BinaryClassify", "MultiTrain_MultiClassify",
                                                         "MultiTrain_BinaryClassify"};

// Substream ids under a training seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;

}  // namespace

std::string_view approach_name(Approach a) { return kApproachNames.at(static_cast<std::size_t>(a)); }

Approach parse_approach(std::string_view name) {
    for (std::size_t i = 0; i < kApproachNames.size(); ++i)
        if (kApproachNames[i] == name) return kAllApproaches[i];
    throw ValidationError(fmt::format("unknown approach '{}' (expected one of {}, {}, {})", name, kApproachNames[0],
                                      kApproachNames[1], kApproachNames[2]));
}

std::size_t num_classes(LabelScheme s) { return s == LabelScheme::Binary ? 2 : 5; }

LabelScheme training_scheme(Approach a) {
    return a == Approach::BinaryTrain_BinaryClassify ? LabelScheme::Binary : LabelScheme::Multi;
}

std::size_t relabel(ClassLabel label, LabelScheme scheme) {
    const std::size_t idx = label_index(label);
    if (idx >= kAllLabels.size()) throw ValidationError(fmt::format("unknown source label {}", idx));
    if (scheme == LabelScheme::Multi) return idx;
    return is_crime(label) ? 1 : 0;
}

// ---- split -------------------------------------------------------------------

DatasetSplit split_dataset(const std::vector<ClassLabel>& labels, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError(fmt::format("split ratio {} must lie in (0, 1)", ratio));
    const RngStream root(seed);
    DatasetSplit out;
    for (ClassLabel label : kAllLabels) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == label) members.push_back(i);
        if (members.empty()) continue;
        if (members.size() < 2)
            throw ValidationError(fmt::format("class '{}' has {} video; splitting needs at least 2", label_name(label),
                                              members.size()));
        RngStream rng = root.substream(label_index(label));
        rng.shuffle(std::span(members));
        const auto n = members.size();
        const auto n_train = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n))), 1, n - 1);
        out.train.insert(out.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
        out.test.insert(out.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

DatasetSplit split_dataset(const DatasetManifest& m, double ratio, std::uint64_t seed) {
    std::vector<ClassLabel> labels;
    labels.reserve(m.entries.size());
    for (const auto& e : m.entries) labels.push_back(e.label);
    return split_dataset(labels, ratio, seed);
}

// ---- clip bank -------------------------------------------------------------------

std::vector<ClassLabel> ClipBank::labels() const {
    std::vector<ClassLabel> out;
    out.reserve(videos.size());
    for (const auto& v : videos) out.push_back(v.label);
    return out;
}

ClipBank build_clip_bank(const std::vector<LoadedVideo>& data, const ClipPolicy& policy) {
    ClipBank bank;
    bank.clip_length = policy.length;
    bank.videos.resize(data.size());
    std::vector<std::vector<ClipWarning>> warnings(data.size());
    std::vector<std::size_t> channels(data.size(), 0);
    std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < data.size(); ++i) {
        try {
            const auto& lv = data[i];
            const FrameRange range = pcb_training_frames(lv.sample.label, lv.sample.frame_count(), lv.annotation);
            auto train = extract_clips(lv.sample, range, {policy.length, policy.train_stride, policy.channels});
            auto eval = extract_clips(lv.sample, range, {policy.length, policy.eval_stride, policy.channels});
            VideoClips& vc = bank.videos[i];
            vc.id = lv.sample.id;
            vc.label = lv.sample.label;
            for (auto& c : train.clips) vc.train.push_back(std::move(c.tensor));
            for (auto& c : eval.clips) vc.eval.push_back(std::move(c.tensor));
            if (!vc.train.empty()) channels[i] = vc.train.front().dim(0);
            warnings[i] = std::move(train.warnings);
        } catch (...) {
#pragma omp critical(pcb_clip_bank)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    bank.channels = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (auto& w : warnings[i]) bank.warnings.push_back(std::move(w));
        if (channels[i] == 0) continue;
        if (bank.channels != 0 && bank.channels != channels[i])
            throw ValidationError(fmt::format("video '{}' has {} channels, others have {}", bank.videos[i].id,
                                              channels[i], bank.channels));
        bank.channels = channels[i];
    }
    if (bank.channels == 0) bank.channels = policy.channels == ChannelMode::Luma ? 1 : 3;
    return bank;
}

std::vector<LabeledClip> gather(const ClipBank& bank, const std::vector<std::size_t>& videos, LabelScheme scheme,
                                bool eval_stride) {
    std::vector<LabeledClip> out;
    for (std::size_t v : videos) {
        const VideoClips& vc = bank.videos.at(v);
        const std::size_t label = relabel(vc.label, scheme);
        for (const Tensor& t : eval_stride ? vc.eval : vc.train) out.push_back({&t, label, vc.label});
    }
    return out;
}

// ---- training ------------------------------------------------------------------

TrainResult train_model(const std::vector<LabeledClip>& train, LabelScheme scheme, nn::FilterPair pair,
                        const nn::Geometry& geometry, std::uint64_t seed, const TrainOptions& opt) {
    const nn::FlushDenormals flush;
    const std::size_t k = num_classes(scheme);
    std::vector<std::size_t> per_class(k, 0);
    for (const auto& c : train) {
        if (c.label >= k) throw ValidationError(fmt::format("clip label {} outside {}-class scheme", c.label, k));
        if (c.tensor->shape() != geometry.shape())
            throw ShapeError(fmt::format("clip shape {} does not match geometry {}", c.tensor->shape().str(),
                                         geometry.shape().str()));
        ++per_class[c.label];
    }
    for (std::size_t c = 0; c < k; ++c)
        if (per_class[c] == 0) throw ValidationError(fmt::format("training set has no clips of class {}", c));
    if (opt.batch_size == 0) throw ValidationError("batch size must be positive");

    nn::NetworkConfig config;
    config.pair = pair;
    config.num_classes = k;
    config.geometry = geometry;
    config.hidden = opt.hidden;

    const RngStream root(seed);
    RngStream init_rng = root.substream(kInitStream);
    RngStream shuffle_rng = root.substream(kShuffleStream);

    TrainResult result{nn::init_network(config, init_rng), {}};
    nn::Network& net = result.network;
    auto params = net.parameters();
    nn::AdamState adam = nn::make_adam_state(params, opt.adam);

    std::vector<std::size_t> order(train.size());
    std::vector<std::vector<Tensor>> sample_grads(opt.batch_size);
    std::vector<double> sample_loss(opt.batch_size);

    for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        shuffle_rng.shuffle(std::span(order));
        double epoch_loss = 0.0;

        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            const std::size_t b = std::min(opt.batch_size, order.size() - start);
            // Per-sample gradients land in fixed slots and are summed in slot
            // order, so the result does not depend on scheduling.
#pragma omp parallel for schedule(static) if (b > 1)
            for (std::size_t s = 0; s < b; ++s) {
                const LabeledClip& clip = train[order[start + s]];
                const auto trace = nn::forward_trace(net, *clip.tensor);
                const auto loss = nn::softmax_cross_entropy(trace.logits, clip.label);
                sample_loss[s] = loss.loss;
                sample_grads[s] = nn::backward(net, trace, loss.grad_logits);
            }
            double batch_loss = 0.0;
            for (std::size_t s = 0; s < b; ++s) batch_loss += sample_loss[s];
            if (!std::isfinite(batch_loss))
                throw DivergenceError(fmt::format("non-finite loss in epoch {} at batch starting {} (pair {}, seed {})",
                                                  epoch, start, pair.key(), seed));
            epoch_loss += batch_loss;

            std::vector<Tensor>& grads = sample_grads[0];
            for (std::size_t s = 1; s < b; ++s)
                for (std::size_t p = 0; p < grads.size(); ++p) axpy_inplace(grads[p], 1.0f, sample_grads[s][p]);
            const float inv = 1.0f / static_cast<float>(b);
            for (auto& g : grads)
                for (float& v : g.data()) v *= inv;
            nn::adam_step(params, grads, adam);
            for (auto* p : params)
                if (!all_finite(*p))
                    throw DivergenceError(fmt::format("non-finite parameters after epoch {} batch {} (pair {}, seed {})",
                                                      epoch, start, pair.key(), seed));
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    }
    return result;
}

ConfusionMatrix evaluate(const nn::Network& net, const std::vector<LabeledClip>& test, LabelScheme scheme) {
    const nn::FlushDenormals flush;
    const std::size_t k = num_classes(scheme);
    if (net.config.num_classes != k)
        throw ValidationError(fmt::format("network has {} outputs but the scheme has {} classes", net.config.num_classes, k));
    std::vector<std::size_t> predicted(test.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < test.size(); ++i) {
        try {
            predicted[i] = nn::argmax(nn::forward(net, *test[i].tensor));
        } catch (...) {
#pragma omp critical(pcb_evaluate)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < test.size(); ++i) cm.add(test[i].label, predicted[i]);
    return cm;
}

}  // namespace pcb::harness
