#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pcb/harness/metrics.hpp"
#include "pcb/manifest.hpp"
#include "pcb/nn/adam.hpp"
#include "pcb/nn/network.hpp"

namespace pcb::harness {

enum class Approach { BinaryTrain_BinaryClassify, MultiTrain_MultiClassify, MultiTrain_BinaryClassify };

inline constexpr std::array<Approach, 3> kAllApproaches{
    Approach::BinaryTrain_BinaryClassify, Approach::MultiTrain_MultiClassify, Approach::MultiTrain_BinaryClassify};

std::string_view approach_name(Approach a);
/// Accepts the full names above; throws ValidationError otherwise.
Approach parse_approach(std::string_view name);

enum class LabelScheme { Binary, Multi };

std::size_t num_classes(LabelScheme s);
/// Scheme the network for this approach is trained under.
LabelScheme training_scheme(Approach a);
/// Normal is 0 in both schemes; Binary merges all crimes into 1, Multi keeps
/// the label order of kAllLabels.
std::size_t relabel(ClassLabel label, LabelScheme scheme);

struct LabeledClip {
    const Tensor* tensor = nullptr;  // borrowed from a ClipBank
    std::size_t label = 0;
    ClassLabel source = ClassLabel::Normal;
};

// ---- dataset split -----------------------------------------------------------

struct DatasetSplit {
    std::vector<std::size_t> train;  // video indices, ascending
    std::vector<std::size_t> test;
};

/// Stratified by class at video level. Each class present must have at least
/// two videos; each side receives at least one video of every class.
DatasetSplit split_dataset(const std::vector<ClassLabel>& video_labels, double train_ratio, std::uint64_t seed);
DatasetSplit split_dataset(const DatasetManifest& manifest, double train_ratio, std::uint64_t seed);

// ---- clips per video -----------------------------------------------------------

struct VideoClips {
    std::string id;
    ClassLabel label = ClassLabel::Normal;
    std::vector<Tensor> train;  // training stride
    std::vector<Tensor> eval;   // evaluation stride
};

struct ClipBank {
    std::vector<VideoClips> videos;
    std::vector<ClipWarning> warnings;
    std::size_t clip_length = 16;
    std::size_t channels = 1;

    std::vector<ClassLabel> labels() const;
    nn::Geometry geometry() const { return {channels, clip_length, kClipHeight, kClipWidth}; }
};

struct ClipPolicy {
    std::size_t length = 16;
    std::size_t train_stride = kTrainStride;
    std::size_t eval_stride = kEvalStride;
    ChannelMode channels = ChannelMode::Luma;
};

/// Cuts each video's training frames (pre-crime for crime videos, whole video
/// for normal ones) into clips at both strides.
ClipBank build_clip_bank(const std::vector<LoadedVideo>& data, const ClipPolicy& policy = {});

/// Clips of the listed videos, in video order then clip order.
std::vector<LabeledClip> gather(const ClipBank& bank, const std::vector<std::size_t>& videos, LabelScheme scheme,
                                bool eval_stride);

// ---- training ------------------------------------------------------------------

struct TrainOptions {
    std::size_t epochs = 20;
    std::size_t batch_size = 8;
    nn::AdamConfig adam{};
    std::size_t hidden = 128;
};

struct TrainResult {
    nn::Network network;
    std::vector<double> epoch_loss;  // mean loss per epoch
};

/// Minibatch Adam on mean cross-entropy. Deterministic for a given seed
/// regardless of thread count. Throws ValidationError if a class of the
/// scheme has no clips and DivergenceError on a non-finite loss.
TrainResult train_model(const std::vector<LabeledClip>& train, LabelScheme scheme, nn::FilterPair pair,
                        const nn::Geometry& geometry, std::uint64_t seed, const TrainOptions& options);

/// Argmax prediction per clip, ties to the lower index.
ConfusionMatrix evaluate(const nn::Network& net, const std::vector<LabeledClip>& test, LabelScheme scheme);

}  // namespace pcb::harness
