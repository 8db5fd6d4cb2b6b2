#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "pcb/manifest.hpp"

namespace pcb {

// Synthetic stand-in for surveillance footage. Each video shows a few bright
// blobs on a noisy background. Their motion depends on the class:
//   normal       horizontal drift
//   shoplifting  vertical drift
//   stealing     diagonal drift
//   arson        pulsing radius
//   abuse        horizontal oscillation
// `similarity` blends every class's motion toward one shared pattern (a
// near-static field); at 1 all classes come from the same generator.
//
// Crime videos open with an empty scene until the blobs appear, then run a
// pre-crime stretch of at least one clip length, a jittery suspicious stretch
// and a brighter, larger evidence stretch. Normal videos show the blobs from
// the first frame.
struct SynthSpec {
    std::array<std::size_t, 5> per_class{};  // indexed by label_index
    double similarity = 0.0;
    std::uint64_t seed = 0;
    std::size_t clip_length = 16;
    std::size_t width = kClipWidth;
    std::size_t height = kClipHeight;
    std::size_t channels = 1;  // 1 or 3
    double speed = 2.0;        // drift in pixels per frame before blending
    std::size_t blobs = 20;
    Fps fps{};
};

struct SynthResult {
    std::filesystem::path manifest_path;
    DatasetManifest manifest;
};

inline constexpr const char* kSynthAnnotator = "synth";
inline constexpr const char* kSynthTimestamp = "2000-01-01T00:00:00Z";

/// Writes videos/<id>.pcv, annotations/<id>.json and manifest.json under
/// `out_dir`. Output bytes depend only on the spec.
SynthResult synth_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir);

/// One generated video and its annotation (none for normal videos).
LoadedVideo synth_video(const SynthSpec& spec, ClassLabel label, std::size_t index);

std::string synth_video_id(ClassLabel label, std::size_t index);

}  // namespace pcb
