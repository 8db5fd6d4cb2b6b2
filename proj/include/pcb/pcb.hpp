#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pcb/video.hpp"

namespace pcb {

struct VideoSample {
    std::string id;
    ClassLabel label = ClassLabel::Normal;
    RawVideo video;

    std::size_t frame_count() const { return video.frame_count(); }
};

/// Human-marked boundaries of a crime video. Valid when
/// 0 <= first_appearance < ccm <= scm < frame_count.
struct PcbAnnotation {
    std::string video_id;
    std::size_t first_appearance = 0;
    std::size_t ccm = 0;
    std::size_t scm = 0;
    std::string annotator;
    std::string created_at;

    friend bool operator==(const PcbAnnotation&, const PcbAnnotation&) = default;
};

/// Empty when the annotation is valid for a video of `frame_count` frames,
/// otherwise one message per violated condition.
std::vector<std::string> annotation_violations(const PcbAnnotation& ann, std::size_t frame_count);
/// Throws ValidationError listing every violation.
void validate_annotation(const PcbAnnotation& ann, std::size_t frame_count);

std::string annotation_to_json(const PcbAnnotation& ann);
/// Parses the JSON object form. Structural problems throw ValidationError;
/// boundary ordering is left to validate_annotation.
PcbAnnotation annotation_from_json(const std::string& text);
PcbAnnotation load_annotation(const std::filesystem::path& path);
void save_annotation(const std::filesystem::path& path, const PcbAnnotation& ann);

struct PcbSegments {
    FrameRange pre_crime;
    FrameRange suspicious;
    FrameRange evidence;
};

PcbSegments segment_video(std::size_t frame_count, const PcbAnnotation& ann);
PcbSegments segment_video(const VideoSample& video, const PcbAnnotation& ann);

/// Frames that feed training: the pre-crime segment for crime videos, the
/// whole video for normal ones. A crime video without annotation throws.
FrameRange pcb_training_frames(ClassLabel label, std::size_t frame_count, const std::optional<PcbAnnotation>& ann);

// ---- clips ------------------------------------------------------------------

struct ClipOptions {
    std::size_t length = 16;
    std::size_t stride = 16;
    ChannelMode channels = ChannelMode::Luma;
};

inline constexpr std::size_t kTrainStride = 16;
inline constexpr std::size_t kEvalStride = 8;

struct Clip {
    Tensor tensor;  // [ch, L, 60, 80]
    std::string source_id;
    ClassLabel label = ClassLabel::Normal;
    std::size_t start_frame = 0;
};

struct ClipWarning {
    std::string source_id;
    FrameRange range;
    std::string message;
};

struct ClipSet {
    std::vector<Clip> clips;
    std::vector<ClipWarning> warnings;
};

/// Number of windows of `length` frames at `stride` inside `frames` frames.
std::size_t clip_count(std::size_t frames, std::size_t length, std::size_t stride);

/// Sliding windows over `range`; frames are converted and resized to 60x80.
/// A range shorter than the clip length yields a warning instead of clips.
ClipSet extract_clips(const VideoSample& video, FrameRange range, const ClipOptions& options);

}  // namespace pcb
