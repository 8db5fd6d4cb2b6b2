#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pcb/tensor.hpp"

namespace pcb {

enum class ClassLabel : std::uint8_t { Normal = 0, Shoplifting = 1, Stealing = 2, Arson = 3, Abuse = 4 };

/// Source-label order used for five-class indices and confusion matrix rows.
inline constexpr std::array<ClassLabel, 5> kAllLabels{ClassLabel::Normal, ClassLabel::Shoplifting,
                                                      ClassLabel::Stealing, ClassLabel::Arson, ClassLabel::Abuse};

std::string_view label_name(ClassLabel label);
/// Throws ValidationError for anything outside the five names.
ClassLabel parse_label(std::string_view name);
inline bool is_crime(ClassLabel label) { return label != ClassLabel::Normal; }
inline std::size_t label_index(ClassLabel label) { return static_cast<std::size_t>(label); }

struct Fps {
    std::uint16_t numerator = 30;
    std::uint16_t denominator = 1;
    friend bool operator==(const Fps&, const Fps&) = default;
};

/// Half-open frame interval [begin, end).
struct FrameRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end > begin ? end - begin : 0; }
    bool empty() const { return size() == 0; }
    friend bool operator==(const FrameRange&, const FrameRange&) = default;
};

/// Decoded 8-bit frames, each height x width x channels, row-major.
struct RawVideo {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 1;
    Fps fps;
    std::vector<std::uint8_t> pixels;

    std::size_t frame_bytes() const { return width * height * channels; }
    std::size_t frame_count() const { return frame_bytes() == 0 ? 0 : pixels.size() / frame_bytes(); }
    std::span<const std::uint8_t> frame(std::size_t index) const;

    friend bool operator==(const RawVideo&, const RawVideo&) = default;
};

/// Copy of the frames in `range`.
RawVideo slice_frames(const RawVideo& video, FrameRange range);

// ---- .pcv container ---------------------------------------------------------
//
//   "PCBV" | u8 version=1 | u16 width | u16 height | u8 channels |
//   u32 frame_count | u16 fps_numerator | u16 fps_denominator   (little-endian)
//   then frame_count frames of height*width*channels bytes, row-major.

inline constexpr std::uint8_t kPcvVersion = 1;
inline constexpr std::size_t kPcvHeaderBytes = 18;

struct PcvHeader {
    std::size_t width = 0, height = 0, channels = 0, frame_count = 0;
    Fps fps;
};

std::vector<std::uint8_t> encode_pcv(const RawVideo& video);
RawVideo decode_pcv(std::span<const std::uint8_t> bytes);
PcvHeader read_pcv_header(const std::filesystem::path& path);
RawVideo read_pcv(const std::filesystem::path& path);
void write_pcv(const std::filesystem::path& path, const RawVideo& video);

// ---- PNG frames -------------------------------------------------------------

/// Directory of numbered PNG frames (sorted by the numeric part of the file
/// name). Gray frames stay single channel; colour frames load as RGB.
RawVideo read_png_dir(const std::filesystem::path& dir, Fps fps = {});

std::vector<std::uint8_t> encode_png(std::span<const std::uint8_t> pixels, std::size_t width, std::size_t height,
                                     std::size_t channels);

/// Dispatches on the path: a directory is read as PNG frames, anything else as .pcv.
RawVideo load_video(const std::filesystem::path& path);
std::size_t video_frame_count(const std::filesystem::path& path);

// ---- conversion to tensors --------------------------------------------------

enum class ChannelMode { Luma, Native };

/// Frame as [ch, H, W] with values in [0, 1]. Luma uses BT.601 weights.
Tensor frame_tensor(const RawVideo& video, std::size_t index, ChannelMode mode);

inline constexpr std::size_t kClipHeight = 60;
inline constexpr std::size_t kClipWidth = 80;

/// Bilinear resampling (half-pixel centres, edge clamped) of a [ch, H, W]
/// frame; results are clamped to the input's value range.
Tensor resize_frame(const Tensor& frame, std::size_t out_height = kClipHeight, std::size_t out_width = kClipWidth);

}  // namespace pcb
