#include "pcb/pcb.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "pcb/binary_io.hpp"
#include "pcb/error.hpp"

namespace pcb {

using nlohmann::json;

std::vector<std::string> annotation_violations(const PcbAnnotation& a, std::size_t frame_count) {
    std::vector<std::string> out;
    if (a.first_appearance >= a.ccm)
        out.push_back(fmt::format("first_appearance ({}) must be before ccm ({})", a.first_appearance, a.ccm));
    if (a.ccm > a.scm) out.push_back(fmt::format("ccm ({}) must not be after scm ({})", a.ccm, a.scm));
    if (a.scm >= frame_count)
        out.push_back(fmt::format("scm out of range: {} is not below the frame count {}", a.scm, frame_count));
    return out;
}

void validate_annotation(const PcbAnnotation& ann, std::size_t frame_count) {
    const auto problems = annotation_violations(ann, frame_count);
    if (!problems.empty())
        throw ValidationError(fmt::format("annotation for '{}': {}", ann.video_id, fmt::join(problems, "; ")));
}

std::string annotation_to_json(const PcbAnnotation& a) {
    json j = json::object();
    j["video_id"] = a.video_id;
    j["first_appearance"] = a.first_appearance;
    j["ccm"] = a.ccm;
    j["scm"] = a.scm;
    j["annotator"] = a.annotator;
    j["created_at"] = a.created_at;
    return j.dump(2) + "\n";
}

namespace {

std::size_t frame_field(const json& j, const char* key) {
    if (!j.contains(key)) throw ValidationError(fmt::format("annotation is missing '{}'", key));
    const auto& v = j.at(key);
    if (v.is_number_unsigned()) return v.get<std::size_t>();
    if (v.is_number_integer()) throw ValidationError(fmt::format("annotation '{}' is negative", key));
    throw ValidationError(fmt::format("annotation '{}' must be an integer frame index", key));
}

std::string string_field(const json& j, const char* key) {
    if (!j.contains(key)) throw ValidationError(fmt::format("annotation is missing '{}'", key));
    if (!j.at(key).is_string()) throw ValidationError(fmt::format("annotation '{}' must be a string", key));
    return j.at(key).get<std::string>();
}

}  // namespace

PcbAnnotation annotation_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(fmt::format("annotation is not valid JSON: {}", e.what()));
    }
    if (!j.is_object()) throw ValidationError("annotation must be a JSON object");
    PcbAnnotation a;
    a.video_id = string_field(j, "video_id");
    a.first_appearance = frame_field(j, "first_appearance");
    a.ccm = frame_field(j, "ccm");
    a.scm = frame_field(j, "scm");
    a.annotator = string_field(j, "annotator");
    a.created_at = string_field(j, "created_at");
    return a;
}

PcbAnnotation load_annotation(const std::filesystem::path& path) {
    try {
        return annotation_from_json(read_text_file(path));
    } catch (const ValidationError& e) {
        throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

void save_annotation(const std::filesystem::path& path, const PcbAnnotation& ann) {
    write_text_atomic(path, annotation_to_json(ann));
}

PcbSegments segment_video(std::size_t frame_count, const PcbAnnotation& ann) {
    validate_annotation(ann, frame_count);
    return {{ann.first_appearance, ann.ccm}, {ann.ccm, ann.scm}, {ann.scm, frame_count}};
}

PcbSegments segment_video(const VideoSample& video, const PcbAnnotation& ann) {
    return segment_video(video.frame_count(), ann);
}

FrameRange pcb_training_frames(ClassLabel label, std::size_t frame_count, const std::optional<PcbAnnotation>& ann) {
    if (!is_crime(label)) return {0, frame_count};
    if (!ann) throw ValidationError(fmt::format("{} video has no annotation", label_name(label)));
    return segment_video(frame_count, *ann).pre_crime;
}

std::size_t clip_count(std::size_t frames, std::size_t length, std::size_t stride) {
    if (length == 0 || stride == 0) throw ValidationError("clip length and stride must be positive");
    return frames < length ? 0 : (frames - length) / stride + 1;
}

ClipSet extract_clips(const VideoSample& video, FrameRange range, const ClipOptions& opt) {
    ClipSet out;
    const std::size_t n = clip_count(range.size(), opt.length, opt.stride);
    if (range.end > video.frame_count())
        throw std::out_of_range(fmt::format("{}: frame range ends at {} but video has {} frames", video.id, range.end,
                                            video.frame_count()));
    if (n == 0) {
        out.warnings.push_back({video.id, range,
                                fmt::format("{}: range [{},{}) has {} frames, fewer than clip length {}; skipped",
                                            video.id, range.begin, range.end, range.size(), opt.length)});
        return out;
    }

    // Frames used by any window, converted once.
    const std::size_t used = (n - 1) * opt.stride + opt.length;
    std::vector<Tensor> frames;
    frames.reserve(used);
    for (std::size_t i = 0; i < used; ++i)
        frames.push_back(resize_frame(frame_tensor(video.video, range.begin + i, opt.channels)));

    const std::size_t ch = frames.front().dim(0);
    const std::size_t plane = kClipHeight * kClipWidth;
    out.clips.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t first = k * opt.stride;
        Tensor t({ch, opt.length, kClipHeight, kClipWidth});
        for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t f = 0; f < opt.length; ++f) {
                const float* src = frames[first + f].ptr() + c * plane;
                std::copy(src, src + plane, t.ptr() + (c * opt.length + f) * plane);
            }
        out.clips.push_back({std::move(t), video.id, video.label, range.begin + first});
    }
    return out;
}

}  // namespace pcb
