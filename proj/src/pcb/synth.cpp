#include "pcb/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "pcb/error.hpp"
#include "pcb/rng.hpp"

namespace pcb {

namespace fs = std::filesystem;

namespace {

struct Motion {
    double vx = 0, vy = 0;      // drift, px/frame
    double pulse = 0;           // radius swing, px
    double osc = 0;             // horizontal oscillation amplitude, px
};

constexpr double kPulsePeriod = 8.0;
constexpr double kOscPeriod = 6.0;

Motion class_motion(ClassLabel label, double speed) {
    switch (label) {
        case ClassLabel::Normal: return {speed, 0, 0, 0};
        case ClassLabel::Shoplifting: return {0, speed, 0, 0};
        case ClassLabel::Stealing: return {speed / std::numbers::sqrt2, speed / std::numbers::sqrt2, 0, 0};
        case ClassLabel::Arson: return {0, 0, 4.0, 0};
        case ClassLabel::Abuse: return {0, 0, 0, 8.0};
    }
    return {};
}

Motion blend(const Motion& m, double s) {
    // The shared pattern is a static blob, so blending scales every term.
    const double k = 1.0 - s;
    return {m.vx * k, m.vy * k, m.pulse * k, m.osc * k};
}

struct Scene {
    std::size_t width, height, channels;
    double background;
    double noise;
};

struct Disk {
    double cx, cy, radius, brightness;
};

// Soft disks rendered on a torus so drifting blobs wrap around the frame edges.
void render(std::vector<std::uint8_t>& out, const Scene& sc, const std::vector<Disk>& disks, RngStream& rng) {
    const std::size_t base = out.size();
    out.resize(base + sc.width * sc.height * sc.channels);
    const double W = static_cast<double>(sc.width), H = static_cast<double>(sc.height);
    for (std::size_t y = 0; y < sc.height; ++y) {
        for (std::size_t x = 0; x < sc.width; ++x) {
            double v = sc.background + sc.noise * (2.0 * rng.uniform_double() - 1.0);
            for (const Disk& d : disks) {
                double dx = std::fabs(static_cast<double>(x) + 0.5 - d.cx);
                double dy = std::fabs(static_cast<double>(y) + 0.5 - d.cy);
                dx = std::min(dx, W - dx);
                dy = std::min(dy, H - dy);
                const double cover = std::clamp(d.radius - std::sqrt(dx * dx + dy * dy) + 0.5, 0.0, 1.0);
                v = v * (1.0 - cover) + d.brightness * cover;
            }
            const auto px = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            for (std::size_t c = 0; c < sc.channels; ++c) out[base + (y * sc.width + x) * sc.channels + c] = px;
        }
    }
}

double wrap(double v, double extent) {
    v = std::fmod(v, extent);
    return v < 0 ? v + extent : v;
}

}  // namespace

std::string synth_video_id(ClassLabel label, std::size_t index) { return fmt::format("{}_{:03}", label_name(label), index); }

LoadedVideo synth_video(const SynthSpec& spec, ClassLabel label, std::size_t index) {
    if (spec.similarity < 0.0 || spec.similarity > 1.0) throw ValidationError("similarity must lie in [0, 1]");
    if (spec.clip_length == 0) throw ValidationError("clip length must be positive");
    if (spec.channels != 1 && spec.channels != 3) throw ValidationError("synthetic videos have 1 or 3 channels");
    if (spec.width < 8 || spec.height < 8) throw ValidationError("synthetic frames must be at least 8x8");
    if (spec.blobs == 0) throw ValidationError("synthetic videos need at least one blob");

    RngStream rng = RngStream(spec.seed).substream((static_cast<std::uint64_t>(label_index(label)) << 32) | index);
    const std::size_t L = spec.clip_length;

    const Motion motion = blend(class_motion(label, spec.speed), spec.similarity);
    const Scene scene{spec.width, spec.height, spec.channels, 20.0 + 40.0 * rng.uniform_double(), 12.0};
    const double W = static_cast<double>(spec.width), H = static_cast<double>(spec.height);
    struct Blob {
        double x, y, radius, brightness, phase;
    };
    std::vector<Blob> blobs(spec.blobs);
    for (auto& b : blobs)
        b = {W * rng.uniform_double(), H * rng.uniform_double(), std::min(W, H) / 15.0 + 2.0 * rng.uniform_double(),
             170.0 + 50.0 * rng.uniform_double(), rng.uniform_double() * 2.0 * std::numbers::pi};

    std::size_t first = 0, ccm = 0, scm = 0, total = 0;
    if (is_crime(label)) {
        first = rng.bounded(L / 4 + 1);
        ccm = first + L + rng.bounded(L / 2 + 1);
        scm = ccm + 4 + rng.bounded(8);
        total = scm + 4 + rng.bounded(8);
    } else {
        total = L + rng.bounded(L / 2 + 1);
    }

    LoadedVideo out;
    out.sample.id = synth_video_id(label, index);
    out.sample.label = label;
    RawVideo& v = out.sample.video;
    v.width = spec.width;
    v.height = spec.height;
    v.channels = spec.channels;
    v.fps = spec.fps;
    v.pixels.reserve(total * v.frame_bytes());

    for (std::size_t f = 0; f < total; ++f) {
        const bool visible = f >= first;
        const bool suspicious = is_crime(label) && f >= ccm && f < scm;
        const bool evidence = is_crime(label) && f >= scm;
        const double t = static_cast<double>(f);

        std::vector<Disk> disks;
        for (auto& b : blobs) {
            double jx = rng.uniform_double() - 0.5, jy = rng.uniform_double() - 0.5;
            if (suspicious) {
                jx *= 4.0;
                jy *= 4.0;
            }
            double r = b.radius + motion.pulse * std::sin(2.0 * std::numbers::pi * t / kPulsePeriod + b.phase);
            double bright = b.brightness;
            if (evidence) {
                r *= 1.5;
                bright = 255.0;
            }
            const double ox = motion.osc * std::sin(2.0 * std::numbers::pi * t / kOscPeriod + b.phase);
            if (visible) disks.push_back({wrap(b.x + ox + jx, W), wrap(b.y + jy, H), std::max(r, 1.0), bright});
            b.x = wrap(b.x + motion.vx, W);
            b.y = wrap(b.y + motion.vy, H);
        }
        render(v.pixels, scene, disks, rng);
    }

    if (is_crime(label)) out.annotation = PcbAnnotation{out.sample.id, first, ccm, scm, kSynthAnnotator, kSynthTimestamp};
    return out;
}

SynthResult synth_dataset(const SynthSpec& spec, const fs::path& out_dir) {
    std::size_t total = 0;
    for (auto n : spec.per_class) total += n;
    if (total == 0) throw ValidationError("synthetic dataset needs at least one video");

    std::error_code ec;
    fs::create_directories(out_dir / "videos", ec);
    if (!ec) fs::create_directories(out_dir / "annotations", ec);
    if (ec) throw IoError(fmt::format("cannot create {}: {}", out_dir.string(), ec.message()));

    SynthResult result;
    result.manifest_path = out_dir / "manifest.json";
    result.manifest.base_dir = out_dir;
    std::vector<std::pair<ClassLabel, std::size_t>> jobs;
    for (ClassLabel label : kAllLabels)
        for (std::size_t i = 0; i < spec.per_class[label_index(label)]; ++i) {
            jobs.emplace_back(label, i);
            ManifestEntry e;
            const std::string id = synth_video_id(label, i);
            e.path = "videos/" + id + ".pcv";
            e.label = label;
            if (is_crime(label)) e.annotation = "annotations/" + id + ".json";
            result.manifest.entries.push_back(std::move(e));
        }

    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        try {
            const LoadedVideo lv = synth_video(spec, jobs[j].first, jobs[j].second);
            const ManifestEntry& e = result.manifest.entries[j];
            write_pcv(out_dir / e.path, lv.sample.video);
            if (lv.annotation) save_annotation(out_dir / *e.annotation, *lv.annotation);
        } catch (...) {
#pragma omp critical(pcb_synth)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    save_manifest(result.manifest_path, result.manifest);
    return result;
}

}  // namespace pcb
