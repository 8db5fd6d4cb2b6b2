#include "pcb/video.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>

#include <fmt/format.h>
#include <png.h>

#include "pcb/binary_io.hpp"
#include "pcb/error.hpp"

namespace pcb {

namespace {

constexpr std::array<std::string_view, 5> kLabelNames{"normal", "shoplifting", "stealing", "arson", "abuse"};

}  // namespace

std::string_view label_name(ClassLabel label) { return kLabelNames.at(label_index(label)); }

ClassLabel parse_label(std::string_view name) {
    for (std::size_t i = 0; i < kLabelNames.size(); ++i)
        if (kLabelNames[i] == name) return kAllLabels[i];
    throw ValidationError(fmt::format("unknown class label '{}'", name));
}

std::span<const std::uint8_t> RawVideo::frame(std::size_t index) const {
    if (index >= frame_count()) throw std::out_of_range(fmt::format("frame {} past end ({})", index, frame_count()));
    return std::span<const std::uint8_t>(pixels).subspan(index * frame_bytes(), frame_bytes());
}

RawVideo slice_frames(const RawVideo& video, FrameRange range) {
    if (range.end > video.frame_count() || range.begin > range.end)
        throw std::out_of_range(fmt::format("frame range [{},{}) outside video of {} frames", range.begin, range.end,
                                            video.frame_count()));
    RawVideo out{video.width, video.height, video.channels, video.fps, {}};
    const auto fb = video.frame_bytes();
    out.pixels.assign(video.pixels.begin() + static_cast<std::ptrdiff_t>(range.begin * fb),
                      video.pixels.begin() + static_cast<std::ptrdiff_t>(range.end * fb));
    return out;
}

// ---- .pcv -------------------------------------------------------------------

std::vector<std::uint8_t> encode_pcv(const RawVideo& v) {
    if (v.width == 0 || v.height == 0 || v.width > UINT16_MAX || v.height > UINT16_MAX)
        throw IoError(fmt::format("pcv frame size {}x{} out of range", v.width, v.height));
    if (v.channels == 0 || v.channels > UINT8_MAX) throw IoError("pcv channel count out of range");
    if (v.pixels.size() % v.frame_bytes() != 0) throw IoError("pixel buffer is not a whole number of frames");
    ByteWriter w;
    w.magic("PCBV");
    w.put(kPcvVersion);
    w.put(static_cast<std::uint16_t>(v.width));
    w.put(static_cast<std::uint16_t>(v.height));
    w.put(static_cast<std::uint8_t>(v.channels));
    w.put(static_cast<std::uint32_t>(v.frame_count()));
    w.put(v.fps.numerator);
    w.put(v.fps.denominator);
    w.bytes(v.pixels);
    return w.take();
}

namespace {

PcvHeader parse_pcv_header(ByteReader& r) {
    if (!r.magic("PCBV")) throw IoError("not a .pcv file: bad magic");
    const auto version = r.get<std::uint8_t>();
    if (version != kPcvVersion) throw IoError(fmt::format("unsupported .pcv version {}", version));
    PcvHeader h;
    h.width = r.get<std::uint16_t>();
    h.height = r.get<std::uint16_t>();
    h.channels = r.get<std::uint8_t>();
    h.frame_count = r.get<std::uint32_t>();
    h.fps.numerator = r.get<std::uint16_t>();
    h.fps.denominator = r.get<std::uint16_t>();
    if (h.width == 0 || h.height == 0 || h.channels == 0) throw IoError(".pcv header has a zero extent");
    if (h.fps.numerator == 0 || h.fps.denominator == 0) throw IoError(".pcv header has a zero frame rate term");
    return h;
}

}  // namespace

RawVideo decode_pcv(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    const PcvHeader h = parse_pcv_header(r);
    const std::size_t payload = h.width * h.height * h.channels * h.frame_count;
    if (r.remaining() != payload)
        throw IoError(fmt::format(".pcv payload is {} bytes, header implies {}", r.remaining(), payload));
    RawVideo v{h.width, h.height, h.channels, h.fps, {}};
    const auto data = r.bytes(payload);
    v.pixels.assign(data.begin(), data.end());
    return v;
}

PcvHeader read_pcv_header(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
    std::array<std::uint8_t, kPcvHeaderBytes> buf{};
    in.read(reinterpret_cast<char*>(buf.data()), buf.size());
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
        throw IoError(fmt::format("{}: truncated .pcv header", path.string()));
    ByteReader r(buf);
    return parse_pcv_header(r);
}

RawVideo read_pcv(const std::filesystem::path& path) {
    try {
        return decode_pcv(read_file_bytes(path));
    } catch (const IoError& e) {
        throw IoError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

void write_pcv(const std::filesystem::path& path, const RawVideo& video) { write_file_atomic(path, encode_pcv(video)); }

// ---- PNG --------------------------------------------------------------------

namespace {

struct PngFrame {
    std::size_t width, height, channels;
    std::vector<std::uint8_t> pixels;
};

PngFrame read_png(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw IoError(fmt::format("{}: {}", path.string(), image.message));
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    PngFrame f{image.width, image.height, color ? 3u : 1u, {}};
    f.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, f.pixels.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw IoError(fmt::format("{}: {}", path.string(), msg));
    }
    return f;
}

}  // namespace

RawVideo read_png_dir(const std::filesystem::path& dir, Fps fps) {
    static const std::regex number(R"((\d+))");
    std::vector<std::pair<std::uint64_t, std::filesystem::path>> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext != ".png") continue;
        const std::string stem = e.path().stem().string();
        std::uint64_t index = 0;
        // Last run of digits in the name is the frame number.
        for (auto it = std::sregex_iterator(stem.begin(), stem.end(), number); it != std::sregex_iterator(); ++it)
            index = std::stoull((*it)[1]);
        files.emplace_back(index, e.path());
    }
    if (files.empty()) throw IoError(fmt::format("{}: no PNG frames", dir.string()));
    std::sort(files.begin(), files.end());

    RawVideo v;
    v.fps = fps;
    for (const auto& [index, path] : files) {
        PngFrame f = read_png(path);
        if (v.pixels.empty()) {
            v.width = f.width;
            v.height = f.height;
            v.channels = f.channels;
        } else if (f.width != v.width || f.height != v.height || f.channels != v.channels) {
            throw IoError(fmt::format("{}: frame geometry differs from the first frame", path.string()));
        }
        v.pixels.insert(v.pixels.end(), f.pixels.begin(), f.pixels.end());
    }
    return v;
}

std::vector<std::uint8_t> encode_png(std::span<const std::uint8_t> pixels, std::size_t width, std::size_t height,
                                     std::size_t channels) {
    if (channels != 1 && channels != 3) throw IoError(fmt::format("cannot encode {}-channel PNG", channels));
    if (pixels.size() != width * height * channels) throw IoError("PNG pixel buffer size mismatch");
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr))
        throw IoError(fmt::format("PNG encode failed: {}", image.message));
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr))
        throw IoError(fmt::format("PNG encode failed: {}", image.message));
    out.resize(size);
    return out;
}

RawVideo load_video(const std::filesystem::path& path) {
    if (std::filesystem::is_directory(path)) return read_png_dir(path);
    return read_pcv(path);
}

std::size_t video_frame_count(const std::filesystem::path& path) {
    if (std::filesystem::is_directory(path)) return load_video(path).frame_count();
    return read_pcv_header(path).frame_count;
}

// ---- tensors ----------------------------------------------------------------

Tensor frame_tensor(const RawVideo& video, std::size_t index, ChannelMode mode) {
    const auto px = video.frame(index);
    const std::size_t H = video.height, W = video.width, C = video.channels;
    if (mode == ChannelMode::Native || C == 1) {
        Tensor t({C, H, W});
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                for (std::size_t c = 0; c < C; ++c) t[(c * H + y) * W + x] = px[(y * W + x) * C + c] / 255.0f;
        return t;
    }
    if (C < 3) throw IoError(fmt::format("luma conversion needs 3 channels, video has {}", C));
    Tensor t({1, H, W});
    for (std::size_t i = 0; i < H * W; ++i) {
        const float r = px[i * C], g = px[i * C + 1], b = px[i * C + 2];
        t[i] = (0.299f * r + 0.587f * g + 0.114f * b) / 255.0f;
    }
    return t;
}

Tensor resize_frame(const Tensor& frame, std::size_t out_h, std::size_t out_w) {
    if (frame.rank() != 3) throw ShapeError(fmt::format("resize_frame expects [ch,H,W], got {}", frame.shape().str()));
    if (out_h == 0 || out_w == 0) throw ShapeError("resize target must be non-empty");
    const std::size_t C = frame.dim(0), H = frame.dim(1), W = frame.dim(2);
    if (H == out_h && W == out_w) return frame;

    // Source coordinate and blend weight for each output index along one axis.
    struct Tap {
        std::size_t lo, hi;
        float frac;
    };
    auto taps = [](std::size_t n_in, std::size_t n_out) {
        std::vector<Tap> t(n_out);
        const double ratio = static_cast<double>(n_in) / static_cast<double>(n_out);
        for (std::size_t o = 0; o < n_out; ++o) {
            const double src = std::clamp((static_cast<double>(o) + 0.5) * ratio - 0.5, 0.0, static_cast<double>(n_in - 1));
            const auto lo = static_cast<std::size_t>(src);
            t[o] = {lo, std::min(lo + 1, n_in - 1), static_cast<float>(src - static_cast<double>(lo))};
        }
        return t;
    };
    const auto ty = taps(H, out_h), tx = taps(W, out_w);

    Tensor out({C, out_h, out_w});
    for (std::size_t c = 0; c < C; ++c) {
        const float* src = frame.ptr() + c * H * W;
        const auto [mn, mx] = std::minmax_element(src, src + H * W);
        const float lo_v = *mn, hi_v = *mx;
        float* dst = out.ptr() + c * out_h * out_w;
        for (std::size_t y = 0; y < out_h; ++y) {
            const Tap& a = ty[y];
            const float* r0 = src + a.lo * W;
            const float* r1 = src + a.hi * W;
            for (std::size_t x = 0; x < out_w; ++x) {
                const Tap& b = tx[x];
                const float top = r0[b.lo] + (r0[b.hi] - r0[b.lo]) * b.frac;
                const float bot = r1[b.lo] + (r1[b.hi] - r1[b.lo]) * b.frac;
                dst[y * out_w + x] = std::clamp(top + (bot - top) * a.frac, lo_v, hi_v);
            }
        }
    }
    return out;
}

}  // namespace pcb
