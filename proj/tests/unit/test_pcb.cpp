#include <gtest/gtest.h>

#include <fstream>

#include <fmt/format.h>

#include "oracles/oracles.hpp"
#include "pcb/binary_io.hpp"
#include "pcb/error.hpp"
#include "pcb/manifest.hpp"
#include "pcb/rng.hpp"
#include "pcb/synth.hpp"
#include "support/tmpdir.hpp"

using namespace pcb;
using testing_support::TempDir;

namespace {

RawVideo gradient_video(std::size_t frames, std::size_t w = 6, std::size_t h = 4, std::size_t ch = 1) {
    RawVideo v{w, h, ch, {25, 1}, {}};
    for (std::size_t f = 0; f < frames; ++f)
        for (std::size_t i = 0; i < w * h * ch; ++i) v.pixels.push_back(static_cast<std::uint8_t>((f * 31 + i * 7) % 256));
    return v;
}

PcbAnnotation ann(std::size_t first, std::size_t ccm, std::size_t scm) {
    return {"vid", first, ccm, scm, "tester", "2024-05-01T12:00:00Z"};
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& p) { return read_file_bytes(p); }

void write_bytes(const std::filesystem::path& p, std::span<const std::uint8_t> b) { write_file_atomic(p, b); }

}  // namespace

// ---- labels / container ------------------------------------------------------

TEST(Labels, RoundTripAndReject) {
    for (ClassLabel l : kAllLabels) EXPECT_EQ(parse_label(label_name(l)), l);
    EXPECT_THROW(parse_label("burglary"), ValidationError);
    EXPECT_FALSE(is_crime(ClassLabel::Normal));
    EXPECT_TRUE(is_crime(ClassLabel::Arson));
}

TEST(Pcv, RoundTripPreservesEveryField) {
    const RawVideo v = gradient_video(5, 7, 3, 3);
    const auto bytes = encode_pcv(v);
    ASSERT_EQ(bytes.size(), kPcvHeaderBytes + 5 * 7 * 3 * 3);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "PCBV");
    EXPECT_EQ(decode_pcv(bytes), v);
}

TEST(Pcv, HeaderLayoutIsLittleEndian) {
    RawVideo v{0x0102, 0x0304, 1, {0x0506, 0x0708}, {}};
    v.pixels.assign(v.frame_bytes() * 2, 9);
    const auto b = encode_pcv(v);
    const std::vector<std::uint8_t> head(b.begin(), b.begin() + kPcvHeaderBytes);
    const std::vector<std::uint8_t> expect{'P', 'C', 'B', 'V', 1, 0x02, 0x01, 0x04, 0x03, 1,
                                           2, 0, 0, 0, 0x06, 0x05, 0x08, 0x07};
    EXPECT_EQ(head, expect);
}

TEST(Pcv, RejectsCorruptInput) {
    auto bytes = encode_pcv(gradient_video(2));
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(decode_pcv(bad_magic), IoError);
    auto bad_version = bytes;
    bad_version[4] = 2;
    EXPECT_THROW(decode_pcv(bad_version), IoError);
    auto truncated = bytes;
    truncated.pop_back();
    EXPECT_THROW(decode_pcv(truncated), IoError);
    EXPECT_THROW(decode_pcv(std::span(bytes).first(10)), IoError);
}

TEST(Pcv, FileAndHeaderOnlyRead) {
    TempDir dir;
    const RawVideo v = gradient_video(9);
    write_pcv(dir / "a.pcv", v);
    EXPECT_EQ(read_pcv(dir / "a.pcv"), v);
    const PcvHeader h = read_pcv_header(dir / "a.pcv");
    EXPECT_EQ(h.frame_count, 9u);
    EXPECT_EQ(h.width, 6u);
    EXPECT_EQ(video_frame_count(dir / "a.pcv"), 9u);
    EXPECT_THROW(read_pcv(dir / "missing.pcv"), IoError);
}

TEST(Pcv, SliceFrames) {
    const RawVideo v = gradient_video(6);
    const RawVideo s = slice_frames(v, {2, 5});
    ASSERT_EQ(s.frame_count(), 3u);
    EXPECT_TRUE(std::equal(s.frame(0).begin(), s.frame(0).end(), v.frame(2).begin()));
    EXPECT_THROW(slice_frames(v, {4, 7}), std::out_of_range);
}

// ---- PNG -------------------------------------------------------------------

TEST(Png, DirectoryReadSortsNumerically) {
    TempDir dir;
    const RawVideo v = gradient_video(12, 5, 4, 1);
    for (std::size_t f = 0; f < 12; ++f) {
        const auto frame = v.frame(f);
        write_bytes(dir / fmt::format("frame_{}.png", f), encode_png(frame, 5, 4, 1));
    }
    const RawVideo back = read_png_dir(dir.path());
    EXPECT_EQ(back.pixels, v.pixels);
    EXPECT_EQ(back.channels, 1u);
    EXPECT_EQ(load_video(dir.path()).frame_count(), 12u);
}

TEST(Png, ColourFramesLoadAsRgb) {
    TempDir dir;
    const RawVideo v = gradient_video(3, 4, 4, 3);
    for (std::size_t f = 0; f < 3; ++f) write_bytes(dir / fmt::format("{:04}.png", f), encode_png(v.frame(f), 4, 4, 3));
    const RawVideo back = read_png_dir(dir.path());
    EXPECT_EQ(back.channels, 3u);
    EXPECT_EQ(back.pixels, v.pixels);
}

TEST(Png, MismatchedGeometryAndEmptyDirFail) {
    TempDir dir;
    EXPECT_THROW(read_png_dir(dir.path()), IoError);
    std::vector<std::uint8_t> a(16, 1), b(25, 1);
    write_bytes(dir / "0.png", encode_png(a, 4, 4, 1));
    write_bytes(dir / "1.png", encode_png(b, 5, 5, 1));
    EXPECT_THROW(read_png_dir(dir.path()), IoError);
}

// ---- tensors / resize --------------------------------------------------------

TEST(FrameTensor, LumaUsesBt601Weights) {
    RawVideo v{2, 1, 3, {}, {255, 0, 0, 10, 200, 40}};
    const Tensor t = frame_tensor(v, 0, ChannelMode::Luma);
    ASSERT_EQ(t.shape(), (Shape{1, 1, 2}));
    EXPECT_NEAR(t[0], 0.299, 1e-6);
    EXPECT_NEAR(t[1], (0.299 * 10 + 0.587 * 200 + 0.114 * 40) / 255.0, 1e-6);
    const Tensor n = frame_tensor(v, 0, ChannelMode::Native);
    ASSERT_EQ(n.shape(), (Shape{3, 1, 2}));
    EXPECT_FLOAT_EQ(n.at({1, 0, 1}), 200.0f / 255.0f);
}

TEST(Resize, IdentityGeometry) {
    RngStream rng(3);
    const Tensor in = random_uniform({1, 60, 80}, 0, 1, rng);
    const Tensor out = resize_frame(in);
    for (std::size_t i = 0; i < in.size(); ++i) EXPECT_NEAR(out[i], in[i], 1e-6);
}

TEST(Resize, ConstantsAreExact) {
    for (auto [h, w] : {std::pair{1ul, 1ul}, {7ul, 3ul}, {120ul, 160ul}, {61ul, 79ul}, {240ul, 320ul}}) {
        const Tensor out = resize_frame(full({2, h, w}, 0.37f));
        ASSERT_EQ(out.shape(), (Shape{2, 60, 80}));
        for (float v : out.data()) ASSERT_EQ(v, 0.37f);
    }
}

TEST(Resize, CheckerboardMatchesMatrixOracle) {
    const std::size_t H = 120, W = 160;
    Tensor in({1, H, W});
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) in[y * W + x] = ((y / 3 + x / 5) % 2) ? 1.0f : 0.0f;
    const Tensor out = resize_frame(in);
    const auto expect = oracle::bilinear_matrix_resize(oracle::to_vec(in), H, W, 60, 80);
    for (std::size_t i = 0; i < out.size(); ++i) ASSERT_NEAR(out[i], expect[i], 1e-4) << i;
}

TEST(Resize, RandomSizesMatchOracleAndStayInBounds) {
    RngStream rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t H = 1 + rng.bounded(150), W = 1 + rng.bounded(200);
        const Tensor in = random_uniform({1, H, W}, -2, 3, rng);
        const Tensor out = resize_frame(in);
        const auto [mn, mx] = std::minmax_element(in.data().begin(), in.data().end());
        const auto expect = oracle::bilinear_matrix_resize(oracle::to_vec(in), H, W, 60, 80);
        for (std::size_t i = 0; i < out.size(); ++i) {
            ASSERT_GE(out[i], *mn);
            ASSERT_LE(out[i], *mx);
            ASSERT_NEAR(out[i], expect[i], 1e-4);
        }
    }
}

TEST(Resize, RejectsWrongRank) { EXPECT_THROW(resize_frame(zeros({4, 4})), ShapeError); }

// ---- annotations / segmentation --------------------------------------------

TEST(Segment, ThreeWaySplit) {
    const auto s = segment_video(300, ann(20, 150, 240));
    EXPECT_EQ(s.pre_crime, (FrameRange{20, 150}));
    EXPECT_EQ(s.suspicious, (FrameRange{150, 240}));
    EXPECT_EQ(s.evidence, (FrameRange{240, 300}));
}

TEST(Segment, EqualMomentsGiveEmptySuspicious) {
    const auto s = segment_video(50, ann(5, 30, 30));
    EXPECT_TRUE(s.suspicious.empty());
    EXPECT_EQ(s.pre_crime, (FrameRange{5, 30}));
    EXPECT_EQ(s.evidence, (FrameRange{30, 50}));
}

TEST(Segment, MinimalThreeFrames) {
    const auto s = segment_video(3, ann(0, 1, 2));
    EXPECT_EQ(s.pre_crime.size(), 1u);
    EXPECT_EQ(s.suspicious.size(), 1u);
    EXPECT_EQ(s.evidence.size(), 1u);
}

TEST(Segment, Violations) {
    EXPECT_THROW(segment_video(300, ann(20, 240, 150)), ValidationError);  // scm < ccm
    EXPECT_THROW(segment_video(300, ann(20, 20, 100)), ValidationError);   // first == ccm
    EXPECT_THROW(segment_video(300, ann(20, 150, 300)), ValidationError);  // scm past end
    EXPECT_EQ(annotation_violations(ann(50, 10, 5), 4).size(), 3u);
    try {
        segment_video(300, ann(20, 240, 150));
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("vid"), std::string::npos);
    }
}

TEST(Segment, RandomPartitionReconstructsFrames) {
    RngStream rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t T = 3 + rng.bounded(60);
        const std::size_t first = rng.bounded(T - 2);
        const std::size_t ccm = first + 1 + rng.bounded(T - 2 - first);
        const std::size_t scm = ccm + rng.bounded(T - ccm);
        const RawVideo v = gradient_video(T, 3, 2);
        const auto s = segment_video(T, ann(first, ccm, scm));
        EXPECT_EQ(s.pre_crime.begin, first);
        EXPECT_EQ(s.pre_crime.end, s.suspicious.begin);
        EXPECT_EQ(s.suspicious.end, s.evidence.begin);
        EXPECT_EQ(s.evidence.end, T);
        EXPECT_FALSE(s.pre_crime.empty());
        EXPECT_FALSE(s.evidence.empty());
        std::vector<std::uint8_t> joined;
        for (const auto& r : {s.pre_crime, s.suspicious, s.evidence}) {
            const auto part = slice_frames(v, r).pixels;
            joined.insert(joined.end(), part.begin(), part.end());
        }
        const auto tail = slice_frames(v, {first, T}).pixels;
        ASSERT_EQ(joined, tail);
    }
}

TEST(TrainingFrames, CrimeUsesPreCrimeNormalUsesAll) {
    EXPECT_EQ(pcb_training_frames(ClassLabel::Stealing, 300, ann(20, 150, 240)), (FrameRange{20, 150}));
    EXPECT_EQ(pcb_training_frames(ClassLabel::Normal, 100, std::nullopt), (FrameRange{0, 100}));
    EXPECT_EQ(pcb_training_frames(ClassLabel::Abuse, 300, ann(20, 21, 240)).size(), 1u);
    EXPECT_THROW(pcb_training_frames(ClassLabel::Arson, 100, std::nullopt), ValidationError);
}

TEST(AnnotationJson, RoundTripAndStructuralErrors) {
    const PcbAnnotation a = ann(3, 40, 41);
    EXPECT_EQ(annotation_from_json(annotation_to_json(a)), a);
    EXPECT_THROW(annotation_from_json("{"), ValidationError);
    EXPECT_THROW(annotation_from_json("[]"), ValidationError);
    EXPECT_THROW(annotation_from_json(R"({"video_id":"x","first_appearance":-1,"ccm":2,"scm":3,"annotator":"a","created_at":"t"})"),
                 ValidationError);
    EXPECT_THROW(annotation_from_json(R"({"video_id":"x","first_appearance":1,"ccm":2.5,"scm":3,"annotator":"a","created_at":"t"})"),
                 ValidationError);
    EXPECT_THROW(annotation_from_json(R"({"video_id":"x","ccm":2,"scm":3,"annotator":"a","created_at":"t"})"),
                 ValidationError);
}

// ---- clips -----------------------------------------------------------------

TEST(Clips, CountFormula) {
    EXPECT_EQ(clip_count(100, 16, 16), 6u);
    EXPECT_EQ(clip_count(16, 16, 1), 1u);
    EXPECT_EQ(clip_count(10, 16, 16), 0u);
    EXPECT_EQ(clip_count(100, 16, 8), 11u);
    EXPECT_THROW(clip_count(10, 0, 1), ValidationError);
}

TEST(Clips, WindowsHaveFixedGeometryAndContent) {
    VideoSample s{"v", ClassLabel::Shoplifting, gradient_video(100, 80, 60, 1)};
    const ClipSet set = extract_clips(s, {0, 100}, {16, 16, ChannelMode::Luma});
    ASSERT_EQ(set.clips.size(), 6u);
    EXPECT_TRUE(set.warnings.empty());
    for (std::size_t k = 0; k < set.clips.size(); ++k) {
        const Clip& c = set.clips[k];
        ASSERT_EQ(c.tensor.shape(), (Shape{1, 16, 60, 80}));
        EXPECT_EQ(c.start_frame, 16 * k);
        EXPECT_EQ(c.label, ClassLabel::Shoplifting);
        EXPECT_EQ(c.source_id, "v");
        const auto px = s.video.frame(16 * k + 5);
        EXPECT_FLOAT_EQ(c.tensor.at({0, 5, 2, 3}), px[2 * 80 + 3] / 255.0f);
    }
}

TEST(Clips, ResizesAndHonoursRangeOffset) {
    VideoSample s{"big", ClassLabel::Normal, gradient_video(30, 160, 120, 3)};
    const ClipSet set = extract_clips(s, {7, 30}, {16, 1, ChannelMode::Luma});
    ASSERT_EQ(set.clips.size(), 8u);
    EXPECT_EQ(set.clips.front().start_frame, 7u);
    EXPECT_EQ(set.clips.front().tensor.shape(), (Shape{1, 16, 60, 80}));
    const Tensor expect = resize_frame(frame_tensor(s.video, 9, ChannelMode::Luma));
    const Clip& c = set.clips[1];  // starts at frame 8; local frame 1 is frame 9
    for (std::size_t i = 0; i < 60 * 80; ++i) ASSERT_EQ(c.tensor[60 * 80 + i], expect[i]);
}

TEST(Clips, ShortRangeWarnsInsteadOfFailing) {
    VideoSample s{"short", ClassLabel::Arson, gradient_video(10, 80, 60)};
    const ClipSet set = extract_clips(s, {0, 10}, {});
    EXPECT_TRUE(set.clips.empty());
    ASSERT_EQ(set.warnings.size(), 1u);
    EXPECT_EQ(set.warnings[0].source_id, "short");
    EXPECT_THROW(extract_clips(s, {0, 11}, {}), std::out_of_range);
}

// ---- manifest ----------------------------------------------------------------

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) { write_text_atomic(p, s); }

}  // namespace

TEST(Manifest, EmptyEntriesIsValid) {
    const auto m = parse_manifest(R"({"version":1,"entries":[]})", ".");
    EXPECT_TRUE(m.entries.empty());
    for (auto c : m.class_counts()) EXPECT_EQ(c, 0u);
}

TEST(Manifest, ParseErrorReportsLine) {
    try {
        parse_manifest("{\n  \"version\": 1,\n  \"entries\": [\n    {,}\n  ]\n}", ".");
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_manifest(R"({"version":2,"entries":[]})", "."), ValidationError);
    EXPECT_THROW(parse_manifest(R"({"version":1})", "."), ValidationError);
}

TEST(Manifest, InvariantViolationNamesEntry) {
    TempDir dir;
    write_pcv(dir / "theft_7.pcv", gradient_video(300));
    write_text(dir / "theft_7.json", annotation_to_json(ann(20, 240, 150)));
    write_pcv(dir / "ok.pcv", gradient_video(10));
    write_text(dir / "manifest.json",
               R"({"version":1,"entries":[{"path":"ok.pcv","label":"normal","annotation":null},
                   {"path":"theft_7.pcv","label":"stealing","annotation":"theft_7.json"}]})");
    try {
        load_manifest(dir / "manifest.json");
        FAIL();
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("theft_7"), std::string::npos) << msg;
        EXPECT_NE(msg.find("scm"), std::string::npos) << msg;
        EXPECT_EQ(msg.find("(ok)"), std::string::npos) << msg;
    }
}

TEST(Manifest, CollectsEveryProblem) {
    TempDir dir;
    write_text(dir / "manifest.json",
               R"({"version":1,"entries":[{"path":"a.pcv","label":"normal","annotation":null},
                   {"path":"b.pcv","label":"arson","annotation":null},
                   {"path":"c.pcv","label":"robbery","annotation":null}]})");
    try {
        load_manifest(dir / "manifest.json");
        FAIL();
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("(a)"), std::string::npos) << msg;
        EXPECT_NE(msg.find("(b)"), std::string::npos) << msg;
        EXPECT_NE(msg.find("robbery"), std::string::npos) << msg;
    }
}

TEST(Manifest, RelaxedModeAcceptsMissingAnnotation) {
    TempDir dir;
    write_pcv(dir / "b.pcv", gradient_video(4));
    const std::string text = R"({"version":1,"entries":[{"path":"b.pcv","label":"arson","annotation":null}]})";
    EXPECT_THROW(parse_manifest(text, dir.path()), ValidationError);
    ManifestOptions relaxed;
    relaxed.require_annotations = false;
    EXPECT_EQ(parse_manifest(text, dir.path(), relaxed).entries.size(), 1u);
}

TEST(Manifest, DuplicateIdsRejected) {
    ManifestOptions no_files;
    no_files.check_files = false;
    EXPECT_THROW(parse_manifest(R"({"version":1,"entries":[{"path":"x/a.pcv","label":"normal","annotation":null},
                                  {"path":"y/a.pcv","label":"normal","annotation":null}]})",
                                ".", no_files),
                 ValidationError);
}

TEST(Manifest, WriteLoadRoundTrip) {
    TempDir dir;
    SynthSpec spec;
    spec.per_class = {2, 1, 1, 1, 1};
    spec.seed = 5;
    const auto r = synth_dataset(spec, dir.path());
    const auto loaded = load_manifest(r.manifest_path);
    EXPECT_EQ(loaded.entries, r.manifest.entries);
    const auto again = parse_manifest(manifest_to_json(loaded), dir.path());
    EXPECT_EQ(again.entries, loaded.entries);
    EXPECT_EQ(manifest_to_json(again), read_text_file(r.manifest_path));
}

// ---- synthetic data ------------------------------------------------------------

TEST(Synth, CountsMatchSpec) {
    TempDir dir;
    SynthSpec spec;
    spec.per_class = {3, 1, 2, 4, 1};
    spec.seed = 9;
    const auto r = synth_dataset(spec, dir.path());
    const auto m = load_manifest(r.manifest_path);
    EXPECT_EQ(m.class_counts(), spec.per_class);
    const auto data = load_dataset(m);
    ASSERT_EQ(data.size(), 11u);
    for (const auto& lv : data) {
        EXPECT_EQ(lv.annotation.has_value(), is_crime(lv.sample.label));
        const FrameRange fr = pcb_training_frames(lv.sample.label, lv.sample.frame_count(), lv.annotation);
        EXPECT_GE(fr.size(), spec.clip_length) << lv.sample.id;
        EXPECT_EQ(lv.sample.video.width, 80u);
        EXPECT_EQ(lv.sample.video.height, 60u);
    }
}

TEST(Synth, SameSeedIsByteIdentical) {
    TempDir a, b;
    SynthSpec spec;
    spec.per_class = {2, 2, 0, 0, 1};
    spec.seed = 77;
    synth_dataset(spec, a.path());
    synth_dataset(spec, b.path());
    std::size_t files = 0;
    for (const auto& e : std::filesystem::recursive_directory_iterator(a.path())) {
        if (!e.is_regular_file()) continue;
        const auto rel = std::filesystem::relative(e.path(), a.path());
        ASSERT_EQ(slurp(e.path()), slurp(b.path() / rel)) << rel;
        ++files;
    }
    EXPECT_EQ(files, 5u + 3u + 1u);
}

TEST(Synth, DifferentSeedsDiffer) {
    SynthSpec s1, s2;
    s2.seed = 1;
    EXPECT_NE(synth_video(s1, ClassLabel::Normal, 0).sample.video.pixels,
              synth_video(s2, ClassLabel::Normal, 0).sample.video.pixels);
}

TEST(Synth, BlobAbsentBeforeFirstAppearance) {
    SynthSpec spec;
    for (std::size_t i = 0; i < 20; ++i) {
        const auto lv = synth_video(spec, ClassLabel::Stealing, i);
        ASSERT_TRUE(lv.annotation);
        validate_annotation(*lv.annotation, lv.sample.frame_count());
        for (std::size_t f = 0; f < lv.annotation->first_appearance; ++f) {
            const auto px = lv.sample.video.frame(f);
            EXPECT_LT(*std::max_element(px.begin(), px.end()), 100) << "frame " << f;
        }
        const auto px = lv.sample.video.frame(lv.annotation->first_appearance);
        EXPECT_GT(*std::max_element(px.begin(), px.end()), 150);
    }
}

TEST(Synth, RejectsBadSpec) {
    TempDir dir;
    SynthSpec spec;
    EXPECT_THROW(synth_dataset(spec, dir.path()), ValidationError);
    spec.per_class = {1, 0, 0, 0, 0};
    spec.similarity = 1.5;
    EXPECT_THROW(synth_dataset(spec, dir.path()), ValidationError);
}
