#include <gtest/gtest.h>

#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "pcb/binary_io.hpp"
#include "pcb/server/annotation_server.hpp"
#include "pcb/synth.hpp"
#include "support/tmpdir.hpp"

using namespace pcb;
using nlohmann::json;

namespace {

// Synthetic dataset with the annotation of one crime video removed, served on a free port.
class ServerTest : public ::testing::Test {
protected:
    void SetUp() override {
        SynthSpec spec;
        spec.per_class = {2, 2, 0, 0, 0};
        spec.seed = 3;
        spec.blobs = 3;
        const auto r = synth_dataset(spec, dir.path());
        manifest_path = r.manifest_path;
        DatasetManifest m = r.manifest;
        for (auto& e : m.entries)
            if (e.id() == "shoplifting_001") {
                std::filesystem::remove(dir / *e.annotation);
                e.annotation.reset();
            }
        save_manifest(manifest_path, m);
        start();
    }

    void start() {
        server = std::make_unique<server::AnnotationServer>(manifest_path);
        port = server->bind("127.0.0.1", 0);
        thread = std::thread([this] { server->listen(); });
        server->http().wait_until_ready();
        client = std::make_unique<httplib::Client>("127.0.0.1", port);
    }

    void restart() {
        TearDown();
        start();
    }

    void TearDown() override {
        if (server) server->stop();
        if (thread.joinable()) thread.join();
        server.reset();
    }

    json get_json(const std::string& path, int expect = 200) {
        auto res = client->Get(path);
        EXPECT_TRUE(res);
        if (!res) return {};
        EXPECT_EQ(res->status, expect) << path << ": " << res->body;
        return json::parse(res->body);
    }

    httplib::Result put(const std::string& id, const json& body) {
        return client->Put("/api/videos/" + id + "/annotation", body.dump(), "application/json");
    }

    testing_support::TempDir dir;
    std::filesystem::path manifest_path;
    std::unique_ptr<server::AnnotationServer> server;
    std::unique_ptr<httplib::Client> client;
    std::thread thread;
    int port = 0;
};

std::size_t frames_of(const json& list, const std::string& id) {
    for (const auto& v : list)
        if (v["id"] == id) return v["frame_count"];
    return 0;
}

}  // namespace

TEST_F(ServerTest, ListsVideos) {
    const json list = get_json("/api/videos");
    ASSERT_EQ(list.size(), 4u);
    std::size_t annotated = 0;
    for (const auto& v : list) {
        EXPECT_TRUE(v.contains("id") && v.contains("label") && v.contains("frame_count"));
        annotated += v["annotated"].get<bool>() ? 1 : 0;
        if (v["id"] == "shoplifting_001") EXPECT_FALSE(v["annotated"].get<bool>());
    }
    EXPECT_EQ(annotated, 1u);
}

TEST_F(ServerTest, VideoDetails) {
    const json v = get_json("/api/videos/shoplifting_000");
    EXPECT_EQ(v["label"], "shoplifting");
    EXPECT_EQ(v["width"], 80);
    EXPECT_EQ(v["height"], 60);
    EXPECT_TRUE(v["annotated"].get<bool>());
    EXPECT_EQ(v["annotation"]["video_id"], "shoplifting_000");
    EXPECT_TRUE(get_json("/api/videos/normal_000")["annotation"].is_null());
    get_json("/api/videos/nope", 404);
}

TEST_F(ServerTest, FramesArePngAndBounded) {
    const std::size_t n = frames_of(get_json("/api/videos"), "normal_001");
    ASSERT_GT(n, 0u);
    auto first = client->Get("/api/videos/normal_001/frames/0");
    ASSERT_TRUE(first);
    EXPECT_EQ(first->status, 200);
    EXPECT_EQ(first->get_header_value("Content-Type"), "image/png");
    ASSERT_GE(first->body.size(), 8u);
    EXPECT_EQ(first->body.substr(1, 3), "PNG");
    auto last = client->Get("/api/videos/normal_001/frames/" + std::to_string(n - 1));
    EXPECT_EQ(last->status, 200);
    EXPECT_EQ(client->Get("/api/videos/normal_001/frames/" + std::to_string(n))->status, 404);
    EXPECT_EQ(client->Get("/api/videos/normal_001/frames/99999999999999999999999")->status, 404);
    EXPECT_EQ(client->Get("/api/videos/nope/frames/0")->status, 404);
}

TEST_F(ServerTest, AnnotationRoundTripForUnannotatedVideo) {
    EXPECT_EQ(client->Get("/api/videos/shoplifting_001/annotation")->status, 404);
    const std::size_t n = frames_of(get_json("/api/videos"), "shoplifting_001");
    const json body{{"first_appearance", 1}, {"ccm", n / 2}, {"scm", n - 2}, {"annotator", "tester"},
                    {"created_at", "2026-01-01T00:00:00Z"}};
    auto res = put("shoplifting_001", body);
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200) << res->body;

    auto got = client->Get("/api/videos/shoplifting_001/annotation");
    ASSERT_EQ(got->status, 200);
    const PcbAnnotation a = annotation_from_json(got->body);
    EXPECT_EQ(a.video_id, "shoplifting_001");
    EXPECT_EQ(a.ccm, n / 2);
    EXPECT_EQ(a.annotator, "tester");
    // Stored next to the video and recorded in the manifest, so a strict load now succeeds.
    EXPECT_TRUE(std::filesystem::exists(dir / "videos" / "shoplifting_001.annotation.json"));
    const DatasetManifest m = load_manifest(manifest_path);
    EXPECT_EQ(*m.find("shoplifting_001")->annotation, "videos/shoplifting_001.annotation.json");

    restart();
    EXPECT_EQ(annotation_from_json(client->Get("/api/videos/shoplifting_001/annotation")->body), a);
}

TEST_F(ServerTest, ViolationsAreRejectedWithoutWriting) {
    const auto path = dir / "annotations" / "shoplifting_000.json";
    const std::string before = read_text_file(path);
    auto res = put("shoplifting_000", json{{"first_appearance", 2}, {"ccm", 12}, {"scm", 8}});
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 422);
    EXPECT_NE(json::parse(res->body)["error"].get<std::string>().find("ccm (12) must not be after scm (8)"), std::string::npos);
    EXPECT_EQ(read_text_file(path), before);

    EXPECT_EQ(put("shoplifting_000", json{{"first_appearance", 0}, {"ccm", 5}, {"scm", 100000}})->status, 422);
    EXPECT_EQ(put("shoplifting_000", json{{"video_id", "other"}, {"first_appearance", 0}, {"ccm", 5}, {"scm", 6}})->status, 422);
    EXPECT_EQ(put("normal_000", json{{"first_appearance", 0}, {"ccm", 5}, {"scm", 6}})->status, 422);
    EXPECT_FALSE(std::filesystem::exists(dir / "videos" / "normal_000.annotation.json"));
    EXPECT_EQ(put("shoplifting_000", json{{"first_appearance", -1}, {"ccm", 5}, {"scm", 6}})->status, 400);
    EXPECT_EQ(client->Put("/api/videos/shoplifting_000/annotation", "{oops", "application/json")->status, 400);
    EXPECT_EQ(put("nope", json{{"first_appearance", 0}, {"ccm", 5}, {"scm", 6}})->status, 404);
    EXPECT_EQ(read_text_file(path), before);
}

TEST_F(ServerTest, ConcurrentWritesLeaveOneValidAnnotation) {
    const std::size_t n = frames_of(get_json("/api/videos"), "shoplifting_001");
    std::vector<std::thread> writers;
    for (std::size_t i = 0; i < 8; ++i)
        writers.emplace_back([&, i] {
            httplib::Client c("127.0.0.1", port);
            const json body{{"first_appearance", i % 3}, {"ccm", 4 + i}, {"scm", n - 1}};
            auto r = c.Put("/api/videos/shoplifting_001/annotation", body.dump(), "application/json");
            EXPECT_TRUE(r && r->status == 200);
        });
    for (auto& t : writers) t.join();
    const PcbAnnotation a = load_annotation(dir / "videos" / "shoplifting_001.annotation.json");
    EXPECT_TRUE(annotation_violations(a, n).empty());
    EXPECT_NO_THROW(load_manifest(manifest_path));
}

TEST_F(ServerTest, PlaceholderIndex) {
    auto res = client->Get("/");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_NE(res->body.find("/api/videos"), std::string::npos);
}

TEST(AnnotationServer, StaticDirectoryAndBusyPort) {
    testing_support::TempDir dir;
    SynthSpec spec;
    spec.per_class = {1, 0, 0, 0, 0};
    const auto r = synth_dataset(spec, dir.path());
    std::filesystem::create_directories(dir / "ui");
    write_text_atomic(dir / "ui" / "index.html", "<html>ui</html>");
    server::AnnotationServer a(r.manifest_path, {dir / "ui"});
    const int port = a.bind("127.0.0.1", 0);
    std::thread t([&] { a.listen(); });
    a.http().wait_until_ready();
    httplib::Client c("127.0.0.1", port);
    auto res = c.Get("/index.html");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->body, "<html>ui</html>");

    server::AnnotationServer b(r.manifest_path);
    EXPECT_THROW(b.bind("127.0.0.1", port), IoError);
    a.stop();
    t.join();
    EXPECT_THROW(server::AnnotationServer(r.manifest_path, {dir / "missing"}), ValidationError);
}
