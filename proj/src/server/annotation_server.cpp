#include "pcb/server/annotation_server.hpp"

#include <chrono>
#include <ctime>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <httplib.h>
#include <json.hpp>

#include "pcb/error.hpp"

namespace pcb::server {

namespace fs = std::filesystem;
using nlohmann::json;

struct AnnotationServer::VideoState {
    std::size_t entry = 0;  // index into manifest_.entries
    std::size_t frame_count = 0;
    std::mutex write_mutex;
    std::mutex cache_mutex;
    std::shared_ptr<const RawVideo> cache;
};

namespace {

constexpr const char* kPlaceholderIndex = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>PCB annotator</title></head>
<body>
<h1>PCB annotator</h1>
<p>The annotator UI is not installed. Start the server with <code>--static &lt;dir&gt;</code>
pointing at its build output, or use the REST API directly:</p>
<ul>
<li><a href="/api/videos">/api/videos</a></li>
</ul>
</body></html>
)";

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, json{{"error", message}});
}

json annotation_json(const PcbAnnotation& a) { return json::parse(annotation_to_json(a)); }

}  // namespace

AnnotationServer::AnnotationServer(const fs::path& manifest_path, ServerOptions options)
    : manifest_path_(manifest_path),
      manifest_(load_manifest(manifest_path, ManifestOptions{.require_annotations = false, .check_files = true})),
      options_(std::move(options)),
      http_(std::make_unique<httplib::Server>()) {
    for (std::size_t i = 0; i < manifest_.entries.size(); ++i) {
        auto state = std::make_unique<VideoState>();
        state->entry = i;
        state->frame_count = video_frame_count(manifest_.video_path(manifest_.entries[i]));
        videos_.emplace(manifest_.entries[i].id(), std::move(state));
    }
    if (options_.static_dir && !fs::is_directory(*options_.static_dir))
        throw ValidationError(fmt::format("static directory {} does not exist", options_.static_dir->string()));
    // SO_REUSEADDR only: the library default also sets SO_REUSEPORT, which would
    // let a second server share a busy port instead of failing to bind.
    http_->set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof yes);
    });
    install_routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

httplib::Server& AnnotationServer::http() { return *http_; }

int AnnotationServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = http_->bind_to_any_port(host);
        if (bound <= 0) throw IoError(fmt::format("cannot bind to {}", host));
        return bound;
    }
    if (!http_->bind_to_port(host, port)) throw IoError(fmt::format("cannot bind to {}:{} (port busy?)", host, port));
    return port;
}

void AnnotationServer::listen() {
    if (!http_->listen_after_bind()) throw IoError("server stopped with an error");
}

void AnnotationServer::stop() {
    if (http_ && http_->is_running()) http_->stop();
}

AnnotationServer::VideoState* AnnotationServer::find(const std::string& id) {
    auto it = videos_.find(id);
    return it == videos_.end() ? nullptr : it->second.get();
}

std::shared_ptr<const RawVideo> AnnotationServer::frames(VideoState& v) {
    std::lock_guard lock(v.cache_mutex);
    if (!v.cache) v.cache = std::make_shared<const RawVideo>(load_video(manifest_.video_path(manifest_.entries[v.entry])));
    return v.cache;
}

void AnnotationServer::install_routes() {
    auto& s = *http_;

    // Entries are only modified under the owning video's write mutex plus
    // manifest_mutex_, so readers take manifest_mutex_ for a consistent copy.
    auto entry_copy = [this](const VideoState& v) {
        std::lock_guard lock(manifest_mutex_);
        return manifest_.entries[v.entry];
    };
    auto current_annotation = [this](const ManifestEntry& e) -> std::optional<PcbAnnotation> {
        const auto path = manifest_.annotation_path(e);
        if (!path || !fs::exists(*path)) return std::nullopt;
        return load_annotation(*path);
    };

    s.Get("/api/videos", [=, this](const httplib::Request&, httplib::Response& res) {
        json list = json::array();
        for (const auto& e : manifest_.entries) {
            const VideoState& v = *videos_.at(e.id());
            const ManifestEntry cur = entry_copy(v);
            const auto path = manifest_.annotation_path(cur);
            list.push_back({{"id", cur.id()},
                            {"label", label_name(cur.label)},
                            {"frame_count", v.frame_count},
                            {"annotated", path.has_value() && fs::exists(*path)}});
        }
        send_json(res, 200, list);
    });

    s.Get(R"(/api/videos/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
        VideoState* v = find(req.matches[1]);
        if (!v) return send_error(res, 404, fmt::format("unknown video '{}'", std::string(req.matches[1])));
        const ManifestEntry cur = entry_copy(*v);
        const auto header = fs::is_directory(manifest_.video_path(cur)) ? std::optional<PcvHeader>{}
                                                                        : read_pcv_header(manifest_.video_path(cur));
        json body{{"id", cur.id()}, {"label", label_name(cur.label)}, {"frame_count", v->frame_count}};
        if (header) {
            body["width"] = header->width;
            body["height"] = header->height;
            body["channels"] = header->channels;
            body["fps"] = {{"numerator", header->fps.numerator}, {"denominator", header->fps.denominator}};
        } else {
            const auto video = frames(*v);
            body["width"] = video->width;
            body["height"] = video->height;
            body["channels"] = video->channels;
            body["fps"] = {{"numerator", video->fps.numerator}, {"denominator", video->fps.denominator}};
        }
        const auto ann = current_annotation(cur);
        body["annotated"] = ann.has_value();
        body["annotation"] = ann ? annotation_json(*ann) : json(nullptr);
        send_json(res, 200, body);
    });

    s.Get(R"(/api/videos/([^/]+)/frames/(\d+))", [=, this](const httplib::Request& req, httplib::Response& res) {
        VideoState* v = find(req.matches[1]);
        if (!v) return send_error(res, 404, fmt::format("unknown video '{}'", std::string(req.matches[1])));
        std::size_t n = 0;
        try {
            n = std::stoull(req.matches[2]);
        } catch (const std::out_of_range&) {
            n = v->frame_count;
        }
        if (n >= v->frame_count)
            return send_error(res, 404, fmt::format("frame {} past the end ({} frames)", std::string(req.matches[2]), v->frame_count));
        const auto video = frames(*v);
        const auto png = encode_png(video->frame(n), video->width, video->height, video->channels);
        res.status = 200;
        res.set_content(std::string(png.begin(), png.end()), "image/png");
    });

    s.Get(R"(/api/videos/([^/]+)/annotation)", [=, this](const httplib::Request& req, httplib::Response& res) {
        VideoState* v = find(req.matches[1]);
        if (!v) return send_error(res, 404, fmt::format("unknown video '{}'", std::string(req.matches[1])));
        const auto ann = current_annotation(entry_copy(*v));
        if (!ann) return send_error(res, 404, fmt::format("video '{}' has no annotation", std::string(req.matches[1])));
        res.status = 200;
        res.set_content(annotation_to_json(*ann), "application/json");
    });

    s.Put(R"(/api/videos/([^/]+)/annotation)", [=, this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        VideoState* v = find(id);
        if (!v) return send_error(res, 404, fmt::format("unknown video '{}'", id));

        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::parse_error& e) {
            return send_error(res, 400, fmt::format("request body is not valid JSON: {}", e.what()));
        }
        if (!body.is_object()) return send_error(res, 400, "annotation must be a JSON object");
        if (!body.contains("video_id")) body["video_id"] = id;
        if (!body.contains("annotator")) body["annotator"] = "anonymous";
        if (!body.contains("created_at")) body["created_at"] = utc_now();

        PcbAnnotation ann;
        try {
            ann = annotation_from_json(body.dump());
        } catch (const ValidationError& e) {
            return send_error(res, 400, e.what());
        }

        std::vector<std::string> problems;
        if (ann.video_id != id) problems.push_back(fmt::format("video_id '{}' does not match '{}'", ann.video_id, id));
        const ManifestEntry cur = entry_copy(*v);
        if (!is_crime(cur.label)) problems.push_back("normal videos carry no annotation");
        for (auto& p : annotation_violations(ann, v->frame_count)) problems.push_back(std::move(p));
        if (!problems.empty()) return send_error(res, 422, fmt::format("{}", fmt::join(problems, "; ")));

        std::lock_guard write_lock(v->write_mutex);
        ManifestEntry updated = entry_copy(*v);
        if (!updated.annotation) {
            const fs::path rel = fs::path(updated.path).parent_path() / (id + ".annotation.json");
            updated.annotation = rel.generic_string();
        }
        try {
            save_annotation(manifest_.resolve(*updated.annotation), ann);
            if (!manifest_.entries[v->entry].annotation) {
                std::lock_guard lock(manifest_mutex_);
                manifest_.entries[v->entry] = updated;
                save_manifest(manifest_path_, manifest_);
            }
        } catch (const std::exception& e) {
            return send_error(res, 500, e.what());
        }
        res.status = 200;
        res.set_content(annotation_to_json(ann), "application/json");
    });

    if (options_.static_dir) {
        s.set_mount_point("/", options_.static_dir->string());
    } else {
        s.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_content(kPlaceholderIndex, "text/html"); });
    }

    s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            send_error(res, 500, e.what());
        } catch (...) {
            send_error(res, 500, "unknown error");
        }
    });
}

}  // namespace pcb::server
