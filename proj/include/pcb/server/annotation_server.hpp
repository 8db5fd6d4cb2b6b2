#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "pcb/manifest.hpp"

namespace httplib {
class Server;
}

namespace pcb::server {

struct ServerOptions {
    /// Directory with the annotator UI build. When unset a placeholder page is served at /.
    std::optional<std::filesystem::path> static_dir;
};

/// REST backend of the annotation tool.
///
///   GET /api/videos                     [{id, label, frame_count, annotated}]
///   GET /api/videos/{id}                metadata plus the current annotation or null
///   GET /api/videos/{id}/frames/{n}     frame n as image/png
///   GET /api/videos/{id}/annotation     annotation JSON, 404 if none
///   PUT /api/videos/{id}/annotation     validate and store; 422 on a violated invariant
///
/// Annotations of entries that had none are written next to the video as
/// <id>.annotation.json and recorded in the manifest. Writes are atomic and
/// serialized per video.
class AnnotationServer {
public:
    explicit AnnotationServer(const std::filesystem::path& manifest_path, ServerOptions options = {});
    ~AnnotationServer();
    AnnotationServer(const AnnotationServer&) = delete;
    AnnotationServer& operator=(const AnnotationServer&) = delete;

    /// Binds without serving. Port 0 picks a free port. Throws IoError if binding fails.
    int bind(const std::string& host, int port);
    /// Serves until stop() is called. Requires a prior bind().
    void listen();
    void stop();

    httplib::Server& http();

private:
    struct VideoState;
    void install_routes();
    VideoState* find(const std::string& id);
    std::shared_ptr<const RawVideo> frames(VideoState& v);

    std::filesystem::path manifest_path_;
    DatasetManifest manifest_;
    ServerOptions options_;
    std::unique_ptr<httplib::Server> http_;
    std::map<std::string, std::unique_ptr<VideoState>> videos_;
    std::mutex manifest_mutex_;
};

}  // namespace pcb::server
