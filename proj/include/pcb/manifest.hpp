#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pcb/pcb.hpp"

namespace pcb {

struct ManifestEntry {
    std::string path;  // as written, relative paths resolve against the manifest's directory
    ClassLabel label = ClassLabel::Normal;
    std::optional<std::string> annotation;

    /// Video id: file stem of `path` (whole name for PNG frame folders).
    std::string id() const;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
    std::filesystem::path base_dir;
    std::vector<ManifestEntry> entries;

    std::array<std::size_t, 5> class_counts() const;
    std::filesystem::path resolve(const std::string& relative) const;
    std::filesystem::path video_path(const ManifestEntry& e) const { return resolve(e.path); }
    std::optional<std::filesystem::path> annotation_path(const ManifestEntry& e) const;
    const ManifestEntry* find(const std::string& id) const;
};

struct ManifestOptions {
    /// Crime entries must reference an annotation. The annotation server turns
    /// this off so unannotated videos can be loaded for marking.
    bool require_annotations = true;
    /// Open referenced files and check annotations against the video length.
    bool check_files = true;
};

inline constexpr int kManifestVersion = 1;

/// Throws ValidationError: JSON syntax errors carry line and column; entry
/// problems are collected and reported together, each prefixed by entry id.
DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir,
                               const ManifestOptions& options = {});
DatasetManifest load_manifest(const std::filesystem::path& path, const ManifestOptions& options = {});

std::string manifest_to_json(const DatasetManifest& manifest);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Fully decoded manifest entry.
struct LoadedVideo {
    VideoSample sample;
    std::optional<PcbAnnotation> annotation;
};

LoadedVideo load_entry(const DatasetManifest& manifest, const ManifestEntry& entry);
std::vector<LoadedVideo> load_dataset(const DatasetManifest& manifest);

}  // namespace pcb
