#include "pcb/manifest.hpp"

#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "pcb/binary_io.hpp"
#include "pcb/error.hpp"

namespace pcb {

using nlohmann::json;
namespace fs = std::filesystem;

std::string ManifestEntry::id() const {
    fs::path p(path);
    if (!p.has_filename()) p = p.parent_path();
    return p.extension() == ".pcv" ? p.stem().string() : p.filename().string();
}

std::array<std::size_t, 5> DatasetManifest::class_counts() const {
    std::array<std::size_t, 5> counts{};
    for (const auto& e : entries) ++counts[label_index(e.label)];
    return counts;
}

fs::path DatasetManifest::resolve(const std::string& relative) const {
    const fs::path p(relative);
    return p.is_absolute() ? p : base_dir / p;
}

std::optional<fs::path> DatasetManifest::annotation_path(const ManifestEntry& e) const {
    if (!e.annotation) return std::nullopt;
    return resolve(*e.annotation);
}

const ManifestEntry* DatasetManifest::find(const std::string& id) const {
    for (const auto& e : entries)
        if (e.id() == id) return &e;
    return nullptr;
}

namespace {

std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

// Checks that only need the JSON; returns the entry or records problems.
std::optional<ManifestEntry> parse_entry(const json& j, std::size_t index, std::vector<std::string>& problems) {
    const std::string where = fmt::format("entry {}", index);
    if (!j.is_object()) {
        problems.push_back(fmt::format("{}: must be an object", where));
        return std::nullopt;
    }
    ManifestEntry e;
    bool ok = true;
    if (!j.contains("path") || !j["path"].is_string() || j["path"].get<std::string>().empty()) {
        problems.push_back(fmt::format("{}: 'path' must be a non-empty string", where));
        ok = false;
    } else {
        e.path = j["path"].get<std::string>();
    }
    const std::string id = ok ? fmt::format("entry {} ({})", index, e.id()) : where;
    if (!j.contains("label") || !j["label"].is_string()) {
        problems.push_back(fmt::format("{}: 'label' must be a string", id));
        ok = false;
    } else {
        try {
            e.label = parse_label(j["label"].get<std::string>());
        } catch (const ValidationError& err) {
            problems.push_back(fmt::format("{}: {}", id, err.what()));
            ok = false;
        }
    }
    if (j.contains("annotation") && !j["annotation"].is_null()) {
        if (!j["annotation"].is_string()) {
            problems.push_back(fmt::format("{}: 'annotation' must be a string or null", id));
            ok = false;
        } else {
            e.annotation = j["annotation"].get<std::string>();
        }
    }
    return ok ? std::optional(e) : std::nullopt;
}

void check_entry(const DatasetManifest& m, const ManifestEntry& e, std::size_t index, const ManifestOptions& opt,
                 std::vector<std::string>& problems) {
    const std::string id = fmt::format("entry {} ({})", index, e.id());
    if (is_crime(e.label) && !e.annotation && opt.require_annotations)
        problems.push_back(fmt::format("{}: {} video has no annotation", id, label_name(e.label)));
    if (!is_crime(e.label) && e.annotation)
        problems.push_back(fmt::format("{}: normal video must not carry an annotation", id));
    if (!opt.check_files) return;

    const fs::path video = m.video_path(e);
    if (!fs::exists(video)) {
        problems.push_back(fmt::format("{}: video '{}' not found", id, video.string()));
        return;
    }
    std::size_t frames = 0;
    try {
        frames = video_frame_count(video);
    } catch (const std::exception& err) {
        problems.push_back(fmt::format("{}: {}", id, err.what()));
        return;
    }
    if (frames == 0) problems.push_back(fmt::format("{}: video has no frames", id));

    if (!e.annotation) return;
    const fs::path ann_path = *m.annotation_path(e);
    if (!fs::exists(ann_path)) {
        problems.push_back(fmt::format("{}: annotation '{}' not found", id, ann_path.string()));
        return;
    }
    try {
        const PcbAnnotation ann = annotation_from_json(read_text_file(ann_path));
        for (const auto& v : annotation_violations(ann, frames)) problems.push_back(fmt::format("{}: {}", id, v));
    } catch (const std::exception& err) {
        problems.push_back(fmt::format("{}: {}", id, err.what()));
    }
}

}  // namespace

DatasetManifest parse_manifest(const std::string& text, const fs::path& base_dir, const ManifestOptions& opt) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
        throw ValidationError(fmt::format("manifest parse error at line {}, column {}: {}", line, col, e.what()));
    }
    if (!j.is_object()) throw ValidationError("manifest must be a JSON object");
    if (!j.contains("version") || !j["version"].is_number_integer() || j["version"].get<int>() != kManifestVersion)
        throw ValidationError(fmt::format("manifest 'version' must be {}", kManifestVersion));
    if (!j.contains("entries") || !j["entries"].is_array()) throw ValidationError("manifest 'entries' must be an array");

    DatasetManifest m;
    m.base_dir = base_dir;
    std::vector<std::string> problems;
    std::set<std::string> ids;
    const auto& entries = j["entries"];
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto e = parse_entry(entries[i], i, problems);
        if (!e) continue;
        if (!ids.insert(e->id()).second)
            problems.push_back(fmt::format("entry {} ({}): duplicate video id", i, e->id()));
        check_entry(m, *e, i, opt, problems);
        m.entries.push_back(std::move(*e));
    }
    if (!problems.empty())
        throw ValidationError(fmt::format("invalid manifest ({} problem{}):\n  {}", problems.size(),
                                          problems.size() == 1 ? "" : "s", fmt::join(problems, "\n  ")));
    return m;
}

DatasetManifest load_manifest(const fs::path& path, const ManifestOptions& opt) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const IoError& e) {
        throw ValidationError(fmt::format("cannot read manifest: {}", e.what()));
    }
    try {
        return parse_manifest(text, path.parent_path(), opt);
    } catch (const ValidationError& e) {
        throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

std::string manifest_to_json(const DatasetManifest& m) {
    json entries = json::array();
    for (const auto& e : m.entries) {
        json je = json::object();
        je["path"] = e.path;
        je["label"] = std::string(label_name(e.label));
        je["annotation"] = e.annotation ? json(*e.annotation) : json(nullptr);
        entries.push_back(std::move(je));
    }
    json j = json::object();
    j["version"] = kManifestVersion;
    j["entries"] = std::move(entries);
    return j.dump(2) + "\n";
}

void save_manifest(const fs::path& path, const DatasetManifest& m) { write_text_atomic(path, manifest_to_json(m)); }

LoadedVideo load_entry(const DatasetManifest& m, const ManifestEntry& e) {
    LoadedVideo out;
    out.sample.id = e.id();
    out.sample.label = e.label;
    out.sample.video = load_video(m.video_path(e));
    if (e.annotation) {
        out.annotation = load_annotation(*m.annotation_path(e));
        validate_annotation(*out.annotation, out.sample.frame_count());
    }
    return out;
}

std::vector<LoadedVideo> load_dataset(const DatasetManifest& m) {
    std::vector<LoadedVideo> out(m.entries.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        try {
            out[i] = load_entry(m, m.entries[i]);
        } catch (...) {
#pragma omp critical(pcb_load_dataset)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

}  // namespace pcb
