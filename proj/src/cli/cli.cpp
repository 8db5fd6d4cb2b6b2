#include "pcb/cli/cli.hpp"

#include <algorithm>
#include <csignal>
#include <fstream>
#include <ostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "pcb/binary_io.hpp"
#include "pcb/error.hpp"
#include "pcb/harness/experiment.hpp"
#include "pcb/nn/checkpoint.hpp"
#include "pcb/server/annotation_server.hpp"
#include "pcb/stats/tables.hpp"
#include "pcb/stats/ttest.hpp"
#include "pcb/synth.hpp"

namespace pcb::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Streams {
    std::ostream& out;
    std::ostream& err;
};

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> items;
    std::string cur;
    for (char c : text) {
        if (c == ',' || c == ' ') {
            if (!cur.empty()) items.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) items.push_back(cur);
    return items;
}

// ---- synth ---------------------------------------------------------------------

struct SynthArgs {
    fs::path out;
    std::size_t per_class = 10;
    std::string counts;
    SynthSpec spec;
};

void add_synth(CLI::App& app, SynthArgs& a) {
    auto* c = app.add_subcommand("synth", "Generate a synthetic annotated dataset");
    c->add_option("--out", a.out, "Output directory")->required();
    c->add_option("--per-class", a.per_class, "Videos per class");
    c->add_option("--counts", a.counts, "Per-class counts in label order, e.g. 10,10,0,0,5 (overrides --per-class)");
    c->add_option("--similarity", a.spec.similarity, "0 = distinct class motions, 1 = one shared generator");
    c->add_option("--seed", a.spec.seed);
    c->add_option("--clip-length", a.spec.clip_length);
    c->add_option("--width", a.spec.width);
    c->add_option("--height", a.spec.height);
    c->add_option("--channels", a.spec.channels, "1 or 3");
    c->add_option("--speed", a.spec.speed, "Class drift in pixels per frame");
    c->add_option("--blobs", a.spec.blobs, "Blobs per video");
}

int cmd_synth(SynthArgs& a, Streams s) {
    if (!a.counts.empty()) {
        const auto items = split_list(a.counts);
        if (items.size() != 5) throw ValidationError("--counts needs five comma-separated values");
        for (std::size_t i = 0; i < 5; ++i) {
            try {
                a.spec.per_class[i] = std::stoull(items[i]);
            } catch (const std::exception&) {
                throw ValidationError(fmt::format("--counts: '{}' is not a count", items[i]));
            }
        }
    } else {
        if (a.per_class == 0) throw ValidationError("--per-class must be at least 1");
        a.spec.per_class.fill(a.per_class);
    }
    const SynthResult r = synth_dataset(a.spec, a.out);
    fmt::print(s.out, "{}\n", r.manifest_path.string());
    return kExitOk;
}

// ---- segment -------------------------------------------------------------------

struct SegmentArgs {
    fs::path video, annotation, out;
};

void add_segment(CLI::App& app, SegmentArgs& a) {
    auto* c = app.add_subcommand("segment", "Split an annotated video into pre-crime, suspicious and evidence parts");
    c->add_option("--video", a.video, "Video (.pcv file or PNG frame directory)")->required();
    c->add_option("--annotation", a.annotation, "Annotation JSON")->required();
    c->add_option("--out", a.out, "Output directory (default: next to the video)");
}

int cmd_segment(const SegmentArgs& a, Streams s) {
    const RawVideo video = load_video(a.video);
    const PcbAnnotation ann = load_annotation(a.annotation);
    const PcbSegments seg = segment_video(video.frame_count(), ann);
    const fs::path dir = a.out.empty() ? a.video.parent_path() : a.out;
    if (!dir.empty()) fs::create_directories(dir);
    const std::string stem = fs::is_directory(a.video) ? a.video.filename().string() : a.video.stem().string();
    const std::pair<const char*, FrameRange> parts[] = {
        {"precrime", seg.pre_crime}, {"suspicious", seg.suspicious}, {"evidence", seg.evidence}};
    for (const auto& [name, range] : parts) {
        const fs::path path = dir / fmt::format("{}.{}.pcv", stem, name);
        write_pcv(path, slice_frames(video, range));
        fmt::print(s.out, "{:<10} [{}, {})  {} frames  {}\n", name, range.begin, range.end, range.size(), path.string());
    }
    return kExitOk;
}

// ---- train ---------------------------------------------------------------------

struct TrainArgs {
    fs::path manifest, out;
    std::string scheme = "binary";
    std::string filters = "16-16";
    std::uint64_t seed = 0;
    double split_ratio = 0.8;
    harness::TrainOptions train;
    float learning_rate = 1e-3f;
};

void add_train(CLI::App& app, TrainArgs& a) {
    auto* c = app.add_subcommand("train", "Train one network on a manifest's training split and evaluate it");
    c->add_option("--manifest", a.manifest)->required();
    c->add_option("--out", a.out, "Checkpoint path")->required();
    c->add_option("--scheme", a.scheme, "binary or multi")->check(CLI::IsMember({"binary", "multi"}));
    c->add_option("--filters", a.filters, "Filter pair, e.g. 16-16");
    c->add_option("--seed", a.seed);
    c->add_option("--split-ratio", a.split_ratio);
    c->add_option("--epochs", a.train.epochs);
    c->add_option("--batch-size", a.train.batch_size);
    c->add_option("--hidden", a.train.hidden);
    c->add_option("--lr", a.learning_rate);
}

int cmd_train(TrainArgs& a, Streams s) {
    const nn::FilterPair pair = nn::parse_filter_pair(a.filters);
    const auto scheme = a.scheme == "multi" ? harness::LabelScheme::Multi : harness::LabelScheme::Binary;
    a.train.adam.learning_rate = a.learning_rate;
    const DatasetManifest manifest = load_manifest(a.manifest);
    const harness::ClipBank bank = harness::build_clip_bank(load_dataset(manifest));
    for (const auto& w : bank.warnings) fmt::print(s.err, "warning: {}\n", w.message);
    const harness::DatasetSplit split = harness::split_dataset(bank.labels(), a.split_ratio, a.seed);
    const auto train = harness::gather(bank, split.train, scheme, false);
    const auto test = harness::gather(bank, split.test, scheme, true);
    fmt::print(s.out, "training {} on {} clips from {} videos\n", stats::pair_label(pair), train.size(), split.train.size());

    const auto result = harness::train_model(train, scheme, pair, bank.geometry(), a.seed, a.train);
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) fmt::print(s.out, "epoch {:>3}  loss {:.4f}\n", e + 1, result.epoch_loss[e]);
    nn::save_checkpoint(result.network, a.out);

    const auto cm = harness::evaluate(result.network, test, scheme);
    fmt::print(s.out, "test clips {}\n{}", test.size(), cm.str());
    try {
        fmt::print(s.out, "bACC {:.4f}\n", harness::bacc(cm));
        if (scheme == harness::LabelScheme::Multi)
            fmt::print(s.out, "bACC collapsed to binary {:.4f}\n", harness::balanced_accuracy(harness::collapse_to_binary(cm)));
    } catch (const UndefinedMetricError& e) {
        fmt::print(s.err, "bACC undefined: {}\n", e.what());
    }
    fmt::print(s.out, "checkpoint {}\n", a.out.string());
    return kExitOk;
}

// ---- experiment ------------------------------------------------------------------

struct ExperimentArgs {
    fs::path spec_file;
    std::optional<fs::path> manifest, out;
    std::optional<std::string> approaches, pairs;
    std::optional<std::size_t> runs, epochs, workers, max_failed_runs, batch_size, hidden;
    std::optional<std::uint64_t> seed;
    std::optional<double> split_ratio;
    bool save_checkpoints = false;
    bool quiet = false;
};

void add_experiment(CLI::App& app, ExperimentArgs& a) {
    auto* c = app.add_subcommand("experiment", "Run the approach x filter-pair grid; resumable");
    c->add_option("--spec", a.spec_file, "Experiment spec JSON; flags override its fields");
    c->add_option("--manifest", a.manifest);
    c->add_option("--out", a.out, "Results directory");
    c->add_option("--approaches", a.approaches, "Comma-separated approach names");
    c->add_option("--pairs", a.pairs, "Comma-separated filter pairs, e.g. 16-16,32-64");
    c->add_option("--runs", a.runs);
    c->add_option("--seed", a.seed, "Base seed; run r uses base + r");
    c->add_option("--epochs", a.epochs);
    c->add_option("--batch-size", a.batch_size);
    c->add_option("--hidden", a.hidden);
    c->add_option("--workers", a.workers, "Runs trained concurrently");
    c->add_option("--split-ratio", a.split_ratio);
    c->add_option("--max-failed-runs", a.max_failed_runs);
    c->add_flag("--save-checkpoints", a.save_checkpoints);
    c->add_flag("--quiet", a.quiet, "Print only the summary");
}

struct ResolvedExperiment {
    fs::path manifest, out;
    harness::ExperimentConfig config;
};

template <typename T>
T field(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(fmt::format("experiment spec: field '{}' has the wrong type", key));
    }
}

ResolvedExperiment resolve_experiment(const ExperimentArgs& a) {
    ResolvedExperiment r;
    std::optional<fs::path> manifest, out;
    std::vector<std::string> approaches, pairs;

    if (!a.spec_file.empty()) {
        json j;
        try {
            j = json::parse(read_text_file(a.spec_file));
        } catch (const json::parse_error& e) {
            throw ValidationError(fmt::format("{}: {}", a.spec_file.string(), e.what()));
        }
        if (!j.is_object()) throw ValidationError("experiment spec must be a JSON object");
        static const std::vector<std::string> known = {"manifest",   "output",          "approaches", "pairs",  "runs",
                                                       "base_seed",  "epochs",          "batch_size", "hidden", "workers",
                                                       "split_ratio", "max_failed_runs", "learning_rate", "save_checkpoints"};
        for (const auto& [key, _] : j.items())
            if (std::find(known.begin(), known.end(), key) == known.end())
                throw ValidationError(fmt::format("experiment spec: unknown field '{}'", key));
        const fs::path base = a.spec_file.parent_path();
        auto rel = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
        if (j.contains("manifest")) manifest = rel(field<std::string>(j, "manifest"));
        if (j.contains("output")) out = rel(field<std::string>(j, "output"));
        if (j.contains("approaches")) approaches = field<std::vector<std::string>>(j, "approaches");
        if (j.contains("pairs")) pairs = field<std::vector<std::string>>(j, "pairs");
        auto& c = r.config;
        if (j.contains("runs")) c.runs = field<std::size_t>(j, "runs");
        if (j.contains("base_seed")) c.base_seed = field<std::uint64_t>(j, "base_seed");
        if (j.contains("epochs")) c.train.epochs = field<std::size_t>(j, "epochs");
        if (j.contains("batch_size")) c.train.batch_size = field<std::size_t>(j, "batch_size");
        if (j.contains("hidden")) c.train.hidden = field<std::size_t>(j, "hidden");
        if (j.contains("learning_rate")) c.train.adam.learning_rate = field<float>(j, "learning_rate");
        if (j.contains("workers")) c.workers = field<std::size_t>(j, "workers");
        if (j.contains("split_ratio")) c.split_ratio = field<double>(j, "split_ratio");
        if (j.contains("max_failed_runs")) c.max_failed_runs = field<std::size_t>(j, "max_failed_runs");
        if (j.contains("save_checkpoints")) c.save_checkpoints = field<bool>(j, "save_checkpoints");
    }

    if (a.manifest) manifest = *a.manifest;
    if (a.out) out = *a.out;
    if (a.approaches) approaches = split_list(*a.approaches);
    if (a.pairs) pairs = split_list(*a.pairs);
    auto& c = r.config;
    if (a.runs) c.runs = *a.runs;
    if (a.seed) c.base_seed = *a.seed;
    if (a.epochs) c.train.epochs = *a.epochs;
    if (a.batch_size) c.train.batch_size = *a.batch_size;
    if (a.hidden) c.train.hidden = *a.hidden;
    if (a.workers) c.workers = *a.workers;
    if (a.split_ratio) c.split_ratio = *a.split_ratio;
    if (a.max_failed_runs) c.max_failed_runs = *a.max_failed_runs;
    if (a.save_checkpoints) c.save_checkpoints = true;

    if (!manifest) throw ValidationError("experiment needs a manifest (--manifest or spec field 'manifest')");
    if (!out) throw ValidationError("experiment needs an output directory (--out or spec field 'output')");
    if (!approaches.empty()) {
        c.approaches.clear();
        for (const auto& name : approaches) c.approaches.push_back(harness::parse_approach(name));
    }
    if (!pairs.empty()) {
        c.pairs.clear();
        for (const auto& p : pairs) c.pairs.push_back(nn::parse_filter_pair(p));
    }
    if (c.approaches.empty()) throw ValidationError("approaches must not be empty");
    if (c.pairs.empty()) throw ValidationError("pairs must not be empty");
    if (c.runs == 0) throw ValidationError("runs must be at least 1");
    if (c.train.epochs == 0) throw ValidationError("epochs must be at least 1");
    if (c.workers == 0) throw ValidationError("workers must be at least 1");
    if (!(c.split_ratio > 0.0 && c.split_ratio < 1.0)) throw ValidationError("split_ratio must lie in (0, 1)");

    std::error_code ec;
    fs::create_directories(*out, ec);
    if (ec) throw ValidationError(fmt::format("cannot create output directory {}: {}", out->string(), ec.message()));
    r.manifest = *manifest;
    r.out = *out;
    return r;
}

void print_report(const stats::ReportOutput& rep, Streams s) {
    for (const auto& f : rep.files)
        if (f.extension() == ".txt") fmt::print(s.out, "\n{}", read_text_file(f));
    for (const auto& n : rep.notices) fmt::print(s.err, "notice: {}\n", n);
    fmt::print(s.out, "\nreport files in {}\n", rep.files.empty() ? std::string() : rep.files.front().parent_path().string());
}

int cmd_experiment(const ExperimentArgs& a, Streams s) {
    const ResolvedExperiment e = resolve_experiment(a);
    const DatasetManifest manifest = load_manifest(e.manifest);
    const harness::ClipBank bank = harness::build_clip_bank(load_dataset(manifest));
    for (const auto& w : bank.warnings) fmt::print(s.err, "warning: {}\n", w.message);

    const std::size_t expected =
        e.config.pairs.size() * e.config.runs * e.config.approaches.size();
    std::size_t seen = 0;
    std::mutex print_mutex;
    const auto grid = harness::run_grid(e.config, bank, e.out, [&](const harness::RunRecord& r) {
        std::lock_guard lock(print_mutex);
        ++seen;
        if (a.quiet) return;
        if (r.failed)
            fmt::print(s.out, "[{}/{}] {} {} run {:>3}  FAILED: {}\n", seen, expected, harness::approach_name(r.approach),
                       stats::pair_label(r.pair), r.run_index, r.error);
        else
            fmt::print(s.out, "[{}/{}] {} {} run {:>3}  bACC {:.4f}\n", seen, expected, harness::approach_name(r.approach),
                       stats::pair_label(r.pair), r.run_index, r.bacc);
    });
    fmt::print(s.out, "{} records from {} trainings ({} resumed) in {}\n", grid.record_count(), grid.trainings, grid.resumed,
               e.out.string());
    print_report(stats::write_report(grid, e.out / "report"), s);
    for (const auto& cell : grid.cells)
        if (cell.failed)
            fmt::print(s.err, "cell {} {} failed: {} of {} runs failed\n", harness::approach_name(cell.approach),
                       stats::pair_label(cell.pair), cell.failed_runs, cell.runs.size());
    return grid.ok() ? kExitOk : kExitRuntime;
}

// ---- report ----------------------------------------------------------------------

struct ReportArgs {
    fs::path dir, out;
    double alpha = 0.05;
    bool student = false;
};

void add_report(CLI::App& app, ReportArgs& a) {
    auto* c = app.add_subcommand("report", "Regenerate comparison and best-bACC tables from a results directory");
    c->add_option("dir", a.dir, "Results directory of an experiment")->required();
    c->add_option("--out", a.out, "Where to write the tables (default: <dir>/report)");
    c->add_option("--alpha", a.alpha, "Significance level");
    c->add_flag("--student", a.student, "Use Student's pooled-variance t-test instead of Welch's");
}

int cmd_report(const ReportArgs& a, Streams s) {
    const fs::path results = a.dir / "results.jsonl";
    if (!fs::exists(results)) throw ValidationError(fmt::format("{} has no results.jsonl", a.dir.string()));
    std::size_t max_failed = harness::ExperimentConfig{}.max_failed_runs;
    if (fs::exists(a.dir / "config.json")) {
        const json cfg = json::parse(read_text_file(a.dir / "config.json"), nullptr, false);
        if (cfg.is_object() && cfg.contains("max_failed_runs") && cfg["max_failed_runs"].is_number_unsigned())
            max_failed = cfg["max_failed_runs"].get<std::size_t>();
    }
    const harness::GridResult grid = harness::load_results(results, max_failed);
    if (grid.record_count() == 0) throw ValidationError(fmt::format("{} holds no run records", results.string()));
    const auto kind = a.student ? stats::TTestKind::Student : stats::TTestKind::Welch;
    print_report(stats::write_report(grid, a.out.empty() ? a.dir / "report" : a.out, a.alpha, kind), s);
    return kExitOk;
}

// ---- annotate-serve ----------------------------------------------------------------

struct ServeArgs {
    fs::path manifest;
    std::optional<fs::path> static_dir;
    std::string host = "127.0.0.1";
    int port = 8080;
};

void add_serve(CLI::App& app, ServeArgs& a) {
    auto* c = app.add_subcommand("annotate-serve", "Serve the annotation UI and its REST API");
    c->add_option("--manifest", a.manifest)->required();
    c->add_option("--static", a.static_dir, "Directory with the annotator UI build");
    c->add_option("--host", a.host);
    c->add_option("--port", a.port)->check(CLI::Range(0, 65535));
}

int cmd_serve(const ServeArgs& a, Streams s) {
    server::AnnotationServer srv(a.manifest, server::ServerOptions{a.static_dir});
    const int port = srv.bind(a.host, a.port);

    // Block the stop signals in every thread, then wait for them on a dedicated one.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    std::jthread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        srv.stop();
    });

    fmt::print(s.out, "serving {} on http://{}:{}\n", a.manifest.string(), a.host, port);
    s.out.flush();
    srv.listen();
    if (waiter.joinable()) {
        // listen() can return without a signal (e.g. bind loss); wake the waiter.
        pthread_kill(waiter.native_handle(), SIGTERM);
    }
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Pre-crime behaviour toolkit: synthetic data, PCB segmentation, 3D CNN experiments and reports", "pcbtool"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    SynthArgs synth;
    SegmentArgs segment;
    TrainArgs train;
    ExperimentArgs experiment;
    ReportArgs report;
    ServeArgs serve;
    add_synth(app, synth);
    add_segment(app, segment);
    add_train(app, train);
    add_experiment(app, experiment);
    add_report(app, report);
    add_serve(app, serve);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    const Streams s{out, err};
    try {
        const std::string name = app.get_subcommands().front()->get_name();
        if (name == "synth") return cmd_synth(synth, s);
        if (name == "segment") return cmd_segment(segment, s);
        if (name == "train") return cmd_train(train, s);
        if (name == "experiment") return cmd_experiment(experiment, s);
        if (name == "report") return cmd_report(report, s);
        if (name == "annotate-serve") return cmd_serve(serve, s);
    } catch (const ValidationError& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace pcb::cli
