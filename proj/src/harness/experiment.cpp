#include "pcb/harness/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>
#include <json.hpp>
#include <omp.h>

#include "pcb/binary_io.hpp"
#include "pcb/error.hpp"
#include "pcb/nn/checkpoint.hpp"

namespace pcb::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kRetrySeedOffset = 0x9E3779B97F4A7C15ULL;

json matrix_json(const ConfusionMatrix& cm) {
    json rows = json::array();
    for (std::size_t t = 0; t < cm.classes(); ++t) {
        json row = json::array();
        for (std::size_t p = 0; p < cm.classes(); ++p) row.push_back(cm.at(t, p));
        rows.push_back(std::move(row));
    }
    return rows;
}

ConfusionMatrix matrix_from_json(const json& rows) {
    if (!rows.is_array() || rows.empty()) return {};
    const std::size_t k = rows.size();
    std::vector<std::uint64_t> counts;
    for (const auto& row : rows) {
        if (!row.is_array() || row.size() != k) throw ValidationError("confusion matrix must be square");
        for (const auto& v : row) counts.push_back(v.get<std::uint64_t>());
    }
    return ConfusionMatrix(k, std::move(counts));
}

json record_json(const RunRecord& r) {
    json j = json::object();
    j["approach"] = std::string(approach_name(r.approach));
    j["pair"] = r.pair.key();
    j["run_index"] = r.run_index;
    j["seed"] = r.seed;
    j["train_seed"] = r.train_seed;
    j["attempts"] = r.attempts;
    j["status"] = r.failed ? "failed" : "ok";
    if (r.failed) j["error"] = r.error;
    j["confusion"] = r.confusion.classes() ? matrix_json(r.confusion) : json::array();
    j["bacc"] = r.bacc;
    j["epoch_loss"] = r.epoch_loss;
    j["train_seconds"] = r.train_seconds;
    j["eval_seconds"] = r.eval_seconds;
    j["train_clips"] = r.train_clips;
    j["test_clips"] = r.test_clips;
    return j;
}

RunRecord record_from(const json& j) {
    RunRecord r;
    r.approach = parse_approach(j.at("approach").get<std::string>());
    r.pair = nn::parse_filter_pair(j.at("pair").get<std::string>());
    r.run_index = j.at("run_index").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.train_seed = j.value("train_seed", r.seed);
    r.attempts = j.value("attempts", std::size_t{1});
    r.failed = j.at("status").get<std::string>() != "ok";
    r.error = j.value("error", std::string{});
    r.confusion = matrix_from_json(j.at("confusion"));
    r.bacc = j.at("bacc").get<double>();
    r.epoch_loss = j.value("epoch_loss", std::vector<double>{});
    r.train_seconds = j.value("train_seconds", 0.0);
    r.eval_seconds = j.value("eval_seconds", 0.0);
    r.train_clips = j.value("train_clips", std::size_t{0});
    r.test_clips = j.value("test_clips", std::size_t{0});
    return r;
}

json config_json(const ExperimentConfig& c) {
    json j = json::object();
    json approaches = json::array();
    for (auto a : c.approaches) approaches.push_back(std::string(approach_name(a)));
    json pairs = json::array();
    for (const auto& p : c.pairs) pairs.push_back(p.key());
    j["approaches"] = approaches;
    j["pairs"] = pairs;
    j["runs"] = c.runs;
    j["base_seed"] = c.base_seed;
    j["split_ratio"] = c.split_ratio;
    j["epochs"] = c.train.epochs;
    j["batch_size"] = c.train.batch_size;
    j["hidden"] = c.train.hidden;
    j["learning_rate"] = c.train.adam.learning_rate;
    j["max_failed_runs"] = c.max_failed_runs;
    return j;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// One training: a binary network, or a multi-class network that serves both
// multi-class approaches.
struct Unit {
    nn::FilterPair pair;
    std::size_t run_index;
    LabelScheme scheme;
    std::vector<Approach> approaches;  // records this training produces

    std::string name() const {
        return fmt::format("{}_{:03}", scheme == LabelScheme::Binary ? "binary" : "multi", run_index);
    }
};

std::vector<RunRecord> execute_unit(const Unit& u, const ExperimentConfig& cfg, const ClipBank& bank,
                                    const fs::path& unit_dir) {
    const std::uint64_t run_seed = cfg.base_seed + u.run_index;
    std::vector<RunRecord> records;
    for (Approach a : u.approaches) {
        RunRecord r;
        r.approach = a;
        r.pair = u.pair;
        r.run_index = u.run_index;
        r.seed = run_seed;
        records.push_back(std::move(r));
    }
    auto fail_all = [&](const std::string& msg) {
        for (auto& r : records) {
            r.failed = true;
            r.error = msg;
        }
    };

    try {
        const DatasetSplit split = split_dataset(bank.labels(), cfg.split_ratio, run_seed);
        const auto train = gather(bank, split.train, u.scheme, false);
        const auto test = gather(bank, split.test, u.scheme, true);

        std::optional<TrainResult> trained;
        std::uint64_t seed = run_seed;
        std::size_t attempts = 0;
        std::string last_error;
        const auto t0 = std::chrono::steady_clock::now();
        for (; attempts < 2 && !trained; ++attempts) {
            seed = attempts == 0 ? run_seed : run_seed + kRetrySeedOffset;
            try {
                trained = train_model(train, u.scheme, u.pair, bank.geometry(), seed, cfg.train);
            } catch (const DivergenceError& e) {
                last_error = e.what();
            }
        }
        const double train_s = seconds_since(t0);
        for (auto& r : records) {
            r.attempts = attempts;
            r.train_seed = seed;
            r.train_seconds = train_s;
            r.train_clips = train.size();
            r.test_clips = test.size();
        }
        if (!trained) {
            fail_all(fmt::format("diverged twice: {}", last_error));
            return records;
        }
        if (cfg.save_checkpoints) nn::save_checkpoint(trained->network, unit_dir / (u.name() + ".pcbn"));

        const auto t1 = std::chrono::steady_clock::now();
        const ConfusionMatrix cm = evaluate(trained->network, test, u.scheme);
        const double eval_s = seconds_since(t1);
        for (auto& r : records) {
            r.epoch_loss = trained->epoch_loss;
            r.eval_seconds = eval_s;
            r.confusion = r.approach == Approach::MultiTrain_BinaryClassify ? collapse_to_binary(cm) : cm;
            try {
                r.bacc = bacc(r.confusion);
            } catch (const UndefinedMetricError& e) {
                r.failed = true;
                r.error = e.what();
            }
        }
    } catch (const std::exception& e) {
        fail_all(e.what());
    }
    return records;
}

std::optional<std::vector<RunRecord>> read_unit(const fs::path& file) {
    if (!fs::exists(file)) return std::nullopt;
    try {
        const json j = json::parse(read_text_file(file));
        std::vector<RunRecord> out;
        for (const auto& r : j.at("records")) out.push_back(record_from(r));
        return out;
    } catch (const std::exception&) {
        return std::nullopt;  // damaged or partial file: redo the run
    }
}

void write_unit(const fs::path& file, const std::vector<RunRecord>& records) {
    json j = json::object();
    json arr = json::array();
    for (const auto& r : records) arr.push_back(record_json(r));
    j["records"] = std::move(arr);
    write_text_atomic(file, j.dump() + "\n");
}

void check_bank(const ExperimentConfig& cfg, const ClipBank& bank) {
    if (cfg.runs == 0) throw ValidationError("runs must be positive");
    if (cfg.approaches.empty()) throw ValidationError("no approaches selected");
    if (cfg.pairs.empty()) throw ValidationError("no filter pairs selected");
    if (cfg.workers == 0) throw ValidationError("workers must be positive");
    std::array<std::size_t, 5> per_class{};
    for (const auto& v : bank.videos) ++per_class[label_index(v.label)];
    const bool multi = std::any_of(cfg.approaches.begin(), cfg.approaches.end(),
                                   [](Approach a) { return training_scheme(a) == LabelScheme::Multi; });
    for (ClassLabel l : kAllLabels) {
        const bool needed = multi || l == ClassLabel::Normal || per_class[label_index(l)] > 0;
        if (needed && per_class[label_index(l)] < 2)
            throw ValidationError(fmt::format("dataset has {} '{}' videos; the selected approaches need at least 2",
                                              per_class[label_index(l)], label_name(l)));
    }
    if (std::none_of(kAllLabels.begin() + 1, kAllLabels.end(), [&](ClassLabel l) { return per_class[label_index(l)]; }))
        throw ValidationError("dataset has no crime videos");
    // Surfaces split problems before any training starts.
    split_dataset(bank.labels(), cfg.split_ratio, cfg.base_seed);
}

}  // namespace

std::string record_to_json(const RunRecord& r) { return record_json(r).dump(); }

RunRecord record_from_json(const std::string& line) {
    try {
        return record_from(json::parse(line));
    } catch (const json::exception& e) {
        throw ValidationError(fmt::format("malformed run record: {}", e.what()));
    }
}

std::vector<double> ExperimentResult::baccs() const {
    std::vector<double> out;
    for (const auto& r : runs)
        if (!r.failed) out.push_back(r.bacc);
    return out;
}

void summarize(ExperimentResult& cell, std::size_t max_failed_runs) {
    cell.failed_runs = 0;
    for (const auto& r : cell.runs) cell.failed_runs += r.failed ? 1 : 0;
    cell.failed = cell.failed_runs > max_failed_runs;
    const auto v = cell.baccs();
    cell.mean = cell.std = cell.best = 0.0;
    if (v.empty()) return;
    double sum = 0.0;
    for (double x : v) sum += x;
    cell.mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - cell.mean) * (x - cell.mean);
    cell.std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    cell.best = *std::max_element(v.begin(), v.end());
}

std::size_t GridResult::record_count() const {
    std::size_t n = 0;
    for (const auto& c : cells) n += c.runs.size();
    return n;
}

bool GridResult::ok() const {
    return std::none_of(cells.begin(), cells.end(), [](const ExperimentResult& c) { return c.failed; });
}

const ExperimentResult* GridResult::find(Approach a, const nn::FilterPair& p) const {
    for (const auto& c : cells)
        if (c.approach == a && c.pair == p) return &c;
    return nullptr;
}

GridResult run_grid(const ExperimentConfig& cfg, const ClipBank& bank, const fs::path& out_dir,
                    const RunCallback& on_record) {
    check_bank(cfg, bank);
    fs::create_directories(out_dir / "runs");

    const fs::path config_file = out_dir / "config.json";
    const json cfg_json = config_json(cfg);
    if (fs::exists(config_file)) {
        json previous;
        try {
            previous = json::parse(read_text_file(config_file));
        } catch (const json::exception&) {
        }
        if (previous != cfg_json)
            throw ValidationError(fmt::format("{} holds results of a different configuration; use a fresh directory",
                                              out_dir.string()));
    } else {
        write_text_atomic(config_file, cfg_json.dump(2) + "\n");
    }

    const bool want_binary = std::find(cfg.approaches.begin(), cfg.approaches.end(),
                                       Approach::BinaryTrain_BinaryClassify) != cfg.approaches.end();
    std::vector<Approach> multi_approaches;
    for (Approach a : {Approach::MultiTrain_MultiClassify, Approach::MultiTrain_BinaryClassify})
        if (std::find(cfg.approaches.begin(), cfg.approaches.end(), a) != cfg.approaches.end())
            multi_approaches.push_back(a);

    std::vector<Unit> units;
    for (const auto& pair : cfg.pairs)
        for (std::size_t r = 0; r < cfg.runs; ++r) {
            if (want_binary) units.push_back({pair, r, LabelScheme::Binary, {Approach::BinaryTrain_BinaryClassify}});
            if (!multi_approaches.empty()) units.push_back({pair, r, LabelScheme::Multi, multi_approaches});
        }

    std::vector<std::vector<RunRecord>> outcome(units.size());
    std::vector<char> from_file(units.size(), 0);
    std::exception_ptr failure;
    const int workers = static_cast<int>(std::min(cfg.workers, units.size()));
    const int saved_levels = omp_get_max_active_levels();
    if (workers > 1) omp_set_max_active_levels(1);

#pragma omp parallel for schedule(dynamic) num_threads(workers) if (workers > 1)
    for (std::size_t i = 0; i < units.size(); ++i) {
        try {
            const Unit& u = units[i];
            const fs::path dir = out_dir / "runs" / u.pair.key();
            const fs::path file = dir / (u.name() + ".json");
            if (auto done = read_unit(file)) {
                outcome[i] = std::move(*done);
                from_file[i] = 1;
            } else {
                fs::create_directories(dir);
                outcome[i] = execute_unit(u, cfg, bank, dir);
                write_unit(file, outcome[i]);
            }
            if (on_record) {
#pragma omp critical(pcb_grid_progress)
                for (const auto& r : outcome[i]) on_record(r);
            }
        } catch (...) {
#pragma omp critical(pcb_grid_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (workers > 1) omp_set_max_active_levels(saved_levels);
    if (failure) std::rethrow_exception(failure);

    GridResult grid;
    grid.trainings = units.size();
    grid.resumed = static_cast<std::size_t>(std::count(from_file.begin(), from_file.end(), 1));
    std::map<std::pair<int, std::string>, std::vector<RunRecord>> by_cell;
    for (auto& recs : outcome)
        for (auto& r : recs) by_cell[{static_cast<int>(r.approach), r.pair.key()}].push_back(std::move(r));
    for (Approach a : cfg.approaches)
        for (const auto& pair : cfg.pairs) {
            ExperimentResult cell;
            cell.approach = a;
            cell.pair = pair;
            cell.runs = std::move(by_cell[{static_cast<int>(a), pair.key()}]);
            std::sort(cell.runs.begin(), cell.runs.end(),
                      [](const RunRecord& x, const RunRecord& y) { return x.run_index < y.run_index; });
            summarize(cell, cfg.max_failed_runs);
            grid.cells.push_back(std::move(cell));
        }

    std::string lines;
    for (const auto& cell : grid.cells)
        for (const auto& r : cell.runs) lines += record_to_json(r) + "\n";
    write_text_atomic(out_dir / "results.jsonl", lines);

    json summary = json::object();
    summary["config"] = cfg_json;
    summary["trainings"] = grid.trainings;
    summary["records"] = grid.record_count();
    json cells = json::array();
    for (const auto& c : grid.cells) {
        json jc = json::object();
        jc["approach"] = std::string(approach_name(c.approach));
        jc["pair"] = c.pair.key();
        jc["runs"] = c.runs.size();
        jc["failed_runs"] = c.failed_runs;
        jc["status"] = c.failed ? "failed" : "ok";
        jc["mean_bacc"] = c.mean;
        jc["std_bacc"] = c.std;
        jc["best_bacc"] = c.best;
        cells.push_back(std::move(jc));
    }
    summary["cells"] = std::move(cells);
    write_text_atomic(out_dir / "summary.json", summary.dump(2) + "\n");
    return grid;
}

ExperimentResult run_experiment(Approach approach, const nn::FilterPair& pair, ExperimentConfig cfg,
                                const ClipBank& bank, const fs::path& out_dir) {
    cfg.approaches = {approach};
    cfg.pairs = {pair};
    return std::move(run_grid(cfg, bank, out_dir).cells.front());
}

GridResult load_results(const fs::path& path, std::size_t max_failed_runs) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
    GridResult grid;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        RunRecord r;
        try {
            r = record_from_json(line);
        } catch (const ValidationError& e) {
            throw ValidationError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
        }
        auto it = std::find_if(grid.cells.begin(), grid.cells.end(), [&](const ExperimentResult& c) {
            return c.approach == r.approach && c.pair == r.pair;
        });
        if (it == grid.cells.end()) {
            grid.cells.push_back({});
            it = std::prev(grid.cells.end());
            it->approach = r.approach;
            it->pair = r.pair;
        }
        it->runs.push_back(std::move(r));
    }
    for (auto& c : grid.cells) {
        std::sort(c.runs.begin(), c.runs.end(),
                  [](const RunRecord& x, const RunRecord& y) { return x.run_index < y.run_index; });
        summarize(c, max_failed_runs);
    }
    return grid;
}

}  // namespace pcb::harness
