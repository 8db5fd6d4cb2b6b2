#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pcb/harness/training.hpp"

namespace pcb::harness {

struct ExperimentConfig {
    std::vector<Approach> approaches{kAllApproaches.begin(), kAllApproaches.end()};
    std::vector<nn::FilterPair> pairs{nn::kStandardFilterPairs.begin(), nn::kStandardFilterPairs.end()};
    std::size_t runs = 30;
    std::uint64_t base_seed = 0;
    double split_ratio = 0.8;
    TrainOptions train{};
    /// Runs trained concurrently. Each worker trains single-threaded.
    std::size_t workers = 1;
    /// A cell with more failed runs than this is marked failed.
    std::size_t max_failed_runs = 3;
    bool save_checkpoints = false;
};

struct RunRecord {
    Approach approach = Approach::BinaryTrain_BinaryClassify;
    nn::FilterPair pair;
    std::size_t run_index = 0;
    std::uint64_t seed = 0;        // base_seed + run_index; drives the split
    std::uint64_t train_seed = 0;  // seed of the attempt that produced the network
    std::size_t attempts = 0;
    bool failed = false;
    std::string error;
    ConfusionMatrix confusion;
    double bacc = 0.0;
    std::vector<double> epoch_loss;
    double train_seconds = 0.0;
    double eval_seconds = 0.0;
    std::size_t train_clips = 0;
    std::size_t test_clips = 0;
};

struct ExperimentResult {
    Approach approach = Approach::BinaryTrain_BinaryClassify;
    nn::FilterPair pair;
    std::vector<RunRecord> runs;  // ordered by run index
    std::size_t failed_runs = 0;
    bool failed = false;
    double mean = 0.0;  // over successful runs
    double std = 0.0;   // sample standard deviation over successful runs
    double best = 0.0;

    std::vector<double> baccs() const;  // successful runs only
};

struct GridResult {
    std::vector<ExperimentResult> cells;  // approach-major, then pair order
    std::size_t trainings = 0;
    std::size_t resumed = 0;  // trainings whose records were read back from an earlier invocation

    std::size_t record_count() const;
    bool ok() const;
    const ExperimentResult* find(Approach a, const nn::FilterPair& p) const;
};

using RunCallback = std::function<void(const RunRecord&)>;

/// Runs every (approach, pair, run) of the grid over `bank`. The split of
/// run r is drawn from base_seed + r and shared by all approaches; the
/// MultiTrain_BinaryClassify record reuses the multi-class network of the
/// same run. Per-run files under out_dir/runs make the grid resumable;
/// results.jsonl and summary.json are rewritten at the end.
GridResult run_grid(const ExperimentConfig& config, const ClipBank& bank, const std::filesystem::path& out_dir,
                    const RunCallback& on_record = {});

/// One grid cell.
ExperimentResult run_experiment(Approach approach, const nn::FilterPair& pair, ExperimentConfig config,
                                const ClipBank& bank, const std::filesystem::path& out_dir);

/// Rebuilds cells from a results.jsonl file. Missing runs are tolerated.
GridResult load_results(const std::filesystem::path& results_jsonl, std::size_t max_failed_runs = 3);

std::string record_to_json(const RunRecord& r);
RunRecord record_from_json(const std::string& line);

/// Summary statistics of a cell recomputed from its runs.
void summarize(ExperimentResult& cell, std::size_t max_failed_runs);

}  // namespace pcb::harness
