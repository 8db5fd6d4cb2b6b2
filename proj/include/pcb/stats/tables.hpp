#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pcb/harness/experiment.hpp"
#include "pcb/stats/ttest.hpp"

namespace pcb::stats {

using harness::Approach;
using harness::ExperimentResult;

struct ComparisonRow {
    nn::FilterPair pair;
    std::optional<TTestResult> test;  // empty when the test is undefined
    std::string note;
};

struct ComparisonTable {
    Approach a = Approach::BinaryTrain_BinaryClassify;
    Approach b = Approach::MultiTrain_MultiClassify;
    double alpha = 0.05;
    TTestKind kind = TTestKind::Welch;
    std::vector<ComparisonRow> rows;

    std::string title() const;
    std::string to_csv() const;
    std::string to_text() const;
};

/// One t-test per filter pair between the runs of approach `a` and approach
/// `b`, in the order of `pairs`. Throws ValidationError if any requested
/// pair is missing for either approach.
ComparisonTable comparison_table(const std::vector<ExperimentResult>& results, Approach a, Approach b, double alpha = 0.05,
                                 TTestKind kind = TTestKind::Welch,
                                 const std::vector<nn::FilterPair>& pairs = {nn::kStandardFilterPairs.begin(),
                                                                             nn::kStandardFilterPairs.end()});

struct BestBaccTable {
    std::vector<nn::FilterPair> pairs;
    std::vector<std::array<std::optional<double>, 3>> best;  // per pair, columns in kAllApproaches order

    std::string to_csv() const;
    std::string to_text() const;
};

/// Highest bACC of each (pair, approach) cell. Rows follow the standard pair
/// order, then any other pairs in first-seen order. Missing cells throw
/// unless `allow_missing` is set.
BestBaccTable best_bacc_table(const std::vector<ExperimentResult>& results, bool allow_missing = false);

/// "16 - 16"
std::string pair_label(const nn::FilterPair& pair);

/// Three significant digits in scientific notation, e.g. "3.68e-19".
std::string format_p_value(double p);

/// Percentage with one decimal, e.g. 0.934 -> "93.4".
std::string format_percent(double fraction);

struct ReportOutput {
    std::vector<std::filesystem::path> files;
    std::vector<std::string> notices;
};

/// Writes both comparison tables, the best-bACC table (CSV and text) and a
/// per-run bACC distribution CSV for box plots. Comparisons whose
/// approaches are absent are skipped with a notice.
ReportOutput write_report(const harness::GridResult& grid, const std::filesystem::path& out_dir, double alpha = 0.05,
                          TTestKind kind = TTestKind::Welch);

}  // namespace pcb::stats
