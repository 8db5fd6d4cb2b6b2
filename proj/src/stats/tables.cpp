#include "pcb/stats/tables.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "pcb/binary_io.hpp"
#include "pcb/error.hpp"

namespace pcb::stats {

namespace fs = std::filesystem;

namespace {

using Row = std::vector<std::string>;

std::string align(const Row& header, const std::vector<Row>& rows) {
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
    for (const Row& r : rows)
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());

    auto line = [&](const Row& r) {
        std::string out;
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (c > 0) out += "  ";
            out += c == 0 ? fmt::format("{:<{}}", r[c], width[c]) : fmt::format("{:>{}}", r[c], width[c]);
        }
        while (!out.empty() && out.back() == ' ') out.pop_back();
        return out + "\n";
    };
    std::string text = line(header);
    std::size_t rule = 0;
    for (std::size_t c = 0; c < width.size(); ++c) rule += width[c] + (c > 0 ? 2 : 0);
    text += std::string(rule, '-') + "\n";
    for (const Row& r : rows) text += line(r);
    return text;
}

std::string csv(const Row& header, const std::vector<Row>& rows) {
    auto line = [](const Row& r) {
        std::string out;
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (c > 0) out += ',';
            const bool quote = r[c].find_first_of(",\"\n") != std::string::npos;
            if (!quote) {
                out += r[c];
                continue;
            }
            out += '"';
            for (char ch : r[c]) {
                if (ch == '"') out += '"';
                out += ch;
            }
            out += '"';
        }
        return out + "\n";
    };
    std::string text = line(header);
    for (const Row& r : rows) text += line(r);
    return text;
}

const ExperimentResult* find_cell(const std::vector<ExperimentResult>& results, Approach a, const nn::FilterPair& p) {
    for (const auto& cell : results)
        if (cell.approach == a && cell.pair == p) return &cell;
    return nullptr;
}

std::string_view column_title(Approach a) {
    switch (a) {
        case Approach::BinaryTrain_BinaryClassify: return "Binary training, binary classification (%)";
        case Approach::MultiTrain_MultiClassify: return "Multi-class training, multi-class classification (%)";
        case Approach::MultiTrain_BinaryClassify: return "Multi-class training, binary classification (%)";
    }
    return "";
}

std::string kind_name(TTestKind k) { return k == TTestKind::Welch ? "Welch" : "Student"; }

}  // namespace

std::string pair_label(const nn::FilterPair& pair) { return fmt::format("{} - {}", pair.conv1, pair.conv2); }

std::string format_p_value(double p) { return fmt::format("{:.2e}", p); }

std::string format_percent(double fraction) { return fmt::format("{:.1f}", 100.0 * fraction); }

// ---- comparison ---------------------------------------------------------------

ComparisonTable comparison_table(const std::vector<ExperimentResult>& results, Approach a, Approach b, double alpha,
                                 TTestKind kind, const std::vector<nn::FilterPair>& pairs) {
    ComparisonTable table;
    table.a = a;
    table.b = b;
    table.alpha = alpha;
    table.kind = kind;
    std::vector<std::string> missing;
    for (const auto& pair : pairs)
        for (Approach ap : {a, b})
            if (!find_cell(results, ap, pair)) missing.push_back(fmt::format("{} {}", approach_name(ap), pair_label(pair)));
    if (!missing.empty())
        throw ValidationError(fmt::format("comparison needs cells that are missing: {}", fmt::format("{}", fmt::join(missing, ", "))));

    for (const auto& pair : pairs) {
        const ExperimentResult& ca = *find_cell(results, a, pair);
        const ExperimentResult& cb = *find_cell(results, b, pair);
        ComparisonRow row;
        row.pair = pair;
        const SampleSet sa{ca.baccs(), fmt::format("{} {}", approach_name(a), pair_label(pair))};
        const SampleSet sb{cb.baccs(), fmt::format("{} {}", approach_name(b), pair_label(pair))};
        if (sa.values.size() < 2 || sb.values.size() < 2) {
            row.note = "fewer than 2 successful runs";
        } else {
            try {
                row.test = welch_t_test(sa, sb, alpha, kind);
            } catch (const DegenerateTestError&) {
                row.note = "undefined: both samples constant and equal";
            }
        }
        if (ca.failed || cb.failed) row.note += row.note.empty() ? "cell failed" : "; cell failed";
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string ComparisonTable::title() const {
    return fmt::format("P-values from {} t-test (two-tailed, alpha = {}): {} vs {}", kind_name(kind), alpha, approach_name(a),
                       approach_name(b));
}

std::string ComparisonTable::to_csv() const {
    std::vector<Row> rows_out;
    for (const auto& r : rows) {
        if (r.test)
            rows_out.push_back({pair_label(r.pair), fmt::format("{:.17g}", r.test->t_statistic),
                                fmt::format("{:.17g}", r.test->degrees_of_freedom), format_p_value(r.test->p_value),
                                r.test->reject_h0 ? "reject" : "accept", r.note});
        else
            rows_out.push_back({pair_label(r.pair), "", "", "", "", r.note});
    }
    return csv({"filters", "t", "df", "p_value", "h0", "note"}, rows_out);
}

std::string ComparisonTable::to_text() const {
    std::vector<Row> rows_out;
    bool any_note = false;
    for (const auto& r : rows) any_note = any_note || !r.note.empty();
    for (const auto& r : rows) {
        Row row{pair_label(r.pair), r.test ? format_p_value(r.test->p_value) : "n/a",
                r.test ? (r.test->reject_h0 ? "reject" : "accept") : "-"};
        if (any_note) row.push_back(r.note);
        rows_out.push_back(std::move(row));
    }
    Row header{"Number-of-filter values", "p-value", "H0"};
    if (any_note) header.push_back("note");
    return title() + "\n\n" + align(header, rows_out);
}

// ---- best bACC -------------------------------------------------------------------

BestBaccTable best_bacc_table(const std::vector<ExperimentResult>& results, bool allow_missing) {
    BestBaccTable table;
    table.pairs.assign(nn::kStandardFilterPairs.begin(), nn::kStandardFilterPairs.end());
    for (const auto& cell : results)
        if (std::find(table.pairs.begin(), table.pairs.end(), cell.pair) == table.pairs.end()) table.pairs.push_back(cell.pair);

    std::vector<std::string> missing;
    for (const auto& pair : table.pairs) {
        std::array<std::optional<double>, 3> row;
        for (std::size_t c = 0; c < harness::kAllApproaches.size(); ++c) {
            const ExperimentResult* cell = find_cell(results, harness::kAllApproaches[c], pair);
            const auto values = cell ? cell->baccs() : std::vector<double>{};
            if (values.empty()) {
                missing.push_back(fmt::format("{} {}", approach_name(harness::kAllApproaches[c]), pair_label(pair)));
                continue;
            }
            row[c] = *std::max_element(values.begin(), values.end());
        }
        table.best.push_back(row);
    }
    if (!missing.empty() && !allow_missing)
        throw ValidationError(fmt::format("best-bACC table is missing cells: {}", fmt::format("{}", fmt::join(missing, ", "))));
    return table;
}

std::string BestBaccTable::to_csv() const {
    Row header{"filters"};
    for (Approach a : harness::kAllApproaches) header.emplace_back(approach_name(a));
    std::vector<Row> rows;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        Row r{pair_label(pairs[i])};
        for (const auto& v : best[i]) r.push_back(v ? format_percent(*v) : "");
        rows.push_back(std::move(r));
    }
    return csv(header, rows);
}

std::string BestBaccTable::to_text() const {
    Row header{"Number-of-filter values"};
    for (Approach a : harness::kAllApproaches) header.emplace_back(column_title(a));
    std::vector<Row> rows;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        Row r{pair_label(pairs[i])};
        for (const auto& v : best[i]) r.push_back(v ? format_percent(*v) : "-");
        rows.push_back(std::move(r));
    }
    return "Best balanced accuracy (bACC) by training approach and number-of-filter values\n\n" + align(header, rows);
}

// ---- report ----------------------------------------------------------------------

ReportOutput write_report(const harness::GridResult& grid, const fs::path& out_dir, double alpha, TTestKind kind) {
    if (grid.cells.empty()) throw ValidationError("no results to report");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError(fmt::format("cannot create {}: {}", out_dir.string(), ec.message()));

    ReportOutput out;
    auto emit = [&](const std::string& name, const std::string& text) {
        write_text_atomic(out_dir / name, text);
        out.files.push_back(out_dir / name);
    };

    struct Spec {
        const char* stem;
        Approach a, b;
    };
    const Spec comparisons[] = {
        {"comparison_binary_vs_multiclass", Approach::BinaryTrain_BinaryClassify, Approach::MultiTrain_MultiClassify},
        {"comparison_binary_classification", Approach::BinaryTrain_BinaryClassify, Approach::MultiTrain_BinaryClassify},
    };
    for (const Spec& s : comparisons) {
        std::vector<nn::FilterPair> pairs;
        std::vector<std::string> absent;
        BestBaccTable shape = best_bacc_table(grid.cells, true);
        for (const auto& pair : shape.pairs) {
            const bool have_a = grid.find(s.a, pair) != nullptr, have_b = grid.find(s.b, pair) != nullptr;
            if (have_a && have_b)
                pairs.push_back(pair);
            else if (have_a || have_b)
                absent.push_back(pair_label(pair));
        }
        if (pairs.empty()) {
            out.notices.push_back(fmt::format("skipped {}: results for {} and {} are not both present", s.stem,
                                              approach_name(s.a), approach_name(s.b)));
            continue;
        }
        if (!absent.empty())
            out.notices.push_back(fmt::format("{}: pairs without both approaches left out: {}", s.stem, fmt::join(absent, ", ")));
        const ComparisonTable table = comparison_table(grid.cells, s.a, s.b, alpha, kind, pairs);
        emit(fmt::format("{}.csv", s.stem), table.to_csv());
        emit(fmt::format("{}.txt", s.stem), table.to_text());
    }

    const BestBaccTable best = best_bacc_table(grid.cells, true);
    std::size_t empty = 0;
    for (const auto& row : best.best)
        for (const auto& v : row) empty += v ? 0 : 1;
    if (empty > 0) out.notices.push_back(fmt::format("best_bacc: {} of {} cells have no successful runs", empty, 3 * best.pairs.size()));
    emit("best_bacc.csv", best.to_csv());
    emit("best_bacc.txt", best.to_text());

    std::vector<Row> dist;
    for (const auto& cell : grid.cells)
        for (const auto& run : cell.runs)
            if (!run.failed)
                dist.push_back({std::string(approach_name(cell.approach)), pair_label(cell.pair), std::to_string(run.run_index),
                                std::to_string(run.seed), fmt::format("{:.17g}", run.bacc)});
    emit("bacc_distribution.csv", csv({"approach", "filters", "run", "seed", "bacc"}, dist));
    return out;
}

}  // namespace pcb::stats
