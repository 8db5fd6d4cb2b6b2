#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "oracles/t_quadrature.hpp"
#include "pcb/error.hpp"
#include "pcb/rng.hpp"
#include "pcb/stats/tables.hpp"
#include "pcb/stats/ttest.hpp"
#include "support/tmpdir.hpp"

using namespace pcb;
using namespace pcb::stats;
using harness::Approach;
using harness::ExperimentResult;

namespace {

std::vector<double> normal_sample(RngStream& rng, std::size_t n, double mean, double sd) {
    std::vector<double> v(n);
    for (auto& x : v) {
        // Box-Muller from two uniforms in (0, 1].
        const double u1 = 1.0 - rng.uniform_double(), u2 = rng.uniform_double();
        x = mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }
    return v;
}

ExperimentResult make_cell(Approach a, nn::FilterPair p, const std::vector<double>& baccs) {
    ExperimentResult cell;
    cell.approach = a;
    cell.pair = p;
    for (std::size_t i = 0; i < baccs.size(); ++i) {
        harness::RunRecord r;
        r.approach = a;
        r.pair = p;
        r.run_index = i;
        r.seed = i;
        r.bacc = baccs[i];
        r.confusion = harness::ConfusionMatrix(2);
        cell.runs.push_back(r);
    }
    harness::summarize(cell, 3);
    return cell;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

// ---- t distribution ---------------------------------------------------------------

TEST(TCdf, CentreAndLimits) {
    for (double df : {0.5, 1.0, 3.0, 29.0, 1e4}) {
        EXPECT_EQ(t_cdf(0.0, df), 0.5);
        EXPECT_NEAR(t_cdf(std::numeric_limits<double>::infinity(), df), 1.0, 1e-12);
        EXPECT_NEAR(t_cdf(1e300, df), 1.0, 1e-12);
        if (df >= 1.0) {
            EXPECT_NEAR(t_cdf(1e12, df), 1.0, 1e-12);
        }
        EXPECT_EQ(t_cdf(-std::numeric_limits<double>::infinity(), df), 0.0);
    }
}

TEST(TCdf, MatchesQuadrature) {
    EXPECT_NEAR(t_cdf(2.0, 10.0), static_cast<double>(oracle::t_cdf(2.0L, 10.0L)), 1e-9);
    RngStream rng(11);
    for (int i = 0; i < 40; ++i) {
        const double df = 0.5 + 80.0 * rng.uniform_double();
        const double x = 12.0 * (rng.uniform_double() - 0.5);
        EXPECT_NEAR(t_cdf(x, df), static_cast<double>(oracle::t_cdf(x, df)), 1e-12) << "x=" << x << " df=" << df;
    }
}

TEST(TCdf, SymmetricAndIncreasing) {
    for (double df : {1.0, 4.5, 30.0}) {
        double prev = 0.0;
        for (double x = -20.0; x <= 20.0; x += 0.25) {
            const double c = t_cdf(x, df);
            EXPECT_NEAR(c + t_cdf(-x, df), 1.0, 1e-12);
            // The upper tail rounds to 1 in double, so strictness is checked where it is representable.
            if (x <= 0.0) {
                EXPECT_GT(c, prev);
            }
            EXPECT_GE(c, prev);
            prev = c;
        }
    }
}

TEST(TCdf, TailKeepsRelativePrecision) {
    // 1 - cdf would underflow to zero here.
    const double p = t_two_sided_p(40.0, 58.0);
    const double ref = static_cast<double>(2.0L * oracle::t_upper_tail(40.0L, 58.0L));
    EXPECT_GT(p, 0.0);
    EXPECT_NEAR(p / ref, 1.0, 1e-9);
}

TEST(TCdf, RejectsBadDegreesOfFreedom) {
    EXPECT_THROW(t_cdf(1.0, 0.0), ValidationError);
    EXPECT_THROW(t_cdf(1.0, -2.0), ValidationError);
    EXPECT_THROW(t_cdf(1.0, std::nan("")), ValidationError);
}

TEST(RegularizedBeta, KnownValues) {
    EXPECT_EQ(regularized_beta(2.0, 3.0, 0.0), 0.0);
    EXPECT_EQ(regularized_beta(2.0, 3.0, 1.0), 1.0);
    // I_x(1, 1) = x and I_x(a, 1) = x^a.
    EXPECT_NEAR(regularized_beta(1.0, 1.0, 0.37), 0.37, 1e-14);
    EXPECT_NEAR(regularized_beta(3.5, 1.0, 0.6), std::pow(0.6, 3.5), 1e-14);
    // I_x(a, b) = 1 - I_{1-x}(b, a)
    EXPECT_NEAR(regularized_beta(2.5, 7.0, 0.2) + regularized_beta(7.0, 2.5, 0.8), 1.0, 1e-14);
    EXPECT_THROW(regularized_beta(0.0, 1.0, 0.5), ValidationError);
    EXPECT_THROW(regularized_beta(1.0, 1.0, 1.5), ValidationError);
}

// ---- t-test ---------------------------------------------------------------------

TEST(WelchTTest, IdenticalSamples) {
    const SampleSet a{{0.71, 0.74, 0.69, 0.8}, "a"};
    const auto r = welch_t_test(a, a);
    EXPECT_EQ(r.t_statistic, 0.0);
    EXPECT_EQ(r.p_value, 1.0);
    EXPECT_FALSE(r.reject_h0);
}

TEST(WelchTTest, SmallIntegerExample) {
    const SampleSet a{{1, 2, 3, 4, 5}, "a"}, b{{2, 3, 4, 5, 6}, "b"};
    const auto r = welch_t_test(a, b);
    const auto o = oracle::t_test(a.values, b.values);
    EXPECT_NEAR(r.t_statistic, static_cast<double>(o.t), 1e-9);
    EXPECT_NEAR(r.degrees_of_freedom, static_cast<double>(o.df), 1e-9);
    EXPECT_NEAR(r.p_value, static_cast<double>(o.p), 1e-9);
    EXPECT_DOUBLE_EQ(r.t_statistic, -1.0);
    EXPECT_DOUBLE_EQ(r.degrees_of_freedom, 8.0);
}

TEST(WelchTTest, RandomPairsAgainstQuadrature) {
    RngStream rng(2024);
    for (int i = 0; i < 50; ++i) {
        const std::size_t na = 2 + rng.bounded(40), nb = 2 + rng.bounded(40);
        const auto a = normal_sample(rng, na, 0.6 + 0.3 * rng.uniform_double(), 0.01 + 0.1 * rng.uniform_double());
        const auto b = normal_sample(rng, nb, 0.6 + 0.3 * rng.uniform_double(), 0.01 + 0.1 * rng.uniform_double());
        for (auto kind : {TTestKind::Welch, TTestKind::Student}) {
            const auto r = welch_t_test({a, "a"}, {b, "b"}, 0.05, kind);
            const auto o = oracle::t_test(a, b, kind == TTestKind::Student);
            EXPECT_NEAR(r.t_statistic, static_cast<double>(o.t), 1e-9 * std::max(1.0, std::fabs(static_cast<double>(o.t))));
            EXPECT_NEAR(r.degrees_of_freedom, static_cast<double>(o.df), 1e-9);
            EXPECT_NEAR(r.p_value, static_cast<double>(o.p), 1e-9);
            EXPECT_EQ(r.reject_h0, r.p_value < 0.05);
        }
    }
}

TEST(WelchTTest, SymmetricInOrder) {
    RngStream rng(5);
    for (int i = 0; i < 20; ++i) {
        const SampleSet a{normal_sample(rng, 30, 0.8, 0.05), "a"}, b{normal_sample(rng, 25, 0.78, 0.07), "b"};
        const auto ab = welch_t_test(a, b), ba = welch_t_test(b, a);
        EXPECT_EQ(ab.t_statistic, -ba.t_statistic);
        EXPECT_NEAR(ab.p_value, ba.p_value, 1e-12);
        EXPECT_EQ(ab.degrees_of_freedom, ba.degrees_of_freedom);
    }
}

TEST(WelchTTest, AffineInvariance) {
    RngStream rng(8);
    const auto a = normal_sample(rng, 12, 0.7, 0.05), b = normal_sample(rng, 15, 0.72, 0.04);
    const auto base = welch_t_test({a, "a"}, {b, "b"});
    for (auto [c, d] : {std::pair{2.5, -1.0}, std::pair{0.01, 3.0}, std::pair{100.0, 0.5}}) {
        std::vector<double> sa = a, sb = b;
        for (auto& x : sa) x = c * x + d;
        for (auto& x : sb) x = c * x + d;
        const auto r = welch_t_test({sa, "a"}, {sb, "b"});
        EXPECT_NEAR(r.t_statistic, base.t_statistic, 1e-9 * std::fabs(base.t_statistic));
        EXPECT_NEAR(r.p_value, base.p_value, 1e-10);
    }
}

TEST(WelchTTest, DegreesOfFreedomBoundsForEqualSizes) {
    RngStream rng(3);
    for (int i = 0; i < 30; ++i) {
        const std::size_t n = 2 + rng.bounded(30);
        const auto r = welch_t_test({normal_sample(rng, n, 0.5, 0.1), "a"}, {normal_sample(rng, n, 0.5, 0.1), "b"});
        EXPECT_GE(r.degrees_of_freedom, static_cast<double>(n) - 1.0 - 1e-12);
        EXPECT_LE(r.degrees_of_freedom, 2.0 * static_cast<double>(n) - 2.0 + 1e-12);
    }
}

TEST(WelchTTest, DegenerateAndInvalidInputs) {
    EXPECT_THROW(welch_t_test({{0.5, 0.5, 0.5}, "a"}, {{0.5, 0.5}, "b"}), DegenerateTestError);
    const auto sep = welch_t_test({{0.9, 0.9}, "a"}, {{0.5, 0.5, 0.5}, "b"});
    EXPECT_TRUE(std::isinf(sep.t_statistic));
    EXPECT_GT(sep.t_statistic, 0.0);
    EXPECT_EQ(sep.p_value, 0.0);
    EXPECT_TRUE(sep.reject_h0);
    // One constant sample is fine as long as the other varies.
    EXPECT_NO_THROW(welch_t_test({{0.5, 0.5}, "a"}, {{0.4, 0.6}, "b"}));
    EXPECT_THROW(welch_t_test({{0.5}, "a"}, {{0.4, 0.6}, "b"}), ValidationError);
    EXPECT_THROW(welch_t_test({{0.5, std::nan("")}, "a"}, {{0.4, 0.6}, "b"}), ValidationError);
    EXPECT_THROW(welch_t_test({{0.5, 0.6}, "a"}, {{0.4, 0.6}, "b"}, 1.5), ValidationError);
}

TEST(WelchTTest, StudentPoolsVariances) {
    const SampleSet a{{1, 2, 3, 4, 5, 6, 7}, "a"}, b{{3, 9, 4, 10}, "b"};
    const auto r = welch_t_test(a, b, 0.05, TTestKind::Student);
    EXPECT_DOUBLE_EQ(r.degrees_of_freedom, 9.0);
    const auto w = welch_t_test(a, b);
    EXPECT_LT(w.degrees_of_freedom, 9.0);
}

// ---- tables ---------------------------------------------------------------------

TEST(Formatting, PValuesAndPercentages) {
    EXPECT_EQ(format_p_value(3.68e-19), "3.68e-19");
    EXPECT_EQ(format_p_value(1.0), "1.00e+00");
    EXPECT_EQ(format_p_value(0.0001234567), "1.23e-04");
    EXPECT_EQ(format_percent(0.934), "93.4");
    EXPECT_EQ(format_percent(0.5), "50.0");
    EXPECT_EQ(pair_label({16, 16}), "16 - 16");
    EXPECT_EQ(pair_label({128, 32}), "128 - 32");
}

TEST(ComparisonTable, CopiesOfTheSameResultNeverReject) {
    RngStream rng(1);
    std::vector<ExperimentResult> results;
    for (auto p : nn::kStandardFilterPairs) {
        const auto v = normal_sample(rng, 30, 0.8, 0.03);
        results.push_back(make_cell(Approach::BinaryTrain_BinaryClassify, p, v));
        results.push_back(make_cell(Approach::MultiTrain_MultiClassify, p, v));
    }
    const auto t = comparison_table(results, Approach::BinaryTrain_BinaryClassify, Approach::MultiTrain_MultiClassify);
    ASSERT_EQ(t.rows.size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(t.rows[i].pair, nn::kStandardFilterPairs[i]);
        ASSERT_TRUE(t.rows[i].test);
        EXPECT_EQ(t.rows[i].test->p_value, 1.0);
        EXPECT_FALSE(t.rows[i].test->reject_h0);
    }
}

TEST(ComparisonTable, WellSeparatedMeansRejectEverywhere) {
    RngStream rng(2);
    std::vector<ExperimentResult> results;
    // Reverse insertion order; rows must still follow the standard pair order.
    for (auto it = nn::kStandardFilterPairs.rbegin(); it != nn::kStandardFilterPairs.rend(); ++it) {
        results.push_back(make_cell(Approach::BinaryTrain_BinaryClassify, *it, normal_sample(rng, 30, 0.9, 0.01)));
        results.push_back(make_cell(Approach::MultiTrain_BinaryClassify, *it, normal_sample(rng, 30, 0.5, 0.01)));
    }
    const auto t = comparison_table(results, Approach::BinaryTrain_BinaryClassify, Approach::MultiTrain_BinaryClassify);
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(t.rows[i].pair, nn::kStandardFilterPairs[i]);
        const auto o = oracle::t_test(results[2 * (5 - i)].baccs(), results[2 * (5 - i) + 1].baccs());
        EXPECT_LT(t.rows[i].test->p_value, 1e-10);
        EXPECT_NEAR(t.rows[i].test->t_statistic, static_cast<double>(o.t), 1e-9 * static_cast<double>(o.t));
        EXPECT_TRUE(t.rows[i].test->reject_h0);
    }
    const std::string text = t.to_text();
    EXPECT_NE(text.find("16 - 16"), std::string::npos);
    EXPECT_NE(text.find("reject"), std::string::npos);
    const std::string csv = t.to_csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "filters,t,df,p_value,h0,note");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

TEST(ComparisonTable, MissingPairIsAnError) {
    std::vector<ExperimentResult> results;
    for (auto p : nn::kStandardFilterPairs) results.push_back(make_cell(Approach::BinaryTrain_BinaryClassify, p, {0.5, 0.6}));
    for (std::size_t i = 0; i < 5; ++i)
        results.push_back(make_cell(Approach::MultiTrain_MultiClassify, nn::kStandardFilterPairs[i], {0.5, 0.6}));
    EXPECT_THROW(comparison_table(results, Approach::BinaryTrain_BinaryClassify, Approach::MultiTrain_MultiClassify), ValidationError);
}

TEST(ComparisonTable, ConstantEqualCellsAreReportedNotThrown) {
    std::vector<ExperimentResult> results;
    for (auto p : nn::kStandardFilterPairs) {
        results.push_back(make_cell(Approach::BinaryTrain_BinaryClassify, p, {0.5, 0.5, 0.5}));
        results.push_back(make_cell(Approach::MultiTrain_MultiClassify, p, {0.5, 0.5, 0.5}));
    }
    const auto t = comparison_table(results, Approach::BinaryTrain_BinaryClassify, Approach::MultiTrain_MultiClassify);
    for (const auto& r : t.rows) {
        EXPECT_FALSE(r.test);
        EXPECT_FALSE(r.note.empty());
    }
    EXPECT_NE(t.to_text().find("n/a"), std::string::npos);
}

TEST(BestBaccTable, AllChanceGivesFifty) {
    std::vector<ExperimentResult> results;
    for (Approach a : harness::kAllApproaches)
        for (auto p : nn::kStandardFilterPairs) results.push_back(make_cell(a, p, std::vector<double>(30, 0.5)));
    const auto t = best_bacc_table(results);
    ASSERT_EQ(t.pairs.size(), 6u);
    for (const auto& row : t.best)
        for (const auto& v : row) EXPECT_EQ(format_percent(*v), "50.0");
}

TEST(BestBaccTable, PlantedMaximumWins) {
    RngStream rng(4);
    std::vector<ExperimentResult> results;
    std::map<std::pair<int, int>, double> planted;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 6; ++i) {
            std::vector<double> v(30);
            for (auto& x : v) x = 0.4 + 0.4 * rng.uniform_double();
            const std::size_t at = rng.bounded(30);
            v[at] = 0.81 + 0.01 * static_cast<double>(i) + 0.05 * static_cast<double>(c);
            planted[{static_cast<int>(i), static_cast<int>(c)}] = v[at];
            results.push_back(make_cell(harness::kAllApproaches[c], nn::kStandardFilterPairs[i], v));
        }
    const auto t = best_bacc_table(results);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(*t.best[i][c], (planted[{static_cast<int>(i), static_cast<int>(c)}]));
    const std::string text = t.to_text();
    EXPECT_NE(text.find("81.0"), std::string::npos);
    EXPECT_EQ(t.to_csv().substr(0, t.to_csv().find('\n')),
              "filters,BinaryTrain_BinaryClassify,MultiTrain_MultiClassify,MultiTrain_BinaryClassify");
}

TEST(BestBaccTable, MissingCells) {
    std::vector<ExperimentResult> results;
    for (auto p : nn::kStandardFilterPairs) results.push_back(make_cell(Approach::BinaryTrain_BinaryClassify, p, {0.7, 0.9}));
    EXPECT_THROW(best_bacc_table(results), ValidationError);
    const auto t = best_bacc_table(results, true);
    EXPECT_EQ(format_percent(*t.best[0][0]), "90.0");
    EXPECT_FALSE(t.best[0][1]);
    EXPECT_NE(t.to_text().find(" -"), std::string::npos);
}

TEST(Report, FullGridWritesAllTables) {
    testing_support::TempDir dir;
    harness::GridResult grid;
    RngStream rng(9);
    for (Approach a : harness::kAllApproaches)
        for (auto p : nn::kStandardFilterPairs) grid.cells.push_back(make_cell(a, p, normal_sample(rng, 30, 0.7, 0.05)));
    const auto out = write_report(grid, dir.path());
    EXPECT_TRUE(out.notices.empty());
    for (const char* f : {"comparison_binary_vs_multiclass.csv", "comparison_binary_vs_multiclass.txt",
                          "comparison_binary_classification.csv", "comparison_binary_classification.txt", "best_bacc.csv",
                          "best_bacc.txt", "bacc_distribution.csv"})
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    const std::string dist = slurp(dir / "bacc_distribution.csv");
    EXPECT_EQ(std::count(dist.begin(), dist.end(), '\n'), 1 + 18 * 30);
}

TEST(Report, SingleApproachSkipsComparisons) {
    testing_support::TempDir dir;
    harness::GridResult grid;
    for (auto p : nn::kStandardFilterPairs) grid.cells.push_back(make_cell(Approach::BinaryTrain_BinaryClassify, p, {0.6, 0.7}));
    const auto out = write_report(grid, dir.path());
    EXPECT_EQ(out.notices.size(), 3u);  // two skipped comparisons and a partial best table
    EXPECT_FALSE(std::filesystem::exists(dir / "comparison_binary_vs_multiclass.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir / "best_bacc.csv"));
    EXPECT_THROW(write_report(harness::GridResult{}, dir.path()), ValidationError);
}
