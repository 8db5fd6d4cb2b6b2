#include "pcb/harness/metrics.hpp"

#include <numeric>

#include <fmt/format.h>

#include "pcb/error.hpp"

namespace pcb::harness {

ConfusionMatrix::ConfusionMatrix(std::size_t k) : k_(k), counts_(k * k, 0) {
    if (k < 2) throw ValidationError(fmt::format("confusion matrix needs at least 2 classes, got {}", k));
}

ConfusionMatrix::ConfusionMatrix(std::size_t k, std::vector<std::uint64_t> counts) : ConfusionMatrix(k) {
    if (counts.size() != k * k)
        throw ValidationError(fmt::format("{}x{} confusion matrix needs {} counts, got {}", k, k, k * k, counts.size()));
    counts_ = std::move(counts);
}

std::uint64_t ConfusionMatrix::at(std::size_t t, std::size_t p) const {
    if (t >= k_ || p >= k_) throw std::out_of_range(fmt::format("cell ({},{}) outside {}x{} matrix", t, p, k_, k_));
    return counts_[t * k_ + p];
}

std::uint64_t& ConfusionMatrix::at(std::size_t t, std::size_t p) {
    if (t >= k_ || p >= k_) throw std::out_of_range(fmt::format("cell ({},{}) outside {}x{} matrix", t, p, k_, k_));
    return counts_[t * k_ + p];
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

std::uint64_t ConfusionMatrix::row_total(std::size_t t) const {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < k_; ++p) s += at(t, p);
    return s;
}

std::string ConfusionMatrix::str() const {
    std::string out;
    for (std::size_t t = 0; t < k_; ++t) {
        for (std::size_t p = 0; p < k_; ++p) out += fmt::format("{:>6}", at(t, p));
        out += '\n';
    }
    return out;
}

ConfusionMatrix collapse_to_binary(const ConfusionMatrix& cm5) {
    if (cm5.classes() != 5) throw ValidationError(fmt::format("collapse needs a 5-class matrix, got {}", cm5.classes()));
    ConfusionMatrix out(2);
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t p = 0; p < 5; ++p) out.add(t == 0 ? 0 : 1, p == 0 ? 0 : 1, cm5.at(t, p));
    return out;
}

double balanced_accuracy(const ConfusionMatrix& cm) {
    if (cm.classes() != 2) throw ValidationError(fmt::format("binary balanced accuracy needs k=2, got {}", cm.classes()));
    const auto tp = static_cast<double>(cm.at(1, 1)), fn = static_cast<double>(cm.at(1, 0));
    const auto tn = static_cast<double>(cm.at(0, 0)), fp = static_cast<double>(cm.at(0, 1));
    if (tp + fn == 0) throw UndefinedMetricError("balanced accuracy undefined: no positive samples (TP+FN = 0)");
    if (tn + fp == 0) throw UndefinedMetricError("balanced accuracy undefined: no negative samples (TN+FP = 0)");
    const double tpr = tp / (tp + fn);
    const double tnr = tn / (tn + fp);
    return (tpr + tnr) / 2.0;
}

double multiclass_balanced_accuracy(const ConfusionMatrix& cm) {
    double sum = 0.0;
    for (std::size_t c = 0; c < cm.classes(); ++c) {
        const auto row = cm.row_total(c);
        if (row == 0) throw UndefinedMetricError(fmt::format("balanced accuracy undefined: class {} has no samples", c));
        sum += static_cast<double>(cm.at(c, c)) / static_cast<double>(row);
    }
    return sum / static_cast<double>(cm.classes());
}

double bacc(const ConfusionMatrix& cm) {
    return cm.classes() == 2 ? balanced_accuracy(cm) : multiclass_balanced_accuracy(cm);
}

}  // namespace pcb::harness
