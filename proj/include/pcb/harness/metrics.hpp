#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pcb::harness {

/// Square count matrix: rows are true classes, columns predicted classes.
class ConfusionMatrix {
public:
    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::size_t k);
    /// Row-major counts; throws ValidationError unless counts.size() == k*k.
    ConfusionMatrix(std::size_t k, std::vector<std::uint64_t> counts);

    std::size_t classes() const { return k_; }
    std::uint64_t at(std::size_t truth, std::size_t predicted) const;
    std::uint64_t& at(std::size_t truth, std::size_t predicted);
    void add(std::size_t truth, std::size_t predicted, std::uint64_t n = 1) { at(truth, predicted) += n; }

    std::uint64_t total() const;
    std::uint64_t row_total(std::size_t truth) const;
    const std::vector<std::uint64_t>& counts() const { return counts_; }

    std::string str() const;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t k_ = 0;
    std::vector<std::uint64_t> counts_;
};

/// Five-class matrix in label order (normal first) reduced to normal vs
/// crime. Any crime row predicted as any crime column counts as a positive.
/// Binary index 1 is the positive (crime) class.
ConfusionMatrix collapse_to_binary(const ConfusionMatrix& cm5);

/// (TP/(TP+FN) + TN/(TN+FP)) / 2 for a two-class matrix where class 1 is
/// positive. Throws UndefinedMetricError if either class has no samples.
double balanced_accuracy(const ConfusionMatrix& cm);

/// Mean per-class recall. Throws UndefinedMetricError on an empty row.
double multiclass_balanced_accuracy(const ConfusionMatrix& cm);

/// Binary balanced accuracy for k=2, mean recall otherwise.
double bacc(const ConfusionMatrix& cm);

}  // namespace pcb::harness
