#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace pcb {

/// Explicitly seeded pseudorandom stream.
///
/// The generator is xoshiro256** whose 256-bit state is filled from the seed
/// by splitmix64. Substreams are derived by hashing (seed, id) through
/// splitmix64, so `substream(k)` is independent of how many values the parent
/// has already produced. All derived quantities (floats, bounded integers,
/// shuffles) are computed here rather than through <random> distributions,
/// whose algorithms are implementation-defined; the same seed therefore
/// yields the same sequence on every platform.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0);

    std::uint64_t seed() const { return seed_; }

    /// Independent child stream keyed by `id`.
    RngStream substream(std::uint64_t id) const;

    std::uint64_t next_u64();

    /// Uniform in [0, 1) with 24 bits of resolution.
    float uniform_float();

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform_double();

    /// Uniform integer in [0, bound). `bound` must be positive.
    std::uint64_t bounded(std::uint64_t bound);

    /// Fisher-Yates shuffle of `items`.
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(bounded(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t state_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace pcb
