#include "pcb/rng.hpp"

#include <stdexcept>

namespace pcb {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RngStream::RngStream(std::uint64_t seed) : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& s : state_) s = splitmix64(sm);
}

RngStream RngStream::substream(std::uint64_t id) const {
    std::uint64_t mix = seed_ ^ 0x6a09e667f3bcc909ULL;
    const std::uint64_t a = splitmix64(mix);
    std::uint64_t keyed = a ^ (id * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
    return RngStream(splitmix64(keyed));
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

float RngStream::uniform_float() {
    return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
}

double RngStream::uniform_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::bounded(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("RngStream::bounded: bound must be positive");
    // Rejection sampling on the largest multiple of `bound`.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % bound;
}

}  // namespace pcb
