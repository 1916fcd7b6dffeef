#pragma once

#include <cstdint>
#include <string_view>

namespace swm {

// Counter-based splitmix64 stream. Streams are derived from a parent seed
// and a label/index, so no generator state is ever shared between
// independent consumers and results do not depend on the order in which
// streams are drawn.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    Rng split(std::uint64_t index) const;
    Rng split(std::string_view label) const;

    std::uint64_t next_u64();
    // Uniform in [0, 1) with 53 bits of resolution.
    double uniform();
    // Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);
    // Standard normal via Box-Muller (no cached second value).
    double normal();

private:
    std::uint64_t state_;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace swm
