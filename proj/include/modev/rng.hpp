#pragma once

#include <cstdint>

namespace modev {

/// xoshiro256** keyed by (master seed, stream index).
///
/// Every replication owns a stream derived from the master seed and its
/// index, so results do not depend on how replications are scheduled.
/// All variates are produced from raw 64-bit output with portable
/// transforms; the sequence is bit-identical across standard libraries.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next_u64();
    /// Uniform on (0, 1).
    double uniform();
    double normal();
    double exponential();

private:
    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace modev
