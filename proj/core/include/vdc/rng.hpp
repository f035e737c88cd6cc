#pragma once

#include <array>
#include <cstdint>

namespace vdc {

/// Derive an independent stream seed from a master seed. Used to split one
/// command-level seed into per-subtask seeds deterministically.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Deterministic PRNG (xoshiro256++ seeded via splitmix64). All randomness in
/// the toolkit flows through explicit instances of this class; there is no
/// hidden global state, so two generators built from the same seed produce
/// identical streams on every platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform();

    /// Uniform in (0, 1]; safe as a log() argument.
    double uniform_open();

    /// Standard normal via Box-Muller (explicit formula, not
    /// std::normal_distribution, which is implementation-defined).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);

    /// Child generator for subtask `stream`, independent of how many values
    /// have been drawn from this one.
    Rng fork(std::uint64_t stream) const { return Rng(derive_seed(seed_, stream)); }

    std::uint64_t seed() const { return seed_; }

  private:
    std::uint64_t seed_ = 0;
    std::array<std::uint64_t, 4> s_{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace vdc
