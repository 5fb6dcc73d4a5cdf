#pragma once

#include <cstdint>
#include <string_view>

namespace skelsim {

/// Deterministic random stream (xoshiro256++ core with hand-rolled
/// distributions). The standard library distributions are not reproducible
/// across implementations, so everything an experiment samples goes through
/// this class.
///
/// Streams are derived, not shared: derive(master, label, indices...) gives
/// each component its own independent stream, so adding a camera or a trial
/// does not perturb unrelated draws.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n);

    /// Normal(mean, sigma^2) via Box-Muller; pairs of draws share one
    /// transcendental evaluation.
    double normal(double mean, double sigma);

    /// Bernoulli(p).
    bool chance(double p);

private:
    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Stable 64-bit digest of a label plus indices, used both for stream
/// derivation and config fingerprints (FNV-1a over bytes, finalized with a
/// splitmix64 round).
std::uint64_t hash_label(std::uint64_t seed, std::string_view label);
std::uint64_t hash_fold(std::uint64_t seed, std::uint64_t value);

/// Named sub-stream derivation: one master seed, per-component labels and
/// indices.
RngStream derive_stream(std::uint64_t master_seed, std::string_view label);
RngStream derive_stream(std::uint64_t master_seed, std::string_view label,
                        std::uint64_t i0);
RngStream derive_stream(std::uint64_t master_seed, std::string_view label,
                        std::uint64_t i0, std::uint64_t i1);
RngStream derive_stream(std::uint64_t master_seed, std::string_view label,
                        std::uint64_t i0, std::uint64_t i1, std::uint64_t i2);

} // namespace skelsim
