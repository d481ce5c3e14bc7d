#pragma once

#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>

namespace tgvad {

/// FNV-1a over the bytes of a string; used for name-derived seeds and the
/// hashing embedder, so it must stay stable across platforms.
std::uint64_t hash_text(const std::string& text);

/// Mixes an arbitrary number of 64-bit words into one seed (splitmix64
/// finalizer). Used to derive independent, order-insensitive substreams,
/// e.g. one per caption or per sampling round.
std::uint64_t mix_seed(std::uint64_t a);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d);

/// Deterministic random source. The generator and every distribution are
/// implemented here rather than via <random> distributions so that streams
/// are reproducible bit-for-bit across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform in [0, 1).
    double uniform();

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);

    /// Uniform integer in [0, n). n must be positive.
    std::size_t index(std::size_t n);

    /// Integer in [lo, hi] inclusive.
    long long range(long long lo, long long hi);

    /// Standard normal via the polar Box-Muller transform.
    double normal();
    double normal(double mean, double stddev);

    /// k distinct indices drawn uniformly from [0, n), in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

    /// In-place Fisher-Yates shuffle of an index vector.
    void shuffle(std::vector<std::size_t>& items);

private:
    std::uint64_t state_[4];
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

} // namespace tgvad
