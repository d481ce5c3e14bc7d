#include "tgvad/rng.hpp"

#include <cmath>
#include <stdexcept>

#include "tgvad/errors.hpp"

namespace tgvad {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
}

} // namespace

std::uint64_t hash_text(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t mix_seed(std::uint64_t a) {
    std::uint64_t s = a;
    return splitmix64(s);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a;
    std::uint64_t h = splitmix64(s);
    s = h ^ b;
    return splitmix64(s);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t s = mix_seed(a, b) ^ c;
    return splitmix64(s);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
    std::uint64_t s = mix_seed(a, b, c) ^ d;
    return splitmix64(s);
}

Rng::Rng(std::uint64_t seed) {
    // xoshiro256** seeded through splitmix64, per the reference recipe.
    std::uint64_t s = seed;
    for (auto& word : state_) {
        word = splitmix64(s);
    }
}

std::uint64_t Rng::next_u64() {
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

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

std::size_t Rng::index(std::size_t n) {
    if (n == 0) {
        throw ContractError("Rng::index requires a positive range");
    }
    // Rejection sampling keeps the distribution exactly uniform.
    const std::uint64_t bound = n;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v = next_u64();
    while (v >= limit) {
        v = next_u64();
    }
    return static_cast<std::size_t>(v % bound);
}

long long Rng::range(long long lo, long long hi) {
    if (hi < lo) {
        throw ContractError("Rng::range requires lo <= hi");
    }
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<long long>(index(static_cast<std::size_t>(span)));
}

double Rng::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    cached_normal_ = v * factor;
    has_cached_normal_ = true;
    return u * factor;
}

double Rng::normal(double mean, double stddev) {
    return mean + stddev * normal();
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t k) {
    if (k > n) {
        throw ContractError("cannot draw " + std::to_string(k) + " distinct items from a pool of " +
                            std::to_string(n));
    }
    // Partial Fisher-Yates over an index table; O(n) setup, O(k) draws.
    std::vector<std::size_t> table(n);
    for (std::size_t i = 0; i < n; ++i) {
        table[i] = i;
    }
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + index(n - i);
        std::swap(table[i], table[j]);
        out[i] = table[i];
    }
    return out;
}

void Rng::shuffle(std::vector<std::size_t>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[index(i)]);
    }
}

} // namespace tgvad
