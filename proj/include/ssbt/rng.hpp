#pragma once

#include <cstdint>
#include <cstddef>
#include <string_view>
#include <vector>

namespace ssbt {

// Deterministic randomness. One top-level seed fans out to per-stage streams
// through derive_seed(master, stage, counter); every stochastic component of
// the toolkit draws from its own derived stream, so runs are bit-reproducible
// regardless of how stages are ordered or parallelised.

uint64_t splitmix64(uint64_t& state);

// 64-bit FNV-1a over an arbitrary byte string; also used for content hashes.
uint64_t fnv1a(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ULL);
uint64_t fnv1a(std::string_view s, uint64_t seed = 0xcbf29ce484222325ULL);

uint64_t derive_seed(uint64_t master, std::string_view stage, uint64_t counter = 0);

// Small self-contained generator (xoshiro-style splitmix stream). We avoid
// std::uniform_*_distribution because their outputs differ across standard
// libraries; these draws are identical on every platform.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ULL) {}

    uint64_t next_u64() { return splitmix64(state_); }

    // Unbiased integer in [0, bound) via rejection sampling.
    uint64_t next_below(uint64_t bound);

    // Uniform in [0, 1) with 24 bits of mantissa.
    float next_float() { return float(next_u64() >> 40) * (1.0f / 16777216.0f); }

    double next_double() { return double(next_u64() >> 11) * (1.0 / 9007199254740992.0); }

    // Standard normal via Box-Muller.
    float next_normal();

    bool next_bool() { return (next_u64() & 1) != 0; }

  private:
    uint64_t state_;
    bool have_spare_ = false;
    float spare_ = 0.0f;
};

// In-place Fisher-Yates with our own draws (std::shuffle is not portable).
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = size_t(rng.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

// k distinct elements of pool, order randomised, deterministic in (pool, k, rng state).
std::vector<size_t> sample_without_replacement(const std::vector<size_t>& pool, size_t k, Rng& rng);

}  // namespace ssbt
