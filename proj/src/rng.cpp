#include "ssbt/rng.hpp"

#include <cmath>
#include <cstring>

namespace ssbt {

uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t fnv1a(const void* data, size_t len, uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t fnv1a(std::string_view s, uint64_t seed) { return fnv1a(s.data(), s.size(), seed); }

uint64_t derive_seed(uint64_t master, std::string_view stage, uint64_t counter) {
    uint64_t state = master ^ fnv1a(stage);
    splitmix64(state);
    state += counter * 0x9e3779b97f4a7c15ULL;
    return splitmix64(state);
}

uint64_t Rng::next_below(uint64_t bound) {
    if (bound <= 1) return 0;
    uint64_t threshold = (~bound + 1) % bound;  // 2^64 mod bound
    for (;;) {
        uint64_t r = next_u64();
        if (r >= threshold) return r % bound;
    }
}

float Rng::next_normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    float u1, u2;
    do {
        u1 = next_float();
    } while (u1 <= 1e-12f);
    u2 = next_float();
    float mag = std::sqrt(-2.0f * std::log(u1));
    float two_pi = 6.28318530717958647692f;
    spare_ = mag * std::sin(two_pi * u2);
    have_spare_ = true;
    return mag * std::cos(two_pi * u2);
}

std::vector<size_t> sample_without_replacement(const std::vector<size_t>& pool, size_t k, Rng& rng) {
    std::vector<size_t> copy = pool;
    if (k > copy.size()) k = copy.size();
    // Partial Fisher-Yates: after i swaps the first i entries are the sample.
    for (size_t i = 0; i < k; ++i) {
        size_t j = i + size_t(rng.next_below(copy.size() - i));
        std::swap(copy[i], copy[j]);
    }
    copy.resize(k);
    return copy;
}

}  // namespace ssbt
