#include "skelsim/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace skelsim {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

} // namespace

RngStream::RngStream(std::uint64_t seed) {
    // xoshiro256++ must not be seeded with all zeros; splitmix expansion
    // also decorrelates nearby seeds.
    std::uint64_t s = seed;
    for (auto& word : state_) {
        word = splitmix64(s);
    }
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
    if (n == 0) {
        throw std::invalid_argument("uniform_index: n must be positive");
    }
    // Rejection sampling removes the modulo bias.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v = next_u64();
    while (v >= limit) {
        v = next_u64();
    }
    return v % n;
}

double RngStream::normal(double mean, double sigma) {
    if (has_spare_) {
        has_spare_ = false;
        return mean + sigma * spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return mean + sigma * radius * std::cos(angle);
}

bool RngStream::chance(double p) { return uniform() < p; }

std::uint64_t hash_label(std::uint64_t seed, std::string_view label) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (const char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    std::uint64_t s = h;
    return splitmix64(s);
}

std::uint64_t hash_fold(std::uint64_t seed, std::uint64_t value) {
    std::uint64_t h = seed;
    for (int i = 0; i < 8; ++i) {
        h ^= (value >> (8 * i)) & 0xffULL;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t s = h;
    return splitmix64(s);
}

RngStream derive_stream(std::uint64_t master_seed, std::string_view label) {
    return RngStream(hash_label(master_seed, label));
}

RngStream derive_stream(std::uint64_t master_seed, std::string_view label,
                        std::uint64_t i0) {
    return RngStream(hash_fold(hash_label(master_seed, label), i0));
}

RngStream derive_stream(std::uint64_t master_seed, std::string_view label,
                        std::uint64_t i0, std::uint64_t i1) {
    return RngStream(hash_fold(hash_fold(hash_label(master_seed, label), i0), i1));
}

RngStream derive_stream(std::uint64_t master_seed, std::string_view label,
                        std::uint64_t i0, std::uint64_t i1, std::uint64_t i2) {
    return RngStream(
        hash_fold(hash_fold(hash_fold(hash_label(master_seed, label), i0), i1), i2));
}

} // namespace skelsim
