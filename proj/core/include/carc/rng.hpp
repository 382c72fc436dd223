#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace carc {

// Counter-based deterministic generator. Every draw is a stateless hash of
// (seed, stream, counter), so state is three u64 words that serialize into
// checkpoints and restore bit-exactly. Streams are derived by name, which
// keeps independent consumers (init, batching, dropout, sampling) decoupled:
// adding draws to one stream never shifts another.
class Rng {
  public:
    Rng() = default;
    explicit Rng(uint64_t seed, uint64_t stream = 0, uint64_t counter = 0)
        : seed_(seed), stream_(stream), counter_(counter) {}

    // Child generator for a named purpose. Forking does not consume state.
    Rng fork(std::string_view name) const {
        uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
        for (char c : name) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ull;
        }
        return Rng(seed_, mix(stream_ ^ h));
    }

    Rng fork(uint64_t id) const { return Rng(seed_, mix(stream_ + 0x9e3779b97f4a7c15ull * (id + 1))); }

    uint64_t next_u64() {
        uint64_t z = seed_ + 0x9e3779b97f4a7c15ull * ++counter_;
        z ^= stream_;
        return mix(mix(z) + stream_);
    }

    // Uniform in [0, 1) with 53 significant bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). n must be > 0.
    uint64_t next_below(uint64_t n) {
        // Rejection-free multiply-shift; bias is < 2^-64 * n, irrelevant here.
        return static_cast<uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller. Consumes two uniforms per call.
    double next_normal() {
        double u1 = 1.0 - next_double();
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    bool next_bernoulli(double p) { return next_double() < p; }

    uint64_t seed() const { return seed_; }
    uint64_t stream() const { return stream_; }
    uint64_t counter() const { return counter_; }
    void restore(uint64_t seed, uint64_t stream, uint64_t counter) {
        seed_ = seed;
        stream_ = stream;
        counter_ = counter;
    }

  private:
    static uint64_t mix(uint64_t z) {
        // splitmix64 finalizer
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

    uint64_t seed_ = 0;
    uint64_t stream_ = 0;
    uint64_t counter_ = 0;
};

}  // namespace carc
