#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "sglab/matrix.hpp"

namespace sglab {

// splitmix64 finalizer, used to derive independent child seeds.
std::uint64_t splitmix64(std::uint64_t x);

// Deterministic random source. The engine is std::mt19937_64 (fully specified
// by the standard, so streams are bit-exact across platforms) and the gaussian
// transform is an in-repo Box-Muller rather than std::normal_distribution,
// whose output sequence the standard leaves implementation-defined.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; the second value of each pair is cached.
    double gaussian();

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    // Uniform over {0, ..., n-1} by rejection (no modulo bias).
    std::size_t index(std::size_t n);

    // count independent draws from {0, ..., n-1} (with replacement).
    std::vector<std::size_t> indices(std::size_t n, std::size_t count);

    // count distinct values from {0, ..., n-1}, in random order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count);

    // Independent stream derived from (seed, stream) only — not from how much
    // of this Rng has been consumed. Lets e.g. iteration i's batch sampling be
    // reconstructed after a checkpoint resume.
    Rng child(std::uint64_t stream) const {
        return Rng(splitmix64(seed_ + 0x632be59bd9b4e019ull * (stream + 1)));
    }

  private:
    std::mt19937_64 engine_;
    std::uint64_t seed_ = 0;
    double cached_gaussian_ = 0.0;
    bool has_cached_ = false;
};

// [rows, cols] with i.i.d. N(mean, stddev^2) entries.
Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double mean = 0.0,
                       double stddev = 1.0);

} // namespace sglab
