#include <algorithm>
#include <cmath>
#include <numbers>

#include "sglab/rng.hpp"

namespace sglab {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

double Rng::gaussian() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_gaussian_;
    }
    // u1 in (0, 1] so the log is finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    cached_gaussian_ = r * std::sin(t);
    has_cached_ = true;
    return r * std::cos(t);
}

std::size_t Rng::index(std::size_t n) {
    if (n == 0) throw ValueError("Rng::index: n must be positive");
    // rejection from the largest multiple of n below 2^64
    const std::uint64_t nn = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % nn;
    std::uint64_t draw;
    do {
        draw = next_u64();
    } while (draw >= limit);
    return static_cast<std::size_t>(draw % nn);
}

std::vector<std::size_t> Rng::indices(std::size_t n, std::size_t count) {
    std::vector<std::size_t> out(count);
    for (auto& v : out) v = index(n);
    return out;
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t count) {
    if (count > n)
        throw ValueError("sample_without_replacement: count " + std::to_string(count) +
                         " exceeds population " + std::to_string(n));
    // partial Fisher-Yates over [0, n)
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < count; ++i)
        std::swap(pool[i], pool[i + index(n - i)]);
    pool.resize(count);
    return pool;
}

Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double mean, double stddev) {
    Matrix out(rows, cols);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] = mean + stddev * rng.gaussian();
    return out;
}

} // namespace sglab
