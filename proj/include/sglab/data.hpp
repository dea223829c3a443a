#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sglab/errors.hpp"
#include "sglab/matrix.hpp"

namespace sglab {

enum class DataKind { linear, noisy, random, grid_linear_noise, grid_random, digits };
std::string to_string(DataKind k);
DataKind data_kind_from_string(const std::string& s);

// Provenance record: enough to regenerate the dataset exactly.
struct DataSpec {
    DataKind kind = DataKind::linear;
    std::size_t k = 2;       // input dimensionality
    std::uint64_t seed = 0;
    double noise_rate = 0.0; // fraction of labels intentionally flipped
};

struct Dataset {
    Matrix X;                // [n, d]
    Matrix Y;                // [n, c] one-hot
    std::vector<int> labels; // [n]
    DataSpec spec;

    std::size_t n() const { return X.rows(); }
    std::size_t d() const { return X.cols(); }
    std::size_t c() const { return Y.cols(); }
};

// 2-D lattice wrapper for loss-surface experiments: point (i, j) sits at
// (coord(i), coord(j)) with coord(i) = ((res-1-i)*lo + i*hi) / (res-1),
// stored in row-major order, index = i*resolution + j.
struct GridDataset {
    std::size_t resolution = 0;
    double lo = 0.0, hi = 0.0;
    Dataset data;
};

// Gaussian cloud labeled by the side of an origin-crossing hyperplane with a
// standard-normal normal vector; points exactly on it count as class 1.
// n = 100 for k <= 10, 1000 otherwise.
Dataset gen_linear(std::size_t k, std::uint64_t seed);

// gen_linear, then exactly floor(0.1 * n) distinct labels flipped.
Dataset gen_noisy(std::size_t k, std::uint64_t seed);

// Same cloud, labels i.i.d. uniform over {0, 1}.
Dataset gen_random(std::size_t k, std::uint64_t seed);

enum class GridLabeler { linear_with_noise, random };

GridDataset grid_2d(std::size_t resolution, std::pair<double, double> range, GridLabeler labeler,
                    std::uint64_t seed, double noise_rate = 0.1);

// ---------------------------------------------------------------------------
// IDX ingestion. Distinct failure classes so callers can tell a wrong file
// from a damaged one from a mismatched pair.

struct IdxMagicError : IoError {
    using IoError::IoError;
};
struct IdxTruncatedError : IoError {
    using IoError::IoError;
};
struct IdxCountError : IoError {
    using IoError::IoError;
};

// Reads an IDX image/label pair (magics 0x00000803 / 0x00000801), scales
// pixels to [0, 1], one-hot over 10 classes.
Dataset load_mnist(const std::string& images_path, const std::string& labels_path);

// Writers for the same format (used by tests and the surrogate corpus).
void write_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels,
                      std::size_t n, std::size_t rows, std::size_t cols);
void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

// Renders a procedural 10-class digit corpus — seven-segment glyphs with
// per-sample translation, intensity variation, and pixel noise — and writes
// it through the IDX writers. Class of image i is i mod 10.
void write_surrogate_digits(const std::string& images_path, const std::string& labels_path,
                            std::size_t n, std::uint64_t seed);

struct DigitCorpus {
    Dataset train;
    Dataset test;
    bool surrogate = false;
};

// Loads the standard IDX quartet from `dir` when present; otherwise creates
// (once) and loads a surrogate corpus of 12000 train / 2000 test images.
DigitCorpus load_digits(const std::string& dir, std::uint64_t seed = 0);

// Downloads the four standard IDX files from `base_url` into `dir` over
// plain HTTP and validates each by parsing its header. Not used by tests.
void fetch_mnist(const std::string& base_url, const std::string& dir);

// ---------------------------------------------------------------------------

// Seeded subset of m points, sampled without replacement.
Dataset subset(const Dataset& ds, std::size_t m, std::uint64_t seed);

// Seeded subset of `total` points, reordered so labels are nondecreasing.
Dataset sample_sorted(const Dataset& ds, std::size_t total, std::uint64_t seed);

// CSV export/import (header x0,...,x{d-1},label; 17 significant digits so
// doubles round-trip exactly).
void write_csv(const Dataset& ds, const std::string& path);
Dataset read_csv(const std::string& path);

} // namespace sglab
