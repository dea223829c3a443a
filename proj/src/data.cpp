#include "sglab/data.hpp"

#include <algorithm>
#include <array>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "httplib.h"
#include "sglab/rng.hpp"

namespace sglab {

namespace fs = std::filesystem;

std::string to_string(DataKind k) {
    switch (k) {
    case DataKind::linear: return "linear";
    case DataKind::noisy: return "noisy";
    case DataKind::random: return "random";
    case DataKind::grid_linear_noise: return "grid_linear_noise";
    case DataKind::grid_random: return "grid_random";
    case DataKind::digits: return "digits";
    }
    throw ValueError("invalid data kind");
}

DataKind data_kind_from_string(const std::string& s) {
    if (s == "linear") return DataKind::linear;
    if (s == "noisy") return DataKind::noisy;
    if (s == "random") return DataKind::random;
    if (s == "grid_linear_noise") return DataKind::grid_linear_noise;
    if (s == "grid_random") return DataKind::grid_random;
    if (s == "digits") return DataKind::digits;
    throw ValueError("unknown data kind '" + s + "'");
}

namespace {

// Child-stream layout shared by the generators, so gen_noisy(k, seed) flips
// labels of exactly the dataset gen_linear(k, seed) produced.
constexpr std::uint64_t kStreamPoints = 0;
constexpr std::uint64_t kStreamPlane = 1;
constexpr std::uint64_t kStreamFlips = 2;
constexpr std::uint64_t kStreamLabels = 3;

Matrix one_hot(const std::vector<int>& labels, std::size_t classes) {
    Matrix y(labels.size(), classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
            throw ValueError("label " + std::to_string(labels[i]) + " outside " +
                             std::to_string(classes) + " classes");
        }
        y(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    return y;
}

std::vector<int> side_of_plane(const Matrix& x, const Matrix& w) {
    std::vector<int> labels(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) s += x(i, j) * w(0, j);
        labels[i] = s >= 0.0 ? 1 : 0; // on-plane points count as class 1
    }
    return labels;
}

void flip_fraction(std::vector<int>& labels, double rate, Rng& rng) {
    const std::size_t count =
        static_cast<std::size_t>(std::floor(rate * static_cast<double>(labels.size())));
    for (std::size_t i : rng.sample_without_replacement(labels.size(), count)) {
        labels[i] = 1 - labels[i];
    }
}

Dataset gaussian_cloud(std::size_t k, std::uint64_t seed, DataKind kind) {
    if (k == 0) throw ValueError("dataset dimensionality must be positive");
    const std::size_t n = k <= 10 ? 100 : 1000;
    Rng points = Rng(seed).child(kStreamPoints);
    Dataset ds;
    ds.X = gaussian_matrix(points, n, k);
    ds.spec = {kind, k, seed, 0.0};
    return ds;
}

} // namespace

Dataset gen_linear(std::size_t k, std::uint64_t seed) {
    Dataset ds = gaussian_cloud(k, seed, DataKind::linear);
    Rng plane = Rng(seed).child(kStreamPlane);
    Matrix w = gaussian_matrix(plane, 1, k);
    ds.labels = side_of_plane(ds.X, w);
    ds.Y = one_hot(ds.labels, 2);
    return ds;
}

Dataset gen_noisy(std::size_t k, std::uint64_t seed) {
    Dataset ds = gen_linear(k, seed);
    Rng flips = Rng(seed).child(kStreamFlips);
    flip_fraction(ds.labels, 0.1, flips);
    ds.Y = one_hot(ds.labels, 2);
    ds.spec.kind = DataKind::noisy;
    ds.spec.noise_rate = 0.1;
    return ds;
}

Dataset gen_random(std::size_t k, std::uint64_t seed) {
    Dataset ds = gaussian_cloud(k, seed, DataKind::random);
    Rng labels = Rng(seed).child(kStreamLabels);
    ds.labels.resize(ds.n());
    for (auto& l : ds.labels) l = static_cast<int>(labels.index(2));
    ds.Y = one_hot(ds.labels, 2);
    return ds;
}

GridDataset grid_2d(std::size_t resolution, std::pair<double, double> range, GridLabeler labeler,
                    std::uint64_t seed, double noise_rate) {
    if (resolution < 2) throw ValueError("grid resolution must be at least 2");
    if (range.second <= range.first) throw ValueError("grid range must be increasing");
    if (noise_rate < 0.0 || noise_rate > 1.0) throw ValueError("noise rate must be in [0, 1]");

    const auto [lo, hi] = range;
    const std::size_t n = resolution * resolution;
    const double denom = static_cast<double>(resolution - 1);
    auto coord = [&](std::size_t i) {
        return (static_cast<double>(resolution - 1 - i) * lo + static_cast<double>(i) * hi) / denom;
    };

    GridDataset grid;
    grid.resolution = resolution;
    grid.lo = lo;
    grid.hi = hi;
    grid.data.X = Matrix(n, 2);
    for (std::size_t i = 0; i < resolution; ++i) {
        for (std::size_t j = 0; j < resolution; ++j) {
            grid.data.X(i * resolution + j, 0) = coord(i);
            grid.data.X(i * resolution + j, 1) = coord(j);
        }
    }

    if (labeler == GridLabeler::linear_with_noise) {
        Rng plane = Rng(seed).child(kStreamPlane);
        Matrix w = gaussian_matrix(plane, 1, 2);
        grid.data.labels = side_of_plane(grid.data.X, w);
        Rng flips = Rng(seed).child(kStreamFlips);
        flip_fraction(grid.data.labels, noise_rate, flips);
        grid.data.spec = {DataKind::grid_linear_noise, 2, seed, noise_rate};
    } else {
        Rng labels = Rng(seed).child(kStreamLabels);
        grid.data.labels.resize(n);
        for (auto& l : grid.data.labels) l = static_cast<int>(labels.index(2));
        grid.data.spec = {DataKind::grid_random, 2, seed, 0.0};
    }
    grid.data.Y = one_hot(grid.data.labels, 2);
    return grid;
}

// ---------------------------------------------------------------------------
// IDX files.

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

std::uint32_t read_u32_be(const std::vector<std::uint8_t>& b, std::size_t off,
                          const std::string& path) {
    if (off + 4 > b.size()) throw IdxTruncatedError("'" + path + "' truncated in header");
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

void append_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 24));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to '" + path + "' failed");
}

struct IdxImages {
    std::size_t n, rows, cols;
    const std::uint8_t* pixels;
};

IdxImages parse_idx_images(const std::vector<std::uint8_t>& b, const std::string& path) {
    const std::uint32_t magic = read_u32_be(b, 0, path);
    if (magic != kImageMagic) {
        char hex[16];
        std::snprintf(hex, sizeof hex, "0x%08" PRIx32, magic);
        throw IdxMagicError("'" + path + "' has image magic " + hex + ", expected 0x00000803");
    }
    IdxImages im{read_u32_be(b, 4, path), read_u32_be(b, 8, path), read_u32_be(b, 12, path),
                 nullptr};
    if (b.size() < 16 + im.n * im.rows * im.cols) {
        throw IdxTruncatedError("'" + path + "' truncated: header promises " +
                                std::to_string(im.n * im.rows * im.cols) + " pixel bytes");
    }
    im.pixels = b.data() + 16;
    return im;
}

std::pair<std::size_t, const std::uint8_t*> parse_idx_labels(const std::vector<std::uint8_t>& b,
                                                             const std::string& path) {
    const std::uint32_t magic = read_u32_be(b, 0, path);
    if (magic != kLabelMagic) {
        char hex[16];
        std::snprintf(hex, sizeof hex, "0x%08" PRIx32, magic);
        throw IdxMagicError("'" + path + "' has label magic " + hex + ", expected 0x00000801");
    }
    const std::size_t n = read_u32_be(b, 4, path);
    if (b.size() < 8 + n) {
        throw IdxTruncatedError("'" + path + "' truncated: header promises " + std::to_string(n) +
                                " labels");
    }
    return {n, b.data() + 8};
}

} // namespace

Dataset load_mnist(const std::string& images_path, const std::string& labels_path) {
    const auto image_bytes = read_file(images_path);
    const auto label_bytes = read_file(labels_path);
    const IdxImages im = parse_idx_images(image_bytes, images_path);
    const auto [ln, lp] = parse_idx_labels(label_bytes, labels_path);
    if (im.n != ln) {
        throw IdxCountError("'" + images_path + "' has " + std::to_string(im.n) + " images but '" +
                            labels_path + "' has " + std::to_string(ln) + " labels");
    }

    Dataset ds;
    const std::size_t d = im.rows * im.cols;
    ds.X = Matrix(im.n, d);
    for (std::size_t i = 0; i < im.n * d; ++i) {
        ds.X.data()[i] = static_cast<double>(im.pixels[i]) / 255.0;
    }
    ds.labels.resize(ln);
    for (std::size_t i = 0; i < ln; ++i) {
        if (lp[i] > 9) {
            throw IoError("'" + labels_path + "' has label " + std::to_string(int(lp[i])) +
                          ", expected 0..9");
        }
        ds.labels[i] = static_cast<int>(lp[i]);
    }
    ds.Y = one_hot(ds.labels, 10);
    ds.spec = {DataKind::digits, d, 0, 0.0};
    return ds;
}

void write_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels,
                      std::size_t n, std::size_t rows, std::size_t cols) {
    if (pixels.size() != n * rows * cols) {
        throw ValueError("pixel buffer has " + std::to_string(pixels.size()) + " bytes, expected " +
                         std::to_string(n * rows * cols));
    }
    std::vector<std::uint8_t> out;
    out.reserve(16 + pixels.size());
    append_u32_be(out, kImageMagic);
    append_u32_be(out, static_cast<std::uint32_t>(n));
    append_u32_be(out, static_cast<std::uint32_t>(rows));
    append_u32_be(out, static_cast<std::uint32_t>(cols));
    out.insert(out.end(), pixels.begin(), pixels.end());
    write_file(path, out);
}

void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + labels.size());
    append_u32_be(out, kLabelMagic);
    append_u32_be(out, static_cast<std::uint32_t>(labels.size()));
    out.insert(out.end(), labels.begin(), labels.end());
    write_file(path, out);
}

// ---------------------------------------------------------------------------
// Surrogate digit corpus: seven-segment glyphs, 28x28.

namespace {

// Segment order: top, top-left, top-right, middle, bottom-left, bottom-right,
// bottom.
constexpr std::array<std::array<bool, 7>, 10> kSegments = {{
    {true, true, true, false, true, true, true},     // 0
    {false, false, true, false, false, true, false}, // 1
    {true, false, true, true, true, false, true},    // 2
    {true, false, true, true, false, true, true},    // 3
    {false, true, true, true, false, true, false},   // 4
    {true, true, false, true, false, true, true},    // 5
    {true, true, false, true, true, true, true},     // 6
    {true, false, true, false, false, true, false},  // 7
    {true, true, true, true, true, true, true},      // 8
    {true, true, true, true, false, true, true},     // 9
}};

void render_digit(std::uint8_t* img, int digit, int dx, int dy, double intensity, Rng& rng) {
    constexpr int top = 5, mid = 14, bot = 23, left = 9, right = 19, thick = 2;
    auto paint = [&](int r0, int r1, int c0, int c1) {
        for (int r = r0 + dy; r < r1 + dy; ++r) {
            for (int c = c0 + dx; c < c1 + dx; ++c) {
                if (r < 0 || r >= 28 || c < 0 || c >= 28) continue;
                double v = intensity * 255.0 - 50.0 * rng.uniform();
                img[r * 28 + c] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
            }
        }
    };
    const auto& seg = kSegments[static_cast<std::size_t>(digit)];
    if (seg[0]) paint(top, top + thick, left, right + thick);           // top
    if (seg[1]) paint(top, mid + thick, left, left + thick);            // top-left
    if (seg[2]) paint(top, mid + thick, right, right + thick);          // top-right
    if (seg[3]) paint(mid, mid + thick, left, right + thick);           // middle
    if (seg[4]) paint(mid, bot + thick, left, left + thick);            // bottom-left
    if (seg[5]) paint(mid, bot + thick, right, right + thick);          // bottom-right
    if (seg[6]) paint(bot, bot + thick, left, right + thick);           // bottom
    for (int p = 0; p < 28 * 28; ++p) {                                 // background noise
        double v = static_cast<double>(img[p]) + 40.0 * rng.uniform();
        img[p] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
}

} // namespace

void write_surrogate_digits(const std::string& images_path, const std::string& labels_path,
                            std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ValueError("surrogate corpus needs at least one image");
    std::vector<std::uint8_t> pixels(n * 28 * 28, 0);
    std::vector<std::uint8_t> labels(n);
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const int digit = static_cast<int>(i % 10);
        labels[i] = static_cast<std::uint8_t>(digit);
        const int dx = static_cast<int>(rng.index(7)) - 3;
        const int dy = static_cast<int>(rng.index(7)) - 3;
        const double intensity = 0.7 + 0.3 * rng.uniform();
        render_digit(pixels.data() + i * 28 * 28, digit, dx, dy, intensity, rng);
    }
    write_idx_images(images_path, pixels, n, 28, 28);
    write_idx_labels(labels_path, labels);
}

DigitCorpus load_digits(const std::string& dir, std::uint64_t seed) {
    const fs::path base(dir);
    const auto real = [&](const char* name) { return (base / name).string(); };
    const std::string real_files[4] = {real("train-images-idx3-ubyte"),
                                       real("train-labels-idx1-ubyte"),
                                       real("t10k-images-idx3-ubyte"),
                                       real("t10k-labels-idx1-ubyte")};
    if (std::all_of(std::begin(real_files), std::end(real_files),
                    [](const std::string& p) { return fs::exists(p); })) {
        return {load_mnist(real_files[0], real_files[1]), load_mnist(real_files[2], real_files[3]),
                false};
    }

    const std::string sur_files[4] = {real("surrogate-train-images-idx3-ubyte"),
                                      real("surrogate-train-labels-idx1-ubyte"),
                                      real("surrogate-t10k-images-idx3-ubyte"),
                                      real("surrogate-t10k-labels-idx1-ubyte")};
    if (!std::all_of(std::begin(sur_files), std::end(sur_files),
                     [](const std::string& p) { return fs::exists(p); })) {
        fs::create_directories(base);
        Rng streams(seed);
        write_surrogate_digits(sur_files[0], sur_files[1], 12000, streams.child(0).next_u64());
        write_surrogate_digits(sur_files[2], sur_files[3], 2000, streams.child(1).next_u64());
    }
    return {load_mnist(sur_files[0], sur_files[1]), load_mnist(sur_files[2], sur_files[3]), true};
}

// ---------------------------------------------------------------------------

Dataset subset(const Dataset& ds, std::size_t m, std::uint64_t seed) {
    if (m > ds.n()) {
        throw ValueError("cannot take " + std::to_string(m) + " points from " +
                         std::to_string(ds.n()));
    }
    Rng rng(seed);
    const auto idx = rng.sample_without_replacement(ds.n(), m);
    Dataset out;
    out.X = Matrix(m, ds.d());
    out.Y = Matrix(m, ds.c());
    out.labels.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < ds.d(); ++j) out.X(i, j) = ds.X(idx[i], j);
        for (std::size_t j = 0; j < ds.c(); ++j) out.Y(i, j) = ds.Y(idx[i], j);
        out.labels[i] = ds.labels[idx[i]];
    }
    out.spec = ds.spec;
    return out;
}

Dataset sample_sorted(const Dataset& ds, std::size_t total, std::uint64_t seed) {
    Dataset out = subset(ds, total, seed);
    std::vector<std::size_t> order(out.n());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return out.labels[a] < out.labels[b]; });
    Dataset sorted;
    sorted.X = Matrix(out.n(), out.d());
    sorted.Y = Matrix(out.n(), out.c());
    sorted.labels.resize(out.n());
    for (std::size_t i = 0; i < out.n(); ++i) {
        for (std::size_t j = 0; j < out.d(); ++j) sorted.X(i, j) = out.X(order[i], j);
        for (std::size_t j = 0; j < out.c(); ++j) sorted.Y(i, j) = out.Y(order[i], j);
        sorted.labels[i] = out.labels[order[i]];
    }
    sorted.spec = out.spec;
    return sorted;
}

void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    for (std::size_t j = 0; j < ds.d(); ++j) out << "x" << j << ",";
    out << "label\n";
    char buf[64];
    for (std::size_t i = 0; i < ds.n(); ++i) {
        for (std::size_t j = 0; j < ds.d(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", ds.X(i, j));
            out << buf << ",";
        }
        out << ds.labels[i] << "\n";
    }
    if (!out) throw IoError("write to '" + path + "' failed");
}

Dataset read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw IoError("'" + path + "' is empty");
    const std::size_t d = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    if (d == 0) throw IoError("'" + path + "' has no feature columns");

    std::vector<double> xs;
    std::vector<int> labels;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        for (std::size_t j = 0; j < d; ++j) {
            if (!std::getline(row, cell, ',')) {
                throw IoError("'" + path + "' row " + std::to_string(labels.size() + 1) +
                              " has too few columns");
            }
            xs.push_back(std::stod(cell));
        }
        if (!std::getline(row, cell)) {
            throw IoError("'" + path + "' row " + std::to_string(labels.size() + 1) +
                          " is missing the label");
        }
        labels.push_back(std::stoi(cell));
    }

    Dataset ds;
    ds.X = Matrix(labels.size(), d);
    std::copy(xs.begin(), xs.end(), ds.X.data());
    ds.labels = labels;
    const int top = labels.empty() ? 1 : *std::max_element(labels.begin(), labels.end());
    ds.Y = one_hot(ds.labels, static_cast<std::size_t>(std::max(top + 1, 2)));
    ds.spec = {DataKind::linear, d, 0, 0.0};
    return ds;
}

// ---------------------------------------------------------------------------

namespace {

std::string http_get(const std::string& host_url, const std::string& path) {
    httplib::Client cli(host_url);
    cli.set_follow_location(true);
    auto res = cli.Get(path);
    if (!res) {
        throw IoError("GET " + host_url + path + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw IoError("GET " + host_url + path + " returned status " +
                      std::to_string(res->status));
    }
    if (res->has_header("Content-Length")) {
        const auto want = std::stoull(res->get_header_value("Content-Length"));
        if (want != res->body.size()) {
            throw IoError("GET " + host_url + path + " delivered " +
                          std::to_string(res->body.size()) + " bytes, header promised " +
                          std::to_string(want));
        }
    }
    return res->body;
}

} // namespace

void fetch_mnist(const std::string& base_url, const std::string& dir) {
    // Split http://host[:port]/prefix into host part and path prefix.
    std::string rest = base_url;
    const std::string scheme = "http://";
    if (rest.rfind(scheme, 0) != 0) {
        throw ValueError("fetch_mnist expects an http:// base URL, got '" + base_url + "'");
    }
    rest = rest.substr(scheme.size());
    const std::size_t slash = rest.find('/');
    const std::string host = "http://" + (slash == std::string::npos ? rest : rest.substr(0, slash));
    std::string prefix = slash == std::string::npos ? "" : rest.substr(slash);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

    fs::create_directories(dir);
    const char* names[4] = {"train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                            "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"};
    for (const char* name : names) {
        const std::string body = http_get(host, prefix + "/" + name);
        const std::string out_path = (fs::path(dir) / name).string();
        write_file(out_path, std::vector<std::uint8_t>(body.begin(), body.end()));
        // Validate what we stored: parses as IDX and is complete.
        const auto bytes = read_file(out_path);
        if (std::string(name).find("images") != std::string::npos) parse_idx_images(bytes, out_path);
        else parse_idx_labels(bytes, out_path);
    }
}

} // namespace sglab
