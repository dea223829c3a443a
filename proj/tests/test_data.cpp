#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "sglab/data.hpp"
#include "sglab/network.hpp"
#include "sglab/rng.hpp"

using namespace sglab;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case, removed on destruction.
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("sglab_data_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

bool datasets_equal(const Dataset& a, const Dataset& b) {
    return a.X == b.X && a.Y == b.Y && a.labels == b.labels;
}

std::size_t label_disagreements(const Dataset& a, const Dataset& b) {
    REQUIRE(a.n() == b.n());
    std::size_t count = 0;
    for (std::size_t i = 0; i < a.n(); ++i) count += a.labels[i] != b.labels[i];
    return count;
}

} // namespace

TEST_CASE("gen_linear: sizes, classes, determinism") {
    Dataset small = gen_linear(2, 7);
    CHECK(small.n() == 100);
    CHECK(small.d() == 2);
    CHECK(small.c() == 2);
    check_one_hot(small.Y);
    for (int l : small.labels) CHECK((l == 0 || l == 1));
    // both classes occur (all-one-side has probability ~2^-99)
    std::set<int> seen(small.labels.begin(), small.labels.end());
    CHECK(seen.size() == 2);

    Dataset big = gen_linear(100, 7);
    CHECK(big.n() == 1000);
    CHECK(big.d() == 100);

    CHECK(datasets_equal(gen_linear(2, 7), small));
    CHECK_FALSE(datasets_equal(gen_linear(2, 8), small));
    CHECK_THROWS_AS(gen_linear(0, 7), ValueError);
}

TEST_CASE("gen_linear is separable: a linear softmax model reaches 100% train accuracy") {
    Dataset ds = gen_linear(2, 3);
    Rng rng(99);
    Network net = build_network({2, 2}, std::nullopt, false, LossKind::logloss, rng);
    NetAdam adam = make_adam(net);
    AdamConfig cfg;
    cfg.lr = 0.1;
    for (int step = 0; step < 500; ++step) {
        ForwardCache cache;
        Matrix p = forward_all(net, ds.X, Mode::train, cache);
        Matrix g = loss_grad(LossKind::logloss, p, ds.Y);
        SegmentGrads grads;
        backward_blocks(net, cache, g, grads);
        apply_grads(net, adam, grads, cfg);
    }
    CHECK(accuracy(predict(net, ds.X), ds.Y) == doctest::Approx(1.0));
}

TEST_CASE("gen_noisy flips exactly 10% of the linear labels") {
    Dataset clean = gen_linear(2, 11);
    Dataset noisy = gen_noisy(2, 11);
    CHECK(noisy.X == clean.X); // same cloud
    CHECK(label_disagreements(clean, noisy) == 10);
    check_one_hot(noisy.Y);
    for (std::size_t i = 0; i < noisy.n(); ++i) {
        CHECK(noisy.Y(i, static_cast<std::size_t>(noisy.labels[i])) == 1.0);
    }
    CHECK(datasets_equal(gen_noisy(2, 11), noisy)); // flip set is seed-deterministic

    Dataset big = gen_noisy(100, 11);
    CHECK(label_disagreements(gen_linear(100, 11), big) == 100);
}

TEST_CASE("gen_random: uniform labels, deterministic, d = k") {
    Dataset ds = gen_random(2, 5);
    CHECK(ds.n() == 100);
    CHECK(ds.d() == 2);
    double mean = 0.0;
    for (int l : ds.labels) mean += l;
    mean /= static_cast<double>(ds.n());
    CHECK(mean >= 0.35);
    CHECK(mean <= 0.65);
    CHECK(datasets_equal(gen_random(2, 5), ds));
    CHECK(gen_random(7, 5).d() == 7);
}

TEST_CASE("grid_2d builds an exact lattice") {
    GridDataset grid = grid_2d(20, {-2.0, 2.0}, GridLabeler::linear_with_noise, 13);
    CHECK(grid.data.n() == 400);
    CHECK(grid.data.d() == 2);

    std::set<double> xs, ys;
    for (std::size_t i = 0; i < 400; ++i) {
        xs.insert(grid.data.X(i, 0));
        ys.insert(grid.data.X(i, 1));
    }
    CHECK(xs.size() == 20);
    CHECK(ys.size() == 20);
    CHECK(*xs.begin() == -2.0);
    CHECK(*xs.rbegin() == 2.0);
    CHECK(*ys.begin() == -2.0);
    CHECK(*ys.rbegin() == 2.0);
    // every (x, y) pair present exactly once, in row-major order
    std::size_t idx = 0;
    for (double x : xs) {
        for (double y : ys) {
            CHECK(grid.data.X(idx, 0) == x);
            CHECK(grid.data.X(idx, 1) == y);
            ++idx;
        }
    }
    CHECK_THROWS_AS(grid_2d(1, {-2.0, 2.0}, GridLabeler::random, 13), ValueError);
    CHECK_THROWS_AS(grid_2d(20, {2.0, -2.0}, GridLabeler::random, 13), ValueError);
}

TEST_CASE("grid_2d labelers: exact noise count, uniform random labels") {
    GridDataset noiseless = grid_2d(20, {-2.0, 2.0}, GridLabeler::linear_with_noise, 13, 0.0);
    GridDataset noisy = grid_2d(20, {-2.0, 2.0}, GridLabeler::linear_with_noise, 13, 0.1);
    CHECK(label_disagreements(noiseless.data, noisy.data) == 40);
    CHECK(noisy.data.spec.noise_rate == 0.1);

    GridDataset random = grid_2d(20, {-2.0, 2.0}, GridLabeler::random, 13);
    double mean = 0.0;
    for (int l : random.data.labels) mean += l;
    mean /= 400.0;
    CHECK(mean >= 0.3);
    CHECK(mean <= 0.7);
    GridDataset again = grid_2d(20, {-2.0, 2.0}, GridLabeler::random, 13);
    CHECK(datasets_equal(random.data, again.data));
}

TEST_CASE("idx round trip and the three failure classes") {
    TempDir tmp("idx");
    // 3 images of 4x5, pixel value = position index
    std::vector<std::uint8_t> pixels(3 * 4 * 5);
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<std::uint8_t>(i * 4);
    write_idx_images(tmp.file("img"), pixels, 3, 4, 5);
    write_idx_labels(tmp.file("lab"), {7, 0, 9});

    Dataset ds = load_mnist(tmp.file("img"), tmp.file("lab"));
    CHECK(ds.n() == 3);
    CHECK(ds.d() == 20);
    CHECK(ds.c() == 10);
    CHECK(ds.labels == std::vector<int>{7, 0, 9});
    check_one_hot(ds.Y);
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        CHECK(ds.X.data()[i] == static_cast<double>(pixels[i]) / 255.0);
        CHECK(ds.X.data()[i] >= 0.0);
        CHECK(ds.X.data()[i] <= 1.0);
    }

    // wrong magic: hand the label file where images are expected and vice versa
    CHECK_THROWS_AS(load_mnist(tmp.file("lab"), tmp.file("lab")), IdxMagicError);
    CHECK_THROWS_AS(load_mnist(tmp.file("img"), tmp.file("img")), IdxMagicError);

    // truncation: drop the last pixel byte
    {
        std::ifstream in(tmp.file("img"), std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::ofstream out(tmp.file("img_cut"), std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 1));
    }
    CHECK_THROWS_AS(load_mnist(tmp.file("img_cut"), tmp.file("lab")), IdxTruncatedError);

    // count mismatch: 3 images vs 2 labels
    write_idx_labels(tmp.file("lab2"), {1, 2});
    CHECK_THROWS_AS(load_mnist(tmp.file("img"), tmp.file("lab2")), IdxCountError);

    CHECK_THROWS_AS(load_mnist(tmp.file("missing"), tmp.file("lab")), IoError);
}

TEST_CASE("surrogate digit corpus covers all classes and loads through the idx path") {
    TempDir tmp("surrogate");
    write_surrogate_digits(tmp.file("img"), tmp.file("lab"), 200, 42);
    Dataset ds = load_mnist(tmp.file("img"), tmp.file("lab"));
    CHECK(ds.n() == 200);
    CHECK(ds.d() == 784);
    CHECK(ds.c() == 10);

    std::array<int, 10> hist{};
    for (int l : ds.labels) hist[static_cast<std::size_t>(l)]++;
    for (int count : hist) CHECK(count == 20);
    for (std::size_t i = 0; i < ds.X.size(); ++i) {
        CHECK(ds.X.data()[i] >= 0.0);
        CHECK(ds.X.data()[i] <= 1.0);
    }

    // deterministic under seed; distinct under another
    write_surrogate_digits(tmp.file("img2"), tmp.file("lab2"), 200, 42);
    CHECK(datasets_equal(load_mnist(tmp.file("img2"), tmp.file("lab2")), ds));
    write_surrogate_digits(tmp.file("img3"), tmp.file("lab3"), 200, 43);
    CHECK_FALSE(datasets_equal(load_mnist(tmp.file("img3"), tmp.file("lab3")), ds));

    // different digits render differently
    Matrix r0 = row_copy(ds.X, 0), r1 = row_copy(ds.X, 1);
    CHECK(frobenius_norm(sub(r0, r1)) > 0.5);
}

TEST_CASE("load_digits synthesizes once, then reuses the files") {
    TempDir tmp("load_digits");
    // small corpus: point load_digits at files we create ourselves under the
    // surrogate names so the test stays fast
    write_surrogate_digits(tmp.file("surrogate-train-images-idx3-ubyte"),
                           tmp.file("surrogate-train-labels-idx1-ubyte"), 300, 1);
    write_surrogate_digits(tmp.file("surrogate-t10k-images-idx3-ubyte"),
                           tmp.file("surrogate-t10k-labels-idx1-ubyte"), 50, 2);
    DigitCorpus corpus = load_digits(tmp.path.string());
    CHECK(corpus.surrogate);
    CHECK(corpus.train.n() == 300);
    CHECK(corpus.test.n() == 50);

    DigitCorpus again = load_digits(tmp.path.string());
    CHECK(datasets_equal(again.train, corpus.train));
    CHECK(datasets_equal(again.test, corpus.test));

    // real-name files take precedence over surrogate ones
    write_surrogate_digits(tmp.file("train-images-idx3-ubyte"),
                           tmp.file("train-labels-idx1-ubyte"), 40, 3);
    write_surrogate_digits(tmp.file("t10k-images-idx3-ubyte"),
                           tmp.file("t10k-labels-idx1-ubyte"), 20, 4);
    DigitCorpus real = load_digits(tmp.path.string());
    CHECK_FALSE(real.surrogate);
    CHECK(real.train.n() == 40);
}

TEST_CASE("subset samples distinct rows deterministically") {
    Dataset ds = gen_noisy(2, 21);
    Dataset sub10 = subset(ds, 10, 5);
    CHECK(sub10.n() == 10);
    CHECK(sub10.d() == ds.d());
    check_one_hot(sub10.Y);

    // every sampled row exists in the original with a matching label
    std::set<std::size_t> sources;
    for (std::size_t i = 0; i < sub10.n(); ++i) {
        bool found = false;
        for (std::size_t j = 0; j < ds.n(); ++j) {
            if (row_copy(sub10.X, i) == row_copy(ds.X, j) && sub10.labels[i] == ds.labels[j]) {
                CHECK(sources.insert(j).second); // no duplicates
                found = true;
                break;
            }
        }
        CHECK(found);
    }
    CHECK(datasets_equal(subset(ds, 10, 5), sub10));
    CHECK_THROWS_AS(subset(ds, 101, 5), ValueError);
}

TEST_CASE("sample_sorted returns the requested count in label order") {
    TempDir tmp("sorted");
    write_surrogate_digits(tmp.file("img"), tmp.file("lab"), 600, 9);
    Dataset ds = load_mnist(tmp.file("img"), tmp.file("lab"));
    Dataset sorted = sample_sorted(ds, 400, 17);
    CHECK(sorted.n() == 400);
    for (std::size_t i = 1; i < sorted.n(); ++i) {
        CHECK(sorted.labels[i] >= sorted.labels[i - 1]);
    }
    check_one_hot(sorted.Y);
    CHECK(datasets_equal(sample_sorted(ds, 400, 17), sorted));
}

TEST_CASE("csv round trip preserves doubles bitwise") {
    TempDir tmp("csv");
    Dataset ds = gen_noisy(2, 31);
    write_csv(ds, tmp.file("ds.csv"));

    std::ifstream in(tmp.file("ds.csv"));
    std::string header;
    std::getline(in, header);
    CHECK(header == "x0,x1,label");

    Dataset back = read_csv(tmp.file("ds.csv"));
    CHECK(back.X == ds.X);
    CHECK(back.labels == ds.labels);
    CHECK(back.Y == ds.Y);
    CHECK_THROWS_AS(read_csv(tmp.file("missing.csv")), IoError);
}
