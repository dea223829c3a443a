#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "sglab/kernels.hpp"
#include "sglab/matrix.hpp"
#include "sglab/rng.hpp"

using namespace sglab;

namespace {

// Independent oracle: naive ijk triple loop with a local accumulator.
Matrix matmul_naive(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
            c(i, j) = acc;
        }
    }
    return c;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    REQUIRE(a.same_shape(b));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

} // namespace

TEST_CASE("matmul basics") {
    const Matrix m = Matrix::from_rows({{1, 2}, {3, 4}});
    CHECK(matmul(identity(2), m) == m);

    const Matrix v = Matrix::from_rows({{5}, {6}});
    const Matrix mv = matmul(m, v);
    CHECK(mv(0, 0) == doctest::Approx(17.0));
    CHECK(mv(1, 0) == doctest::Approx(39.0));

    const Matrix z = matmul(zeros(3, 2), m);
    CHECK(z.rows() == 3);
    CHECK(z.cols() == 2);
    CHECK(sum_sq(z) == 0.0);

    CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(4, 2)), ShapeError);
}

TEST_CASE("matmul matches naive oracle bitwise on random shapes") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rng.index(9);
        const std::size_t k = 1 + rng.index(9);
        const std::size_t n = 1 + rng.index(9);
        const Matrix a = gaussian_matrix(rng, m, k);
        const Matrix b = gaussian_matrix(rng, k, n);
        // ascending-k accumulation in both implementations makes this exact
        CHECK(matmul(a, b) == matmul_naive(a, b));
    }
}

TEST_CASE("transpose involution and (AB)^T = B^T A^T") {
    Rng rng(3);
    const Matrix a = gaussian_matrix(rng, 5, 3);
    const Matrix b = gaussian_matrix(rng, 3, 7);
    CHECK(transpose(transpose(a)) == a);
    CHECK(max_abs_diff(transpose(matmul(a, b)), matmul(transpose(b), transpose(a))) < 1e-12);
}

TEST_CASE("matmul associativity within relative tolerance") {
    Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        const Matrix a = gaussian_matrix(rng, 4, 6);
        const Matrix b = gaussian_matrix(rng, 6, 5);
        const Matrix c = gaussian_matrix(rng, 5, 3);
        const Matrix lhs = matmul(matmul(a, b), c);
        const Matrix rhs = matmul(a, matmul(b, c));
        CHECK(max_abs_diff(lhs, rhs) < 1e-9 * std::max(1.0, frobenius_norm(lhs)));
    }
}

TEST_CASE("elementwise ops and reductions") {
    const Matrix a = Matrix::from_rows({{3, 4}});
    CHECK(frobenius_norm(a) == doctest::Approx(5.0));
    CHECK(sum(a) == doctest::Approx(7.0));
    CHECK(sum_sq(a) == doctest::Approx(25.0));

    CHECK(sum_sq(add(a, scale(a, -1.0))) == 0.0);
    CHECK(sub(a, a) == zeros(1, 2));
    CHECK(hadamard(a, a) == Matrix::from_rows({{9, 16}}));
    CHECK(dot(a, a) == doctest::Approx(25.0));

    Matrix b = a;
    axpy_in_place(b, 2.0, a);
    CHECK(b == Matrix::from_rows({{9, 12}}));

    CHECK_THROWS_AS(add(Matrix(2, 2), Matrix(2, 3)), ShapeError);
    CHECK_THROWS_AS(dot(Matrix(1, 2), Matrix(2, 1)), ShapeError);
}

TEST_CASE("row and column helpers") {
    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
    CHECK(row_copy(a, 1) == Matrix::from_rows({{3, 4}}));
    CHECK(col_sums(a) == Matrix::from_rows({{9, 12}}));
    CHECK(col_means(a) == Matrix::from_rows({{3, 4}}));

    Matrix b = a;
    add_row_in_place(b, Matrix::from_rows({{10, 20}}));
    CHECK(b(0, 0) == 11.0);
    CHECK(b(2, 1) == 26.0);
}

TEST_CASE("pearson") {
    const std::vector<double> u{1, 2, 3};
    const std::vector<double> v{3, 2, 1};
    CHECK(pearson(u, u) == doctest::Approx(1.0));
    CHECK(pearson(u, v) == doctest::Approx(-1.0));

    // brute-force formula on a hand case
    const std::vector<double> p{1, 2, 3, 4};
    const std::vector<double> q{1, 2, 3, 5};
    // means 2.5 and 2.75; cov*n = 6.5; var_p*n = 5; var_q*n = 8.75
    const double expected = 6.5 / std::sqrt(5.0 * 8.75);
    CHECK(pearson(p, q) == doctest::Approx(expected).epsilon(1e-12));

    SUBCASE("symmetry and positive-affine invariance") {
        Rng rng(11);
        std::vector<double> x(50), y(50), yt(50);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = rng.gaussian();
            y[i] = rng.gaussian();
            yt[i] = 3.5 * y[i] + 2.0;
        }
        CHECK(pearson(x, y) == doctest::Approx(pearson(y, x)).epsilon(1e-12));
        CHECK(pearson(x, yt) == doctest::Approx(pearson(x, y)).epsilon(1e-12));
    }

    SUBCASE("errors") {
        const std::vector<double> c{2, 2, 2};
        CHECK_THROWS_AS(pearson(u, c), ValueError);
        CHECK_THROWS_AS(pearson(u, std::vector<double>{1, 2}), ShapeError);
        CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{1}), ValueError);
    }
}

TEST_CASE("finiteness checks") {
    Matrix a = ones(2, 2);
    CHECK(all_finite(a));
    a(1, 0) = std::nan("");
    CHECK_FALSE(all_finite(a));
    CHECK_THROWS_AS(check_finite(a, "weights"), NumericError);
    a(1, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(check_finite(a, "weights"), NumericError);
}

TEST_CASE("rng determinism and distribution") {
    Rng a(42), b(42), c(43);
    bool identical = true, differs = false;
    for (int i = 0; i < 1000; ++i) {
        const auto va = a.next_u64();
        identical = identical && (va == b.next_u64());
        differs = differs || (va != c.next_u64());
    }
    CHECK(identical);
    CHECK(differs);

    SUBCASE("gaussian moments at n = 1e5") {
        Rng rng(7);
        const std::size_t n = 100000;
        double mean = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double g = rng.gaussian();
            mean += g;
            sq += g * g;
        }
        mean /= static_cast<double>(n);
        const double var = sq / static_cast<double>(n) - mean * mean;
        CHECK(std::abs(mean) < 0.05);
        CHECK(std::abs(var - 1.0) < 0.05);
    }

    SUBCASE("uniform range and index bounds") {
        Rng rng(9);
        for (int i = 0; i < 1000; ++i) {
            const double u = rng.uniform();
            CHECK(u >= 0.0);
            CHECK(u < 1.0);
            CHECK(rng.index(7) < 7);
        }
        CHECK_THROWS_AS(rng.index(0), ValueError);
    }

    SUBCASE("children depend on (seed, stream) only") {
        Rng parent(5);
        parent.next_u64(); // consuming the parent must not shift child streams
        Rng c0 = parent.child(0);
        Rng c0b = Rng(5).child(0);
        Rng c1 = parent.child(1);
        CHECK(c0.next_u64() == c0b.next_u64());
        CHECK(Rng(5).child(1).next_u64() == c1.next_u64());
        CHECK(Rng(5).child(0).next_u64() != Rng(5).child(1).next_u64());
    }

    SUBCASE("sampling without replacement") {
        Rng rng(13);
        auto s = rng.sample_without_replacement(10, 10);
        std::sort(s.begin(), s.end());
        for (std::size_t i = 0; i < 10; ++i) CHECK(s[i] == i);
        CHECK_THROWS_AS(rng.sample_without_replacement(3, 4), ValueError);
    }
}

TEST_CASE("solve_linear against known system and random round trips") {
    // x + 2y = 5, 3x + 4y = 11 -> (x, y) = (1, 2)
    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    const Matrix b = Matrix::from_rows({{5}, {11}});
    const Matrix x = solve_linear(a, b);
    CHECK(x(0, 0) == doctest::Approx(1.0));
    CHECK(x(1, 0) == doctest::Approx(2.0));

    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 2 + rng.index(6);
        const Matrix m = gaussian_matrix(rng, n, n);
        const Matrix rhs = gaussian_matrix(rng, n, 2);
        const Matrix sol = solve_linear(m, rhs);
        CHECK(max_abs_diff(matmul(m, sol), rhs) < 1e-8);
    }

    CHECK_THROWS_AS(solve_linear(zeros(2, 2), zeros(2, 1)), ValueError);
    CHECK_THROWS_AS(solve_linear(Matrix(2, 3), Matrix(2, 1)), ShapeError);
}

TEST_CASE("symmetric_eigen reconstructs the matrix") {
    Rng rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t n = 2 + rng.index(7);
        const Matrix g = gaussian_matrix(rng, n, n);
        const Matrix a = add(g, transpose(g)); // symmetric
        const SymEigen e = symmetric_eigen(a);
        // V diag(w) V^T == A
        Matrix vd = e.vectors;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                vd(i, j) *= e.values[j];
        CHECK(max_abs_diff(matmul(vd, transpose(e.vectors)), a) < 1e-9);
        for (std::size_t j = 1; j < n; ++j) CHECK(e.values[j - 1] <= e.values[j]);
    }

    SUBCASE("known spectrum") {
        const Matrix a = Matrix::from_rows({{2, 1}, {1, 2}});
        const SymEigen e = symmetric_eigen(a);
        CHECK(e.values[0] == doctest::Approx(1.0));
        CHECK(e.values[1] == doctest::Approx(3.0));
    }
}

TEST_CASE("kernel backends agree") {
    if (!kernels::avx2_available()) {
        MESSAGE("AVX2 unavailable; dispatch equivalence skipped");
        CHECK(kernels::active_backend() == kernels::Backend::scalar);
        return;
    }

    Rng rng(77);
    SUBCASE("matmul and elementwise kernels are bit-identical") {
        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t m = 1 + rng.index(17);
            const std::size_t k = 1 + rng.index(17);
            const std::size_t n = 1 + rng.index(17); // covers tails of width 1..3
            const Matrix a = gaussian_matrix(rng, m, k);
            const Matrix b = gaussian_matrix(rng, k, n);
            Matrix cs(m, n), cv(m, n);
            kernels::scalar::matmul(a.data(), b.data(), cs.data(), m, k, n);
            kernels::avx2::matmul(a.data(), b.data(), cv.data(), m, k, n);
            CHECK(cs == cv);

            const std::size_t len = m * k;
            const Matrix u = gaussian_matrix(rng, 1, len);
            const Matrix w = gaussian_matrix(rng, 1, len);
            Matrix os(1, len), ov(1, len);
            kernels::scalar::add(u.data(), w.data(), os.data(), len);
            kernels::avx2::add(u.data(), w.data(), ov.data(), len);
            CHECK(os == ov);
            kernels::scalar::hadamard(u.data(), w.data(), os.data(), len);
            kernels::avx2::hadamard(u.data(), w.data(), ov.data(), len);
            CHECK(os == ov);
            kernels::scalar::scale(u.data(), 1.7, os.data(), len);
            kernels::avx2::scale(u.data(), 1.7, ov.data(), len);
            CHECK(os == ov);
            Matrix ys = w, yv = w;
            kernels::scalar::axpy(-0.3, u.data(), ys.data(), len);
            kernels::avx2::axpy(-0.3, u.data(), yv.data(), len);
            CHECK(ys == yv);
        }
    }

    SUBCASE("reductions agree to relative 1e-12") {
        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t len = 1 + rng.index(1000);
            const Matrix u = gaussian_matrix(rng, 1, len);
            const Matrix w = gaussian_matrix(rng, 1, len);
            const double ds = kernels::scalar::dot(u.data(), w.data(), len);
            const double dv = kernels::avx2::dot(u.data(), w.data(), len);
            CHECK(std::abs(ds - dv) <= 1e-12 * std::max(1.0, std::abs(ds)));
            const double ss = kernels::scalar::sum_sq(u.data(), len);
            const double sv = kernels::avx2::sum_sq(u.data(), len);
            CHECK(std::abs(ss - sv) <= 1e-12 * std::max(1.0, ss));
            const double ts = kernels::scalar::sum(u.data(), len);
            const double tv = kernels::avx2::sum(u.data(), len);
            CHECK(std::abs(ts - tv) <= 1e-12 * std::max(1.0, std::abs(ts)));
        }
    }

    SUBCASE("force_backend steers dispatch") {
        const Matrix a = gaussian_matrix(rng, 3, 3);
        kernels::force_backend(kernels::Backend::scalar);
        CHECK(kernels::active_backend() == kernels::Backend::scalar);
        const Matrix r1 = matmul(a, a);
        kernels::force_backend(kernels::Backend::avx2);
        CHECK(kernels::active_backend() == kernels::Backend::avx2);
        const Matrix r2 = matmul(a, a);
        CHECK(r1 == r2);
        kernels::reset_backend();
    }
}
