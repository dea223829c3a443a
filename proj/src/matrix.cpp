#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "sglab/kernels.hpp"
#include "sglab/matrix.hpp"

namespace sglab {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shapes differ, " + shape_str(a) + " vs " + shape_str(b));
}

} // namespace

std::string shape_str(const Matrix& a) {
    return "[" + std::to_string(a.rows()) + " x " + std::to_string(a.cols()) + "]";
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix out(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("from_rows: ragged row lengths");
        std::size_t j = 0;
        for (double v : row) out(i, j++) = v;
        ++i;
    }
    return out;
}

Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }
Matrix ones(std::size_t rows, std::size_t cols) { return Matrix(rows, cols, 1.0); }

Matrix identity(std::size_t n) {
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + shape_str(a) + " x " + shape_str(b));
    Matrix c(a.rows(), b.cols());
    kernels::matmul(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            out(j, i) = a(i, j);
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix out(a.rows(), a.cols());
    kernels::add(a.data(), b.data(), out.data(), a.size());
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "sub");
    Matrix out(a.rows(), a.cols());
    kernels::sub(a.data(), b.data(), out.data(), a.size());
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix out(a.rows(), a.cols());
    kernels::hadamard(a.data(), b.data(), out.data(), a.size());
    return out;
}

Matrix scale(const Matrix& a, double s) {
    Matrix out(a.rows(), a.cols());
    kernels::scale(a.data(), s, out.data(), a.size());
    return out;
}

void add_in_place(Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add_in_place");
    kernels::axpy(1.0, b.data(), a.data(), a.size());
}

void axpy_in_place(Matrix& y, double alpha, const Matrix& x) {
    require_same_shape(y, x, "axpy_in_place");
    kernels::axpy(alpha, x.data(), y.data(), y.size());
}

void scale_in_place(Matrix& a, double s) {
    kernels::scale(a.data(), s, a.data(), a.size());
}

double dot(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "dot");
    return kernels::dot(a.data(), b.data(), a.size());
}

double sum(const Matrix& a) { return kernels::sum(a.data(), a.size()); }
double sum_sq(const Matrix& a) { return kernels::sum_sq(a.data(), a.size()); }
double frobenius_norm(const Matrix& a) { return std::sqrt(kernels::sum_sq(a.data(), a.size())); }

double pearson(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size())
        throw ShapeError("pearson: lengths differ, " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
    if (u.size() < 2) throw ValueError("pearson: need length >= 2");
    const double n = static_cast<double>(u.size());
    double mu = 0.0, mv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) { mu += u[i]; mv += v[i]; }
    mu /= n;
    mv /= n;
    double suu = 0.0, svv = 0.0, suv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double du = u[i] - mu;
        const double dv = v[i] - mv;
        suu += du * du;
        svv += dv * dv;
        suv += du * dv;
    }
    if (suu == 0.0 || svv == 0.0) throw ValueError("pearson: constant vector, correlation undefined");
    return std::clamp(suv / std::sqrt(suu * svv), -1.0, 1.0);
}

Matrix row_copy(const Matrix& a, std::size_t r) {
    Matrix out(1, a.cols());
    for (std::size_t j = 0; j < a.cols(); ++j) out(0, j) = a(r, j);
    return out;
}

Matrix col_sums(const Matrix& a) {
    Matrix out(1, a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            out(0, j) += a(i, j);
    return out;
}

Matrix col_means(const Matrix& a) {
    if (a.rows() == 0) throw ValueError("col_means: empty matrix");
    Matrix out = col_sums(a);
    scale_in_place(out, 1.0 / static_cast<double>(a.rows()));
    return out;
}

void add_row_in_place(Matrix& a, const Matrix& r) {
    if (r.rows() != 1 || r.cols() != a.cols())
        throw ShapeError("add_row_in_place: " + shape_str(a) + " += " + shape_str(r));
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            a(i, j) += r(0, j);
}

bool all_finite(const Matrix& a) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!std::isfinite(a.data()[i])) return false;
    return true;
}

void check_finite(const Matrix& a, const std::string& what) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a.data()[i])) {
            const std::size_t r = a.cols() ? i / a.cols() : 0;
            const std::size_t c = a.cols() ? i % a.cols() : 0;
            throw NumericError(what + ": non-finite entry at (" + std::to_string(r) + ", " +
                               std::to_string(c) + ")");
        }
    }
}

Matrix solve_linear(Matrix a, Matrix b) {
    if (a.rows() != a.cols())
        throw ShapeError("solve_linear: matrix not square, " + shape_str(a));
    if (b.rows() != a.rows())
        throw ShapeError("solve_linear: rhs rows mismatch, " + shape_str(a) + " vs " + shape_str(b));
    const std::size_t n = a.rows();
    const std::size_t m = b.cols();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
        if (std::abs(a(piv, col)) < 1e-14)
            throw ValueError("solve_linear: singular system (pivot " + std::to_string(col) + ")");
        if (piv != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(piv, j), a(col, j));
            for (std::size_t j = 0; j < m; ++j) std::swap(b(piv, j), b(col, j));
        }
        const double inv = 1.0 / a(col, col);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a(r, col) * inv;
            if (f == 0.0) continue;
            for (std::size_t j = col; j < n; ++j) a(r, j) -= f * a(col, j);
            for (std::size_t j = 0; j < m; ++j) b(r, j) -= f * b(col, j);
        }
    }
    Matrix x(n, m);
    for (std::size_t r = n; r-- > 0;) {
        for (std::size_t j = 0; j < m; ++j) {
            double acc = b(r, j);
            for (std::size_t cidx = r + 1; cidx < n; ++cidx) acc -= a(r, cidx) * x(cidx, j);
            x(r, j) = acc / a(r, r);
        }
    }
    return x;
}

SymEigen symmetric_eigen(const Matrix& a, int max_sweeps) {
    if (a.rows() != a.cols())
        throw ShapeError("symmetric_eigen: matrix not square, " + shape_str(a));
    const std::size_t n = a.rows();
    Matrix d = a;
    Matrix v = identity(n);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                off += d(i, j) * d(i, j);
        if (off <= 1e-28 * std::max(1.0, sum_sq(d))) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (d(p, q) == 0.0) continue;
                const double theta = (d(q, q) - d(p, p)) / (2.0 * d(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double dkp = d(k, p), dkq = d(k, q);
                    d(k, p) = c * dkp - s * dkq;
                    d(k, q) = s * dkp + c * dkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double dpk = d(p, k), dqk = d(q, k);
                    d(p, k) = c * dpk - s * dqk;
                    d(q, k) = s * dpk + c * dqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    // sort ascending by eigenvalue, applying the same permutation to columns
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return d(x, x) < d(y, y); });
    SymEigen out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = d(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
    }
    return out;
}

} // namespace sglab
