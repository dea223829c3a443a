#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "sglab/errors.hpp"

namespace sglab {

// Dense row-major fp64 matrix. A batch of samples is [n, d]: rows are samples.
// Row vectors (1 x d) double as the library's vector type.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, double fill)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    // Literal construction: Matrix::from_rows({{1, 2}, {3, 4}}).
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    // Exact elementwise equality (and equal shape). NaN entries compare unequal.
    bool operator==(const Matrix& o) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

std::string shape_str(const Matrix& a); // "[r x c]" for error messages

Matrix zeros(std::size_t rows, std::size_t cols);
Matrix ones(std::size_t rows, std::size_t cols);
Matrix identity(std::size_t n);

// c = a b. Throws ShapeError (reporting both shapes) unless a.cols == b.rows.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b); // elementwise product
Matrix scale(const Matrix& a, double s);
void add_in_place(Matrix& a, const Matrix& b);
void axpy_in_place(Matrix& y, double alpha, const Matrix& x); // y += alpha * x
void scale_in_place(Matrix& a, double s);

double dot(const Matrix& a, const Matrix& b); // flattened inner product
double sum(const Matrix& a);
double sum_sq(const Matrix& a);
double frobenius_norm(const Matrix& a);

// Pearson correlation of two equal-length vectors (length >= 2).
// Throws ValueError if either vector is constant (correlation undefined);
// the RDM code maps that case to correlation 0 itself.
double pearson(std::span<const double> u, std::span<const double> v);

Matrix row_copy(const Matrix& a, std::size_t r); // [1, cols]
Matrix col_sums(const Matrix& a);                // [1, cols]
Matrix col_means(const Matrix& a);               // [1, cols]
void add_row_in_place(Matrix& a, const Matrix& r); // broadcast a[i,:] += r

bool all_finite(const Matrix& a);
// Throws NumericError naming `what` if any entry is NaN/Inf.
void check_finite(const Matrix& a, const std::string& what);

// Solve a x = b by Gaussian elimination with partial pivoting (a square).
// Throws ValueError on a (numerically) singular system.
Matrix solve_linear(Matrix a, Matrix b);

// Cyclic Jacobi eigendecomposition of a symmetric matrix.
// values ascending; vectors' column j pairs with values[j].
struct SymEigen {
    std::vector<double> values;
    Matrix vectors;
};
SymEigen symmetric_eigen(const Matrix& a, int max_sweeps = 64);

} // namespace sglab
