#pragma once

#include <cstddef>

// Low-level hot loops behind the Matrix API: a scalar reference implementation
// and an AVX2 variant chosen at runtime (cpuid + optional SGLAB_KERNELS env
// override: "scalar", "avx2", or "auto").
//
// matmul and the elementwise kernels are bit-identical across backends: both
// accumulate c[i,j] over k in ascending order with separate multiply and add
// (the library builds with -ffp-contract=off), the AVX2 version just does four
// j-columns per instruction. The reductions (dot/sum/sum_sq) use lane-wise
// partial sums under AVX2, so those agree with scalar only to rounding.
namespace sglab::kernels {

enum class Backend { scalar, avx2 };

const char* backend_name(Backend b);
bool avx2_available();           // compiled in and supported by this CPU
Backend active_backend();        // resolves env/cpuid once, then sticks
void force_backend(Backend b);   // test hook; ValueError if b unsupported here
void reset_backend();            // back to env/cpuid resolution

// c[m x n] = a[m x k] * b[k x n]; c is overwritten. No aliasing allowed.
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void hadamard(const double* a, const double* b, double* out, std::size_t n);
void scale(const double* a, double s, double* out, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n); // y += alpha*x
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
double sum_sq(const double* a, std::size_t n);

namespace scalar {
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void hadamard(const double* a, const double* b, double* out, std::size_t n);
void scale(const double* a, double s, double* out, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
double sum_sq(const double* a, std::size_t n);
} // namespace scalar

namespace avx2 {
bool compiled_in(); // false when the toolchain could not target AVX2
// All of these throw sglab::Error when !avx2_available().
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void hadamard(const double* a, const double* b, double* out, std::size_t n);
void scale(const double* a, double s, double* out, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
double sum_sq(const double* a, std::size_t n);
} // namespace avx2

} // namespace sglab::kernels
