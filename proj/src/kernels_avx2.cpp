#include <algorithm>

#include "sglab/errors.hpp"
#include "sglab/kernels.hpp"

#if defined(__AVX2__)
#include <immintrin.h>
#endif

namespace sglab::kernels::avx2 {

#if defined(__AVX2__)

bool compiled_in() { return true; }

namespace {
void require_host() {
    if (!avx2_available()) throw Error("avx2 kernels requested but this CPU lacks AVX2");
}
} // namespace

// Same per-element accumulation order as the scalar kernel: for a fixed (i,j),
// terms arrive in ascending k as mul-then-add, so results are bit-identical.
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    require_host();
    std::fill(c, c + m * n, 0.0);
    const std::size_t n4 = n - (n % 4);
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            const __m256d av4 = _mm256_set1_pd(av);
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n4; j += 4) {
                __m256d cj = _mm256_loadu_pd(crow + j);
                cj = _mm256_add_pd(cj, _mm256_mul_pd(av4, _mm256_loadu_pd(brow + j)));
                _mm256_storeu_pd(crow + j, cj);
            }
            for (std::size_t j = n4; j < n; ++j)
                crow[j] += av * brow[j];
        }
    }
}

void add(const double* a, const double* b, double* out, std::size_t n) {
    require_host();
    const std::size_t n4 = n - (n % 4);
    for (std::size_t i = 0; i < n4; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (std::size_t i = n4; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
    require_host();
    const std::size_t n4 = n - (n % 4);
    for (std::size_t i = 0; i < n4; i += 4)
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (std::size_t i = n4; i < n; ++i) out[i] = a[i] - b[i];
}

void hadamard(const double* a, const double* b, double* out, std::size_t n) {
    require_host();
    const std::size_t n4 = n - (n % 4);
    for (std::size_t i = 0; i < n4; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (std::size_t i = n4; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(const double* a, double s, double* out, std::size_t n) {
    require_host();
    const __m256d s4 = _mm256_set1_pd(s);
    const std::size_t n4 = n - (n % 4);
    for (std::size_t i = 0; i < n4; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), s4));
    for (std::size_t i = n4; i < n; ++i) out[i] = a[i] * s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    require_host();
    const __m256d a4 = _mm256_set1_pd(alpha);
    const std::size_t n4 = n - (n % 4);
    for (std::size_t i = 0; i < n4; i += 4) {
        __m256d yi = _mm256_loadu_pd(y + i);
        yi = _mm256_add_pd(yi, _mm256_mul_pd(a4, _mm256_loadu_pd(x + i)));
        _mm256_storeu_pd(y + i, yi);
    }
    for (std::size_t i = n4; i < n; ++i) y[i] += alpha * x[i];
}

namespace {
// Lanes summed in ascending index order so the reduction is at least
// run-to-run deterministic (it is still a different association than scalar).
double hsum(__m256d v) {
    alignas(32) double lane[4];
    _mm256_store_pd(lane, v);
    return ((lane[0] + lane[1]) + lane[2]) + lane[3];
}
} // namespace

double dot(const double* a, const double* b, std::size_t n) {
    require_host();
    __m256d acc = _mm256_setzero_pd();
    const std::size_t n4 = n - (n % 4);
    for (std::size_t i = 0; i < n4; i += 4)
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    double out = hsum(acc);
    for (std::size_t i = n4; i < n; ++i) out += a[i] * b[i];
    return out;
}

double sum(const double* a, std::size_t n) {
    require_host();
    __m256d acc = _mm256_setzero_pd();
    const std::size_t n4 = n - (n % 4);
    for (std::size_t i = 0; i < n4; i += 4)
        acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
    double out = hsum(acc);
    for (std::size_t i = n4; i < n; ++i) out += a[i];
    return out;
}

double sum_sq(const double* a, std::size_t n) {
    require_host();
    __m256d acc = _mm256_setzero_pd();
    const std::size_t n4 = n - (n % 4);
    for (std::size_t i = 0; i < n4; i += 4) {
        const __m256d ai = _mm256_loadu_pd(a + i);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(ai, ai));
    }
    double out = hsum(acc);
    for (std::size_t i = n4; i < n; ++i) out += a[i] * a[i];
    return out;
}

#else // !defined(__AVX2__): toolchain could not target AVX2; keep the symbols.

bool compiled_in() { return false; }

namespace {
[[noreturn]] void unavailable() { throw Error("avx2 kernels were not compiled into this build"); }
} // namespace

void matmul(const double*, const double*, double*, std::size_t, std::size_t, std::size_t) { unavailable(); }
void add(const double*, const double*, double*, std::size_t) { unavailable(); }
void sub(const double*, const double*, double*, std::size_t) { unavailable(); }
void hadamard(const double*, const double*, double*, std::size_t) { unavailable(); }
void scale(const double*, double, double*, std::size_t) { unavailable(); }
void axpy(double, const double*, double*, std::size_t) { unavailable(); }
double dot(const double*, const double*, std::size_t) { unavailable(); }
double sum(const double*, std::size_t) { unavailable(); }
double sum_sq(const double*, std::size_t) { unavailable(); }

#endif

} // namespace sglab::kernels::avx2
