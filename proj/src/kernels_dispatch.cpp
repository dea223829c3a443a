#include <cstdlib>
#include <string>

#include "sglab/errors.hpp"
#include "sglab/kernels.hpp"

namespace sglab::kernels {

const char* backend_name(Backend b) {
    return b == Backend::avx2 ? "avx2" : "scalar";
}

bool avx2_available() {
#if defined(__GNUC__) && (defined(__x86_64__) || defined(__i386__))
    return avx2::compiled_in() && __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

namespace {

Backend resolve_from_env() {
    const char* env = std::getenv("SGLAB_KERNELS");
    const std::string want = env ? env : "auto";
    if (want == "scalar") return Backend::scalar;
    if (want == "avx2") {
        if (!avx2_available()) throw ValueError("SGLAB_KERNELS=avx2 but AVX2 is unavailable on this host");
        return Backend::avx2;
    }
    if (want == "auto" || want.empty())
        return avx2_available() ? Backend::avx2 : Backend::scalar;
    throw ValueError("SGLAB_KERNELS must be scalar|avx2|auto, got \"" + want + "\"");
}

Backend& state() {
    static Backend b = resolve_from_env();
    return b;
}

} // namespace

Backend active_backend() { return state(); }

void force_backend(Backend b) {
    if (b == Backend::avx2 && !avx2_available())
        throw ValueError("cannot force avx2 kernels: unavailable on this host");
    state() = b;
}

void reset_backend() { state() = resolve_from_env(); }

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    if (active_backend() == Backend::avx2) avx2::matmul(a, b, c, m, k, n);
    else scalar::matmul(a, b, c, m, k, n);
}

void add(const double* a, const double* b, double* out, std::size_t n) {
    if (active_backend() == Backend::avx2) avx2::add(a, b, out, n);
    else scalar::add(a, b, out, n);
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
    if (active_backend() == Backend::avx2) avx2::sub(a, b, out, n);
    else scalar::sub(a, b, out, n);
}

void hadamard(const double* a, const double* b, double* out, std::size_t n) {
    if (active_backend() == Backend::avx2) avx2::hadamard(a, b, out, n);
    else scalar::hadamard(a, b, out, n);
}

void scale(const double* a, double s, double* out, std::size_t n) {
    if (active_backend() == Backend::avx2) avx2::scale(a, s, out, n);
    else scalar::scale(a, s, out, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    if (active_backend() == Backend::avx2) avx2::axpy(alpha, x, y, n);
    else scalar::axpy(alpha, x, y, n);
}

double dot(const double* a, const double* b, std::size_t n) {
    return active_backend() == Backend::avx2 ? avx2::dot(a, b, n) : scalar::dot(a, b, n);
}

double sum(const double* a, std::size_t n) {
    return active_backend() == Backend::avx2 ? avx2::sum(a, n) : scalar::sum(a, n);
}

double sum_sq(const double* a, std::size_t n) {
    return active_backend() == Backend::avx2 ? avx2::sum_sq(a, n) : scalar::sum_sq(a, n);
}

} // namespace sglab::kernels
