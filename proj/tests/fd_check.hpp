#pragma once

// Shared finite-difference oracle for gradient tests: central differences,
// step 1e-5, compared in global relative terms.

#include <algorithm>
#include <cmath>

#include "sglab/matrix.hpp"

template <typename F>
sglab::Matrix numeric_grad(sglab::Matrix& m, F f, double step = 1e-5) {
    sglab::Matrix g(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.size(); ++i) {
        const double orig = m.data()[i];
        m.data()[i] = orig + step;
        const double hi = f();
        m.data()[i] = orig - step;
        const double lo = f();
        m.data()[i] = orig;
        g.data()[i] = (hi - lo) / (2.0 * step);
    }
    return g;
}

inline double grad_rel_err(const sglab::Matrix& got, const sglab::Matrix& want) {
    const double denom = std::max({1e-6, sglab::frobenius_norm(got), sglab::frobenius_norm(want)});
    return sglab::frobenius_norm(sglab::sub(got, want)) / denom;
}
