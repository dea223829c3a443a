#include "sglab/dynamics.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "sglab/errors.hpp"

namespace sglab {

namespace {

// A = [p^T | -y^T | 1^T], S x 3: the gradient model's regressors per sample
Matrix build_a(const Matrix& p, const Matrix& y) {
    Matrix a(p.cols(), 3);
    for (std::size_t s = 0; s < p.cols(); ++s) {
        a(s, 0) = p(0, s);
        a(s, 1) = -y(0, s);
        a(s, 2) = 1.0;
    }
    return a;
}

} // namespace

SGRegressionState sg_regression_init(const Matrix& X, const Matrix& y, Rng& rng) {
    if (X.rows() == 0 || X.cols() == 0) throw ValueError("regression data is empty");
    if (y.rows() != X.rows() || y.cols() != 1) {
        throw ValueError("targets must be one column with a row per sample");
    }
    const std::size_t S = X.rows();
    const std::size_t d = X.cols();

    SGRegressionState s;
    s.Xbar = Matrix(d + 1, S);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < S; ++j) s.Xbar(i, j) = X(j, i);
    }
    for (std::size_t j = 0; j < S; ++j) s.Xbar(d, j) = 1.0;

    s.W = gaussian_matrix(rng, 1, d + 1);
    s.y = transpose(y);
    s.B = matmul(transpose(s.Xbar), s.Xbar);

    Matrix gram = matmul(s.Xbar, transpose(s.Xbar)); // (d+1) x (d+1)
    SymEigen eig = symmetric_eigen(gram);
    s.b_min = eig.values.front();
    s.B_norm = eig.values.back();
    if (!(s.b_min > 1e-12 * s.B_norm)) {
        throw ValueError("augmented data matrix is rank-deficient");
    }
    s.W_ols = transpose(solve_linear(gram, matmul(s.Xbar, y)));

    s.alpha = -1.0;
    s.beta = -1.0;
    s.gamma = 0.0;
    // at (-1, -1, 0) the model error equals the regression error exactly, so
    // the synthetic signal (p - y) + xi^T starts at zero
    s.xi = sg_regression_error(s);
    return s;
}

Matrix sg_regression_predictions(const SGRegressionState& s) { return matmul(s.W, s.Xbar); }

Matrix sg_regression_error(const SGRegressionState& s) {
    Matrix p = sg_regression_predictions(s);
    Matrix e(s.S(), 1);
    for (std::size_t j = 0; j < s.S(); ++j) e(j, 0) = s.y(0, j) - p(0, j);
    return e;
}

Matrix colspace_component(const SGRegressionState& s, const Matrix& v) {
    // projection onto span of Xbar^T's columns: Xbar^T (Xbar Xbar^T)^-1 Xbar v
    Matrix gram = matmul(s.Xbar, transpose(s.Xbar));
    return matmul(transpose(s.Xbar), solve_linear(std::move(gram), matmul(s.Xbar, v)));
}

namespace {

Matrix model_error(const SGRegressionState& s, const Matrix& p) {
    Matrix xi(p.cols(), 1);
    for (std::size_t j = 0; j < p.cols(); ++j) {
        xi(j, 0) = s.alpha * p(0, j) - s.beta * s.y(0, j) + s.gamma;
    }
    return xi;
}

} // namespace

Matrix sg_regression_signal(const SGRegressionState& s) {
    Matrix p = sg_regression_predictions(s);
    Matrix xi = model_error(s, p);
    Matrix g(1, s.S());
    for (std::size_t j = 0; j < s.S(); ++j) g(0, j) = p(0, j) - s.y(0, j) + xi(j, 0);
    return g;
}

SGRegressionStepInfo sg_regression_step(SGRegressionState& s) {
    SGRegressionStepInfo info;
    Matrix p = sg_regression_predictions(s);
    Matrix e(s.S(), 1);
    for (std::size_t j = 0; j < s.S(); ++j) e(j, 0) = s.y(0, j) - p(0, j);
    Matrix f = colspace_component(s, e);
    Matrix xi = model_error(s, p); // fresh from current coefficients
    s.xi = xi;
    const double xi_norm = frobenius_norm(xi);
    info.combined_before = frobenius_norm(f) + xi_norm;
    if (info.combined_before == 0.0) {
        // fixed point: nothing to certify, step is the identity
        info.combined_after = 0.0;
        return info;
    }

    Matrix a = build_a(p, s.y);
    Matrix at_xi = matmul(transpose(a), xi); // 3 x 1, equals A^T A omega
    Matrix aat_xi = matmul(a, at_xi);        // S x 1
    const double naat = sum_sq(aat_xi);
    const double nat = sum_sq(at_xi);

    // exact line search on the model's fitting loss ||xi||^2; the coefficient
    // update omega' = omega - nu A^T A omega is what contracts the fresh
    // xi' = A' omega' (xi is zero exactly when A^T A omega is, so the guarded
    // branch only skips a no-op)
    double next_alpha = s.alpha, next_beta = s.beta, next_gamma = s.gamma;
    if (naat > 0.0) {
        info.nu = nat / naat;
        next_alpha -= info.nu * at_xi(0, 0);
        next_beta -= info.nu * at_xi(1, 0);
        next_gamma -= info.nu * at_xi(2, 0);
    }

    // certified initial trial rate, then backtrack on the actual decrease
    double mu = s.b_min / (s.B_norm * s.B_norm);
    if (xi_norm > 0.0 && naat > 0.0) {
        mu = std::min(mu, 1.0 - nat * nat / (2.0 * naat * xi_norm * xi_norm));
    }

    // W moves against the synthetic signal (p - y) + xi^T
    Matrix g(1, s.S());
    for (std::size_t j = 0; j < s.S(); ++j) g(0, j) = p(0, j) - s.y(0, j) + xi(j, 0);
    Matrix dir = matmul(g, transpose(s.Xbar)); // 1 x (d+1)

    constexpr int kMaxHalvings = 60;
    for (int h = 0; h <= kMaxHalvings; ++h) {
        Matrix w_try = sub(s.W, scale(dir, mu));
        Matrix p_try = matmul(w_try, s.Xbar);
        Matrix e_try(s.S(), 1);
        for (std::size_t j = 0; j < s.S(); ++j) e_try(j, 0) = s.y(0, j) - p_try(0, j);
        Matrix xi_try(s.S(), 1);
        for (std::size_t j = 0; j < s.S(); ++j) {
            xi_try(j, 0) = next_alpha * p_try(0, j) - next_beta * s.y(0, j) + next_gamma;
        }
        const double after = frobenius_norm(colspace_component(s, e_try)) + frobenius_norm(xi_try);
        if (after < info.combined_before) {
            s.W = std::move(w_try);
            s.xi = std::move(xi_try);
            s.alpha = next_alpha;
            s.beta = next_beta;
            s.gamma = next_gamma;
            info.mu = mu;
            info.halvings = h;
            info.combined_after = after;
            return info;
        }
        mu *= 0.5;
    }
    // numerical stagnation: leave the state untouched and report the stall
    info.stalled = true;
    info.halvings = kMaxHalvings;
    info.combined_after = info.combined_before;
    return info;
}

namespace {

SGRegressionTracePoint trace_point(const SGRegressionState& s, std::int64_t it) {
    SGRegressionTracePoint t;
    t.iteration = it;
    Matrix p = sg_regression_predictions(s);
    Matrix e(s.S(), 1);
    for (std::size_t j = 0; j < s.S(); ++j) e(j, 0) = s.y(0, j) - p(0, j);
    t.f_norm = frobenius_norm(colspace_component(s, e));
    t.xi_norm = frobenius_norm(model_error(s, p));
    t.alpha = s.alpha;
    t.beta = s.beta;
    t.gamma = s.gamma;
    t.w_err = frobenius_norm(sub(s.W, s.W_ols));
    return t;
}

} // namespace

SGRegressionRun sg_regression_run(SGRegressionState& s, double tol, std::int64_t max_iters) {
    if (!(tol > 0.0)) throw ValueError("tolerance must be positive");
    if (max_iters <= 0) throw ValueError("iteration budget must be positive");
    SGRegressionRun run;
    while (true) {
        SGRegressionTracePoint t = trace_point(s, run.iterations);
        run.trace.push_back(t);
        if (t.f_norm + t.xi_norm < tol) {
            run.converged = true;
            break;
        }
        if (run.iterations >= max_iters) break;
        SGRegressionStepInfo info = sg_regression_step(s);
        ++run.iterations;
        if (info.stalled) {
            run.stalled = true;
            break;
        }
    }
    return run;
}

void write_sg_regression_csv(const std::string& path, const SGRegressionRun& run) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "iteration,f_norm,xi_norm,alpha,beta,gamma,w_err\n";
    char buf[32];
    auto put = [&](double v, char sep) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << buf << sep;
    };
    for (const SGRegressionTracePoint& t : run.trace) {
        out << t.iteration << ',';
        put(t.f_norm, ',');
        put(t.xi_norm, ',');
        put(t.alpha, ',');
        put(t.beta, ',');
        put(t.gamma, ',');
        put(t.w_err, '\n');
    }
    if (!out) throw IoError("failed writing " + path);
}

ReducedState reduced_from(const SGRegressionState& s) {
    Matrix p = sg_regression_predictions(s);
    Matrix e(s.S(), 1);
    for (std::size_t j = 0; j < s.S(); ++j) e(j, 0) = s.y(0, j) - p(0, j);
    return ReducedState{std::move(e), model_error(s, p)};
}

void reduced_step(ReducedState& r, const SGRegressionState& problem, double mu, double nu) {
    // p rebuilt from this state's own error, not the primal's
    Matrix p(1, problem.S());
    for (std::size_t j = 0; j < problem.S(); ++j) p(0, j) = problem.y(0, j) - r.e(j, 0);
    Matrix a = build_a(p, problem.y);
    Matrix be = matmul(problem.B, r.e);
    Matrix bxi = matmul(problem.B, r.xi);
    Matrix e_next = r.e;
    axpy_in_place(e_next, -mu, be);
    axpy_in_place(e_next, mu, bxi);
    Matrix aat_xi = matmul(a, matmul(transpose(a), r.xi));
    Matrix xi_next = r.xi;
    axpy_in_place(xi_next, -nu, aat_xi);
    r.e = std::move(e_next);
    r.xi = std::move(xi_next);
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::array<double, 4> kInputs = {-2.0, -1.0, 1.0, 2.0};

double sgn(double v) { return static_cast<double>(v > 0.0) - static_cast<double>(v < 0.0); }

double l1_loss(double a, double b) {
    double loss = 0.0;
    for (double x : kInputs) loss += std::abs(a * x + b);
    return loss;
}

} // namespace

void l1_true_gradient(double a, double b, double& da, double& db) {
    da = 0.0;
    db = 0.0;
    for (double x : kInputs) {
        const double t = sgn(a * x + b);
        da += t * x;
        db += t;
    }
}

CriticalPointResult critical_point_demo(double a0, double b0, double lr_model, double lr_sg,
                                        std::int64_t iters) {
    if (iters <= 0) throw ValueError("iteration budget must be positive");
    CriticalPointResult res;
    double a = a0, b = b0, c = 0.0; // constant gradient model starts at zero

    auto record = [&](std::int64_t it) {
        CriticalPointTracePoint t;
        t.iteration = it;
        t.a = a;
        t.b = b;
        t.c = c;
        t.loss = l1_loss(a, b);
        double da, db;
        l1_true_gradient(a, b, da, db);
        t.true_grad_norm = std::hypot(da, db);
        res.trace.push_back(t);
    };

    for (std::int64_t it = 0; it < iters; ++it) {
        record(it);
        // model's drive on (a, b): per-sample signal is the constant c,
        // routed through dh_i/d(a, b) = (x_i, 1)
        double ga = 0.0, gb = 0.0, sum_t = 0.0;
        for (double x : kInputs) {
            ga += c * x;
            gb += c;
            sum_t += sgn(a * x + b);
        }
        // model fit: 0.5 * sum_i (c - sign(h_i))^2
        const double dc = 4.0 * c - sum_t;
        a -= lr_model * ga;
        b -= lr_model * gb;
        c -= lr_sg * dc;
    }
    record(iters);

    res.a = a;
    res.b = b;
    res.c = c;
    double ga = 0.0, gb = 0.0, sum_t = 0.0;
    for (double x : kInputs) {
        ga += c * x;
        gb += c;
        sum_t += sgn(a * x + b);
    }
    res.sg_drive_norm = std::hypot(ga, gb);
    res.sg_fit_grad = std::abs(4.0 * c - sum_t);
    l1_true_gradient(a, b, res.true_grad_a, res.true_grad_b);
    res.true_grad_norm = std::hypot(res.true_grad_a, res.true_grad_b);
    res.spurious_equilibrium =
        res.sg_drive_norm < 1e-6 && res.sg_fit_grad < 1e-6 && res.true_grad_norm >= 1.0;
    return res;
}

SubgradientDescentResult true_subgradient_descent(double a0, double b0, double lr,
                                                  std::int64_t iters) {
    if (iters <= 0) throw ValueError("iteration budget must be positive");
    double a = a0, b = b0;
    for (std::int64_t it = 0; it < iters; ++it) {
        double da, db;
        l1_true_gradient(a, b, da, db);
        a -= lr * da;
        b -= lr * db;
    }
    return SubgradientDescentResult{a, b, l1_loss(a, b)};
}

// ---------------------------------------------------------------------------

EpsTrackingReport eps_tracking_check(const std::vector<ExperimentRecord>& records, double delta) {
    if (!(delta > 0.0) || !(delta < 1.0)) throw ValueError("delta must be inside (0, 1)");
    EpsTrackingReport report;
    report.bound = (1.0 - delta) / (1.0 + delta);
    std::size_t ok_count = 0;
    for (const ExperimentRecord& r : records) {
        if (!r.eps_ratio) continue;
        EpsTrackingReport::Row row;
        row.iteration = r.iteration;
        row.ratio = *r.eps_ratio;
        row.ok = row.ratio <= report.bound;
        ok_count += row.ok ? 1 : 0;
        report.rows.push_back(row);
    }
    report.checked = report.rows.size();
    report.fraction = report.checked == 0 ? 0.0
                                          : static_cast<double>(ok_count) /
                                                static_cast<double>(report.checked);
    return report;
}

} // namespace sglab
