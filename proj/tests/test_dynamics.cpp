#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "sglab/data.hpp"
#include "sglab/dynamics.hpp"
#include "sglab/errors.hpp"
#include "sglab/trainer.hpp"

using namespace sglab;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("sglab_dyn_" + std::to_string(std::rand()) + std::to_string(std::rand()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

SGRegressionState random_problem(std::uint64_t seed, std::size_t S, std::size_t d) {
    Rng rng(seed);
    Matrix X = gaussian_matrix(rng, S, d);
    Matrix y = gaussian_matrix(rng, S, 1);
    return sg_regression_init(X, y, rng);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    REQUIRE(a.rows() == b.rows());
    REQUIRE(a.cols() == b.cols());
    double m = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j) - b(i, j)));
    }
    return m;
}

Matrix fresh_model_error(const SGRegressionState& s) {
    Matrix p = sg_regression_predictions(s);
    Matrix xi(s.S(), 1);
    for (std::size_t j = 0; j < s.S(); ++j) {
        xi(j, 0) = s.alpha * p(0, j) - s.beta * s.y(0, j) + s.gamma;
    }
    return xi;
}

double combined_norm(const SGRegressionState& s) {
    Matrix e = sg_regression_error(s);
    return frobenius_norm(colspace_component(s, e)) + frobenius_norm(fresh_model_error(s));
}

} // namespace

TEST_CASE("init: coefficients, augmented data, zero signal") {
    Rng rng(3);
    Matrix X = gaussian_matrix(rng, 12, 4);
    Matrix y = gaussian_matrix(rng, 12, 1);
    SGRegressionState s = sg_regression_init(X, y, rng);

    CHECK(s.alpha == -1.0);
    CHECK(s.beta == -1.0);
    CHECK(s.gamma == 0.0);
    REQUIRE(s.Xbar.rows() == 5);
    REQUIRE(s.Xbar.cols() == 12);
    for (std::size_t j = 0; j < 12; ++j) {
        CHECK(s.Xbar(4, j) == 1.0);
        for (std::size_t i = 0; i < 4; ++i) CHECK(s.Xbar(i, j) == X(j, i));
    }
    REQUIRE(s.y.rows() == 1);
    for (std::size_t j = 0; j < 12; ++j) CHECK(s.y(0, j) == y(j, 0));

    // the model error cache starts exactly at the regression error, and the
    // synthetic signal (p - y) + xi^T is exactly zero
    Matrix e = sg_regression_error(s);
    CHECK(max_abs_diff(s.xi, e) == 0.0);
    Matrix g = sg_regression_signal(s);
    for (std::size_t j = 0; j < 12; ++j) CHECK(g(0, j) == 0.0);

    // B is the S x S gram of the augmented data
    REQUIRE(s.B.rows() == 12);
    REQUIRE(s.B.cols() == 12);
    Matrix b_ref = matmul(transpose(s.Xbar), s.Xbar);
    CHECK(max_abs_diff(s.B, b_ref) == 0.0);
}

TEST_CASE("init: least-squares oracle and spectrum bounds") {
    SGRegressionState s = random_problem(11, 20, 5);

    // W_ols satisfies the normal equations: residual orthogonal to the data
    Matrix p_ols = matmul(s.W_ols, s.Xbar);
    Matrix r(20, 1);
    for (std::size_t j = 0; j < 20; ++j) r(j, 0) = p_ols(0, j) - s.y(0, j);
    Matrix normal_resid = matmul(s.Xbar, r); // (d+1) x 1
    CHECK(frobenius_norm(normal_resid) < 1e-9);

    // b_min and B_norm bracket the Rayleigh quotient of the small gram
    CHECK(s.b_min > 0.0);
    CHECK(s.b_min <= s.B_norm);
    Matrix gram = matmul(s.Xbar, transpose(s.Xbar));
    Rng rng(99);
    for (int t = 0; t < 10; ++t) {
        Matrix v = gaussian_matrix(rng, 6, 1);
        double quad = dot(matmul(gram, v), v);
        double nsq = sum_sq(v);
        CHECK(quad >= s.b_min * nsq - 1e-9 * nsq);
        CHECK(quad <= s.B_norm * nsq + 1e-9 * nsq);
    }
}

TEST_CASE("init: validation") {
    Rng rng(0);
    Matrix y4 = gaussian_matrix(rng, 4, 1);
    CHECK_THROWS_AS((void)sg_regression_init(Matrix(0, 0), Matrix(0, 1), rng), ValueError);
    CHECK_THROWS_AS((void)sg_regression_init(gaussian_matrix(rng, 4, 2), gaussian_matrix(rng, 5, 1), rng),
                    ValueError);
    CHECK_THROWS_AS((void)sg_regression_init(gaussian_matrix(rng, 4, 2), gaussian_matrix(rng, 4, 2), rng),
                    ValueError);
    // a constant feature duplicates the bias row: augmented data loses rank
    CHECK_THROWS_AS((void)sg_regression_init(Matrix(4, 1, 1.0), y4, rng), ValueError);
}

TEST_CASE("colspace projector is idempotent and orthogonal") {
    SGRegressionState s = random_problem(5, 15, 4);
    Rng rng(17);
    Matrix v = gaussian_matrix(rng, 15, 1);
    Matrix pv = colspace_component(s, v);
    CHECK(max_abs_diff(colspace_component(s, pv), pv) < 1e-10);
    Matrix perp = sub(v, pv);
    CHECK(frobenius_norm(matmul(s.Xbar, perp)) < 1e-10);
}

TEST_CASE("signal equals the coefficient form of the gradient model") {
    SGRegressionState s = random_problem(8, 10, 3);
    s.alpha = 0.37;
    s.beta = -1.91;
    s.gamma = 0.55;
    Matrix g = sg_regression_signal(s);
    Matrix p = sg_regression_predictions(s);
    for (std::size_t j = 0; j < 10; ++j) {
        double want = (s.alpha + 1.0) * p(0, j) - (s.beta + 1.0) * s.y(0, j) + s.gamma;
        CHECK(std::abs(g(0, j) - want) < 1e-12);
    }
}

TEST_CASE("fixed point is exactly stationary") {
    // build targets that the true weights reproduce bitwise, so e == 0 exactly
    Rng rng(21);
    Matrix X = gaussian_matrix(rng, 10, 3);
    SGRegressionState probe = sg_regression_init(X, gaussian_matrix(rng, 10, 1), rng);
    Matrix w_true = gaussian_matrix(rng, 1, 4);
    Matrix y_row = matmul(w_true, probe.Xbar);
    Matrix y_col = transpose(y_row);

    Rng rng2(21);
    (void)gaussian_matrix(rng2, 10, 3);
    SGRegressionState s = sg_regression_init(X, y_col, rng2);
    s.W = w_true;
    s.alpha = 0.0;
    s.beta = 0.0;
    s.gamma = 0.0;
    s.xi = Matrix(10, 1);

    CHECK(combined_norm(s) == 0.0);
    for (int t = 0; t < 2; ++t) {
        SGRegressionStepInfo info = sg_regression_step(s);
        CHECK(info.combined_before == 0.0);
        CHECK(info.combined_after == 0.0);
        CHECK(info.mu == 0.0);
        CHECK(info.nu == 0.0);
        CHECK(info.halvings == 0);
        CHECK_FALSE(info.stalled);
        CHECK(max_abs_diff(s.W, w_true) == 0.0);
        CHECK(s.alpha == 0.0);
        CHECK(s.beta == 0.0);
        CHECK(s.gamma == 0.0);
    }
}

TEST_CASE("combined norm strictly decreases on every accepted step") {
    SGRegressionState s = random_problem(7, 20, 5);
    double prev_after = -1.0;
    for (int it = 0; it < 300; ++it) {
        SGRegressionStepInfo info = sg_regression_step(s);
        REQUIRE_FALSE(info.stalled);
        CHECK(info.combined_after < info.combined_before);
        if (it > 0) {
            // entering norm is the committed trial's norm, bit for bit
            CHECK(info.combined_before == prev_after);
        }
        prev_after = info.combined_after;
    }
}

TEST_CASE("20 random problems converge to the least-squares oracle") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const std::size_t S = 12 + 2 * static_cast<std::size_t>(seed);
        const std::size_t d = 2 + seed % 9; // 2..10, always d + 2 <= S
        SGRegressionState s = random_problem(1000 + seed, S, d);

        Matrix e0 = sg_regression_error(s);
        Matrix eperp0 = sub(e0, colspace_component(s, e0));

        SGRegressionRun run = sg_regression_run(s, 1e-6, 100000);
        CAPTURE(seed);
        REQUIRE(run.converged);
        CHECK_FALSE(run.stalled);
        CHECK(run.trace.back().f_norm + run.trace.back().xi_norm < 1e-6);

        // every logged iterate strictly decreased the combined norm
        for (std::size_t i = 1; i < run.trace.size(); ++i) {
            CHECK(run.trace[i].f_norm + run.trace[i].xi_norm <
                  run.trace[i - 1].f_norm + run.trace[i - 1].xi_norm);
        }

        // weights reach the normal-equations solution; coefficients die out
        CHECK(frobenius_norm(sub(s.W, s.W_ols)) < 1e-4 * frobenius_norm(s.W_ols));
        CHECK(std::abs(s.alpha) < 1e-3);
        CHECK(std::abs(s.beta) < 1e-3);
        CHECK(std::abs(s.gamma) < 1e-3);

        // the orthogonal-complement error never moved
        Matrix e1 = sg_regression_error(s);
        Matrix eperp1 = sub(e1, colspace_component(s, e1));
        CHECK(max_abs_diff(eperp0, eperp1) < 1e-10);
    }
}

TEST_CASE("zero-coefficient subspace is exactly invariant") {
    SGRegressionState s = random_problem(31, 18, 4);
    s.alpha = 0.0;
    s.beta = 0.0;
    s.gamma = 0.0;
    double prev = combined_norm(s);
    CHECK(prev > 1e-3); // targets are generic, so the error is real
    for (int it = 0; it < 100; ++it) {
        SGRegressionStepInfo info = sg_regression_step(s);
        REQUIRE_FALSE(info.stalled);
        CHECK(s.alpha == 0.0);
        CHECK(s.beta == 0.0);
        CHECK(s.gamma == 0.0);
        CHECK(frobenius_norm(s.xi) == 0.0);
        CHECK(info.combined_after < prev);
        prev = info.combined_after;
    }
    // with the model pinned at zero, W still descends to the oracle
    SGRegressionRun run = sg_regression_run(s, 1e-6, 100000);
    CHECK(run.converged);
    CHECK(s.alpha == 0.0);
    CHECK(frobenius_norm(sub(s.W, s.W_ols)) < 1e-4 * frobenius_norm(s.W_ols));
}

TEST_CASE("error-coordinate rewrite shadows the primal step") {
    SGRegressionState s = random_problem(13, 20, 5);
    // first step from the canonical init: the signal vanishes, W stays put,
    // and the rewrite reproduces the step exactly
    {
        ReducedState r = reduced_from(s);
        Matrix w_before = s.W;
        SGRegressionStepInfo info = sg_regression_step(s);
        REQUIRE_FALSE(info.stalled);
        CHECK(max_abs_diff(s.W, w_before) == 0.0);
        reduced_step(r, s, info.mu, info.nu);
        CHECK(max_abs_diff(r.e, sg_regression_error(s)) < 1e-12);
        CHECK(max_abs_diff(r.xi, fresh_model_error(s)) < 1e-12);
    }
    // later steps: the e map matches exactly; the xi map differs by exactly
    // the regressor-motion term alpha' (p' - p)^T that the rewrite drops
    for (int it = 0; it < 120; ++it) {
        ReducedState r = reduced_from(s);
        Matrix p_before = sg_regression_predictions(s);
        SGRegressionStepInfo info = sg_regression_step(s);
        REQUIRE_FALSE(info.stalled);
        reduced_step(r, s, info.mu, info.nu);

        CHECK(max_abs_diff(r.e, sg_regression_error(s)) < 1e-10);

        Matrix p_after = sg_regression_predictions(s);
        Matrix defect(20, 1);
        for (std::size_t j = 0; j < 20; ++j) {
            defect(j, 0) = s.alpha * (p_after(0, j) - p_before(0, j));
        }
        Matrix xi_shifted = add(r.xi, defect);
        CHECK(max_abs_diff(xi_shifted, fresh_model_error(s)) < 1e-10);
    }
}

TEST_CASE("run: budget exhaustion and argument validation") {
    SGRegressionState s = random_problem(2, 14, 3);
    SGRegressionRun run = sg_regression_run(s, 1e-300, 5);
    CHECK_FALSE(run.converged);
    CHECK_FALSE(run.stalled);
    CHECK(run.iterations == 5);
    CHECK(run.trace.size() == 6);
    for (std::size_t i = 0; i < run.trace.size(); ++i) {
        CHECK(run.trace[i].iteration == static_cast<std::int64_t>(i));
    }
    CHECK_THROWS_AS((void)sg_regression_run(s, 0.0, 10), ValueError);
    CHECK_THROWS_AS((void)sg_regression_run(s, 1e-6, 0), ValueError);
}

TEST_CASE("trace CSV export") {
    SGRegressionState s = random_problem(4, 12, 3);
    SGRegressionRun run = sg_regression_run(s, 1e-3, 100000);
    REQUIRE(run.converged);

    TempDir tmp;
    std::string path = (tmp.path / "trace.csv").string();
    write_sg_regression_csv(path, run);

    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "iteration,f_norm,xi_norm,alpha,beta,gamma,w_err");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t commas = 0;
        for (char ch : line) commas += ch == ',' ? 1 : 0;
        CHECK(commas == 6);
        ++rows;
    }
    CHECK(rows == run.trace.size());

    CHECK_THROWS_AS(write_sg_regression_csv((tmp.path / "no" / "dir.csv").string(), run), IoError);
}

TEST_CASE("l1 subgradient oracle") {
    double da = -1.0, db = -1.0;
    l1_true_gradient(1.0, 0.0, da, db);
    CHECK(da == 6.0);
    CHECK(db == 0.0);
    // sign(0) = 0: at the optimum every term sits at the kink
    l1_true_gradient(0.0, 0.0, da, db);
    CHECK(da == 0.0);
    CHECK(db == 0.0);
    l1_true_gradient(0.0, 1.0, da, db);
    CHECK(da == 0.0);
    CHECK(db == 4.0);
}

TEST_CASE("critical point demo: frozen spurious equilibrium from (1, 0)") {
    CriticalPointResult res = critical_point_demo();
    // signs balance, so the constant model never moves and neither does (a, b)
    CHECK(res.a == 1.0);
    CHECK(res.b == 0.0);
    CHECK(res.c == 0.0);
    CHECK(res.sg_drive_norm < 1e-6);
    CHECK(res.sg_fit_grad < 1e-6);
    CHECK(res.true_grad_a == 6.0);
    CHECK(res.true_grad_b == 0.0);
    CHECK(std::abs(res.true_grad_norm - 6.0) < 1e-6);
    CHECK(res.true_grad_norm >= 1.0);
    CHECK(res.spurious_equilibrium);
    REQUIRE(res.trace.size() == 2001);
    CHECK(res.trace.front().loss == 6.0);
    CHECK(res.trace.front().true_grad_norm == 6.0);
    CHECK(res.trace.back().a == 1.0);
}

TEST_CASE("critical point demo: moving start still lands on an equilibrium") {
    CriticalPointResult res = critical_point_demo(1.0, -1.5, 1e-3, 0.1, 2000);
    // the slope coordinate receives only the (exactly cancelling) model drive
    CHECK(std::abs(res.a - 1.0) < 1e-9);
    // b crawls up from -1.5 and freezes just past the sign flip at -1
    CHECK(res.b > -1.0);
    CHECK(res.b < -0.9);
    CHECK(std::abs(res.c) < 1e-6);
    CHECK(res.sg_drive_norm < 1e-6);
    CHECK(res.sg_fit_grad < 1e-6);
    CHECK(res.true_grad_norm >= 1.0);
    CHECK(res.spurious_equilibrium);
    CHECK_THROWS_AS((void)critical_point_demo(1.0, 0.0, 1e-3, 0.1, 0), ValueError);
}

TEST_CASE("true subgradient descent reaches the minimum the model misses") {
    SubgradientDescentResult res = true_subgradient_descent();
    CHECK(std::abs(res.a) < 1e-2);
    CHECK(std::abs(res.b) < 1e-2);
    CHECK(res.loss < 0.1);
    CHECK_THROWS_AS((void)true_subgradient_descent(1.0, 0.0, 1e-3, 0), ValueError);
}

TEST_CASE("eps tracking check: synthetic records") {
    std::vector<ExperimentRecord> recs(4);
    recs[0].iteration = 0;
    recs[0].eps_ratio = 0.0; // oracle model: holds for any delta
    recs[1].iteration = 10;
    recs[1].eps_ratio = 1.2; // worse than the full gradient: never holds
    recs[2].iteration = 20;  // not monitored: skipped
    recs[3].iteration = 30;
    recs[3].eps_ratio = 0.2;

    for (double delta : {0.01, 0.5, 0.99}) {
        EpsTrackingReport rep = eps_tracking_check(recs, delta);
        CHECK(rep.bound == doctest::Approx((1.0 - delta) / (1.0 + delta)).epsilon(1e-12));
        REQUIRE(rep.checked == 3);
        REQUIRE(rep.rows.size() == 3);
        CHECK(rep.rows[0].ok);
        CHECK_FALSE(rep.rows[1].ok);
        CHECK(rep.rows[2].iteration == 30);
    }
    EpsTrackingReport mid = eps_tracking_check(recs, 0.5);
    CHECK(mid.rows[2].ok); // 0.2 <= 1/3
    CHECK(mid.fraction == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    EpsTrackingReport empty = eps_tracking_check({}, 0.5);
    CHECK(empty.checked == 0);
    CHECK(empty.fraction == 0.0);

    CHECK_THROWS_AS((void)eps_tracking_check(recs, 0.0), ValueError);
    CHECK_THROWS_AS((void)eps_tracking_check(recs, 1.0), ValueError);
    CHECK_THROWS_AS((void)eps_tracking_check(recs, -0.5), ValueError);
}

TEST_CASE("eps tracking on a live shallow run") {
    Dataset data = gen_linear(2, 77);
    NetworkSpec spec;
    spec.layer_dims = {2, 2};
    spec.activation = std::nullopt;
    spec.loss = LossKind::mse;
    spec.method.variant = GradientMethod::Variant::sg;
    spec.sg_insertions = {1}; // model sits between the output and the loss

    TrainConfig config;
    config.iterations = 1000;
    config.batch_size = 50;
    config.lr_main = 3e-3;
    config.lr_sg = 1e-2;
    config.seed = 5;
    config.eps_monitor = true;
    config.log_every = 10;

    TrainResult result = run_experiment(spec, config, data);
    EpsTrackingReport rep = eps_tracking_check(result.records, 0.5);
    REQUIRE(rep.checked > 50);
    // the zero-initialized model cannot satisfy the bound at iteration 0
    CHECK(rep.rows.front().iteration == 0);
    CHECK_FALSE(rep.rows.front().ok);
    CHECK(rep.rows.front().ratio >= 1.0);
    // once fitted, the linear model tracks the mse gradient almost everywhere
    CHECK(rep.fraction > 0.9);
}
