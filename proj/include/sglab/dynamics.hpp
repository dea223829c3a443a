#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sglab/checkpoint.hpp"
#include "sglab/matrix.hpp"
#include "sglab/rng.hpp"

namespace sglab {

// Linear regression whose loss gradient is replaced by a learned linear model
// of it, run as an explicit dynamical system. The coupled state is the
// regression weights W and the model coefficients (alpha, beta, gamma); the
// model's error in sample space is the derived quantity
//   xi = A (alpha, beta, gamma)^T,  A = [p^T | -y^T | 1^T],
// recomputed from the current state wherever it is needed (keeping xi inside
// the range of A is what makes the exact line search on the model's fitting
// loss contract it; carrying xi as independent state leaks a residual
// orthogonal to that range and the system deadlocks short of the optimum).
// The regression error's column-space component f shrinks under a backtracked
// learning rate. The certified quantity is the combined norm ||f|| + ||xi||,
// which strictly decreases on accepted steps.
struct SGRegressionState {
    Matrix W;                    // 1 x (d+1) regression weights (bias folded in)
    double alpha = -1.0;         // gradient-model coefficient on predictions
    double beta = -1.0;          // gradient-model coefficient on targets
    double gamma = 0.0;          // gradient-model bias
    Matrix xi;                   // S x 1 cache of A (alpha,beta,gamma)^T, synced by init/step
    Matrix Xbar;                 // (d+1) x S augmented data, last row all ones
    Matrix y;                    // 1 x S targets
    Matrix B;                    // S x S gram Xbar^T Xbar
    Matrix W_ols;                // 1 x (d+1) least-squares oracle
    double b_min = 0.0;          // smallest positive eigenvalue of B
    double B_norm = 0.0;         // largest eigenvalue of B
    std::size_t S() const { return Xbar.cols(); }
};

// X: S x d (row per sample), y: S x 1. W drawn from rng as N(0, 1).
// Model coefficients start at (-1, -1, 0): the correction they parameterize
// cancels the true gradient exactly, so the synthetic signal starts at zero.
SGRegressionState sg_regression_init(const Matrix& X, const Matrix& y, Rng& rng);

Matrix sg_regression_predictions(const SGRegressionState& s); // 1 x S
Matrix sg_regression_error(const SGRegressionState& s);       // S x 1, (y - p)^T
// component of v (S x 1) inside the column space of Xbar^T
Matrix colspace_component(const SGRegressionState& s, const Matrix& v);
// the synthetic signal driving W: (p - y) + xi^T, 1 x S
Matrix sg_regression_signal(const SGRegressionState& s);

struct SGRegressionStepInfo {
    double mu = 0.0;              // accepted learning rate for W
    double nu = 0.0;              // exact line-search rate for the model
    int halvings = 0;             // backtracks before acceptance
    bool stalled = false;         // no decrease within the halving budget
    double combined_before = 0.0; // ||f|| + ||xi|| entering the step
    double combined_after = 0.0;  // ||f|| + ||xi|| leaving the step
};

// One step: nu by exact line search (when the curvature term is nonzero),
// mu backtracked from the certified bound min{b_min/||B||^2, 1 - ...} until
// the combined norm strictly decreases. A state with combined norm zero is a
// fixed point and the step leaves it untouched.
SGRegressionStepInfo sg_regression_step(SGRegressionState& s);

struct SGRegressionTracePoint {
    std::int64_t iteration = 0;
    double f_norm = 0.0;
    double xi_norm = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    double w_err = 0.0; // ||W - W_ols||
};

struct SGRegressionRun {
    std::vector<SGRegressionTracePoint> trace; // entry per state visited
    bool converged = false;                    // combined norm fell below tol
    bool stalled = false;                      // a step ran out of halvings
    std::int64_t iterations = 0;               // steps actually taken
};

SGRegressionRun sg_regression_run(SGRegressionState& s, double tol, std::int64_t max_iters);

// CSV: iteration,f_norm,xi_norm,alpha,beta,gamma,w_err
void write_sg_regression_csv(const std::string& path, const SGRegressionRun& run);

// The dynamics rewritten in error coordinates:
//   e' = e - mu B e + mu B xi
//   xi' = xi - nu A A^T xi,  A = [p^T | -y^T | 1^T], p = y - e^T.
// Driven with the (mu, nu) an sg_regression_step reports from the same
// starting point, the e map reproduces that step's error exactly; the xi map
// reproduces it up to the regressor-motion term alpha' (p' - p)^T, which the
// rewrite drops (it is O(mu) per step, and exactly zero on the first step
// from the canonical init, where the synthetic signal vanishes). That defect
// term is an exact identity:  xi_primal' - xi_reduced' = alpha' (p' - p)^T.
struct ReducedState {
    Matrix e;  // S x 1
    Matrix xi; // S x 1
};
ReducedState reduced_from(const SGRegressionState& s);
void reduced_step(ReducedState& r, const SGRegressionState& problem, double mu, double nu);

// ---------------------------------------------------------------------------
// Spurious-equilibrium demo: f(x) = a x + b on the fixed inputs {-2,-1,1,2}
// with L(a, b) = sum_i |a x_i + b|, trained through a constant gradient
// model c fitted by plain gradient descent to the per-sample subgradient
// sign(a x_i + b) (sign(0) = 0). The constant model cannot represent the true
// gradient, and the coupled system settles where the model's drive and its
// own fitting gradient both vanish while the true gradient does not.

struct CriticalPointTracePoint {
    std::int64_t iteration = 0;
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double loss = 0.0;
    double true_grad_norm = 0.0;
};

struct CriticalPointResult {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double true_grad_a = 0.0;      // dL/da at the terminal point
    double true_grad_b = 0.0;      // dL/db at the terminal point
    double true_grad_norm = 0.0;
    double sg_drive_norm = 0.0;    // || model signal routed to (a, b) ||
    double sg_fit_grad = 0.0;      // | d(fit loss)/dc |
    bool spurious_equilibrium = false;
    std::vector<CriticalPointTracePoint> trace;
};

CriticalPointResult critical_point_demo(double a0 = 1.0, double b0 = 0.0,
                                        double lr_model = 1e-3, double lr_sg = 0.1,
                                        std::int64_t iters = 2000);

// Plain subgradient descent on the same objective, for comparison.
struct SubgradientDescentResult {
    double a = 0.0;
    double b = 0.0;
    double loss = 0.0;
};
SubgradientDescentResult true_subgradient_descent(double a0 = 1.0, double b0 = 0.0,
                                                  double lr = 1e-3, std::int64_t iters = 2000);

// dL/d(a, b) for L = sum |a x_i + b| over {-2,-1,1,2}, sign(0) = 0.
void l1_true_gradient(double a, double b, double& da, double& db);

// ---------------------------------------------------------------------------
// Gradient-tracking check: a record's eps_ratio is
// ||SG - dL/dh|| * ||dh/dtheta|| / ||dL/dtheta_lower||, and the descent
// argument needs it to stay below (1 - delta)/(1 + delta). Reports which
// monitored iterations satisfied that, plus the satisfied fraction. Records
// without a ratio are skipped. A diagnostic, not a guarantee.
struct EpsTrackingReport {
    struct Row {
        std::int64_t iteration = 0;
        double ratio = 0.0;
        bool ok = false;
    };
    std::vector<Row> rows;
    std::size_t checked = 0;
    double fraction = 0.0; // of checked rows; 0 when none were checked
    double bound = 0.0;    // (1 - delta)/(1 + delta)
};

EpsTrackingReport eps_tracking_check(const std::vector<ExperimentRecord>& records, double delta);

} // namespace sglab
