#pragma once

// Augmented Lagrangian alternating direction solver for one batch:
//
//   min  mu1 ||[M, X1]||_* + mu2 ||W X1||_1 + mu3 ||W X2||_1 + mu4 ||X2||_1
//   s.t. y = Phi o (X1 + X2)
//
// with splits Z1 = X1 (inside [M, Z1]), Z2 = W X1, Z3 = W X2, Z4 = X2 and the
// measurement constraint carried by its own multiplier. Every subproblem is
// closed form: the X-step is a 2x2 block system whose blocks are a I + b Q
// with Q = Phi^T Phi, and the Z-steps are singular value or soft thresholds.
// With an empty model (M has zero columns) this is the plain batch problem.

#include "csbg/common.hpp"
#include "csbg/framelet.hpp"
#include "csbg/prox.hpp"
#include "csbg/sensing.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace csbg {

inline constexpr std::size_t kConstraintCount = 5;

struct SolverConfig {
    double mu1 = 1.0;
    double mu2 = 0.01;
    double mu3 = 0.01;
    double mu4 = 0.03;
    std::array<double, kConstraintCount> beta{1.0, 1.0, 1.0, 1.0, 1.0};
    double tol = 1e-4;
    std::size_t max_iter = 300;
    std::size_t batch_m = 8;
    // Evaluate the objective every iteration (costs one extra SVD).
    bool track_objective = true;
    // After the last iteration, move X1 by the least-norm correction that
    // makes Phi o (X1 + X2) = y hold exactly.
    bool project_feasible = true;

    void validate() const {
        require(mu1 >= 0 && mu2 >= 0 && mu3 >= 0 && mu4 >= 0, "weights mu1..mu4 must be nonnegative");
        for (double b : beta) require(b > 0.0, "penalties beta1..beta5 must be positive");
        require(tol > 0.0, "tolerance must be positive");
        require(max_iter >= 1, "max_iter must be at least 1");
        require(batch_m >= 1, "batch size must be at least 1");
    }
};

/// Measurements y (r x m) of one batch, the operator that produced them and
/// the current background model M (n x p, p may be zero).
struct BatchProblem {
    const SensingOperator& op;
    Matrix y;
    Matrix model;
    int width = 0;
    int height = 0;

    Eigen::Index n() const { return static_cast<Eigen::Index>(width) * height; }
    Eigen::Index m() const { return y.cols(); }

    void validate() const {
        require(width >= 2 && height >= 2, "frame dimensions must be at least 2 x 2");
        require(static_cast<std::uint32_t>(n()) == op.n_pixels, "frame dimensions do not match the operator");
        require(y.rows() == op.rate_r, "measurement rows do not match the operator");
        require(y.cols() >= 1, "batch must contain at least one frame");
        require(model.cols() == 0 || model.rows() == n(), "background model rows do not match frame size");
    }
};

struct BatchSolution {
    Matrix X1;  // n x m background
    Matrix X2;  // n x m foreground
    std::size_t iterations = 0;
    bool converged = false;
    double final_residual = 0.0;
    std::vector<double> objective_trace;
    std::vector<double> residual_trace;  // max relative primal residual per iteration
    Eigen::Index svt_width = 0;          // columns of the widest matrix handed to svt
};

/// Primal, split and multiplier variables of one solve. Z1 holds only the X1
/// block of the augmented split; the model block is always M itself.
struct SolverState {
    Matrix X1, X2;
    Matrix Z1, Z2, Z3, Z4;
    Matrix L1, L2, L3, L4, L5;
};

namespace detail {

inline double rel(double violation, double target) { return violation / std::max(1.0, target); }

/// Solves (a I + c Q) x = rhs column-wise with Q = Phi^T Phi.
inline Matrix solve_shifted_projector(const SensingOperator& op, double a, double c, const Matrix& rhs) {
    if (c == 0.0) return rhs / a;
    if (op.tight()) {
        // Q is an orthogonal projection: inverse is (I - Q)/a + Q/(a + c).
        Matrix q = gram_apply(op, rhs);
        return (rhs - q) / a + q / (a + c);
    }
    // Padded operator: Q is only a contraction, fall back to CG per column.
    // The spectrum lies in [a, a + c], so convergence is fast.
    Matrix x = rhs / (a + 0.5 * c);
    for (Eigen::Index j = 0; j < rhs.cols(); ++j) {
        Matrix xj = x.col(j);
        Matrix r = rhs.col(j) - (a * xj + c * gram_apply(op, xj));
        Matrix p = r;
        double rr = r.squaredNorm();
        const double stop = 1e-28 * std::max(1.0, rhs.col(j).squaredNorm());
        for (int it = 0; it < 500 && rr > stop; ++it) {
            Matrix ap = a * p + c * gram_apply(op, p);
            double alpha = rr / p.cwiseProduct(ap).sum();
            xj += alpha * p;
            r -= alpha * ap;
            double rr_next = r.squaredNorm();
            p = r + (rr_next / rr) * p;
            rr = rr_next;
        }
        x.col(j) = xj;
    }
    return x;
}

/// Least-norm z with Phi z = delta, column-wise.
inline Matrix least_norm_lift(const SensingOperator& op, const Matrix& delta) {
    if (op.tight()) return adjoint(op, delta);
    Matrix z = delta;
    for (Eigen::Index j = 0; j < delta.cols(); ++j) {
        // CG on Phi Phi^T, which is SPD with spectrum in (0, 1].
        Matrix zj = Matrix::Zero(delta.rows(), 1);
        Matrix r = delta.col(j);
        Matrix p = r;
        double rr = r.squaredNorm();
        const double stop = 1e-28 * std::max(1.0, rr);
        for (int it = 0; it < 1000 && rr > stop; ++it) {
            Matrix ap = apply(op, adjoint(op, p));
            double alpha = rr / p.cwiseProduct(ap).sum();
            zj += alpha * p;
            r -= alpha * ap;
            double rr_next = r.squaredNorm();
            p = r + (rr_next / rr) * p;
            rr = rr_next;
        }
        z.col(j) = zj;
    }
    return adjoint(op, z);
}

inline Matrix augment(const Matrix& model, const Matrix& block) {
    Matrix aug(block.rows(), model.cols() + block.cols());
    if (model.cols() > 0) aug.leftCols(model.cols()) = model;
    aug.rightCols(block.cols()) = block;
    return aug;
}

}  // namespace detail

/// Initial point: X1 = Phi^T y, X2 = 0, splits from their definitions, zero multipliers.
inline SolverState initial_state(const BatchProblem& problem) {
    problem.validate();
    const Eigen::Index n = problem.n(), m = problem.m();
    SolverState s;
    s.X1 = adjoint(problem.op, problem.y);
    s.X2 = Matrix::Zero(n, m);
    s.Z1 = s.X1;
    s.Z2 = analysis(s.X1, problem.width, problem.height);
    s.Z3 = Matrix::Zero(kFrameletSubbands * n, m);
    s.Z4 = Matrix::Zero(n, m);
    s.L1 = Matrix::Zero(n, m);
    s.L2 = Matrix::Zero(kFrameletSubbands * n, m);
    s.L3 = Matrix::Zero(kFrameletSubbands * n, m);
    s.L4 = Matrix::Zero(n, m);
    s.L5 = Matrix::Zero(problem.op.rate_r, m);
    return s;
}

/// Right-hand sides of the X-step normal equations.
inline std::pair<Matrix, Matrix> x_update_rhs(const BatchProblem& problem, const std::array<double, 5>& beta,
                                              const SolverState& s) {
    const int w = problem.width, h = problem.height;
    Matrix meas = adjoint(problem.op, Matrix(beta[4] * problem.y - s.L5));
    Matrix b1 = beta[0] * s.Z1 - s.L1 + synthesis(Matrix(beta[1] * s.Z2 - s.L2), w, h) + meas;
    Matrix b2 = synthesis(Matrix(beta[2] * s.Z3 - s.L3), w, h) + beta[3] * s.Z4 - s.L4 + meas;
    return {std::move(b1), std::move(b2)};
}

/// Exact minimizer of the augmented Lagrangian over (X1, X2) with Z and the
/// multipliers fixed. Normal equations, with Q = Phi^T Phi and W^T W = I:
///   (a1 I + b5 Q) X1 + b5 Q X2 = B1,   a1 = beta1 + beta2
///   b5 Q X1 + (a2 I + b5 Q) X2 = B2,   a2 = beta3 + beta4
/// Penalties may be zero here (beta5 = 0 decouples the blocks) as long as a1
/// and a2 stay positive.
inline void x_update(const BatchProblem& problem, const std::array<double, 5>& beta, SolverState& s) {
    for (double b : beta) require(b >= 0.0, "penalties must be nonnegative");
    const double a1 = beta[0] + beta[1], a2 = beta[2] + beta[3], b5 = beta[4];
    require(a1 > 0.0 && a2 > 0.0, "X-update block system is singular: beta1 + beta2 and beta3 + beta4 must be positive");

    auto [b1, b2] = x_update_rhs(problem, beta, s);
    // Eliminate X2 = (a1 X1 - B1 + B2) / a2, leaving (a1 I + c Q) X1 = B1 + (b5 / a2) Q (B1 - B2).
    const double c = b5 * (a1 + a2) / a2;
    Matrix rhs = b1;
    if (b5 != 0.0) rhs += (b5 / a2) * gram_apply(problem.op, Matrix(b1 - b2));
    s.X1 = detail::solve_shifted_projector(problem.op, a1, c, rhs);
    s.X2 = (a1 * s.X1 - b1 + b2) / a2;
}

inline void x_update(const BatchProblem& problem, const SolverConfig& config, SolverState& s) {
    x_update(problem, config.beta, s);
}

/// Relative violations of the five constraints, in order
/// X1 = Z1, W X1 = Z2, W X2 = Z3, X2 = Z4, Phi o (X1 + X2) = y.
inline std::array<double, kConstraintCount> residuals(const BatchProblem& problem, const SolverState& s) {
    const int w = problem.width, h = problem.height;
    Matrix wx1 = analysis(s.X1, w, h);
    Matrix wx2 = analysis(s.X2, w, h);
    Matrix phix = apply(problem.op, Matrix(s.X1 + s.X2));
    return {
        detail::rel((s.X1 - s.Z1).norm(), s.X1.norm()),
        detail::rel((wx1 - s.Z2).norm(), wx1.norm()),
        detail::rel((wx2 - s.Z3).norm(), wx2.norm()),
        detail::rel((s.X2 - s.Z4).norm(), s.X2.norm()),
        detail::rel((phix - problem.y).norm(), problem.y.norm()),
    };
}

namespace detail {

inline double objective_terms(const BatchProblem& problem, const SolverConfig& config, const Matrix& x1,
                              const Matrix& wx1, const Matrix& wx2, const Matrix& x2) {
    double value = 0.0;
    if (config.mu1 > 0.0) value += config.mu1 * nuclear_norm(augment(problem.model, x1));
    value += config.mu2 * matrix_l1(wx1);
    value += config.mu3 * matrix_l1(wx2);
    value += config.mu4 * matrix_l1(x2);
    return value;
}

}  // namespace detail

/// Batch objective at (X1, X2); the constraint is not checked.
inline double objective(const BatchProblem& problem, const SolverConfig& config, const Matrix& x1,
                        const Matrix& x2) {
    const int w = problem.width, h = problem.height;
    return detail::objective_terms(problem, config, x1, analysis(x1, w, h), analysis(x2, w, h), x2);
}

/// Outcome of one sweep of X-, Z- and multiplier updates.
struct StepInfo {
    std::array<double, kConstraintCount> residuals{};
    double max_residual = 0.0;
    double objective = 0.0;  // NaN unless requested
    Eigen::Index svt_width = 0;
};

/// One ALAD sweep: X-step, Z-steps, multiplier ascent on all five constraints.
/// `iter` only labels a NumericalFailure.
inline StepInfo step(const BatchProblem& problem, const SolverConfig& config, SolverState& s, std::size_t iter = 0,
                     bool with_objective = false) {
    const int w = problem.width, h = problem.height;
    const Eigen::Index m = problem.m();
    const auto& beta = config.beta;
    StepInfo info;

    x_update(problem, beta, s);
    if (!s.X1.allFinite() || !s.X2.allFinite())
        throw NumericalFailure("non-finite iterate at iteration " + std::to_string(iter), iter);

    // Only the X1 block of the thresholded augmented matrix is free; the model
    // block is refreshed from M on every pass.
    Matrix aug = detail::augment(problem.model, s.X1 + s.L1 / beta[0]);
    info.svt_width = aug.cols();
    s.Z1 = svt(aug, config.mu1 / beta[0]).rightCols(m);

    Matrix wx1 = analysis(s.X1, w, h);
    Matrix wx2 = analysis(s.X2, w, h);
    s.Z2 = wx1 + s.L2 / beta[1];
    soft_threshold_inplace(s.Z2, config.mu2 / beta[1]);
    s.Z3 = wx2 + s.L3 / beta[2];
    soft_threshold_inplace(s.Z3, config.mu3 / beta[2]);
    s.Z4 = s.X2 + s.L4 / beta[3];
    soft_threshold_inplace(s.Z4, config.mu4 / beta[3]);

    Matrix phix = apply(problem.op, Matrix(s.X1 + s.X2));
    s.L1 += beta[0] * (s.X1 - s.Z1);
    s.L2 += beta[1] * (wx1 - s.Z2);
    s.L3 += beta[2] * (wx2 - s.Z3);
    s.L4 += beta[3] * (s.X2 - s.Z4);
    s.L5 += beta[4] * (phix - problem.y);
    if (!s.L5.allFinite())
        throw NumericalFailure("non-finite multiplier at iteration " + std::to_string(iter), iter);

    info.residuals = {
        detail::rel((s.X1 - s.Z1).norm(), s.X1.norm()),
        detail::rel((wx1 - s.Z2).norm(), wx1.norm()),
        detail::rel((wx2 - s.Z3).norm(), wx2.norm()),
        detail::rel((s.X2 - s.Z4).norm(), s.X2.norm()),
        detail::rel((phix - problem.y).norm(), problem.y.norm()),
    };
    info.max_residual = *std::max_element(info.residuals.begin(), info.residuals.end());
    info.objective = with_objective ? detail::objective_terms(problem, config, s.X1, wx1, wx2, s.X2)
                                    : std::numeric_limits<double>::quiet_NaN();
    return info;
}

inline BatchSolution solve_batch(const BatchProblem& problem, const SolverConfig& config) {
    problem.validate();
    config.validate();
    const Eigen::Index n = problem.n(), m = problem.m();

    BatchSolution sol;
    if (problem.y.isZero(0.0)) {
        sol.X1 = Matrix::Zero(n, m);
        sol.X2 = Matrix::Zero(n, m);
        sol.converged = true;
        return sol;
    }

    SolverState s = initial_state(problem);
    for (std::size_t iter = 1; iter <= config.max_iter; ++iter) {
        StepInfo info = step(problem, config, s, iter, config.track_objective);
        sol.svt_width = std::max(sol.svt_width, info.svt_width);
        sol.residual_trace.push_back(info.max_residual);
        if (config.track_objective) sol.objective_trace.push_back(info.objective);
        sol.iterations = iter;
        sol.final_residual = info.max_residual;
        if (info.max_residual <= config.tol) {
            sol.converged = true;
            break;
        }
    }

    if (config.project_feasible) {
        Matrix delta = problem.y - apply(problem.op, Matrix(s.X1 + s.X2));
        s.X1 += detail::least_norm_lift(problem.op, delta);
    }
    sol.X1 = std::move(s.X1);
    sol.X2 = std::move(s.X2);
    return sol;
}

}  // namespace csbg
