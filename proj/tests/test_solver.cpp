#include "csbg/evalkit.hpp"
#include "csbg/pipeline.hpp"
#include "csbg/solver.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using csbg::BatchProblem;
using csbg::Matrix;
using csbg::SolverConfig;
using csbg::SolverState;
using Beta = std::array<double, 5>;

namespace {

// Dense form of the X-step: Hessian and right-hand side of the augmented
// Lagrangian restricted to (X1, X2), built from first principles.
struct DenseXStep {
    Matrix hessian;
    Matrix rhs;  // 2n x m, X1 stacked over X2
};

DenseXStep dense_x_step(const BatchProblem& p, const Beta& b, const SolverState& s) {
    const Eigen::Index n = p.n();
    Matrix phi = oracle::dense_phi(p.op), w = oracle::dense_framelet(p.width, p.height);
    Matrix q = phi.transpose() * phi, wtw = w.transpose() * w, id = Matrix::Identity(n, n);
    DenseXStep d;
    d.hessian.resize(2 * n, 2 * n);
    d.hessian << b[0] * id + b[1] * wtw + b[4] * q, b[4] * q, b[4] * q, b[2] * wtw + b[3] * id + b[4] * q;
    Matrix meas = phi.transpose() * (b[4] * p.y - s.L5);
    d.rhs.resize(2 * n, p.m());
    d.rhs << b[0] * s.Z1 - s.L1 + w.transpose() * (b[1] * s.Z2 - s.L2) + meas,
        w.transpose() * (b[2] * s.Z3 - s.L3) + b[3] * s.Z4 - s.L4 + meas;
    return d;
}

Matrix stacked(const SolverState& s) {
    Matrix x(2 * s.X1.rows(), s.X1.cols());
    x << s.X1, s.X2;
    return x;
}

SolverState random_state(std::mt19937_64& gen, const BatchProblem& p) {
    SolverState s = csbg::initial_state(p);
    for (Matrix* m : {&s.Z1, &s.Z2, &s.Z3, &s.Z4, &s.L1, &s.L2, &s.L3, &s.L4, &s.L5})
        *m = oracle::random_matrix(gen, m->rows(), m->cols());
    return s;
}

double normal_residual(const BatchProblem& p, const Beta& b, const SolverState& s) {
    DenseXStep d = dense_x_step(p, b, s);
    return (d.hessian * stacked(s) - d.rhs).norm() / std::max(1.0, d.rhs.norm());
}

csbg::SynthVideo moving_block(int w, int h, int frames) {
    csbg::SynthSpec spec;
    spec.width = w;
    spec.height = h;
    spec.frame_count = frames;
    spec.objects.push_back({8, 8, 230.0, 3, 1, 4, 10});
    return csbg::generate(spec);
}

}  // namespace

class XUpdate : public ::testing::TestWithParam<std::pair<int, int>> {};

TEST_P(XUpdate, MatchesDenseNormalEquations) {
    auto [w, h] = GetParam();
    std::mt19937_64 gen(51 + w);
    auto op = csbg::build_operator(static_cast<std::uint32_t>(w * h), 0.5, 3);
    BatchProblem p{op, oracle::random_matrix(gen, op.rate_r, 3), Matrix(w * h, 0), w, h};
    for (Beta beta : {Beta{1, 1, 1, 1, 1}, Beta{0.3, 2.0, 1.5, 0.7, 4.0}}) {
        SolverState s = random_state(gen, p);
        csbg::x_update(p, beta, s);
        EXPECT_LT(normal_residual(p, beta, s), 1e-10);
        DenseXStep d = dense_x_step(p, beta, s);
        for (Eigen::Index j = 0; j < p.m(); ++j) {
            oracle::Vector ref = oracle::cg(d.hessian, d.rhs.col(j));
            EXPECT_LT((stacked(s).col(j) - ref).norm(), 1e-8 * std::max(1.0, ref.norm()));
        }
    }
}

// 8 x 4 has no padding (closed-form inverse); 6 x 5 pads 30 to 32 (CG path).
INSTANTIATE_TEST_SUITE_P(TightAndPadded, XUpdate, ::testing::Values(std::pair{8, 4}, std::pair{6, 5}));

TEST(XUpdateTest, Idempotent) {
    std::mt19937_64 gen(52);
    auto op = csbg::build_operator(64, 0.25, 4);
    BatchProblem p{op, oracle::random_matrix(gen, op.rate_r, 2), Matrix(64, 0), 8, 8};
    SolverState s = random_state(gen, p);
    csbg::x_update(p, SolverConfig{}, s);
    Matrix x1 = s.X1, x2 = s.X2;
    csbg::x_update(p, SolverConfig{}, s);
    EXPECT_LT((s.X1 - x1).norm(), 1e-12 * x1.norm());
    EXPECT_LT((s.X2 - x2).norm(), 1e-12 * x2.norm());
}

TEST(XUpdateTest, ZeroMeasurementPenaltyDecouples) {
    std::mt19937_64 gen(53);
    auto op = csbg::build_operator(64, 0.25, 4);
    BatchProblem p{op, oracle::random_matrix(gen, op.rate_r, 2), Matrix(64, 0), 8, 8};
    SolverState s = random_state(gen, p);
    Beta beta{2.0, 3.0, 1.0, 4.0, 0.0};
    csbg::x_update(p, beta, s);
    // The measurement multiplier still enters linearly through -Phi^T L5.
    Matrix lift = csbg::adjoint(op, s.L5);
    Matrix x1 = (2.0 * s.Z1 - s.L1 + csbg::synthesis(Matrix(3.0 * s.Z2 - s.L2), 8, 8) - lift) / 5.0;
    Matrix x2 = (csbg::synthesis(Matrix(1.0 * s.Z3 - s.L3), 8, 8) + 4.0 * s.Z4 - s.L4 - lift) / 5.0;
    EXPECT_LT((s.X1 - x1).norm(), 1e-12);
    EXPECT_LT((s.X2 - x2).norm(), 1e-12);
}

TEST(XUpdateTest, SingularBlockIsRejected) {
    auto op = csbg::build_operator(16, 0.5, 4);
    BatchProblem p{op, Matrix::Ones(op.rate_r, 1), Matrix(16, 0), 4, 4};
    SolverState s = csbg::initial_state(p);
    EXPECT_THROW(csbg::x_update(p, Beta{0, 0, 1, 1, 1}, s), csbg::InvalidArgument);
    EXPECT_THROW(csbg::x_update(p, Beta{1, 1, 0, 0, 1}, s), csbg::InvalidArgument);
}

TEST(XUpdateTest, ExactAtEveryIterationOfARun) {
    std::mt19937_64 gen(54);
    auto op = csbg::build_operator(32, 0.5, 5);
    Matrix model = oracle::random_matrix(gen, 32, 2, 0.5);
    BatchProblem p{op, oracle::random_matrix(gen, op.rate_r, 3), model, 8, 4};
    SolverConfig config;
    SolverState s = csbg::initial_state(p);
    for (std::size_t it = 1; it <= 30; ++it) {
        SolverState probe = s;
        csbg::x_update(p, config, probe);
        EXPECT_LT(normal_residual(p, config.beta, probe), 1e-8) << "iteration " << it;
        csbg::step(p, config, s, it);
    }
}

TEST(Residuals, ZeroOnAFeasibleConsistentState) {
    std::mt19937_64 gen(55);
    auto op = csbg::build_operator(64, 0.5, 6);
    Matrix x1 = oracle::random_matrix(gen, 64, 2), x2 = oracle::random_matrix(gen, 64, 2);
    BatchProblem p{op, csbg::apply(op, Matrix(x1 + x2)), Matrix(64, 0), 8, 8};
    SolverState s = csbg::initial_state(p);
    s.X1 = x1;
    s.X2 = x2;
    s.Z1 = x1;
    s.Z2 = csbg::analysis(x1, 8, 8);
    s.Z3 = csbg::analysis(x2, 8, 8);
    s.Z4 = x2;
    auto r = csbg::residuals(p, s);
    ASSERT_EQ(r.size(), 5u);
    for (double v : r) EXPECT_LT(v, 1e-13);

    s.Z2(3, 1) += 0.5;
    r = csbg::residuals(p, s);
    EXPECT_GT(r[1], 1e-3);
    for (int k : {0, 2, 3, 4}) EXPECT_LT(r[k], 1e-13);
}

TEST(SolveBatch, ZeroMeasurementsShortCircuit) {
    auto op = csbg::build_operator(64, 0.5, 7);
    BatchProblem p{op, Matrix::Zero(op.rate_r, 3), Matrix(64, 0), 8, 8};
    auto sol = csbg::solve_batch(p, SolverConfig{});
    EXPECT_EQ(sol.iterations, 0u);
    EXPECT_TRUE(sol.converged);
    EXPECT_TRUE(sol.X1.isZero(0.0));
    EXPECT_TRUE(sol.X2.isZero(0.0));
}

TEST(SolveBatch, FullRateSingleFrameIsConsistent) {
    auto synth = moving_block(16, 16, 1);
    Matrix x = synth.video.to_matrix(1.0 / 255.0);
    auto op = csbg::build_operator(256, 1.0, 8);
    BatchProblem p{op, csbg::apply(op, x), Matrix(256, 0), 16, 16};
    SolverConfig config;
    config.project_feasible = false;
    auto sol = csbg::solve_batch(p, config);
    EXPECT_LE(sol.iterations, config.max_iter);
    if (sol.converged) { EXPECT_LE(sol.final_residual, config.tol); }
    EXPECT_LT((sol.X1 + sol.X2 - x).norm() / x.norm(), 1e-3);
    config.project_feasible = true;
    sol = csbg::solve_batch(p, config);
    EXPECT_LT((sol.X1 + sol.X2 - x).norm() / x.norm(), 1e-6);
}

TEST(SolveBatch, SeparatesAMovingBlockAtFullRate) {
    auto synth = moving_block(32, 32, 8);
    Matrix x = synth.video.to_matrix(1.0 / 255.0);
    auto op = csbg::build_operator(1024, 1.0, 9);
    BatchProblem p{op, csbg::apply(op, x), Matrix(1024, 0), 32, 32};
    SolverConfig config;
    auto sol = csbg::solve_batch(p, config);
    EXPECT_EQ(sol.objective_trace.size(), sol.iterations);
    EXPECT_EQ(sol.residual_trace.size(), sol.iterations);
    EXPECT_EQ(sol.svt_width, 8);

    csbg::ForegroundMask predicted{32, 32, {}};
    for (Eigen::Index j = 0; j < 8; ++j)
        predicted.frames.push_back(csbg::postprocess_foreground({sol.X2.col(j).data(), 1024}, 32, 32));
    EXPECT_GE(csbg::mask_metrics(predicted, synth.masks).pooled.f1, 0.95);

    // ADMM residuals oscillate, so the downward trend is checked on the
    // envelope: the worst residual in (k, 2k] never exceeds the worst in (k/2, k].
    const auto& trace = sol.residual_trace;
    auto window_max = [&](std::size_t lo, std::size_t hi) {
        return *std::max_element(trace.begin() + static_cast<std::ptrdiff_t>(lo), trace.begin() + static_cast<std::ptrdiff_t>(hi));
    };
    for (std::size_t k = 8; 2 * k <= trace.size(); k *= 2)
        EXPECT_LE(window_max(k, 2 * k), window_max(k / 2, k)) << "k = " << k;
}

TEST(SolveBatch, ModelColumnsWidenTheThresholdedMatrix) {
    std::mt19937_64 gen(56);
    auto op = csbg::build_operator(64, 0.5, 10);
    Matrix model = oracle::random_matrix(gen, 64, 3);
    BatchProblem p{op, oracle::random_matrix(gen, op.rate_r, 4), model, 8, 8};
    SolverConfig config;
    config.max_iter = 5;
    EXPECT_EQ(csbg::solve_batch(p, config).svt_width, 7);
}

TEST(SolveBatch, PaddedOperatorStaysFeasible) {
    std::mt19937_64 gen(57);
    auto op = csbg::build_operator(30, 0.6, 11);
    BatchProblem p{op, oracle::random_matrix(gen, op.rate_r, 2), Matrix(30, 0), 6, 5};
    auto sol = csbg::solve_batch(p, SolverConfig{});
    EXPECT_LT((csbg::apply(op, Matrix(sol.X1 + sol.X2)) - p.y).norm(), 1e-10 * p.y.norm());
}

TEST(SolveBatch, NoWorseThanASubgradientOracle) {
    // Full rate, so the constraint pins X1 + X2 = Phi^T y and the problem is an
    // unconstrained convex function of X1. A long projected subgradient run
    // gives an upper bound on the optimum.
    std::mt19937_64 gen(58);
    const int w = 8, h = 4, n = 32, m = 3;
    auto op = csbg::build_operator(n, 1.0, 12);
    Matrix bg = oracle::random_matrix(gen, n, 1, 0.5) * Matrix::Ones(1, m);
    Matrix fg = Matrix::Zero(n, m);
    for (int j = 0; j < m; ++j) fg(5 + 7 * j, j) = 0.8;
    Matrix model = oracle::random_matrix(gen, n, 1, 0.5);
    BatchProblem p{op, csbg::apply(op, Matrix(bg + fg)), model, w, h};
    SolverConfig config;
    config.tol = 1e-8;
    config.max_iter = 5000;
    config.track_objective = false;
    auto sol = csbg::solve_batch(p, config);
    double solver_obj = csbg::objective(p, config, sol.X1, sol.X2);

    const Matrix dense_w = oracle::dense_framelet(w, h);
    const Matrix d = bg + fg;
    auto f = [&](const Matrix& x1) {
        Matrix aug(n, 1 + m);
        aug << model, x1;
        return config.mu1 * oracle::nuclear(aug) + config.mu2 * (dense_w * x1).cwiseAbs().sum() +
               config.mu3 * (dense_w * (d - x1)).cwiseAbs().sum() + config.mu4 * (d - x1).cwiseAbs().sum();
    };
    auto sign = [](const Matrix& a) { return Matrix(a.unaryExpr([](double v) { return double((v > 0) - (v < 0)); })); };
    Matrix x1 = csbg::adjoint(op, p.y);
    double best = f(x1);
    for (int k = 1; k <= 100000; ++k) {
        Matrix aug(n, 1 + m);
        aug << model, x1;
        auto svd = oracle::jacobi_svd(aug);
        Matrix g = config.mu1 * (svd.U * svd.V.transpose()).rightCols(m) +
                   config.mu2 * dense_w.transpose() * sign(dense_w * x1) -
                   config.mu3 * dense_w.transpose() * sign(dense_w * (d - x1)) - config.mu4 * sign(d - x1);
        x1 -= (0.05 / std::sqrt(static_cast<double>(k))) * g;
        best = std::min(best, f(x1));
    }
    EXPECT_LE(solver_obj, best + 1e-3) << "solver " << solver_obj << " oracle " << best;
}

TEST(SolveBatch, NonFiniteDataRaisesNumericalFailure) {
    auto op = csbg::build_operator(64, 0.5, 13);
    Matrix y = Matrix::Ones(op.rate_r, 2);
    y(3, 1) = std::numeric_limits<double>::quiet_NaN();
    BatchProblem p{op, y, Matrix(64, 0), 8, 8};
    try {
        csbg::solve_batch(p, SolverConfig{});
        FAIL() << "expected NumericalFailure";
    } catch (const csbg::NumericalFailure& e) {
        EXPECT_EQ(e.iteration(), 1u);
    }
}

TEST(SolveBatch, ValidatesInputs) {
    auto op = csbg::build_operator(64, 0.5, 14);
    BatchProblem wrong_dims{op, Matrix::Ones(op.rate_r, 2), Matrix(64, 0), 8, 7};
    EXPECT_THROW(csbg::solve_batch(wrong_dims, SolverConfig{}), csbg::InvalidArgument);
    BatchProblem wrong_rows{op, Matrix::Ones(op.rate_r + 1, 2), Matrix(64, 0), 8, 8};
    EXPECT_THROW(csbg::solve_batch(wrong_rows, SolverConfig{}), csbg::InvalidArgument);
    BatchProblem wrong_model{op, Matrix::Ones(op.rate_r, 2), Matrix::Ones(63, 1), 8, 8};
    EXPECT_THROW(csbg::solve_batch(wrong_model, SolverConfig{}), csbg::InvalidArgument);

    BatchProblem ok{op, Matrix::Ones(op.rate_r, 2), Matrix(64, 0), 8, 8};
    SolverConfig bad;
    bad.mu2 = -1.0;
    EXPECT_THROW(csbg::solve_batch(ok, bad), csbg::InvalidArgument);
    bad = SolverConfig{};
    bad.beta[4] = 0.0;
    EXPECT_THROW(csbg::solve_batch(ok, bad), csbg::InvalidArgument);
    bad = SolverConfig{};
    bad.max_iter = 0;
    EXPECT_THROW(csbg::solve_batch(ok, bad), csbg::InvalidArgument);
}
