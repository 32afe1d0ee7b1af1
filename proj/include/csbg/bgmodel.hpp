#pragma once

// Low-dimensional background model M = U_p D_p and its incremental update.
//
// The update takes the SVD of A = [w_b M, w_a X1] through the small Gram
// matrix A^T A, so only matrices of width p + m are ever formed and the right
// singular vectors of the full frame history are never needed.

#include "csbg/binary_io.hpp"
#include "csbg/common.hpp"
#include "csbg/prox.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace csbg {

struct ModelParams {
    std::size_t p_max = 10;
    double w_a = 1.0;
    double w_b = 0.95;
    double energy_floor = 1e-6;
};

struct BackgroundModel {
    Matrix M;  // n x p, mutually orthogonal columns with nonincreasing norms
    ModelParams params;

    Eigen::Index rank() const { return M.cols(); }
    bool empty() const { return M.cols() == 0; }
};

/// Widths of every matrix formed during one update_model call.
struct UpdateTrace {
    Eigen::Index concat_cols = 0;
    Eigen::Index gram_dim = 0;
    Eigen::Index widest = 0;
};

inline BackgroundModel empty_model(Eigen::Index n, const ModelParams& params) {
    return {Matrix(n, 0), params};
}

namespace detail {

inline Eigen::Index kept_components(const Vector& sigma, const ModelParams& params) {
    if (sigma.size() == 0 || sigma(0) <= 0.0) return 0;
    Eigen::Index keep = 0;
    while (keep < sigma.size() && sigma(keep) >= params.energy_floor * sigma(0) && sigma(keep) > 0.0) ++keep;
    return std::min<Eigen::Index>(keep, static_cast<Eigen::Index>(params.p_max));
}

inline void fix_column_signs(Matrix& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            if (m(r, c) == 0.0) continue;
            if (m(r, c) < 0.0) m.col(c) *= -1.0;
            break;
        }
}

}  // namespace detail

inline BackgroundModel model_from_frames(const Matrix& background, const ModelParams& params) {
    require(background.rows() >= 1 && background.cols() >= 1, "background matrix must be nonempty");
    ThinSVD d = thin_svd(background);
    Eigen::Index p = detail::kept_components(d.sigma, params);
    BackgroundModel model{d.U.leftCols(p) * d.sigma.head(p).asDiagonal(), params};
    return model;
}

inline BackgroundModel update_model(const BackgroundModel& model, const Matrix& frames,
                                    UpdateTrace* trace = nullptr) {
    require(frames.rows() == model.M.rows() || model.M.rows() == 0, "new frames must match the model's row count");
    require(frames.cols() >= 1, "update needs at least one frame");
    const ModelParams& params = model.params;
    const Eigen::Index p = model.rank(), m = frames.cols();

    Matrix concat(frames.rows(), p + m);
    if (p > 0) concat.leftCols(p) = params.w_b * model.M;
    concat.rightCols(m) = params.w_a * frames;

    Matrix gram = concat.transpose() * concat;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    require(eig.info() == Eigen::Success, "Gram eigendecomposition failed");

    // Eigen orders eigenvalues ascending; walk from the top.
    const Vector& lambda = eig.eigenvalues();
    const Eigen::Index k = lambda.size();
    const double top = k > 0 ? std::max(lambda(k - 1), 0.0) : 0.0;
    Vector sigma(k);
    Eigen::Index usable = 0;
    for (Eigen::Index i = 0; i < k; ++i) {
        double l = lambda(k - 1 - i);
        if (top <= 0.0 || l < kSingularClamp * top) break;
        sigma(usable++) = std::sqrt(l);
    }
    sigma.conservativeResize(usable);

    Eigen::Index keep = detail::kept_components(sigma, params);
    Matrix basis(concat.cols(), keep);
    for (Eigen::Index i = 0; i < keep; ++i) basis.col(i) = eig.eigenvectors().col(k - 1 - i);

    // U_p D_p = A V_p, so no division by sigma is needed.
    BackgroundModel next{concat * basis, params};
    detail::fix_column_signs(next.M);

    if (trace) {
        trace->concat_cols = concat.cols();
        trace->gram_dim = gram.cols();
        trace->widest = std::max({concat.cols(), gram.cols(), basis.cols()});
    }
    return next;
}

// Checkpoint: "CSBM", n, p, p_max (u32), w_a, w_b, energy_floor (f64), then
// the n x p matrix column-major as f64. All little-endian.

inline void write_model(std::ostream& os, const BackgroundModel& model) {
    binio::put_magic(os, "CSBM");
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(model.M.rows()));
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(model.M.cols()));
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(model.params.p_max));
    binio::put<double>(os, model.params.w_a);
    binio::put<double>(os, model.params.w_b);
    binio::put<double>(os, model.params.energy_floor);
    for (Eigen::Index i = 0; i < model.M.size(); ++i) binio::put<double>(os, model.M.data()[i]);
}

inline BackgroundModel read_model(std::istream& is) {
    binio::expect_magic(is, "CSBM");
    auto n = binio::get<std::uint32_t>(is, "model rows");
    auto p = binio::get<std::uint32_t>(is, "model rank");
    BackgroundModel model;
    model.params.p_max = binio::get<std::uint32_t>(is, "rank cap");
    model.params.w_a = binio::get<double>(is, "w_a");
    model.params.w_b = binio::get<double>(is, "w_b");
    model.params.energy_floor = binio::get<double>(is, "energy floor");
    if (p > model.params.p_max) throw FormatError("model rank exceeds its cap");
    model.M.resize(n, p);
    for (Eigen::Index i = 0; i < model.M.size(); ++i) model.M.data()[i] = binio::get<double>(is, "model entry");
    return model;
}

inline void save_model(const std::string& path, const BackgroundModel& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    write_model(os, model);
}

inline BackgroundModel load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path);
    return read_model(is);
}

}  // namespace csbg
