#pragma once

// Proximal maps for the l1 and nuclear norms, and the thin SVD they rely on.

#include "csbg/common.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace csbg {

struct ThinSVD {
    Matrix U;        // n x k, orthonormal columns
    Vector sigma;    // k, nonincreasing, >= 0
    Matrix V;        // m x k, orthonormal columns

    Matrix reconstruct() const { return U * sigma.asDiagonal() * V.transpose(); }
};

/// Relative cutoff below which singular values are treated as exact zeros.
inline constexpr double kSingularClamp = 1e-12;

inline Matrix soft_threshold(const Matrix& a, double tau) {
    require(tau >= 0.0, "soft threshold must be nonnegative");
    return a.unaryExpr([tau](double v) {
        double mag = std::abs(v) - tau;
        return mag > 0.0 ? std::copysign(mag, v) : 0.0;
    });
}

/// In-place variant for hot loops.
inline void soft_threshold_inplace(Matrix& a, double tau) {
    require(tau >= 0.0, "soft threshold must be nonnegative");
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        double v = a.data()[i];
        double mag = std::abs(v) - tau;
        a.data()[i] = mag > 0.0 ? std::copysign(mag, v) : 0.0;
    }
}

namespace detail {

// Tall input (rows >= cols): Householder QR, then two-sided Jacobi on the small
// triangular factor. Wide input goes through the transpose.
inline ThinSVD tall_svd(const Matrix& a, bool vectors) {
    const Eigen::Index k = a.cols();
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    ThinSVD out;
    if (!vectors) {
        out.sigma = Eigen::JacobiSVD<Matrix>(r).singularValues();
        return out;
    }
    Eigen::JacobiSVD<Matrix> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    out.sigma = svd.singularValues();
    out.U = qr.householderQ() * Matrix::Identity(a.rows(), k);
    out.U = out.U * svd.matrixU();
    out.V = svd.matrixV();
    return out;
}

inline void clamp_small(Vector& sigma) {
    const double cutoff = sigma.size() > 0 ? kSingularClamp * sigma(0) : 0.0;
    for (Eigen::Index i = 0; i < sigma.size(); ++i)
        if (sigma(i) < cutoff) sigma(i) = 0.0;
}

}  // namespace detail

/// Thin SVD with k = min(n, m). Signs are fixed so that the first nonzero
/// entry of every U column is nonnegative; singular values below
/// 1e-12 * sigma_1 are set to zero.
inline ThinSVD thin_svd(const Matrix& a) {
    require(a.rows() >= 1 && a.cols() >= 1, "thin_svd needs a nonempty matrix");
    require(all_finite(a), "thin_svd input has non-finite entries");

    ThinSVD out;
    if (a.rows() >= a.cols()) {
        out = detail::tall_svd(a, true);
    } else {
        ThinSVD t = detail::tall_svd(a.transpose(), true);
        out.U = std::move(t.V);
        out.sigma = std::move(t.sigma);
        out.V = std::move(t.U);
    }
    detail::clamp_small(out.sigma);

    for (Eigen::Index c = 0; c < out.U.cols(); ++c) {
        for (Eigen::Index r = 0; r < out.U.rows(); ++r) {
            double v = out.U(r, c);
            if (v == 0.0) continue;
            if (v < 0.0) {
                out.U.col(c) *= -1.0;
                out.V.col(c) *= -1.0;
            }
            break;
        }
    }
    return out;
}

inline Vector singular_values(const Matrix& a) {
    require(a.rows() >= 1 && a.cols() >= 1, "singular_values needs a nonempty matrix");
    require(all_finite(a), "singular_values input has non-finite entries");
    Vector sigma = a.rows() >= a.cols() ? detail::tall_svd(a, false).sigma
                                        : detail::tall_svd(a.transpose(), false).sigma;
    detail::clamp_small(sigma);
    return sigma;
}

inline Matrix svt(const Matrix& a, double tau) {
    require(tau >= 0.0, "singular value threshold must be nonnegative");
    ThinSVD d = thin_svd(a);
    Vector shrunk = (d.sigma.array() - tau).max(0.0).matrix();
    Eigen::Index keep = 0;
    while (keep < shrunk.size() && shrunk(keep) > 0.0) ++keep;
    if (keep == 0) return Matrix::Zero(a.rows(), a.cols());
    return d.U.leftCols(keep) * shrunk.head(keep).asDiagonal() * d.V.leftCols(keep).transpose();
}

inline double nuclear_norm(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    return singular_values(a).sum();
}

inline double matrix_l1(const Matrix& a) { return a.cwiseAbs().sum(); }

}  // namespace csbg
