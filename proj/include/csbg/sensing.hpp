#pragma once

// Compressive measurement of frames with randomly selected rows of a
// Walsh-Hadamard matrix, and its adjoint.
//
// A frame x of n pixels is permuted, zero-padded to N = 2^k >= n, transformed
// with the Sylvester-ordered Hadamard matrix and restricted to the row subset
// Omega, scaled by 1/sqrt(N). When n == N the rows are orthonormal
// (Phi Phi^T = I_r) and Phi^T Phi is an orthogonal projection.

#include "csbg/common.hpp"
#include "csbg/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace csbg {

struct SensingOperator {
    std::uint32_t n_pixels = 0;
    std::uint32_t padded_dim = 0;
    std::uint32_t rate_r = 0;
    std::vector<std::uint32_t> rows;        // strictly increasing, size rate_r
    std::vector<std::uint32_t> pixel_perm;  // empty when permutation is off
    std::uint64_t seed = 0;

    bool permuted() const { return !pixel_perm.empty(); }

    /// Rows are exactly orthonormal only without padding.
    bool tight() const { return n_pixels == padded_dim; }
};

inline std::uint32_t measurement_count(std::uint32_t n_pixels, double rate) {
    require(rate > 0.0 && rate <= 1.0, "sensing rate must lie in (0, 1]");
    require(n_pixels >= 1, "frame must have at least one pixel");
    // Guard against products such as 0.1 * 100 landing a hair above an integer.
    auto r = static_cast<std::uint32_t>(std::ceil(rate * n_pixels - 1e-9));
    r = std::max<std::uint32_t>(r, 1);
    return r;
}

/// Builds the operator with an explicit measurement count. Omega always holds
/// the DC row 0, which carries the frame mean; the other r - 1 rows are the
/// first draws of a Fisher-Yates shuffle of [1, N). The pixel permutation is
/// drawn next from the same mt19937_64 stream.
inline SensingOperator build_operator_with_count(std::uint32_t n_pixels, std::uint32_t r,
                                                 std::uint64_t seed, bool permute = true) {
    require(n_pixels >= 1, "frame must have at least one pixel");
    SensingOperator op;
    op.n_pixels = n_pixels;
    op.padded_dim = std::bit_ceil(n_pixels);
    require(r >= 1 && r <= op.padded_dim, "measurement count must lie in [1, N]");
    op.rate_r = r;
    op.seed = seed;
    Rng rng(seed);
    op.rows = rng.sample_without_replacement(op.padded_dim - 1, r - 1);
    for (auto& row : op.rows) row += 1;
    op.rows.insert(op.rows.begin(), 0u);
    std::sort(op.rows.begin(), op.rows.end());
    if (permute) op.pixel_perm = rng.permutation(n_pixels);
    return op;
}

inline SensingOperator build_operator(std::uint32_t n_pixels, double rate, std::uint64_t seed,
                                      bool permute = true) {
    return build_operator_with_count(n_pixels, measurement_count(n_pixels, rate), seed, permute);
}

/// In-place unnormalized fast Walsh-Hadamard transform, natural ordering.
inline void fwht_inplace(std::span<double> x) {
    const std::size_t n = x.size();
    require(n >= 1 && std::has_single_bit(n), "fwht length must be a power of two");
    for (std::size_t half = 1; half < n; half <<= 1) {
        for (std::size_t i = 0; i < n; i += 2 * half) {
            for (std::size_t j = i; j < i + half; ++j) {
                double a = x[j], b = x[j + half];
                x[j] = a + b;
                x[j + half] = a - b;
            }
        }
    }
}

inline std::vector<double> fwht(std::vector<double> x) {
    fwht_inplace(x);
    return x;
}

namespace detail {

inline void apply_into(const SensingOperator& op, std::span<const double> frame, std::span<double> out,
                       std::vector<double>& work) {
    work.assign(op.padded_dim, 0.0);
    if (op.permuted()) {
        for (std::uint32_t i = 0; i < op.n_pixels; ++i) work[i] = frame[op.pixel_perm[i]];
    } else {
        std::copy(frame.begin(), frame.end(), work.begin());
    }
    fwht_inplace(work);
    const double scale = 1.0 / std::sqrt(static_cast<double>(op.padded_dim));
    for (std::uint32_t k = 0; k < op.rate_r; ++k) out[k] = work[op.rows[k]] * scale;
}

inline void adjoint_into(const SensingOperator& op, std::span<const double> meas, std::span<double> out,
                         std::vector<double>& work) {
    work.assign(op.padded_dim, 0.0);
    for (std::uint32_t k = 0; k < op.rate_r; ++k) work[op.rows[k]] = meas[k];
    fwht_inplace(work);
    const double scale = 1.0 / std::sqrt(static_cast<double>(op.padded_dim));
    if (op.permuted()) {
        for (std::uint32_t i = 0; i < op.n_pixels; ++i) out[op.pixel_perm[i]] = work[i] * scale;
    } else {
        for (std::uint32_t i = 0; i < op.n_pixels; ++i) out[i] = work[i] * scale;
    }
}

inline std::size_t transform_cost(const SensingOperator& op) {
    return static_cast<std::size_t>(op.padded_dim) * static_cast<std::size_t>(std::bit_width(op.padded_dim));
}

}  // namespace detail

inline std::vector<double> apply(const SensingOperator& op, std::span<const double> frame) {
    require(frame.size() == op.n_pixels, "frame length does not match operator");
    std::vector<double> out(op.rate_r), work;
    detail::apply_into(op, frame, out, work);
    return out;
}

inline std::vector<double> adjoint(const SensingOperator& op, std::span<const double> meas) {
    require(meas.size() == op.rate_r, "measurement length does not match operator");
    std::vector<double> out(op.n_pixels), work;
    detail::adjoint_into(op, meas, out, work);
    return out;
}

/// Column-wise Phi o X for an n x m frame matrix.
inline Matrix apply(const SensingOperator& op, const Matrix& frames) {
    require(frames.rows() == op.n_pixels, "frame matrix row count does not match operator");
    Matrix out(op.rate_r, frames.cols());
    parallel_for(static_cast<std::size_t>(frames.cols()), detail::transform_cost(op), [&](std::size_t j) {
        std::vector<double> work;
        auto col = static_cast<Eigen::Index>(j);
        detail::apply_into(op, {frames.col(col).data(), op.n_pixels}, {out.col(col).data(), op.rate_r}, work);
    });
    return out;
}

inline Matrix adjoint(const SensingOperator& op, const Matrix& meas) {
    require(meas.rows() == op.rate_r, "measurement matrix row count does not match operator");
    Matrix out(op.n_pixels, meas.cols());
    parallel_for(static_cast<std::size_t>(meas.cols()), detail::transform_cost(op), [&](std::size_t j) {
        std::vector<double> work;
        auto col = static_cast<Eigen::Index>(j);
        detail::adjoint_into(op, {meas.col(col).data(), op.rate_r}, {out.col(col).data(), op.n_pixels}, work);
    });
    return out;
}

/// Phi^T Phi applied column-wise.
inline Matrix gram_apply(const SensingOperator& op, const Matrix& frames) { return adjoint(op, apply(op, frames)); }

}  // namespace csbg
