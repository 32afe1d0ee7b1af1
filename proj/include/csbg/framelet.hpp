#pragma once

// One-level undecimated piecewise-linear B-spline framelet transform.
//
//   h0 = [1, 2, 1] / 4     h1 = sqrt(2)/4 [1, 0, -1]     h2 = [-1, 2, -1] / 4
//
// Boundaries use half-sample symmetric extension (x[-1] = x[0],
// x[n] = x[n-1]). Symmetric and antisymmetric odd-length filters commute with
// that extension, so the 1-D bank stays a Parseval frame on [0, n) and the
// tensor-product 2-D transform satisfies W^T W = I exactly.

#include "csbg/common.hpp"

#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace csbg {

inline constexpr int kFrameletFilters = 3;
inline constexpr int kFrameletSubbands = kFrameletFilters * kFrameletFilters;

struct FrameletCoeffs {
    int width = 0;
    int height = 0;
    // Subband (i, j) holds filter i along y and filter j along x, stored
    // row-major, at offset (3 * i + j) * width * height.
    std::vector<double> data;

    std::size_t plane_size() const { return static_cast<std::size_t>(width) * height; }

    std::span<double> subband(int i, int j) {
        return {data.data() + static_cast<std::size_t>(3 * i + j) * plane_size(), plane_size()};
    }
    std::span<const double> subband(int i, int j) const {
        return {data.data() + static_cast<std::size_t>(3 * i + j) * plane_size(), plane_size()};
    }
};

namespace detail {

inline const std::array<std::array<double, 3>, 3>& framelet_taps() {
    static const std::array<std::array<double, 3>, 3> taps = {{
        {0.25, 0.5, 0.25},
        {std::sqrt(2.0) / 4.0, 0.0, -std::sqrt(2.0) / 4.0},
        {-0.25, 0.5, -0.25},
    }};
    return taps;
}

inline int reflect(int k, int n) {
    if (k < 0) return -k - 1;
    if (k >= n) return 2 * n - k - 1;
    return k;
}

// Horizontal pass: out[k] = h[0] in[k-1] + h[1] in[k] + h[2] in[k+1], with
// reflected end samples.
inline void filter_row(const double* in, double* out, int count, const std::array<double, 3>& h) {
    out[0] = h[0] * in[0] + h[1] * in[0] + h[2] * in[1];
    for (int k = 1; k < count - 1; ++k) out[k] = h[0] * in[k - 1] + h[1] * in[k] + h[2] * in[k + 1];
    out[count - 1] = h[0] * in[count - 2] + h[1] * in[count - 1] + h[2] * in[count - 1];
}

// Transpose of filter_row, accumulated into out.
inline void filter_row_adjoint(const double* in, double* out, int count, const std::array<double, 3>& h) {
    out[0] += h[0] * in[0] + h[1] * in[0] + h[0] * in[1];
    for (int k = 1; k < count - 1; ++k) out[k] += h[2] * in[k - 1] + h[1] * in[k] + h[0] * in[k + 1];
    out[count - 1] += h[2] * in[count - 2] + h[1] * in[count - 1] + h[2] * in[count - 1];
}

// Vertical pass over a row-major plane, one whole row at a time.
inline void filter_cols(const double* in, double* out, int width, int height, const std::array<double, 3>& h) {
    for (int y = 0; y < height; ++y) {
        const double* up = in + static_cast<std::size_t>(reflect(y - 1, height)) * width;
        const double* mid = in + static_cast<std::size_t>(y) * width;
        const double* down = in + static_cast<std::size_t>(reflect(y + 1, height)) * width;
        double* dst = out + static_cast<std::size_t>(y) * width;
        for (int x = 0; x < width; ++x) dst[x] = h[0] * up[x] + h[1] * mid[x] + h[2] * down[x];
    }
}

inline void filter_cols_adjoint(const double* in, double* out, int width, int height, const std::array<double, 3>& h) {
    for (int y = 0; y < height; ++y) {
        double* up = out + static_cast<std::size_t>(reflect(y - 1, height)) * width;
        double* mid = out + static_cast<std::size_t>(y) * width;
        double* down = out + static_cast<std::size_t>(reflect(y + 1, height)) * width;
        const double* src = in + static_cast<std::size_t>(y) * width;
        for (int x = 0; x < width; ++x) {
            up[x] += h[0] * src[x];
            mid[x] += h[1] * src[x];
            down[x] += h[2] * src[x];
        }
    }
}

inline void analysis_into(std::span<const double> image, int width, int height, std::span<double> coeffs,
                          std::vector<double>& rowpass) {
    const auto& taps = framelet_taps();
    const std::size_t plane = static_cast<std::size_t>(width) * height;
    rowpass.resize(kFrameletFilters * plane);
    for (int j = 0; j < kFrameletFilters; ++j)
        for (int y = 0; y < height; ++y)
            filter_row(image.data() + static_cast<std::size_t>(y) * width,
                       rowpass.data() + j * plane + static_cast<std::size_t>(y) * width, width, taps[j]);
    for (int i = 0; i < kFrameletFilters; ++i)
        for (int j = 0; j < kFrameletFilters; ++j)
            filter_cols(rowpass.data() + j * plane, coeffs.data() + (3 * i + j) * plane, width, height, taps[i]);
}

inline void synthesis_into(std::span<const double> coeffs, int width, int height, std::span<double> image,
                           std::vector<double>& rowpass) {
    const auto& taps = framelet_taps();
    const std::size_t plane = static_cast<std::size_t>(width) * height;
    rowpass.assign(kFrameletFilters * plane, 0.0);
    for (int i = 0; i < kFrameletFilters; ++i)
        for (int j = 0; j < kFrameletFilters; ++j)
            filter_cols_adjoint(coeffs.data() + (3 * i + j) * plane, rowpass.data() + j * plane, width, height,
                                taps[i]);
    std::fill(image.begin(), image.end(), 0.0);
    for (int j = 0; j < kFrameletFilters; ++j)
        for (int y = 0; y < height; ++y)
            filter_row_adjoint(rowpass.data() + j * plane + static_cast<std::size_t>(y) * width,
                               image.data() + static_cast<std::size_t>(y) * width, width, taps[j]);
}

inline void check_dims(int width, int height) {
    require(width >= 2 && height >= 2, "framelet transform needs width >= 2 and height >= 2");
}

}  // namespace detail

/// Image is row-major, width * height samples.
inline FrameletCoeffs analysis(std::span<const double> image, int width, int height) {
    detail::check_dims(width, height);
    require(image.size() == static_cast<std::size_t>(width) * height, "image size does not match dimensions");
    FrameletCoeffs c{width, height, std::vector<double>(kFrameletSubbands * image.size())};
    std::vector<double> work;
    detail::analysis_into(image, width, height, c.data, work);
    return c;
}

inline std::vector<double> synthesis(const FrameletCoeffs& coeffs) {
    detail::check_dims(coeffs.width, coeffs.height);
    require(coeffs.data.size() == kFrameletSubbands * coeffs.plane_size(),
            "framelet coefficients must hold 9 full-size subbands");
    std::vector<double> image(coeffs.plane_size());
    std::vector<double> work;
    detail::synthesis_into(coeffs.data, coeffs.width, coeffs.height, image, work);
    return image;
}

inline double coeff_l1(const FrameletCoeffs& coeffs) {
    double s = 0.0;
    for (double v : coeffs.data) s += std::abs(v);
    return s;
}

/// W o X: frames are the columns of an n x m matrix; result is 9n x m.
inline Matrix analysis(const Matrix& frames, int width, int height) {
    detail::check_dims(width, height);
    const Eigen::Index n = static_cast<Eigen::Index>(width) * height;
    require(frames.rows() == n, "frame matrix row count does not match dimensions");
    Matrix out(kFrameletSubbands * n, frames.cols());
    parallel_for(static_cast<std::size_t>(frames.cols()), static_cast<std::size_t>(60 * n), [&](std::size_t j) {
        std::vector<double> work;
        auto col = static_cast<Eigen::Index>(j);
        detail::analysis_into({frames.col(col).data(), static_cast<std::size_t>(n)}, width, height,
                              {out.col(col).data(), static_cast<std::size_t>(kFrameletSubbands * n)}, work);
    });
    return out;
}

/// W^T applied column-wise to a 9n x m coefficient matrix.
inline Matrix synthesis(const Matrix& coeffs, int width, int height) {
    detail::check_dims(width, height);
    const Eigen::Index n = static_cast<Eigen::Index>(width) * height;
    require(coeffs.rows() == kFrameletSubbands * n, "coefficient matrix must have 9 * width * height rows");
    Matrix out(n, coeffs.cols());
    parallel_for(static_cast<std::size_t>(coeffs.cols()), static_cast<std::size_t>(60 * n), [&](std::size_t j) {
        std::vector<double> work;
        auto col = static_cast<Eigen::Index>(j);
        detail::synthesis_into({coeffs.col(col).data(), static_cast<std::size_t>(kFrameletSubbands * n)}, width,
                               height, {out.col(col).data(), static_cast<std::size_t>(n)}, work);
    });
    return out;
}

}  // namespace csbg
