#pragma once

// Streaming reconstruction: frames are sensed into a measurement stream, the
// stream is consumed batch_m columns at a time, each batch is solved against
// the current background model, and the model is updated from the batch's
// background before the next batch arrives.

#include "csbg/bgmodel.hpp"
#include "csbg/binary_io.hpp"
#include "csbg/common.hpp"
#include "csbg/sensing.hpp"
#include "csbg/solver.hpp"
#include "csbg/video.hpp"

#include <array>
#include <bit>
#include <chrono>
#include <fstream>
#include <string>
#include <vector>

namespace csbg {

inline constexpr std::uint16_t kStreamVersion = 1;

/// Pixel values are divided by this before sensing and multiplied back on output.
inline constexpr double kIntensityScale = 255.0;

struct MeasurementStream {
    std::uint32_t n_pixels = 0;
    std::uint32_t padded_dim = 0;
    std::uint32_t rate_r = 0;
    std::uint32_t batch_hint = 8;
    std::uint32_t frame_count = 0;
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint64_t seed = 0;
    bool permuted = true;
    Matrix data;  // rate_r x frame_count, column j measures frame j

    SensingOperator op() const { return build_operator_with_count(n_pixels, rate_r, seed, permuted); }
};

inline MeasurementStream sense_video(const VideoBuffer& video, double rate, std::uint64_t seed,
                                     std::uint32_t batch_hint = 8, bool permute = true) {
    require(video.frame_count() >= 1, "video must contain at least one frame");
    require(video.width >= 2 && video.height >= 2, "frames must be at least 2 x 2");
    for (const auto& f : video.frames) require(f.size() == video.pixels(), "all frames must share dimensions");
    const auto n = static_cast<std::uint32_t>(video.pixels());
    SensingOperator op = build_operator(n, rate, seed, permute);
    MeasurementStream s;
    s.n_pixels = n;
    s.padded_dim = op.padded_dim;
    s.rate_r = op.rate_r;
    s.batch_hint = batch_hint;
    s.frame_count = static_cast<std::uint32_t>(video.frame_count());
    s.width = static_cast<std::uint32_t>(video.width);
    s.height = static_cast<std::uint32_t>(video.height);
    s.seed = seed;
    s.permuted = permute;
    s.data = apply(op, video.to_matrix(1.0 / kIntensityScale));
    return s;
}

// Stream file: "CSMS", version u16, n_pixels, N, r, batch hint, frame_count,
// width, height (u32), seed (u64), perm flag (u8), then r x frame_count f64
// column-major. All little-endian.

inline void write_stream(std::ostream& os, const MeasurementStream& s) {
    binio::put_magic(os, "CSMS");
    binio::put<std::uint16_t>(os, kStreamVersion);
    for (std::uint32_t v : {s.n_pixels, s.padded_dim, s.rate_r, s.batch_hint, s.frame_count, s.width, s.height})
        binio::put<std::uint32_t>(os, v);
    binio::put<std::uint64_t>(os, s.seed);
    binio::put<std::uint8_t>(os, s.permuted ? 1 : 0);
    for (Eigen::Index i = 0; i < s.data.size(); ++i) binio::put<double>(os, s.data.data()[i]);
}

inline MeasurementStream read_stream(std::istream& is) {
    binio::expect_magic(is, "CSMS");
    if (binio::get<std::uint16_t>(is, "version") != kStreamVersion) throw FormatError("unsupported stream version");
    MeasurementStream s;
    s.n_pixels = binio::get<std::uint32_t>(is, "n_pixels");
    s.padded_dim = binio::get<std::uint32_t>(is, "padded dimension");
    s.rate_r = binio::get<std::uint32_t>(is, "measurement count");
    s.batch_hint = binio::get<std::uint32_t>(is, "batch hint");
    s.frame_count = binio::get<std::uint32_t>(is, "frame count");
    s.width = binio::get<std::uint32_t>(is, "width");
    s.height = binio::get<std::uint32_t>(is, "height");
    s.seed = binio::get<std::uint64_t>(is, "seed");
    auto flag = binio::get<std::uint8_t>(is, "permutation flag");
    if (flag > 1) throw FormatError("bad permutation flag");
    s.permuted = flag == 1;

    if (s.n_pixels == 0 || static_cast<std::uint64_t>(s.width) * s.height != s.n_pixels)
        throw FormatError("stream dimensions are inconsistent");
    if (s.width < 2 || s.height < 2) throw FormatError("stream frames are smaller than 2 x 2");
    if (s.padded_dim != std::bit_ceil(s.n_pixels)) throw FormatError("stream padded dimension is inconsistent");
    if (s.rate_r == 0 || s.rate_r > s.padded_dim) throw FormatError("stream measurement count out of range");
    if (s.frame_count == 0) throw FormatError("stream holds no frames");

    s.data.resize(s.rate_r, s.frame_count);
    for (Eigen::Index i = 0; i < s.data.size(); ++i) s.data.data()[i] = binio::get<double>(is, "measurement payload");
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after measurement payload");
    return s;
}

inline void save_stream(const std::string& path, const MeasurementStream& s) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    write_stream(os, s);
}

inline MeasurementStream load_stream(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path);
    return read_stream(is);
}

struct MaskParams {
    double theta = 0.1;   // fraction of the frame's peak filtered magnitude
    double floor = 0.02;  // absolute minimum threshold, same units as the plane
};

/// 3x3 median of |plane| (replicated borders), then threshold at
/// max(theta * peak, floor).
inline std::vector<std::uint8_t> postprocess_foreground(std::span<const double> plane, int width, int height,
                                                        const MaskParams& params = {}) {
    require(width >= 1 && height >= 1 && plane.size() == static_cast<std::size_t>(width) * height,
            "plane size does not match dimensions");
    std::vector<double> med(plane.size());
    std::array<double, 9> win;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            int k = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    int yy = std::clamp(y + dy, 0, height - 1), xx = std::clamp(x + dx, 0, width - 1);
                    win[k++] = std::abs(plane[static_cast<std::size_t>(yy) * width + xx]);
                }
            std::nth_element(win.begin(), win.begin() + 4, win.end());
            med[static_cast<std::size_t>(y) * width + x] = win[4];
        }
    double peak = *std::max_element(med.begin(), med.end());
    double thr = std::max(params.theta * peak, params.floor);
    std::vector<std::uint8_t> mask(plane.size(), 0);
    for (std::size_t i = 0; i < med.size(); ++i) mask[i] = (med[i] > thr && med[i] > 0.0) ? 1 : 0;
    return mask;
}

struct BatchDiagnostics {
    std::size_t index = 0;
    std::size_t first_frame = 0;
    std::size_t frames = 0;
    std::size_t iterations = 0;
    bool converged = false;
    double final_residual = 0.0;
    Eigen::Index model_rank_before = 0;
    Eigen::Index model_rank_after = 0;
    Eigen::Index svt_width = 0;
    Eigen::Index update_width = 0;
    double seconds = 0.0;
};

struct ReconstructionResult {
    VideoBuffer backgrounds;  // gray levels, unclamped
    VideoBuffer foregrounds;  // signed gray levels
    ForegroundMask masks;
    std::vector<BatchDiagnostics> batches;
    BackgroundModel model;
    std::size_t peak_buffered = 0;
};

/// Incremental front end: feed measurement columns in arrival order; every
/// batch_m columns trigger a solve and a model update. finish() solves any
/// partial final batch.
class StreamReconstructor {
public:
    StreamReconstructor(SensingOperator op, int width, int height, SolverConfig solver, ModelParams model_params,
                        MaskParams mask_params = {})
        : op_(std::move(op)), width_(width), height_(height), solver_(solver), mask_(mask_params),
          pending_(op_.rate_r, 0) {
        solver_.validate();
        require(static_cast<std::uint64_t>(width) * height == op_.n_pixels, "frame size does not match operator");
        result_.model = empty_model(op_.n_pixels, model_params);
        result_.backgrounds = {width, height, {}};
        result_.foregrounds = {width, height, {}};
        result_.masks = {width, height, {}};
    }

    void push(const Vector& column) {
        require(column.size() == op_.rate_r, "measurement column length does not match operator");
        pending_.conservativeResize(Eigen::NoChange, pending_.cols() + 1);
        pending_.col(pending_.cols() - 1) = column;
        result_.peak_buffered = std::max(result_.peak_buffered, static_cast<std::size_t>(pending_.cols()));
        if (static_cast<std::size_t>(pending_.cols()) == solver_.batch_m) solve_pending();
    }

    void finish() {
        if (pending_.cols() > 0) solve_pending();
    }

    const ReconstructionResult& result() const { return result_; }
    ReconstructionResult take() { return std::move(result_); }
    std::size_t frames_emitted() const { return result_.backgrounds.frame_count(); }

private:
    void solve_pending() {
        BatchDiagnostics d;
        d.index = result_.batches.size();
        d.first_frame = frames_emitted();
        d.frames = static_cast<std::size_t>(pending_.cols());
        d.model_rank_before = result_.model.rank();
        auto start = std::chrono::steady_clock::now();

        BatchProblem problem{op_, pending_, result_.model.M, width_, height_};
        BatchSolution sol;
        try {
            sol = solve_batch(problem, solver_);
        } catch (const NumericalFailure& e) {
            throw NumericalFailure(std::string("batch ") + std::to_string(d.index) + ": " + e.what(), e.iteration(),
                                   static_cast<long>(d.index));
        }

        result_.backgrounds.append_columns(sol.X1, kIntensityScale);
        result_.foregrounds.append_columns(sol.X2, kIntensityScale);
        for (Eigen::Index j = 0; j < sol.X2.cols(); ++j)
            result_.masks.frames.push_back(
                postprocess_foreground({sol.X2.col(j).data(), op_.n_pixels}, width_, height_, mask_));

        UpdateTrace trace;
        result_.model = update_model(result_.model, sol.X1, &trace);

        d.iterations = sol.iterations;
        d.converged = sol.converged;
        d.final_residual = sol.final_residual;
        d.svt_width = sol.svt_width;
        d.update_width = trace.widest;
        d.model_rank_after = result_.model.rank();
        d.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result_.batches.push_back(d);
        pending_.resize(op_.rate_r, 0);
    }

    SensingOperator op_;
    int width_, height_;
    SolverConfig solver_;
    MaskParams mask_;
    Matrix pending_;
    ReconstructionResult result_;
};

inline ReconstructionResult reconstruct_stream(const MeasurementStream& stream, const SolverConfig& solver,
                                               const ModelParams& model_params, const MaskParams& mask_params = {}) {
    require(stream.data.rows() == stream.rate_r && stream.data.cols() == stream.frame_count,
            "stream payload does not match its header");
    StreamReconstructor rec(stream.op(), static_cast<int>(stream.width), static_cast<int>(stream.height), solver,
                            model_params, mask_params);
    for (Eigen::Index j = 0; j < stream.data.cols(); ++j) rec.push(stream.data.col(j));
    rec.finish();
    return rec.take();
}

}  // namespace csbg
