#pragma once

// Synthetic surveillance clips with exact ground truth, and the metrics used
// to score reconstructions against them.

#include "csbg/common.hpp"
#include "csbg/rng.hpp"
#include "csbg/video.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace csbg {

enum class BackgroundKind { Static, Drift };

/// Constant-intensity rectangle moving with fixed velocity; positions wrap
/// around the frame edges.
struct SynthObject {
    int width = 8;
    int height = 8;
    double intensity = 230.0;
    int vx = 1;
    int vy = 0;
    int x0 = 0;
    int y0 = 0;
};

struct SynthSpec {
    int width = 64;
    int height = 64;
    int frame_count = 32;
    BackgroundKind background = BackgroundKind::Static;
    double drift_amplitude = 20.0;  // gray levels
    double drift_period = 32.0;     // frames
    std::vector<SynthObject> objects;
    double noise_sigma = 0.0;
    std::uint64_t seed = 1;

    void validate() const {
        require(width >= 2 && height >= 2, "synthetic frames must be at least 2 x 2");
        require(frame_count >= 1, "frame_count must be at least 1");
        require(noise_sigma >= 0.0, "noise_sigma must be nonnegative");
        require(drift_period > 0.0, "drift_period must be positive");
        for (const auto& o : objects) {
            require(o.width >= 1 && o.height >= 1, "object size must be positive");
            require(o.width <= width && o.height <= height, "object must fit inside the frame");
            require(o.intensity >= 0.0 && o.intensity <= 255.0, "object intensity must lie in [0, 255]");
        }
    }
};

struct SynthVideo {
    VideoBuffer video;
    VideoBuffer backgrounds;
    ForegroundMask masks;
};

namespace detail {

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

/// Smooth pattern in roughly [-1, 1]: a few low-frequency cosines.
inline std::vector<double> smooth_pattern(int width, int height, Rng& rng, int terms) {
    std::vector<double> img(static_cast<std::size_t>(width) * height, 0.0);
    const double two_pi = 2.0 * 3.14159265358979323846;
    for (int t = 0; t < terms; ++t) {
        double fx = 0.5 + 1.5 * rng.uniform(), fy = 0.5 + 1.5 * rng.uniform();
        double phase = two_pi * rng.uniform();
        double amp = (0.5 + 0.5 * rng.uniform()) / terms;
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                img[static_cast<std::size_t>(y) * width + x] +=
                    amp * std::cos(two_pi * (fx * x / width + fy * y / height) + phase);
    }
    return img;
}

}  // namespace detail

/// key=value lines; '#' starts a comment. Keys: width, height, frames,
/// background (static|drift), drift_amplitude, drift_period, noise_sigma,
/// seed, and repeatable object=w,h,intensity,vx,vy,x0,y0.
inline SynthSpec parse_synth_spec(std::istream& is) {
    SynthSpec spec;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw InvalidArgument("line " + std::to_string(lineno) + ": expected key=value");
        std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
        try {
            if (key == "width") spec.width = std::stoi(value);
            else if (key == "height") spec.height = std::stoi(value);
            else if (key == "frames" || key == "frame_count") spec.frame_count = std::stoi(value);
            else if (key == "drift_amplitude") spec.drift_amplitude = std::stod(value);
            else if (key == "drift_period") spec.drift_period = std::stod(value);
            else if (key == "noise_sigma") spec.noise_sigma = std::stod(value);
            else if (key == "seed") spec.seed = std::stoull(value);
            else if (key == "background") {
                if (value == "static") spec.background = BackgroundKind::Static;
                else if (value == "drift") spec.background = BackgroundKind::Drift;
                else throw InvalidArgument("unknown background kind '" + value + "'");
            } else if (key == "object") {
                SynthObject o;
                char sep;
                std::istringstream fields(value);
                if (!(fields >> o.width >> sep >> o.height >> sep >> o.intensity >> sep >> o.vx >> sep >> o.vy >> sep >>
                      o.x0 >> sep >> o.y0))
                    throw InvalidArgument("object needs w,h,intensity,vx,vy,x0,y0");
                spec.objects.push_back(o);
            } else {
                throw InvalidArgument("unknown key '" + key + "'");
            }
        } catch (const InvalidArgument& e) {
            throw InvalidArgument("line " + std::to_string(lineno) + ": " + e.what());
        } catch (const std::logic_error&) {
            throw InvalidArgument("line " + std::to_string(lineno) + ": bad value for '" + key + "'");
        }
    }
    spec.validate();
    return spec;
}

inline std::string format_synth_spec(const SynthSpec& spec) {
    std::ostringstream os;
    os.precision(17);
    os << "width=" << spec.width << "\nheight=" << spec.height << "\nframes=" << spec.frame_count
       << "\nbackground=" << (spec.background == BackgroundKind::Static ? "static" : "drift")
       << "\ndrift_amplitude=" << spec.drift_amplitude << "\ndrift_period=" << spec.drift_period
       << "\nnoise_sigma=" << spec.noise_sigma << "\nseed=" << spec.seed << '\n';
    for (const auto& o : spec.objects)
        os << "object=" << o.width << ',' << o.height << ',' << o.intensity << ',' << o.vx << ',' << o.vy << ','
           << o.x0 << ',' << o.y0 << '\n';
    return os.str();
}

/// Background = static smooth image (+ drift(t) * illumination pattern for
/// the drift kind, so rank <= 2). Objects overwrite the background; noise is
/// added to the video frames only.
inline SynthVideo generate(const SynthSpec& spec) {
    spec.validate();
    const int w = spec.width, h = spec.height;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    Rng rng(spec.seed);

    std::vector<double> base = detail::smooth_pattern(w, h, rng, 4);
    for (std::size_t i = 0; i < n; ++i) base[i] = 120.0 + 60.0 * base[i];
    std::vector<double> illum = detail::smooth_pattern(w, h, rng, 2);
    for (double& v : illum) v = 0.5 + 0.5 * v;

    SynthVideo out{{w, h, {}}, {w, h, {}}, {w, h, {}}};
    const double two_pi = 2.0 * 3.14159265358979323846;
    for (int t = 0; t < spec.frame_count; ++t) {
        std::vector<double> bg = base;
        if (spec.background == BackgroundKind::Drift) {
            double a = spec.drift_amplitude * std::sin(two_pi * t / spec.drift_period);
            for (std::size_t i = 0; i < n; ++i) bg[i] += a * illum[i];
        }
        std::vector<double> frame = bg;
        std::vector<std::uint8_t> mask(n, 0);
        for (const auto& o : spec.objects) {
            int ox = ((o.x0 + o.vx * t) % w + w) % w;
            int oy = ((o.y0 + o.vy * t) % h + h) % h;
            for (int dy = 0; dy < o.height; ++dy)
                for (int dx = 0; dx < o.width; ++dx) {
                    std::size_t idx = static_cast<std::size_t>((oy + dy) % h) * w + (ox + dx) % w;
                    frame[idx] = o.intensity;
                    mask[idx] = 1;
                }
        }
        if (spec.noise_sigma > 0.0)
            for (double& v : frame) v += spec.noise_sigma * rng.normal();
        out.video.frames.push_back(std::move(frame));
        out.backgrounds.frames.push_back(std::move(bg));
        out.masks.frames.push_back(std::move(mask));
    }
    return out;
}

inline SynthSpec load_synth_spec(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("spec not found: " + path);
    return parse_synth_spec(is);
}

struct PsnrReport {
    std::vector<double> per_frame;  // +infinity marks an exact match
    double mean = 0.0;

    static bool exact(double db) { return std::isinf(db) && db > 0; }
};

inline double psnr_frame(const std::vector<double>& ref, const std::vector<double>& test) {
    double mse = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        double d = ref[i] - test[i];
        mse += d * d;
    }
    mse /= static_cast<double>(ref.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

inline PsnrReport psnr(const VideoBuffer& reference, const VideoBuffer& test) {
    require(reference.width == test.width && reference.height == test.height &&
                reference.frame_count() == test.frame_count(),
            "psnr inputs must have matching dimensions and frame counts");
    require(reference.frame_count() >= 1, "psnr needs at least one frame");
    PsnrReport r;
    double sum = 0.0;
    for (std::size_t j = 0; j < reference.frame_count(); ++j) {
        r.per_frame.push_back(psnr_frame(reference.frames[j], test.frames[j]));
        sum += r.per_frame.back();
    }
    r.mean = sum / static_cast<double>(r.per_frame.size());
    return r;
}

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0;
};

inline PrecisionRecall score_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    PrecisionRecall s{0, 0, 0, tp, fp, fn};
    if (tp + fp + fn == 0) {
        s.precision = s.recall = s.f1 = 1.0;
        return s;
    }
    s.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    s.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 1.0;
    s.f1 = tp > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

struct MaskReport {
    std::vector<PrecisionRecall> per_frame;
    PrecisionRecall pooled;  // from summed pixel counts
};

inline MaskReport mask_metrics(const ForegroundMask& predicted, const ForegroundMask& truth) {
    require(predicted.width == truth.width && predicted.height == truth.height &&
                predicted.frame_count() == truth.frame_count(),
            "mask sequences must have matching dimensions and frame counts");
    MaskReport r;
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t j = 0; j < truth.frame_count(); ++j) {
        std::size_t ftp = 0, ffp = 0, ffn = 0;
        const auto& p = predicted.frames[j];
        const auto& t = truth.frames[j];
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (p[i] && t[i]) ++ftp;
            else if (p[i]) ++ffp;
            else if (t[i]) ++ffn;
        }
        r.per_frame.push_back(score_counts(ftp, ffp, ffn));
        tp += ftp, fp += ffp, fn += ffn;
    }
    r.pooled = score_counts(tp, fp, fn);
    return r;
}

}  // namespace csbg
