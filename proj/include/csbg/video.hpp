#pragma once

// Grayscale frame sequences, binary masks, and their on-disk form: a
// directory of binary PGM (P5) files frame_%06d.pgm plus manifest.txt holding
// "width height count".

#include "csbg/common.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace csbg {

/// Frames are row-major planes in gray-level units (nominally [0, 255]).
struct VideoBuffer {
    int width = 0;
    int height = 0;
    std::vector<std::vector<double>> frames;

    std::size_t frame_count() const { return frames.size(); }
    std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }

    /// n x count matrix with every value multiplied by `scale`.
    Matrix to_matrix(double scale = 1.0) const {
        Matrix out(static_cast<Eigen::Index>(pixels()), static_cast<Eigen::Index>(frames.size()));
        for (std::size_t j = 0; j < frames.size(); ++j)
            for (std::size_t i = 0; i < pixels(); ++i)
                out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = frames[j][i] * scale;
        return out;
    }

    void append_columns(const Matrix& cols, double scale = 1.0) {
        for (Eigen::Index j = 0; j < cols.cols(); ++j) {
            std::vector<double> f(pixels());
            for (std::size_t i = 0; i < f.size(); ++i) f[i] = cols(static_cast<Eigen::Index>(i), j) * scale;
            frames.push_back(std::move(f));
        }
    }
};

struct ForegroundMask {
    int width = 0;
    int height = 0;
    std::vector<std::vector<std::uint8_t>> frames;  // values in {0, 1}

    std::size_t frame_count() const { return frames.size(); }
};

inline std::uint8_t to_gray8(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

inline std::string frame_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%06zu.pgm", index);
    return buf;
}

inline void write_pgm(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> pixels) {
    require(pixels.size() == static_cast<std::size_t>(width) * height, "pixel count does not match dimensions");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    os << "P5\n" << width << ' ' << height << "\n255\n";
    os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

struct PgmImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;
};

inline PgmImage read_pgm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    auto token = [&]() {
        std::string t;
        char c;
        while (is.get(c)) {
            if (c == '#') {
                std::string skip;
                std::getline(is, skip);
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                if (!t.empty()) break;
            } else {
                t.push_back(c);
            }
        }
        return t;
    };
    if (token() != "P5") throw FormatError(path.string() + ": not a binary PGM");
    PgmImage img;
    try {
        img.width = std::stoi(token());
        img.height = std::stoi(token());
        int maxval = std::stoi(token());
        if (maxval <= 0 || maxval > 255) throw FormatError(path.string() + ": only 8-bit PGM is supported");
    } catch (const std::logic_error&) {
        throw FormatError(path.string() + ": malformed PGM header");
    }
    if (img.width <= 0 || img.height <= 0) throw FormatError(path.string() + ": bad PGM dimensions");
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    if (!is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size())))
        throw FormatError(path.string() + ": truncated PGM payload");
    return img;
}

inline void write_manifest(const std::filesystem::path& dir, int width, int height, std::size_t count) {
    std::ofstream os(dir / "manifest.txt");
    if (!os) throw FormatError("cannot write manifest in " + dir.string());
    os << width << ' ' << height << ' ' << count << '\n';
}

struct FrameManifest {
    int width = 0;
    int height = 0;
    std::size_t count = 0;
};

inline FrameManifest read_manifest(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.txt");
    if (!is) throw FormatError("missing manifest.txt in " + dir.string());
    FrameManifest m;
    if (!(is >> m.width >> m.height >> m.count) || m.width <= 0 || m.height <= 0)
        throw FormatError("malformed manifest in " + dir.string());
    return m;
}

/// Values are rounded and clamped to [0, 255].
inline void write_video_dir(const std::filesystem::path& dir, const VideoBuffer& video) {
    std::filesystem::create_directories(dir);
    std::vector<std::uint8_t> bytes(video.pixels());
    for (std::size_t j = 0; j < video.frame_count(); ++j) {
        std::transform(video.frames[j].begin(), video.frames[j].end(), bytes.begin(), to_gray8);
        write_pgm(dir / frame_name(j), video.width, video.height, bytes);
    }
    write_manifest(dir, video.width, video.height, video.frame_count());
}

inline VideoBuffer read_video_dir(const std::filesystem::path& dir) {
    FrameManifest m = read_manifest(dir);
    VideoBuffer video{m.width, m.height, {}};
    for (std::size_t j = 0; j < m.count; ++j) {
        PgmImage img = read_pgm(dir / frame_name(j));
        if (img.width != m.width || img.height != m.height)
            throw InvalidArgument("frame " + std::to_string(j) + " in " + dir.string() + " has inconsistent size");
        video.frames.emplace_back(img.pixels.begin(), img.pixels.end());
    }
    return video;
}

/// Masks are stored as 0/255 PGM frames.
inline void write_mask_dir(const std::filesystem::path& dir, const ForegroundMask& masks) {
    std::filesystem::create_directories(dir);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(masks.width) * masks.height);
    for (std::size_t j = 0; j < masks.frame_count(); ++j) {
        std::transform(masks.frames[j].begin(), masks.frames[j].end(), bytes.begin(),
                       [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 255 : 0); });
        write_pgm(dir / frame_name(j), masks.width, masks.height, bytes);
    }
    write_manifest(dir, masks.width, masks.height, masks.frame_count());
}

inline ForegroundMask read_mask_dir(const std::filesystem::path& dir) {
    VideoBuffer raw = read_video_dir(dir);
    ForegroundMask masks{raw.width, raw.height, {}};
    for (const auto& f : raw.frames) {
        std::vector<std::uint8_t> bits(f.size());
        std::transform(f.begin(), f.end(), bits.begin(), [](double v) { return static_cast<std::uint8_t>(v > 127.0); });
        masks.frames.push_back(std::move(bits));
    }
    return masks;
}

}  // namespace csbg
