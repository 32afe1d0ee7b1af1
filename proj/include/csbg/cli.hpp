#pragma once

// Command-line front end: synth, sense, reconstruct, eval.
//
// Exit codes: 0 success, 2 usage or validation, 3 file format, 4 numerical.
// Settings resolve as defaults < --config file < flags, and every successful
// run writes the resolved set next to its outputs.

#include "csbg/bgmodel.hpp"
#include "csbg/evalkit.hpp"
#include "csbg/pipeline.hpp"
#include "csbg/solver.hpp"
#include "csbg/video.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace csbg::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 2, kFormat = 3, kNumerical = 4 };

using KeyValues = std::map<std::string, std::string>;

inline KeyValues read_key_values(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw InvalidArgument("config not found: " + path.string());
    KeyValues kv;
    std::string line;
    while (std::getline(is, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw InvalidArgument("config line without '=': " + line);
        kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
    }
    return kv;
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

/// Resolved settings of a reconstruct run.
struct RunConfig {
    SolverConfig solver;
    ModelParams model;
    MaskParams mask;

    /// Binds every setting to a key; used for config files, flags and the manifest.
    struct Field {
        std::string key;
        std::function<void(const std::string&)> set;
        std::function<std::string()> get;
    };

    std::vector<Field> fields() {
        std::vector<Field> f;
        auto dbl = [&f](std::string key, double& ref) {
            f.push_back({std::move(key), [&ref](const std::string& v) { ref = std::stod(v); },
                         [&ref] { return format_double(ref); }});
        };
        auto cnt = [&f](std::string key, std::size_t& ref) {
            f.push_back({std::move(key), [&ref](const std::string& v) { ref = std::stoul(v); },
                         [&ref] { return std::to_string(ref); }});
        };
        cnt("batch", solver.batch_m);
        cnt("max-iter", solver.max_iter);
        dbl("tol", solver.tol);
        dbl("mu1", solver.mu1);
        dbl("mu2", solver.mu2);
        dbl("mu3", solver.mu3);
        dbl("mu4", solver.mu4);
        for (std::size_t i = 0; i < kConstraintCount; ++i) dbl("beta" + std::to_string(i + 1), solver.beta[i]);
        cnt("rank-cap", model.p_max);
        dbl("wa", model.w_a);
        dbl("wb", model.w_b);
        dbl("energy-floor", model.energy_floor);
        dbl("theta", mask.theta);
        dbl("mask-floor", mask.floor);
        return f;
    }

    void apply(const KeyValues& kv) {
        auto fs_ = fields();
        for (const auto& [key, value] : kv) {
            auto it = std::find_if(fs_.begin(), fs_.end(), [&](const Field& f) { return f.key == key; });
            if (it == fs_.end()) throw InvalidArgument("unknown config key '" + key + "'");
            try {
                it->set(value);
            } catch (const std::logic_error&) {
                throw InvalidArgument("bad value for '" + key + "': " + value);
            }
        }
    }

    std::string manifest() {
        std::ostringstream os;
        for (const auto& f : fields()) os << f.key << '=' << f.get() << '\n';
        return os.str();
    }
};

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    os << text;
}

// ---------------------------------------------------------------- commands

inline int cmd_synth(const std::string& spec_path, const std::string& out_dir, std::ostream& out) {
    if (!fs::exists(spec_path)) throw InvalidArgument("spec not found: " + spec_path);
    SynthSpec spec = load_synth_spec(spec_path);
    SynthVideo synth = generate(spec);
    fs::path dir(out_dir);
    write_video_dir(dir / "video", synth.video);
    write_video_dir(dir / "background", synth.backgrounds);
    write_mask_dir(dir / "mask", synth.masks);
    write_text(dir / "run_manifest.txt", format_synth_spec(spec));
    out << "frames: " << synth.video.frame_count() << '\n';
    return kOk;
}

inline int cmd_sense(const std::string& video_dir, const std::string& out_file, double rate, std::uint64_t seed,
                     std::uint32_t batch_hint, bool permute, std::ostream& out) {
    VideoBuffer video = read_video_dir(video_dir);
    MeasurementStream stream = sense_video(video, rate, seed, batch_hint, permute);
    save_stream(out_file, stream);
    std::ostringstream manifest;
    manifest << "video=" << video_dir << "\nrate=" << format_double(rate) << "\nseed=" << seed
             << "\nbatch-hint=" << batch_hint << "\npermute=" << (permute ? 1 : 0) << "\nr=" << stream.rate_r
             << "\nn=" << stream.n_pixels << "\nN=" << stream.padded_dim << '\n';
    write_text(out_file + ".manifest", manifest.str());
    out << "r=" << stream.rate_r << " n=" << stream.n_pixels << " N=" << stream.padded_dim
        << " compression=" << std::setprecision(6) << static_cast<double>(stream.rate_r) / stream.n_pixels << '\n';
    return kOk;
}

inline int cmd_reconstruct(const std::string& stream_file, const std::string& out_dir, RunConfig config,
                           std::ostream& out) {
    MeasurementStream stream = load_stream(stream_file);
    ReconstructionResult res = reconstruct_stream(stream, config.solver, config.model, config.mask);

    fs::path dir(out_dir);
    fs::create_directories(dir);
    write_video_dir(dir / "background", res.backgrounds);
    VideoBuffer fg = res.foregrounds;
    for (auto& f : fg.frames)
        for (double& v : f) v = std::abs(v);
    write_video_dir(dir / "foreground", fg);
    write_mask_dir(dir / "mask", res.masks);
    save_model((dir / "model.csbm").string(), res.model);

    std::ostringstream diag;
    diag << "# batch first_frame frames iterations converged final_residual rank_before rank_after svt_width "
            "update_width seconds\n";
    for (const auto& b : res.batches)
        diag << b.index << ' ' << b.first_frame << ' ' << b.frames << ' ' << b.iterations << ' ' << b.converged << ' '
             << std::setprecision(6) << b.final_residual << ' ' << b.model_rank_before << ' ' << b.model_rank_after
             << ' ' << b.svt_width << ' ' << b.update_width << ' ' << b.seconds << '\n';
    diag << "batches=" << res.batches.size() << "\npeak_buffered=" << res.peak_buffered << '\n';
    write_text(dir / "diagnostics.txt", diag.str());

    std::ostringstream manifest;
    manifest << "# stream=" << stream_file << " seed=" << stream.seed << " r=" << stream.rate_r
             << " frames=" << stream.frame_count << '\n'
             << config.manifest();
    write_text(dir / "run_manifest.txt", manifest.str());

    out << "frames: " << res.backgrounds.frame_count() << " batches: " << res.batches.size() << '\n';
    return kOk;
}

inline std::string format_db(double db) { return PsnrReport::exact(db) ? "inf" : format_double(db); }

inline int cmd_eval(const std::string& recon_dir, const std::string& truth_dir, const std::string& summary_path,
                    std::ostream& out) {
    fs::path recon(recon_dir), truth(truth_dir);
    VideoBuffer rb = read_video_dir(recon / "background"), tb = read_video_dir(truth / "background");
    ForegroundMask rm = read_mask_dir(recon / "mask"), tm = read_mask_dir(truth / "mask");
    if (rb.frame_count() != tb.frame_count() || rm.frame_count() != tm.frame_count())
        throw InvalidArgument("frame counts differ: " + std::to_string(rb.frame_count()) + " vs " +
                              std::to_string(tb.frame_count()));
    PsnrReport ps = psnr(tb, rb);
    MaskReport mr = mask_metrics(rm, tm);

    out << "frame  psnr_db  precision  recall  f1\n";
    for (std::size_t j = 0; j < ps.per_frame.size(); ++j) {
        const auto& m = mr.per_frame[j];
        out << std::setw(5) << j << "  " << std::setw(7) << std::fixed << std::setprecision(2)
            << (PsnrReport::exact(ps.per_frame[j]) ? std::numeric_limits<double>::infinity() : ps.per_frame[j])
            << "  " << std::setw(9) << std::setprecision(4) << m.precision << "  " << std::setw(6) << m.recall
            << "  " << std::setw(6) << m.f1 << '\n';
    }
    out << std::defaultfloat;
    out << "mean psnr: " << format_db(ps.mean) << " dB, pooled F1=" << mr.pooled.f1 << '\n';

    double min_db = *std::min_element(ps.per_frame.begin(), ps.per_frame.end());
    std::ostringstream summary;
    summary << "frames=" << ps.per_frame.size() << "\npsnr_mean=" << format_db(ps.mean)
            << "\npsnr_min=" << format_db(min_db) << "\nprecision_pooled=" << format_double(mr.pooled.precision)
            << "\nrecall_pooled=" << format_double(mr.pooled.recall) << "\nf1_pooled=" << format_double(mr.pooled.f1)
            << '\n';
    write_text(summary_path.empty() ? recon / "eval_summary.txt" : fs::path(summary_path), summary.str());
    return kOk;
}

// ---------------------------------------------------------------- dispatch

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Compressive surveillance video reconstruction with adaptive background models", "csbg"};
    app.require_subcommand(1);

    std::string spec_path, out_dir, video_dir, out_file, stream_file, recon_dir, truth_dir, summary, config_path;
    double rate = 0.05;
    std::uint64_t seed = 1;
    std::uint32_t batch_hint = 8;
    bool no_permute = false;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic clip with ground truth");
    synth->add_option("spec", spec_path, "key=value synthetic spec file")->required();
    synth->add_option("out_dir", out_dir, "Output directory")->required();

    auto* sense = app.add_subcommand("sense", "Compressively sense a PGM frame directory");
    sense->add_option("video_dir", video_dir, "Directory with manifest.txt and frame_%06d.pgm")->required();
    sense->add_option("out_file", out_file, "Measurement stream to write")->required();
    sense->add_option("--rate", rate, "Measurement fraction in (0, 1]")->capture_default_str();
    sense->add_option("--seed", seed, "Operator seed")->capture_default_str();
    sense->add_option("--batch-hint", batch_hint, "Batch size recorded in the stream header")->capture_default_str();
    sense->add_flag("--no-permute", no_permute, "Disable the random pixel permutation");

    RunConfig defaults;
    auto* recon = app.add_subcommand("reconstruct", "Reconstruct background and foreground from a stream");
    recon->add_option("stream_file", stream_file, "Measurement stream")->required();
    recon->add_option("out_dir", out_dir, "Output directory")->required();
    recon->add_option("--config", config_path, "key=value file with defaults for the flags below");
    std::map<std::string, std::string> flag_values;
    for (auto& f : defaults.fields())
        recon->add_option("--" + f.key, flag_values[f.key], f.key)->default_str(f.get());

    auto* eval = app.add_subcommand("eval", "Score a reconstruction against ground truth");
    eval->add_option("recon_dir", recon_dir, "Reconstruction output directory")->required();
    eval->add_option("truth_dir", truth_dir, "Ground truth directory (synth output)")->required();
    eval->add_option("--summary", summary, "Summary file (default: <recon_dir>/eval_summary.txt)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }

    try {
        if (synth->parsed()) return cmd_synth(spec_path, out_dir, out);
        if (sense->parsed()) return cmd_sense(video_dir, out_file, rate, seed, batch_hint, !no_permute, out);
        if (recon->parsed()) {
            RunConfig config;
            if (!config_path.empty()) config.apply(read_key_values(config_path));
            KeyValues given;
            for (auto& [key, value] : flag_values)
                if (recon->count("--" + key) > 0) given[key] = value;
            config.apply(given);
            config.solver.validate();
            require(config.model.p_max >= 1, "rank-cap must be at least 1");
            require(config.model.w_a >= 0 && config.model.w_b >= 0, "model weights must be nonnegative");
            return cmd_reconstruct(stream_file, out_dir, config, out);
        }
        if (eval->parsed()) return cmd_eval(recon_dir, truth_dir, summary, out);
    } catch (const NumericalFailure& e) {
        err << "numerical failure (batch " << e.batch() << ", iteration " << e.iteration() << "): " << e.what()
            << '\n';
        return kNumerical;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const FormatError& e) {
        err << "format error: " << e.what() << '\n';
        return kFormat;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }
    return kUsage;
}

}  // namespace csbg::cli
