/// Command-line front end: training, evaluation, inference, synthetic data
/// generation, kernel inspection and plotting for the physics-encoded
/// super-resolution model.
///
/// Exit codes: 0 success, 2 configuration error, 3 data error, 4 training
/// fault.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pestgan/trainer.hpp"

namespace fs = std::filesystem;
using namespace pestgan;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "out";
    int64_t seed = -1;  // < 0: keep the config's seed
};

void add_common(CLI::App* cmd, CommonOpts& c) {
    cmd->add_option("--config", c.config_path, "key=value run configuration file");
    cmd->add_option("--out-dir", c.out_dir, "output directory (created if absent)");
    cmd->add_option("--seed", c.seed, "override the config seed");
}

RunConfig load_config(const CommonOpts& c) {
    RunConfig cfg = c.config_path.empty() ? RunConfig{} : RunConfig::load(c.config_path);
    if (c.seed >= 0) cfg.seed = static_cast<uint64_t>(c.seed);
    cfg.validate();
    return cfg;
}

std::vector<ImageSequence<float>> load_dataset(const RunConfig& cfg) {
    if (cfg.data_manifest.empty())
        throw ConfigError("data_manifest is empty; generate one with `synth-data` first");
    return load_sequences<float>(cfg.data_manifest);
}

std::vector<TrainingSample> collect_windows(const std::vector<ImageSequence<float>>& seqs,
                                            const std::vector<int>& idx) {
    std::vector<TrainingSample> out;
    for (int i : idx) {
        auto w = window_triplets(seqs[static_cast<size_t>(i)], i);
        out.insert(out.end(), w.begin(), w.end());
    }
    return out;
}

void print_eval(std::ostream& os, const EvalResult<float>& ev) {
    os << std::fixed << std::setprecision(4);
    os << "frames evaluated: " << ev.frames << "\n";
    os << "               psnr_db     ssim    rase_pct\n";
    os << "model        " << std::setw(9) << ev.model.mean_psnr() << std::setw(9)
       << ev.model.mean_ssim() << std::setw(11) << ev.model.mean_rase() << "\n";
    os << "nn-baseline  " << std::setw(9) << ev.baseline.mean_psnr() << std::setw(9)
       << ev.baseline.mean_ssim() << std::setw(11) << ev.baseline.mean_rase() << "\n";
    os << std::setprecision(8);
    os << "flicker   sr=" << ev.flicker_sr << "  hr=" << ev.flicker_hr << "\n";
    if (ev.model.infinite_psnr_count() > 0)
        os << "(" << ev.model.infinite_psnr_count() << " frames with zero error omitted from mean PSNR)\n";
}

// ---------------------------------------------------------------------------
// tiny raster helpers (PPM output for multi-curve plots)
// ---------------------------------------------------------------------------

struct Raster {
    int w, h;
    std::vector<uint8_t> rgb;  // 3 bytes per pixel, row-major

    Raster(int w_, int h_) : w(w_), h(h_), rgb(static_cast<size_t>(w_) * h_ * 3, 255) {}

    void set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
        if (x < 0 || x >= w || y < 0 || y >= h) return;
        size_t i = (static_cast<size_t>(y) * w + x) * 3;
        rgb[i] = r;
        rgb[i + 1] = g;
        rgb[i + 2] = b;
    }

    void vline(int x, int y0, int y1, uint8_t r, uint8_t g, uint8_t b) {
        if (y0 > y1) std::swap(y0, y1);
        for (int y = y0; y <= y1; ++y) set(x, y, r, g, b);
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw DataError("cannot write image: " + path);
        f << "P6\n" << w << " " << h << "\n255\n";
        f.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    }
};

/// Nearest-neighbor upscale of a [-1,1] frame into an 8-bit grayscale patch
/// pasted at (ox,oy).
void paste_frame(Raster& img, const Tensor<float>& frame, int ox, int oy, int scale) {
    int H = frame.dim(1), W = frame.dim(2);
    for (int y = 0; y < H * scale; ++y)
        for (int x = 0; x < W * scale; ++x) {
            float v = frame.at3(0, y / scale, x / scale);
            auto g = static_cast<uint8_t>(std::clamp((v + 1.0f) * 0.5f, 0.0f, 1.0f) * 255.0f);
            img.set(ox + x, oy + y, g, g, g);
        }
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int cmd_train(const CommonOpts& common, const std::string& resume) {
    RunConfig cfg = load_config(common);
    auto seqs = load_dataset(cfg);
    std::vector<int> train_idx, test_idx;
    train_test_split(seqs, cfg.parsed_test_sequences(), train_idx, test_idx);
    auto samples = collect_windows(seqs, train_idx);
    std::cout << "sequences: " << train_idx.size() << " train / " << test_idx.size()
              << " test; training windows: " << samples.size() << "\n";

    fs::create_directories(common.out_dir);
    std::ofstream(fs::path(common.out_dir) / "config.txt") << cfg.serialize();

    Trainer<float> trainer(cfg);
    if (!resume.empty()) {
        trainer.load_checkpoint(resume);
        std::cout << "resumed from " << resume << " at step " << trainer.step_count() << "\n";
    }

    auto log_path = fs::path(common.out_dir) / "train.log";
    std::ofstream log(log_path, resume.empty() ? std::ios::trunc : std::ios::app);
    if (!log) throw ConfigError("cannot write log: " + log_path.string());
    auto ckpt_path = (fs::path(common.out_dir) / "checkpoint.ckpt").string();
    trainer.train(seqs, samples, log, ckpt_path, &std::cout);
    trainer.save_checkpoint(ckpt_path);
    std::cout << "finished at step " << trainer.step_count() << "; checkpoint: " << ckpt_path
              << "\n";

    if (!test_idx.empty()) {
        auto ev = trainer.evaluate(seqs, test_idx);
        print_eval(std::cout, ev);
    }
    return 0;
}

int cmd_eval(const CommonOpts& common, const std::string& ckpt) {
    RunConfig cfg = load_config(common);
    auto seqs = load_dataset(cfg);
    std::vector<int> train_idx, test_idx;
    train_test_split(seqs, cfg.parsed_test_sequences(), train_idx, test_idx);
    if (test_idx.empty()) throw DataError("no test sequences in the dataset");

    Trainer<float> trainer(cfg);
    trainer.load_checkpoint(ckpt);
    auto ev = trainer.evaluate(seqs, test_idx);
    print_eval(std::cout, ev);

    fs::create_directories(common.out_dir);
    std::ofstream report(fs::path(common.out_dir) / "eval.txt");
    print_eval(report, ev);
    return 0;
}

int cmd_infer(const CommonOpts& common, const std::string& ckpt, const std::string& seq_id) {
    RunConfig cfg = load_config(common);
    auto seqs = load_dataset(cfg);
    int si = -1;
    for (size_t i = 0; i < seqs.size(); ++i)
        if (seqs[i].id == seq_id) si = static_cast<int>(i);
    if (si < 0) throw DataError("sequence not in dataset: " + seq_id);

    Trainer<float> trainer(cfg);
    trainer.load_checkpoint(ckpt);
    fs::create_directories(common.out_dir);

    auto windows = window_triplets(seqs[static_cast<size_t>(si)], si);
    if (windows.empty()) throw DataError("sequence too short for a 3-frame window: " + seq_id);
    for (const auto& w : windows) {
        auto m = materialize(seqs, w, cfg.sr_factor);
        Var<float> sr = trainer.generator().generate(m.lr);
        auto base = fs::path(common.out_dir) / (seq_id + "_" + std::to_string(w.center));
        write_pgm(base.string() + "_sr.pgm", sr->value);
        write_pgm(base.string() + "_hr.pgm", m.hr_center);
        write_pgm(base.string() + "_lrup.pgm",
                  upsample_nn(constant(m.lr.frames[1]), cfg.sr_factor)->value);
    }
    std::cout << "wrote " << windows.size() << " frame triples (lrup/sr/hr) to " << common.out_dir
              << "\n";
    return 0;
}

int cmd_synth(const CommonOpts& common, SynthConfig sc, int n_sequences, int bits) {
    if (common.seed >= 0) sc.seed = static_cast<uint64_t>(common.seed);
    sc.validate();
    auto seqs = synth_vortex_dataset<float>(sc, n_sequences);
    save_dataset(common.out_dir, seqs, bits);
    std::cout << "wrote " << n_sequences << " sequences x " << sc.frames << " frames ("
              << sc.grid << "x" << sc.grid << ") to " << common.out_dir << "/manifest.txt\n";
    return 0;
}

int cmd_inspect_kernels(const CommonOpts& common, const std::string& ckpt) {
    RunConfig cfg = load_config(common);
    Trainer<float> trainer(cfg);
    if (!ckpt.empty()) trainer.load_checkpoint(ckpt);

    const auto& bank = trainer.generator().phycell.bank;
    int k = bank.kernel_size;
    std::cout << std::fixed << std::setprecision(6);
    std::cout << "kernel bank: " << bank.count() << " kernels, " << k << "x" << k
              << ", constrained moment order "
              << (bank.moment_max_order < 0 ? k - 1 : bank.moment_max_order) << "\n";
    std::cout << "idx  (a,b)   moment_loss   constrained moments (a,b)=value\n";
    for (int q = 0; q < bank.count(); ++q) {
        auto kern = bank.kernel(q);
        auto m = moment_matrix(kern);
        auto tgt = bank.target(q);
        double loss = 0;
        std::ostringstream ms;
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) {
                if (!bank.constrained(a, b)) continue;
                double r = m.at(a, b) - tgt.at(a, b);
                loss += r * r;
                if (std::abs(m.at(a, b)) > 1e-4)
                    ms << " (" << a << "," << b << ")=" << std::setprecision(3) << m.at(a, b)
                       << std::setprecision(6);
            }
        std::cout << std::setw(3) << q << "  (" << bank.layout[q].first << ","
                  << bank.layout[q].second << ")  " << std::setw(12) << loss << "  " << ms.str()
                  << "\n";
    }

    // image grid: one row, kernels upscaled and normalized to their own range
    fs::create_directories(common.out_dir);
    int scale = 16, pad = 4;
    Raster grid(bank.count() * (k * scale + pad) + pad, k * scale + 2 * pad);
    for (int q = 0; q < bank.count(); ++q) {
        auto kern = bank.kernel(q);
        float lim = 1e-6f;
        for (float v : kern.data) lim = std::max(lim, std::abs(v));
        Tensor<float> norm({1, k, k});
        for (int64_t i = 0; i < kern.size(); ++i) norm.data[i] = kern.data[i] / lim;
        paste_frame(grid, norm, pad + q * (k * scale + pad), pad, scale);
    }
    auto grid_path = fs::path(common.out_dir) / "kernels.ppm";
    grid.save(grid_path.string());
    std::cout << "kernel image grid: " << grid_path.string() << "\n";
    return 0;
}

int cmd_plot(const CommonOpts& common, const std::string& log_path,
             const std::string& frames_dir) {
    fs::create_directories(common.out_dir);

    if (!log_path.empty()) {
        std::ifstream f(log_path);
        if (!f) throw DataError("missing file: " + log_path);
        std::map<std::string, std::vector<double>> series;
        std::string line;
        while (std::getline(f, line)) {
            std::istringstream is(line);
            std::string field;
            if (!std::getline(is, field, '\t')) continue;  // step column
            while (std::getline(is, field, '\t')) {
                size_t eq = field.find('=');
                if (eq == std::string::npos) continue;
                series[field.substr(0, eq)].push_back(std::stod(field.substr(eq + 1)));
            }
        }
        if (series.empty()) throw DataError("no parsable log lines in " + log_path);

        const std::vector<std::array<uint8_t, 3>> palette = {
            {220, 50, 50},  {50, 120, 220}, {40, 160, 60},  {200, 140, 20},
            {140, 60, 200}, {20, 160, 160}, {120, 120, 120}, {200, 60, 140}};
        Raster plot(960, 480);
        double lo = 1e300, hi = -1e300;
        for (const auto& [name, vals] : series)
            for (double v : vals) lo = std::min(lo, v), hi = std::max(hi, v);
        if (hi <= lo) hi = lo + 1;
        int ci = 0;
        std::cout << "loss curves (" << series.begin()->second.size() << " steps):\n";
        for (const auto& [name, vals] : series) {
            auto [r, g, b] = palette[static_cast<size_t>(ci) % palette.size()];
            std::cout << "  " << name << " -> rgb(" << int(r) << "," << int(g) << "," << int(b)
                      << ")\n";
            int prev_y = -1;
            for (size_t i = 0; i < vals.size(); ++i) {
                int x = static_cast<int>(i * (plot.w - 1) / std::max<size_t>(1, vals.size() - 1));
                int y = plot.h - 1 -
                        static_cast<int>((vals[i] - lo) / (hi - lo) * (plot.h - 1));
                if (prev_y >= 0) plot.vline(x, prev_y, y, r, g, b);
                prev_y = y;
            }
            ++ci;
        }
        auto curve_path = fs::path(common.out_dir) / "loss_curves.ppm";
        plot.save(curve_path.string());
        std::cout << "loss curve plot: " << curve_path.string() << "\n";
    }

    if (!frames_dir.empty()) {
        // collect <stem>_lrup/_sr/_hr.pgm triples emitted by `infer`
        std::vector<std::string> stems;
        for (const auto& e : fs::directory_iterator(frames_dir)) {
            auto name = e.path().filename().string();
            auto pos = name.rfind("_sr.pgm");
            if (pos != std::string::npos && pos + 7 == name.size())
                stems.push_back(name.substr(0, pos));
        }
        std::sort(stems.begin(), stems.end());
        if (stems.empty()) throw DataError("no *_sr.pgm frames in " + frames_dir);

        auto first = read_pgm<float>((fs::path(frames_dir) / (stems[0] + "_sr.pgm")).string());
        int H = first.dim(1), W = first.dim(2), pad = 4;
        Raster grid(3 * (W + pad) + pad, static_cast<int>(stems.size()) * (H + pad) + pad);
        const char* suffixes[3] = {"_lrup.pgm", "_sr.pgm", "_hr.pgm"};
        for (size_t row = 0; row < stems.size(); ++row)
            for (int col = 0; col < 3; ++col) {
                auto p = fs::path(frames_dir) / (stems[row] + suffixes[col]);
                paste_frame(grid, read_pgm<float>(p.string()), pad + col * (W + pad),
                            pad + static_cast<int>(row) * (H + pad), 1);
            }
        auto grid_path = fs::path(common.out_dir) / "image_grid.ppm";
        grid.save(grid_path.string());
        std::cout << "image grid (columns lr-up / sr / hr): " << grid_path.string() << "\n";
    }

    if (log_path.empty() && frames_dir.empty())
        throw ConfigError("plot: pass --log and/or --frames");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"physics-encoded video super-resolution"};
    app.require_subcommand(1);

    CommonOpts common;
    std::string resume, ckpt, seq_id, log_path, frames_dir;
    SynthConfig sc;
    int n_sequences = 8, bits = 16;

    auto* train = app.add_subcommand("train", "train a model on a manifest dataset");
    add_common(train, common);
    train->add_option("--resume", resume, "checkpoint to resume from");

    auto* eval = app.add_subcommand("eval", "score a checkpoint on the test split");
    add_common(eval, common);
    eval->add_option("--checkpoint", ckpt, "checkpoint to evaluate")->required();

    auto* infer = app.add_subcommand("infer", "super-resolve one sequence to PGM frames");
    add_common(infer, common);
    infer->add_option("--checkpoint", ckpt, "checkpoint to run")->required();
    infer->add_option("--sequence", seq_id, "sequence id from the manifest")->required();

    auto* synth = app.add_subcommand("synth-data", "generate the synthetic vortex dataset");
    add_common(synth, common);
    synth->add_option("--sequences", n_sequences, "number of sequences");
    synth->add_option("--frames", sc.frames, "frames per sequence");
    synth->add_option("--grid", sc.grid, "HR frame side length");
    synth->add_option("--omega", sc.omega, "rotation rate, radians per step");
    synth->add_option("--nu", sc.nu, "diffusion coefficient");
    synth->add_option("--blobs", sc.blobs, "Gaussian blobs per sequence");
    synth->add_option("--bits", bits, "PGM depth: 8 or 16");

    auto* inspect = app.add_subcommand("inspect-kernels",
                                       "dump kernel moments, targets and losses");
    add_common(inspect, common);
    inspect->add_option("--checkpoint", ckpt, "checkpoint to inspect (default: fresh init)");

    auto* plot = app.add_subcommand("plot", "render loss curves and image grids");
    add_common(plot, common);
    plot->add_option("--log", log_path, "training log to plot");
    plot->add_option("--frames", frames_dir, "directory of `infer` output frames");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(common, resume);
        if (*eval) return cmd_eval(common, ckpt);
        if (*infer) return cmd_infer(common, ckpt, seq_id);
        if (*synth) return cmd_synth(common, sc, n_sequences, bits);
        if (*inspect) return cmd_inspect_kernels(common, ckpt);
        if (*plot) return cmd_plot(common, log_path, frames_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const TrainingFault& e) {
        std::cerr << "training fault: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
