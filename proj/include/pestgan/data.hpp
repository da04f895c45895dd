#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pestgan/errors.hpp"
#include "pestgan/generator.hpp"
#include "pestgan/rng.hpp"
#include "pestgan/tensor.hpp"

namespace pestgan {

// ---------------------------------------------------------------------------
// timestamps
// ---------------------------------------------------------------------------

namespace detail {

/// Days since 1970-01-01 for a civil date (Hinnant's algorithm).
inline int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    int64_t era = (y >= 0 ? y : y - 399) / 400;
    int yoe = static_cast<int>(y - era * 400);
    int doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    int64_t doe = static_cast<int64_t>(yoe) * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + doe - 719468;
}

inline void civil_from_days(int64_t z, int& y, int& m, int& d) {
    z += 719468;
    int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    int64_t doe = z - era * 146097;
    int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    int64_t yr = yoe + era * 400;
    int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    int64_t mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yr + (m <= 2));
}

}  // namespace detail

inline int64_t parse_iso8601(const std::string& s) {
    int y, mo, d, h, mi, sec;
    if (std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%dZ", &y, &mo, &d, &h, &mi, &sec) != 6)
        throw DataError("bad ISO-8601 timestamp: " + s);
    return detail::days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + sec;
}

inline std::string format_iso8601(int64_t t) {
    int64_t days = t / 86400;
    int64_t rem = t - days * 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    int y, m, d;
    detail::civil_from_days(days, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", y, m, d,
                  static_cast<int>(rem / 3600), static_cast<int>((rem / 60) % 60),
                  static_cast<int>(rem % 60));
    return buf;
}

// ---------------------------------------------------------------------------
// lossless grayscale frame I/O (binary PGM, 8- or 16-bit)
// ---------------------------------------------------------------------------

/// Writes a [1,H,W] frame in [-1,1] as binary PGM; 16-bit samples are
/// big-endian per the format.
template <typename T>
void write_pgm(const std::string& path, const Tensor<T>& frame, int bits = 16) {
    if (frame.rank() != 3 || frame.dim(0) != 1) throw DataError("write_pgm: frame must be [1,H,W]");
    if (bits != 8 && bits != 16) throw DataError("write_pgm: bits must be 8 or 16");
    int H = frame.dim(1), W = frame.dim(2);
    int maxval = bits == 8 ? 255 : 65535;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("write_pgm: cannot open " + path);
    f << "P5\n" << W << " " << H << "\n" << maxval << "\n";
    for (int64_t i = 0; i < frame.size(); ++i) {
        double v = (static_cast<double>(frame[i]) + 1.0) * 0.5 * maxval;
        long q = std::lround(std::min(std::max(v, 0.0), static_cast<double>(maxval)));
        if (bits == 8) {
            unsigned char b = static_cast<unsigned char>(q);
            f.write(reinterpret_cast<const char*>(&b), 1);
        } else {
            unsigned char b[2] = {static_cast<unsigned char>(q >> 8),
                                  static_cast<unsigned char>(q & 0xff)};
            f.write(reinterpret_cast<const char*>(b), 2);
        }
    }
}

/// Reads a binary PGM into a [1,H,W] frame linearly mapped to [-1,1].
template <typename T>
Tensor<T> read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("missing file: " + path);
    std::string magic;
    f >> magic;
    if (magic != "P5") throw DataError("read_pgm: not a binary PGM: " + path);
    auto next_int = [&f, &path]() {
        // skip whitespace and '#' comments
        int c;
        while ((c = f.get()) != EOF) {
            if (c == '#') {
                while ((c = f.get()) != EOF && c != '\n') {
                }
            } else if (!std::isspace(c)) {
                f.unget();
                break;
            }
        }
        int v;
        if (!(f >> v)) throw DataError("read_pgm: truncated header: " + path);
        return v;
    };
    int W = next_int(), H = next_int(), maxval = next_int();
    f.get();  // single whitespace after maxval
    if (W < 1 || H < 1 || (maxval != 255 && maxval != 65535))
        throw DataError("read_pgm: unsupported header in " + path);
    Tensor<T> frame({1, H, W});
    for (int64_t i = 0; i < frame.size(); ++i) {
        long q;
        if (maxval == 255) {
            int b = f.get();
            if (b == EOF) throw DataError("read_pgm: truncated data: " + path);
            q = b;
        } else {
            int hi = f.get(), lo = f.get();
            if (hi == EOF || lo == EOF) throw DataError("read_pgm: truncated data: " + path);
            q = (hi << 8) | lo;
        }
        frame[i] = static_cast<T>(static_cast<double>(q) * 2.0 / maxval - 1.0);
    }
    return frame;
}

// ---------------------------------------------------------------------------
// manifests and sequences
// ---------------------------------------------------------------------------

struct FrameRecord {
    std::string sequence_id;
    int64_t timestamp = 0;
    std::string rel_path;
    int height = 0, width = 0;
};

/// In-memory sequence: ordered single-channel frames in [-1,1] plus
/// timestamps. `cadence` is the expected inter-frame interval; larger gaps
/// bound triplet windows.
template <typename T>
struct ImageSequence {
    std::string id;
    std::vector<Tensor<T>> frames;  // each [1,H,W]
    std::vector<int64_t> timestamps;
    int64_t cadence = 0;

    size_t size() const { return frames.size(); }
};

inline constexpr const char* kManifestHeader = "# pestgan-manifest v1";

inline std::vector<FrameRecord> parse_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("missing file: " + path);
    std::string line;
    if (!std::getline(f, line) || line != kManifestHeader)
        throw DataError("bad manifest header in " + path);
    std::vector<FrameRecord> out;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        FrameRecord r;
        std::string ts, h, w;
        if (!std::getline(is, r.sequence_id, '\t') || !std::getline(is, ts, '\t') ||
            !std::getline(is, r.rel_path, '\t') || !std::getline(is, h, '\t') ||
            !std::getline(is, w))
            throw DataError("bad manifest record at " + path + ":" + std::to_string(lineno));
        r.timestamp = parse_iso8601(ts);
        r.height = std::stoi(h);
        r.width = std::stoi(w);
        out.push_back(std::move(r));
    }
    return out;
}

/// Loads every sequence named in the manifest; frames come back in record
/// order, mapped to [-1,1]. Distinct DataError kinds: missing file, shape
/// mismatch with manifest, non-monotone timestamps.
template <typename T>
std::vector<ImageSequence<T>> load_sequences(const std::string& manifest_path) {
    namespace fs = std::filesystem;
    auto records = parse_manifest(manifest_path);
    fs::path base = fs::path(manifest_path).parent_path();
    std::vector<ImageSequence<T>> seqs;
    std::map<std::string, size_t> index;
    for (const auto& r : records) {
        auto it = index.find(r.sequence_id);
        if (it == index.end()) {
            index[r.sequence_id] = seqs.size();
            seqs.push_back(ImageSequence<T>{r.sequence_id, {}, {}, 0});
            it = index.find(r.sequence_id);
        }
        auto& seq = seqs[it->second];
        if (!seq.timestamps.empty() && r.timestamp <= seq.timestamps.back())
            throw DataError("non-monotone timestamps in sequence " + r.sequence_id);
        Tensor<T> frame = read_pgm<T>((base / r.rel_path).string());
        if (frame.dim(1) != r.height || frame.dim(2) != r.width)
            throw DataError("shape mismatch with manifest for " + r.rel_path);
        seq.frames.push_back(std::move(frame));
        seq.timestamps.push_back(r.timestamp);
    }
    for (auto& s : seqs) {
        int64_t cad = 0;
        for (size_t i = 1; i < s.timestamps.size(); ++i) {
            int64_t dt = s.timestamps[i] - s.timestamps[i - 1];
            if (cad == 0 || dt < cad) cad = dt;
        }
        s.cadence = cad;
    }
    return seqs;
}

/// Writes frames as PGM plus a manifest covering all sequences.
template <typename T>
void save_dataset(const std::string& dir, const std::vector<ImageSequence<T>>& seqs,
                  int bits = 16) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "frames");
    std::ofstream m(fs::path(dir) / "manifest.txt");
    if (!m) throw DataError("cannot write manifest in " + dir);
    m << kManifestHeader << "\n";
    for (const auto& seq : seqs) {
        for (size_t i = 0; i < seq.frames.size(); ++i) {
            char name[64];
            std::snprintf(name, sizeof(name), "frames/%s_%05zu.pgm", seq.id.c_str(), i);
            write_pgm((fs::path(dir) / name).string(), seq.frames[i], bits);
            m << seq.id << "\t" << format_iso8601(seq.timestamps[i]) << "\t" << name << "\t"
              << seq.frames[i].dim(1) << "\t" << seq.frames[i].dim(2) << "\n";
        }
    }
}

// ---------------------------------------------------------------------------
// degradation and windowing
// ---------------------------------------------------------------------------

/// Non-overlapping 4x4 (factor x factor) block average.
template <typename T>
Tensor<T> degrade(const Tensor<T>& hr, int factor = 4) {
    if (hr.rank() != 3 || hr.dim(0) != 1) throw std::invalid_argument("degrade: frame must be [1,H,W]");
    int H = hr.dim(1), W = hr.dim(2);
    if (H % factor != 0 || W % factor != 0)
        throw std::invalid_argument("degrade: dims not divisible by factor");
    Tensor<T> lr({1, H / factor, W / factor});
    T norm = T(1) / static_cast<T>(factor * factor);
    for (int h = 0; h < H / factor; ++h)
        for (int w = 0; w < W / factor; ++w) {
            T s = T(0);
            for (int i = 0; i < factor; ++i)
                for (int j = 0; j < factor; ++j) s += hr.at3(0, h * factor + i, w * factor + j);
            lr.at3(0, h, w) = s * norm;
        }
    return lr;
}

/// One training window: LR triplet plus the HR neighbors the losses and the
/// temporal critic need. `center` indexes into the source sequence.
struct TrainingSample {
    int sequence = 0;  // index into the dataset's sequence list
    int center = 0;    // frame index of the SR target
};

/// Sliding 3-frame windows, stride 1, never crossing a timestamp gap larger
/// than the sequence cadence.
template <typename T>
std::vector<TrainingSample> window_triplets(const ImageSequence<T>& seq, int seq_index = 0) {
    std::vector<TrainingSample> out;
    if (seq.size() < 3) return out;
    for (size_t c = 1; c + 1 < seq.size(); ++c) {
        int64_t d0 = seq.timestamps[c] - seq.timestamps[c - 1];
        int64_t d1 = seq.timestamps[c + 1] - seq.timestamps[c];
        if (seq.cadence > 0 && (d0 > seq.cadence || d1 > seq.cadence)) continue;
        out.push_back({seq_index, static_cast<int>(c)});
    }
    return out;
}

/// Materialized sample: LR inputs plus HR supervision frames.
template <typename T>
struct MaterializedSample {
    FrameTriplet<T> lr;
    Tensor<T> hr_prev, hr_center, hr_next;
};

template <typename T>
MaterializedSample<T> materialize(const std::vector<ImageSequence<T>>& seqs,
                                  const TrainingSample& s, int factor = 4) {
    const auto& seq = seqs.at(static_cast<size_t>(s.sequence));
    MaterializedSample<T> m;
    m.hr_prev = seq.frames.at(static_cast<size_t>(s.center - 1));
    m.hr_center = seq.frames.at(static_cast<size_t>(s.center));
    m.hr_next = seq.frames.at(static_cast<size_t>(s.center + 1));
    m.lr.scale = factor;
    m.lr.frames = {degrade(m.hr_prev, factor), degrade(m.hr_center, factor),
                   degrade(m.hr_next, factor)};
    return m;
}

/// Split by sequence id: ids listed in `test_ids` (or, if empty, every
/// tenth id in sorted order) go to the test side. No frame is shared.
template <typename T>
void train_test_split(const std::vector<ImageSequence<T>>& seqs,
                      const std::set<std::string>& test_ids, std::vector<int>& train_out,
                      std::vector<int>& test_out) {
    std::set<std::string> tids = test_ids;
    if (tids.empty()) {
        std::vector<std::string> ids;
        for (const auto& s : seqs) ids.push_back(s.id);
        std::sort(ids.begin(), ids.end());
        for (size_t i = 9; i < ids.size(); i += 10) tids.insert(ids[i]);
        if (tids.empty() && !ids.empty()) tids.insert(ids.back());
    }
    for (size_t i = 0; i < seqs.size(); ++i) {
        if (tids.count(seqs[i].id))
            test_out.push_back(static_cast<int>(i));
        else
            train_out.push_back(static_cast<int>(i));
    }
}

// ---------------------------------------------------------------------------
// synthetic advection-diffusion vortex oracle
// ---------------------------------------------------------------------------

/// Solid-body rotation + explicit diffusion of Gaussian blobs; the
/// desk-scale physics oracle. dt = dx = 1 in grid units.
struct SynthConfig {
    int grid = 64;
    double omega = 0.02;      // radians per integration step
    double nu = 0.05;         // grid^2 per step
    int blobs = 3;
    double blob_sigma_min = 4.0, blob_sigma_max = 9.0;
    int substeps = 1;         // integration steps per output frame
    int frames = 12;
    uint64_t seed = 0;
    int64_t start_time = 1640995200;  // 2022-01-01T00:00:00Z
    int64_t cadence = 3600;

    void validate() const {
        if (grid < 8) throw std::invalid_argument("SynthConfig: grid too small");
        if (nu < 0 || nu > 0.25)
            throw std::invalid_argument("SynthConfig: diffusion stability bound nu <= 0.25 violated");
        double rmax = 0.5 * std::sqrt(2.0) * grid;
        if (std::abs(omega) * rmax > 1.0)
            throw std::invalid_argument(
                "SynthConfig: per-step rotational displacement exceeds one grid cell");
        if (frames < 1 || blobs < 1 || substeps < 1)
            throw std::invalid_argument("SynthConfig: counts must be positive");
    }
};

namespace detail {

/// Bilinear sample with edge clamping.
template <typename T>
T sample_bilinear(const std::vector<T>& f, int n, double x, double y) {
    x = std::min(std::max(x, 0.0), static_cast<double>(n - 1));
    y = std::min(std::max(y, 0.0), static_cast<double>(n - 1));
    int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
    int x1 = std::min(x0 + 1, n - 1), y1 = std::min(y0 + 1, n - 1);
    double fx = x - x0, fy = y - y0;
    double v00 = f[static_cast<size_t>(y0) * n + x0], v01 = f[static_cast<size_t>(y0) * n + x1];
    double v10 = f[static_cast<size_t>(y1) * n + x0], v11 = f[static_cast<size_t>(y1) * n + x1];
    return static_cast<T>((v00 * (1 - fx) + v01 * fx) * (1 - fy) +
                          (v10 * (1 - fx) + v11 * fx) * fy);
}

/// Explicit diffusion step with reflecting (Neumann) boundaries.
inline void diffuse_step(std::vector<double>& f, int n, double nu) {
    std::vector<double> g(f.size());
    auto idx = [n](int y, int x) { return static_cast<size_t>(y) * n + x; };
    auto refl = [n](int v) { return v < 0 ? 0 : (v >= n ? n - 1 : v); };
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            double lap = f[idx(refl(y - 1), x)] + f[idx(refl(y + 1), x)] + f[idx(y, refl(x - 1))] +
                         f[idx(y, refl(x + 1))] - 4.0 * f[idx(y, x)];
            g[idx(y, x)] = f[idx(y, x)] + nu * lap;
        }
    f.swap(g);
}

}  // namespace detail

/// Fully seed-determined HR sequence of rotating, diffusing blobs; frames
/// normalized to [-1,1].
template <typename T>
ImageSequence<T> synth_vortex_sequence(const SynthConfig& cfg, const std::string& id = "synth") {
    cfg.validate();
    Rng rng(cfg.seed);
    int n = cfg.grid;
    std::vector<double> field(static_cast<size_t>(n) * n, 0.0);
    for (int b = 0; b < cfg.blobs; ++b) {
        double cx = rng.uniform(0.2 * n, 0.8 * n);
        double cy = rng.uniform(0.2 * n, 0.8 * n);
        double sig = rng.uniform(cfg.blob_sigma_min, cfg.blob_sigma_max);
        double amp = rng.uniform(0.4, 1.0);
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                double dx = x - cx, dy = y - cy;
                field[static_cast<size_t>(y) * n + x] +=
                    amp * std::exp(-(dx * dx + dy * dy) / (2 * sig * sig));
            }
    }
    for (auto& v : field) v = std::min(v, 1.0);

    ImageSequence<T> seq;
    seq.id = id;
    seq.cadence = cfg.cadence;
    double cx = 0.5 * (n - 1), cy = 0.5 * (n - 1);
    double ca = std::cos(-cfg.omega), sa = std::sin(-cfg.omega);
    for (int fidx = 0; fidx < cfg.frames; ++fidx) {
        Tensor<T> frame({1, n, n});
        for (int64_t i = 0; i < frame.size(); ++i)
            frame[i] = static_cast<T>(2.0 * std::min(std::max(field[static_cast<size_t>(i)], 0.0),
                                                     1.0) -
                                      1.0);
        seq.frames.push_back(std::move(frame));
        seq.timestamps.push_back(cfg.start_time + fidx * cfg.cadence);
        if (fidx + 1 == cfg.frames) break;
        for (int s = 0; s < cfg.substeps; ++s) {
            if (cfg.omega != 0.0) {
                std::vector<double> adv(field.size());
                for (int y = 0; y < n; ++y)
                    for (int x = 0; x < n; ++x) {
                        double rx = x - cx, ry = y - cy;
                        double sx = cx + ca * rx - sa * ry;  // backtrace by -omega
                        double sy = cy + sa * rx + ca * ry;
                        adv[static_cast<size_t>(y) * n + x] =
                            detail::sample_bilinear(field, n, sx, sy);
                    }
                field.swap(adv);
            }
            if (cfg.nu > 0.0) detail::diffuse_step(field, n, cfg.nu);
        }
    }
    return seq;
}

/// Convenience: a whole dataset of vortex sequences with per-sequence seeds.
template <typename T>
std::vector<ImageSequence<T>> synth_vortex_dataset(const SynthConfig& base, int n_sequences) {
    std::vector<ImageSequence<T>> out;
    for (int i = 0; i < n_sequences; ++i) {
        SynthConfig cfg = base;
        cfg.seed = base.seed * 0x9e3779b97f4a7c15ull + static_cast<uint64_t>(i) + 1;
        char id[32];
        std::snprintf(id, sizeof(id), "seq%04d", i);
        out.push_back(synth_vortex_sequence<T>(cfg, id));
    }
    return out;
}

}  // namespace pestgan
