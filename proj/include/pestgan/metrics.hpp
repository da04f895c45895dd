#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "pestgan/tensor.hpp"

namespace pestgan {

/// Metrics operate on frames mapped from [-1,1] to [0,1] with peak /
/// dynamic range fixed at 1.0.
template <typename T>
Tensor<T> to_unit_range(const Tensor<T>& frame) {
    Tensor<T> out = frame;
    for (auto& v : out.data) v = (v + T(1)) * T(0.5);
    return out;
}

/// 10*log10(peak^2 / MSE); identical frames yield the infinite sentinel
/// (nullopt), reported as "inf" and excluded from aggregates.
template <typename T>
std::optional<T> psnr(const Tensor<T>& ref, const Tensor<T>& test, T peak = T(1)) {
    if (!ref.same_shape(test)) throw std::invalid_argument("psnr: shape mismatch");
    if (!(peak > T(0))) throw std::invalid_argument("psnr: peak must be positive");
    double mse = 0;
    for (int64_t i = 0; i < ref.size(); ++i) {
        double d = static_cast<double>(ref[i]) - static_cast<double>(test[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(ref.size());
    if (mse == 0.0) return std::nullopt;
    return static_cast<T>(10.0 * std::log10(static_cast<double>(peak) * peak / mse));
}

namespace detail {

inline const std::vector<double>& ssim_window() {
    static const std::vector<double> w = [] {
        std::vector<double> g(121);
        double sum = 0;
        for (int i = 0; i < 11; ++i)
            for (int j = 0; j < 11; ++j) {
                double dy = i - 5, dx = j - 5;
                g[static_cast<size_t>(i) * 11 + j] = std::exp(-(dx * dx + dy * dy) / (2 * 1.5 * 1.5));
                sum += g[static_cast<size_t>(i) * 11 + j];
            }
        for (auto& v : g) v /= sum;
        return g;
    }();
    return w;
}

}  // namespace detail

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), C1=(0.01 L)^2,
/// C2=(0.03 L)^2, mean over valid (fully interior) window positions.
template <typename T>
T ssim(const Tensor<T>& ref, const Tensor<T>& test, T dynamic_range = T(1)) {
    if (!ref.same_shape(test)) throw std::invalid_argument("ssim: shape mismatch");
    int H, W;
    if (ref.rank() == 3 && ref.dim(0) == 1) {
        H = ref.dim(1);
        W = ref.dim(2);
    } else if (ref.rank() == 2) {
        H = ref.dim(0);
        W = ref.dim(1);
    } else {
        throw std::invalid_argument("ssim: frame must be [H,W] or [1,H,W]");
    }
    if (H < 11 || W < 11) throw std::invalid_argument("ssim: frame smaller than the 11x11 window");
    const auto& win = detail::ssim_window();
    double L = static_cast<double>(dynamic_range);
    double C1 = (0.01 * L) * (0.01 * L), C2 = (0.03 * L) * (0.03 * L);
    const T* a = ref.data.data();
    const T* b = test.data.data();
    double acc = 0;
    int64_t count = 0;
    for (int y = 5; y < H - 5; ++y)
        for (int x = 5; x < W - 5; ++x) {
            double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    double w = win[static_cast<size_t>(i) * 11 + j];
                    double pa = a[static_cast<size_t>(y + i - 5) * W + (x + j - 5)];
                    double pb = b[static_cast<size_t>(y + i - 5) * W + (x + j - 5)];
                    ma += w * pa;
                    mb += w * pb;
                    va += w * pa * pa;
                    vb += w * pb * pb;
                    cov += w * pa * pb;
                }
            va -= ma * ma;
            vb -= mb * mb;
            cov -= ma * mb;
            acc += ((2 * ma * mb + C1) * (2 * cov + C2)) /
                   ((ma * ma + mb * mb + C1) * (va + vb + C2));
            ++count;
        }
    return static_cast<T>(acc / static_cast<double>(count));
}

/// Single-channel RASE: 100 / mean(ref) * RMSE(ref, test), in percent.
template <typename T>
T rase(const Tensor<T>& ref, const Tensor<T>& test) {
    if (!ref.same_shape(test)) throw std::invalid_argument("rase: shape mismatch");
    double mu = 0, mse = 0;
    for (int64_t i = 0; i < ref.size(); ++i) {
        mu += static_cast<double>(ref[i]);
        double d = static_cast<double>(ref[i]) - static_cast<double>(test[i]);
        mse += d * d;
    }
    mu /= static_cast<double>(ref.size());
    mse /= static_cast<double>(ref.size());
    if (mu == 0.0) throw std::invalid_argument("rase: zero reference mean, metric undefined");
    return static_cast<T>(100.0 / mu * std::sqrt(mse));
}

/// Mean over consecutive pairs of the spatial variance of the temporal
/// difference; brightness drift (constant difference) contributes zero.
template <typename T>
T flicker(const std::vector<Tensor<T>>& seq) {
    if (seq.size() < 2) throw std::invalid_argument("flicker: need at least 2 frames");
    double acc = 0;
    for (size_t i = 0; i + 1 < seq.size(); ++i) {
        if (!seq[i].same_shape(seq[i + 1])) throw std::invalid_argument("flicker: shape mismatch");
        double m = 0;
        for (int64_t j = 0; j < seq[i].size(); ++j)
            m += static_cast<double>(seq[i + 1][j]) - static_cast<double>(seq[i][j]);
        m /= static_cast<double>(seq[i].size());
        double v = 0;
        for (int64_t j = 0; j < seq[i].size(); ++j) {
            double d = static_cast<double>(seq[i + 1][j]) - static_cast<double>(seq[i][j]) - m;
            v += d * d;
        }
        acc += v / static_cast<double>(seq[i].size());
    }
    return static_cast<T>(acc / static_cast<double>(seq.size() - 1));
}

/// Per-frame metrics plus aggregates; infinite PSNR entries are counted
/// separately and excluded from the mean.
template <typename T>
struct MetricReport {
    std::vector<std::optional<T>> psnr_db;
    std::vector<T> ssim_val;
    std::vector<T> rase_percent;
    T flicker_val = T(0);

    T mean_psnr() const {
        double s = 0;
        int64_t n = 0;
        for (const auto& p : psnr_db)
            if (p) {
                s += static_cast<double>(*p);
                ++n;
            }
        return n ? static_cast<T>(s / n) : T(0);
    }
    int infinite_psnr_count() const {
        int n = 0;
        for (const auto& p : psnr_db)
            if (!p) ++n;
        return n;
    }
    T mean_ssim() const {
        double s = 0;
        for (T v : ssim_val) s += static_cast<double>(v);
        return ssim_val.empty() ? T(0) : static_cast<T>(s / static_cast<double>(ssim_val.size()));
    }
    T mean_rase() const {
        double s = 0;
        for (T v : rase_percent) s += static_cast<double>(v);
        return rase_percent.empty() ? T(0)
                                    : static_cast<T>(s / static_cast<double>(rase_percent.size()));
    }
};

}  // namespace pestgan
