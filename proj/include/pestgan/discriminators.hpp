#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pestgan/autograd.hpp"
#include "pestgan/nn.hpp"

namespace pestgan {

/// Power-iteration state for one spectrally normalized weight.
template <typename T>
struct SpectralState {
    Tensor<T> u;         // left singular-vector estimate, unit norm
    T sigma_est = T(0);  // current top-singular-value estimate
};

namespace detail {

template <typename T>
void normalize_vec(std::vector<T>& v) {
    T n = T(0);
    for (T x : v) n += x * x;
    n = std::sqrt(n);
    if (n > T(0))
        for (T& x : v) x /= n;
}

}  // namespace detail

/// One power-iteration update on a 2-D-reshaped weight matrix [m,n]:
/// v = normalize(W^T u), u = normalize(W v), sigma = u^T W v; the returned
/// weight is W / sigma. With update=false the state is left untouched
/// (evaluation-only passes). A zero matrix is returned unchanged with
/// sigma_est = 0.
template <typename T>
Tensor<T> spectral_normalize(const Tensor<T>& w2d, SpectralState<T>& state, bool update = true,
                             T* sigma_out = nullptr) {
    if (w2d.rank() != 2) throw std::invalid_argument("spectral_normalize: 2-D weight required");
    if (!w2d.all_finite()) throw std::invalid_argument("spectral_normalize: non-finite weight");
    int m = w2d.dim(0), n = w2d.dim(1);
    if (state.u.size() != m) {
        state.u = Tensor<T>({m});
        for (int i = 0; i < m; ++i) state.u[i] = T(1) / std::sqrt(static_cast<T>(m));
    }
    std::vector<T> u(state.u.data.begin(), state.u.data.end());
    std::vector<T> v(static_cast<size_t>(n), T(0));
    // v = W^T u
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) v[j] += w2d.data[static_cast<size_t>(i) * n + j] * u[i];
    detail::normalize_vec(v);
    // u' = W v
    std::vector<T> u2(static_cast<size_t>(m), T(0));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) u2[i] += w2d.data[static_cast<size_t>(i) * n + j] * v[j];
    T sigma = T(0);
    for (int i = 0; i < m; ++i) sigma += u2[i] * u[i];
    T nu2 = T(0);
    for (T x : u2) nu2 += x * x;
    nu2 = std::sqrt(nu2);
    if (nu2 == T(0)) {  // degenerate: zero (or u-orthogonal) action
        state.sigma_est = T(0);
        if (sigma_out) *sigma_out = T(0);
        return w2d;
    }
    // sigma from the advanced pair is the Rayleigh estimate ||W v||
    sigma = nu2;
    if (update) {
        for (T& x : u2) x /= nu2;
        std::copy(u2.begin(), u2.end(), state.u.data.begin());
        state.sigma_est = sigma;
    }
    if (sigma_out) *sigma_out = sigma;
    Tensor<T> out = w2d;
    for (T& x : out.data) x /= sigma;
    return out;
}

/// Convolution layer whose weight is divided by its estimated top singular
/// value. The power-iteration vector advances exactly once per training
/// forward; evaluation passes reuse the stored estimate.
template <typename T>
struct SNConv2d {
    Var<T> w, b;
    int stride = 1, pad = 0;
    mutable SpectralState<T> sn;

    SNConv2d() = default;
    SNConv2d(ParamStore<T>& ps, const std::string& name, int ci, int co, int k, int stride_,
             int pad_, bool bias, Rng& rng)
        : stride(stride_), pad(pad_) {
        w = ps.add(name + "/w", init::conv_weight<T>({co, ci, k, k}, rng));
        if (bias) b = ps.add(name + "/b", init::zeros<T>({co}));
    }

    /// Current sigma for the 2-D-reshaped weight; updates the state iff
    /// training.
    T current_sigma(bool training) const {
        int co = w->value.dim(0);
        int cols = static_cast<int>(w->value.size() / co);
        Tensor<T> w2d({co, cols}, w->value.data);
        T sigma = T(0);
        spectral_normalize(w2d, sn, training, &sigma);
        return sigma;
    }

    Var<T> forward(const Var<T>& x, bool training) const {
        T sigma = current_sigma(training);
        Var<T> weff = sigma > T(0) ? scale(w, T(1) / sigma) : w;
        return conv2d(x, weff, b, stride, pad);
    }

    /// Runs n power iterations on the current weight.
    void warmup(int iters) const {
        int co = w->value.dim(0);
        int cols = static_cast<int>(w->value.size() / co);
        Tensor<T> w2d({co, cols}, w->value.data);
        for (int i = 0; i < iters; ++i) spectral_normalize(w2d, sn, true);
    }
};

/// 5-channel temporal input: frames plus their finite differences.
template <typename T>
struct TemporalStack {
    Tensor<T> channels;  // [5,H,W]: prev, center, next, d_prev, d_next
};

template <typename T>
TemporalStack<T> build_temporal_input(const Tensor<T>& prev, const Tensor<T>& center,
                                      const Tensor<T>& next) {
    if (!prev.same_shape(center) || !center.same_shape(next))
        throw std::invalid_argument("build_temporal_input: shape mismatch");
    if (prev.rank() != 3 || prev.dim(0) != 1)
        throw std::invalid_argument("build_temporal_input: frames must be [1,H,W]");
    int H = prev.dim(1), W = prev.dim(2);
    TemporalStack<T> s;
    s.channels = Tensor<T>({5, H, W});
    int64_t plane = static_cast<int64_t>(H) * W;
    for (int64_t i = 0; i < plane; ++i) {
        s.channels[0 * plane + i] = prev[i];
        s.channels[1 * plane + i] = center[i];
        s.channels[2 * plane + i] = next[i];
        s.channels[3 * plane + i] = center[i] - prev[i];
        s.channels[4 * plane + i] = next[i] - center[i];
    }
    return s;
}

/// Differentiable temporal stack for training (gradients flow into center).
template <typename T>
Var<T> build_temporal_input_var(const Var<T>& prev, const Var<T>& center, const Var<T>& next) {
    check_same_shape(prev, center, "build_temporal_input");
    check_same_shape(center, next, "build_temporal_input");
    return concat_ch<T>({prev, center, next, sub(center, prev), sub(next, center)});
}

/// Spatial critic over [lr_up ; candidate]: strided SN conv blocks with
/// leaky-relu, exposing per-block features, then a 1x1 linear head without
/// SN; score is the spatial mean of the final map (patch critic).
template <typename T>
struct SpatialDiscriminator {
    std::vector<SNConv2d<T>> blocks;
    Conv2d<T> headconv;
    int n_blocks = 4;

    SpatialDiscriminator() = default;
    SpatialDiscriminator(ParamStore<T>& ps, const std::string& name, int base_channels, Rng& rng,
                         int in_channels = 2, int n_blocks_ = 4)
        : n_blocks(n_blocks_) {
        int ci = in_channels;
        int co = base_channels;
        for (int i = 0; i < n_blocks; ++i) {
            blocks.push_back(
                SNConv2d<T>(ps, name + "/b" + std::to_string(i), ci, co, 4, 2, 1, true, rng));
            ci = co;
            co = co * 2;
        }
        headconv = Conv2d<T>(ps, name + "/head", ci, 1, 1, 1, 0, true, rng);
    }

    struct Output {
        Var<T> score;                   // scalar
        std::vector<Var<T>> features;   // post-activation maps, one per SN block
    };

    Output forward(const Var<T>& lr_up, const Var<T>& candidate, bool training) const {
        check_same_shape(lr_up, candidate, "d_spatial");
        Var<T> x = concat_ch<T>({lr_up, candidate});
        Output out;
        for (const auto& blk : blocks) {
            x = leaky_relu(blk.forward(x, training), T(0.2));
            out.features.push_back(x);
        }
        out.score = mean(headconv.forward(x));
        return out;
    }

    void warmup_sn(int iters) const {
        for (const auto& blk : blocks) blk.warmup(iters);
    }
};

/// Temporal critic over the 5-channel frame + difference stack.
template <typename T>
struct TemporalDiscriminator {
    std::vector<SNConv2d<T>> blocks;
    Conv2d<T> headconv;
    int n_blocks = 4;

    TemporalDiscriminator() = default;
    TemporalDiscriminator(ParamStore<T>& ps, const std::string& name, int base_channels, Rng& rng,
                          int n_blocks_ = 4)
        : n_blocks(n_blocks_) {
        int ci = 5;
        int co = base_channels;
        for (int i = 0; i < n_blocks; ++i) {
            blocks.push_back(
                SNConv2d<T>(ps, name + "/b" + std::to_string(i), ci, co, 4, 2, 1, true, rng));
            ci = co;
            co = co * 2;
        }
        headconv = Conv2d<T>(ps, name + "/head", ci, 1, 1, 1, 0, true, rng);
    }

    Var<T> forward(const Var<T>& stack, bool training) const {
        if (stack->value.rank() != 3 || stack->value.dim(0) != 5)
            throw std::invalid_argument("d_temporal: 5-channel stack required");
        Var<T> x = stack;
        for (const auto& blk : blocks) x = leaky_relu(blk.forward(x, training), T(0.2));
        return mean(headconv.forward(x));
    }

    Var<T> forward(const TemporalStack<T>& stack, bool training) const {
        return forward(constant(stack.channels), training);
    }

    void warmup_sn(int iters) const {
        for (const auto& blk : blocks) blk.warmup(iters);
    }
};

}  // namespace pestgan
