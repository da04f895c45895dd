#pragma once

#include <string>

#include "pestgan/autograd.hpp"
#include "pestgan/nn.hpp"
#include "pestgan/phys_operators.hpp"

namespace pestgan {

/// Recurrent physics branch: residual prediction through the
/// moment-constrained operator bank, then a gated correction against the
/// encoded observation (h_{t+1} = h~ + K (x - h~)).
template <typename T>
struct PhyCell {
    /// Test hook for pinning the correction gain.
    enum class GainOverride { None, Zero, One };

    KernelBank<T> bank;   // depthwise operators, one per derivative pair
    Conv2d<T> combine;    // 1x1, K*C -> C, no bias (keeps predict linear)
    Conv2d<T> gain;       // 3x3 over [x ; h~], 2C -> C, bias allowed
    int channels = 0;
    GainOverride gain_override = GainOverride::None;

    PhyCell() = default;
    PhyCell(ParamStore<T>& ps, const std::string& name, int channels_, int kernel_size, Rng& rng,
            std::vector<std::pair<int, int>> layout = default_bank_layout(), int max_order = -1,
            double combine_init_std = 0.02)
        : channels(channels_) {
        bank = KernelBank<T>(ps, name + "/bank", std::move(layout), kernel_size, rng, 0.02,
                             max_order);
        combine = Conv2d<T>(ps, name + "/combine", bank.count() * channels, channels, 1, 1, 0,
                            /*bias=*/false, rng, combine_init_std);
        gain = Conv2d<T>(ps, name + "/gain", 2 * channels, channels, 3, 1, 1, /*bias=*/true, rng);
    }

    void check_latent(const Var<T>& h, const char* op) const {
        if (h->value.rank() != 3 || h->value.dim(0) != channels)
            throw std::invalid_argument(std::string(op) + ": latent shape mismatch " +
                                        h->value.shape_str());
    }

    /// h~ = h + combine(bank(h)); zero combine weights give identity dynamics.
    Var<T> predict(const Var<T>& h) const {
        check_latent(h, "phycell_predict");
        auto responses = depthwise_bank(h, bank.kernels);
        return add(h, combine.forward(responses));
    }

    /// h_next = h~ + K (x - h~) with K = sigmoid(gain([x ; h~])) in (0,1).
    Var<T> correct(const Var<T>& h_tilde, const Var<T>& x) const {
        check_latent(h_tilde, "phycell_correct");
        check_same_shape(h_tilde, x, "phycell_correct");
        switch (gain_override) {
            case GainOverride::Zero:
                return h_tilde;
            case GainOverride::One:
                return x;
            case GainOverride::None:
                break;
        }
        Var<T> innovation = sub(x, h_tilde);
        Var<T> k = sigmoid(gain.forward(concat_ch<T>({x, h_tilde})));
        return add(h_tilde, mul(k, innovation));
    }

    Var<T> step(const Var<T>& h, const Var<T>& x) const { return correct(predict(h), x); }
};

/// ConvLSTM cell with 3x3 gate convolutions over [x ; h].
template <typename T>
struct ConvLSTM {
    /// Test hooks pinning individual gates to a constant.
    struct GateOverrides {
        bool has_input = false, has_forget = false, has_output = false;
        T input = T(0), forget = T(0), output = T(0);
    };

    Conv2d<T> gates;  // 2C -> 4C, order: input, forget, output, candidate
    int channels = 0;
    GateOverrides overrides;

    ConvLSTM() = default;
    ConvLSTM(ParamStore<T>& ps, const std::string& name, int channels_, Rng& rng)
        : channels(channels_) {
        gates = Conv2d<T>(ps, name + "/gates", 2 * channels, 4 * channels, 3, 1, 1, /*bias=*/true,
                          rng);
    }

    struct State {
        Var<T> h, c;
    };

    State step(const Var<T>& x, const State& s) const {
        if (x->value.rank() != 3 || x->value.dim(0) != channels)
            throw std::invalid_argument("convlstm_step: input shape mismatch " +
                                        x->value.shape_str());
        check_same_shape(x, s.h, "convlstm_step");
        check_same_shape(x, s.c, "convlstm_step");
        Var<T> g = gates.forward(concat_ch<T>({x, s.h}));
        int C = channels;
        Var<T> gi = sigmoid(slice_ch(g, 0, C));
        Var<T> gf = sigmoid(slice_ch(g, C, 2 * C));
        Var<T> go = sigmoid(slice_ch(g, 2 * C, 3 * C));
        Var<T> cand = tanh_op(slice_ch(g, 3 * C, 4 * C));
        if (overrides.has_input) gi = constant(Tensor<T>::full(gi->value.shape, overrides.input));
        if (overrides.has_forget) gf = constant(Tensor<T>::full(gf->value.shape, overrides.forget));
        if (overrides.has_output) go = constant(Tensor<T>::full(go->value.shape, overrides.output));
        Var<T> c_next = add(mul(gf, s.c), mul(gi, cand));
        Var<T> h_next = mul(go, tanh_op(c_next));
        return {h_next, c_next};
    }
};

}  // namespace pestgan
