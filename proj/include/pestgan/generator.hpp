#pragma once

#include <array>
#include <string>
#include <vector>

#include "pestgan/autograd.hpp"
#include "pestgan/nn.hpp"
#include "pestgan/phycell.hpp"

namespace pestgan {

/// Ordered LR frames [I_{t-1}, I_t, I_{t+1}], each [1,H,W] in [-1,1].
template <typename T>
struct FrameTriplet {
    std::array<Tensor<T>, 3> frames;
    int scale = 4;

    void validate() const {
        for (const auto& f : frames) {
            if (f.rank() != 3 || f.dim(0) != 1)
                throw std::invalid_argument("FrameTriplet: frames must be [1,H,W]");
            if (!f.same_shape(frames[0]))
                throw std::invalid_argument("FrameTriplet: frame shapes differ");
            for (const T& v : f.data)
                if (!(v >= T(-1) && v <= T(1)))
                    throw std::invalid_argument("FrameTriplet: values outside [-1,1]");
        }
    }
};

struct GeneratorConfig {
    int latent_channels = 64;
    int enc_mid = 32;
    int dec_mid = 32;
    int dec_low = 16;
    int n_resblocks = 3;
    int sr_factor = 4;
    int phy_kernel = 7;
    int moment_max_order = -1;
    std::vector<std::pair<int, int>> bank_layout = default_bank_layout();
};

/// Physics Encoded Generator: NN-upsample the triplet, shared strided
/// encoder, PhyCell + ConvLSTM branches, center-state fusion, decoder with
/// transposed convs and residual blocks, tanh output.
template <typename T>
struct Generator {
    GeneratorConfig cfg;
    Conv2d<T> enc1, enc2;
    PhyCell<T> phycell;
    ConvLSTM<T> convlstm;
    Conv2d<T> fuse;
    ConvTranspose2d<T> dec1, dec2;
    std::vector<Conv2d<T>> res_a, res_b;
    Conv2d<T> head;

    // Test hooks: structurally zero one branch at the fusion input.
    bool zero_phy_branch = false;
    bool zero_res_branch = false;

    Generator() = default;
    Generator(ParamStore<T>& ps, const std::string& name, const GeneratorConfig& cfg_, Rng& rng)
        : cfg(cfg_) {
        int C = cfg.latent_channels;
        enc1 = Conv2d<T>(ps, name + "/enc1", 1, cfg.enc_mid, 3, 2, 1, true, rng);
        enc2 = Conv2d<T>(ps, name + "/enc2", cfg.enc_mid, C, 3, 2, 1, true, rng);
        phycell = PhyCell<T>(ps, name + "/phycell", C, cfg.phy_kernel, rng, cfg.bank_layout,
                             cfg.moment_max_order);
        convlstm = ConvLSTM<T>(ps, name + "/convlstm", C, rng);
        fuse = Conv2d<T>(ps, name + "/fuse", 2 * C, C, 3, 1, 1, true, rng);
        dec1 = ConvTranspose2d<T>(ps, name + "/dec1", C, cfg.dec_mid, 4, 2, 1, true, rng);
        dec2 = ConvTranspose2d<T>(ps, name + "/dec2", cfg.dec_mid, cfg.dec_low, 4, 2, 1, true, rng);
        for (int i = 0; i < cfg.n_resblocks; ++i) {
            res_a.push_back(Conv2d<T>(ps, name + "/res" + std::to_string(i) + "a", cfg.dec_low,
                                      cfg.dec_low, 3, 1, 1, true, rng));
            res_b.push_back(Conv2d<T>(ps, name + "/res" + std::to_string(i) + "b", cfg.dec_low,
                                      cfg.dec_low, 3, 1, 1, true, rng, 0.1));
        }
        head = Conv2d<T>(ps, name + "/head", cfg.dec_low, 1, 3, 1, 1, true, rng);
    }

    static Var<T> lrelu(const Var<T>& v) { return leaky_relu(v, T(0.2)); }

    /// Shared encoder: two stride-2 convolutions, total stride 4.
    Var<T> encode(const Var<T>& frame_up) const {
        if (frame_up->value.rank() != 3 || frame_up->value.dim(0) != 1)
            throw std::invalid_argument("encode: input must be [1,H,W]");
        int H = frame_up->value.dim(1), W = frame_up->value.dim(2);
        if (H % 4 != 0 || W % 4 != 0)
            throw std::invalid_argument("encode: dims must be divisible by the total stride (4)");
        return lrelu(enc2.forward(lrelu(enc1.forward(frame_up))));
    }

    Var<T> decode(const Var<T>& fused) const {
        Var<T> d = lrelu(dec2.forward(lrelu(dec1.forward(fused))));
        for (size_t i = 0; i < res_a.size(); ++i)
            d = add(d, res_b[i].forward(lrelu(res_a[i].forward(d))));
        return tanh_op(head.forward(d));
    }

    /// Per-step latent snapshots, recorded for diagnostics and tests.
    struct Trace {
        std::vector<Var<T>> phy;    // h_phy after each frame
        std::vector<Var<T>> res_h;  // h_res after each frame
        Var<T> fused;
    };

    /// Runs the triplet recurrence and decodes the SR center frame.
    /// Fusion consumes the states recorded immediately after the center
    /// frame; the t+1 frame still advances the recurrence for diagnostics.
    Var<T> generate(const FrameTriplet<T>& triplet, Trace* trace = nullptr) const {
        triplet.validate();
        if (triplet.scale != cfg.sr_factor)
            throw std::invalid_argument("generate: unsupported scale factor");
        int C = cfg.latent_channels;
        int H = triplet.frames[0].dim(1) * cfg.sr_factor;
        int W = triplet.frames[0].dim(2) * cfg.sr_factor;
        Var<T> phy = constant(Tensor<T>::zeros({C, H / 4, W / 4}));
        typename ConvLSTM<T>::State res{constant(Tensor<T>::zeros({C, H / 4, W / 4})),
                                        constant(Tensor<T>::zeros({C, H / 4, W / 4}))};
        Var<T> phy_center, res_center;
        Trace local;
        for (int i = 0; i < 3; ++i) {
            Var<T> x = encode(upsample_nn(constant(triplet.frames[i]), cfg.sr_factor));
            phy = phycell.step(phy, x);
            res = convlstm.step(x, res);
            local.phy.push_back(phy);
            local.res_h.push_back(res.h);
            if (i == 1) {
                phy_center = phy;
                res_center = res.h;
            }
        }
        if (zero_phy_branch) phy_center = scale(phy_center, T(0));
        if (zero_res_branch) res_center = scale(res_center, T(0));
        Var<T> fused = lrelu(fuse.forward(concat_ch<T>({phy_center, res_center})));
        local.fused = fused;
        if (trace) *trace = std::move(local);
        return decode(fused);
    }
};

}  // namespace pestgan
