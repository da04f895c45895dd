#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "pestgan/autograd.hpp"
#include "pestgan/rng.hpp"
#include "pestgan/tensor.hpp"

namespace pestgan {

/// Owns all trainable leaves of a model, keyed by hierarchical name
/// ("G/enc1/w", "DS/b0/w", ...). Name order is the canonical iteration
/// order for checkpoints and optimizers.
template <typename T>
class ParamStore {
   public:
    Var<T> add(const std::string& name, Tensor<T> init) {
        if (params_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
        auto v = leaf(std::move(init));
        params_[name] = v;
        return v;
    }

    Var<T> get(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::invalid_argument("unknown parameter: " + name);
        return it->second;
    }

    std::vector<std::pair<std::string, Var<T>>> with_prefix(const std::string& prefix) const {
        std::vector<std::pair<std::string, Var<T>>> out;
        for (const auto& [name, v] : params_)
            if (name.rfind(prefix, 0) == 0) out.push_back({name, v});
        return out;
    }

    void zero_grad(const std::string& prefix = "") {
        for (auto& [name, v] : params_)
            if (name.rfind(prefix, 0) == 0) v->zero_grad();
    }

    const std::map<std::string, Var<T>>& all() const { return params_; }

   private:
    std::map<std::string, Var<T>> params_;
};

namespace init {

/// He-style fan-in scaled normal init for conv weights.
template <typename T>
Tensor<T> conv_weight(std::vector<int> shape, Rng& rng, double gain = 1.0) {
    Tensor<T> w(shape);
    int64_t fan_in = 1;
    for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
    double std = gain * std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : w.data) v = static_cast<T>(rng.normal() * std);
    return w;
}

template <typename T>
Tensor<T> zeros(std::vector<int> shape) {
    return Tensor<T>::zeros(std::move(shape));
}

}  // namespace init

/// Plain convolution layer (zero padding).
template <typename T>
struct Conv2d {
    Var<T> w, b;  // b may be null
    int stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(ParamStore<T>& ps, const std::string& name, int ci, int co, int k, int stride_,
           int pad_, bool bias, Rng& rng, double gain = 1.0)
        : stride(stride_), pad(pad_) {
        w = ps.add(name + "/w", init::conv_weight<T>({co, ci, k, k}, rng, gain));
        if (bias) b = ps.add(name + "/b", init::zeros<T>({co}));
    }

    Var<T> forward(const Var<T>& x) const { return conv2d(x, w, b, stride, pad); }
};

template <typename T>
struct ConvTranspose2d {
    Var<T> w, b;
    int stride = 1, pad = 0;

    ConvTranspose2d() = default;
    ConvTranspose2d(ParamStore<T>& ps, const std::string& name, int ci, int co, int k, int stride_,
                    int pad_, bool bias, Rng& rng, double gain = 1.0)
        : stride(stride_), pad(pad_) {
        w = ps.add(name + "/w", init::conv_weight<T>({ci, co, k, k}, rng, gain));
        if (bias) b = ps.add(name + "/b", init::zeros<T>({co}));
    }

    Var<T> forward(const Var<T>& x) const { return conv_transpose2d(x, w, b, stride, pad); }
};

/// Adam over a named parameter group. State tensors are keyed by the
/// parameter name so they serialize alongside checkpoints.
template <typename T>
class Adam {
   public:
    Adam() = default;
    Adam(T lr, T beta1, T beta2, T eps = T(1e-8)) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(const std::vector<std::pair<std::string, Var<T>>>& group) {
        ++t_;
        double bc1 = 1.0 - std::pow(static_cast<double>(b1_), static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(static_cast<double>(b2_), static_cast<double>(t_));
        for (const auto& [name, p] : group) {
            if (p->grad.data.empty()) continue;
            auto& st = state_[name];
            if (st.m.data.empty()) {
                st.m = Tensor<T>::zeros(p->value.shape);
                st.v = Tensor<T>::zeros(p->value.shape);
            }
            for (int64_t i = 0; i < p->value.size(); ++i) {
                T g = p->grad[i];
                st.m[i] = b1_ * st.m[i] + (T(1) - b1_) * g;
                st.v[i] = b2_ * st.v[i] + (T(1) - b2_) * g * g;
                T mhat = static_cast<T>(st.m[i] / bc1);
                T vhat = static_cast<T>(st.v[i] / bc2);
                p->value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    void set_lr(T lr) { lr_ = lr; }
    T lr() const { return lr_; }
    int64_t steps() const { return t_; }

    struct Slot {
        Tensor<T> m, v;
    };
    std::map<std::string, Slot>& state() { return state_; }
    const std::map<std::string, Slot>& state() const { return state_; }
    void set_steps(int64_t t) { t_ = t; }

   private:
    T lr_ = T(2e-4), b1_ = T(0.5), b2_ = T(0.999), eps_ = T(1e-8);
    int64_t t_ = 0;
    std::map<std::string, Slot> state_;
};

}  // namespace pestgan
