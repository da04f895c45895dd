#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "pestgan/autograd.hpp"
#include "pestgan/rng.hpp"

namespace pestgan::test {

/// Central finite-difference check: compares analytic gradients of
/// loss_fn() with (f(x+h)-f(x-h))/2h for every entry of every parameter.
/// Returns the worst relative error (absolute error where the denominator
/// is tiny).
inline double gradcheck(const std::function<pestgan::Var<double>()>& loss_fn,
                        const std::vector<pestgan::Var<double>>& params, double h = 1e-5,
                        int max_entries_per_param = 1 << 30, pestgan::Rng* sampler = nullptr) {
    for (auto& p : params) p->zero_grad();
    auto loss = loss_fn();
    pestgan::backward(loss);
    double worst = 0.0;
    for (auto& p : params) {
        std::vector<int64_t> idxs;
        if (p->value.size() <= max_entries_per_param || !sampler) {
            for (int64_t i = 0; i < p->value.size(); ++i) idxs.push_back(i);
            if (static_cast<int64_t>(idxs.size()) > max_entries_per_param)
                idxs.resize(static_cast<size_t>(max_entries_per_param));
        } else {
            for (int i = 0; i < max_entries_per_param; ++i)
                idxs.push_back(sampler->uniform_int(p->value.size()));
        }
        for (int64_t i : idxs) {
            double orig = p->value[i];
            p->value[i] = orig + h;
            double fp = pestgan::value_of(loss_fn());
            p->value[i] = orig - h;
            double fm = pestgan::value_of(loss_fn());
            p->value[i] = orig;
            double fd = (fp - fm) / (2 * h);
            double an = p->grad.data.empty() ? 0.0 : p->grad[i];
            double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
            worst = std::max(worst, std::abs(fd - an) / denom);
        }
    }
    return worst;
}

inline pestgan::Tensor<double> random_tensor(std::vector<int> shape, pestgan::Rng& rng,
                                             double scale = 1.0) {
    pestgan::Tensor<double> t(std::move(shape));
    for (auto& v : t.data) v = rng.normal() * scale;
    return t;
}

}  // namespace pestgan::test
