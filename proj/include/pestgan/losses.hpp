#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pestgan/autograd.hpp"
#include "pestgan/errors.hpp"

namespace pestgan {

/// Weights of the hybrid objective
/// L_total = l1*L1 + feat*Lfeat + adv*Ladv + stat*Lstat + ker*Lker,
/// with lambda_t weighting the temporal-continuity part inside Lstat.
template <typename T>
struct LossWeights {
    T lambda_1 = T(1.0);
    T lambda_feat = T(10.0);
    T lambda_adv = T(0.05);
    T lambda_stat = T(0.1);
    T lambda_ker = T(1.0);
    T lambda_t = T(0.1);

    void validate() const {
        for (T v : {lambda_1, lambda_feat, lambda_adv, lambda_stat, lambda_ker, lambda_t})
            if (!(v >= T(0)) || !std::isfinite(static_cast<double>(v)))
                throw std::invalid_argument("LossWeights: weights must be finite and >= 0");
    }
};

/// Per-step record of every unweighted term, its weighted contribution and
/// the total; discriminator losses tracked separately.
template <typename T>
struct LossReport {
    T l1 = 0, feat = 0, adv = 0, stat = 0, ker = 0;
    T w_l1 = 0, w_feat = 0, w_adv = 0, w_stat = 0, w_ker = 0;
    T total = 0;
    T d_spatial = 0, d_temporal = 0;
};

/// Mean absolute difference.
template <typename T>
Var<T> l1_loss(const Var<T>& sr, const Var<T>& hr) {
    check_same_shape(sr, hr, "l1_loss");
    return mean_abs_diff(sr, hr);
}

/// Mean over layers of per-layer mean squared feature difference; real
/// features are detached (no gradient to the discriminator).
template <typename T>
Var<T> feature_matching_loss(const std::vector<Var<T>>& real_feats,
                             const std::vector<Var<T>>& fake_feats) {
    if (real_feats.size() != fake_feats.size() || real_feats.empty())
        throw std::invalid_argument("feature_matching_loss: mismatched feature lists");
    Var<T> acc = constant_scalar<T>(0);
    for (size_t i = 0; i < real_feats.size(); ++i) {
        check_same_shape(real_feats[i], fake_feats[i], "feature_matching_loss");
        acc = add(acc, mean_sq_diff(detach(real_feats[i]), fake_feats[i]));
    }
    return scale(acc, T(1) / static_cast<T>(real_feats.size()));
}

/// Hinge discriminator loss: mean[max(0, 1-s_real)] + mean[max(0, 1+s_fake)].
template <typename T>
Var<T> hinge_d_loss(const std::vector<Var<T>>& real_scores,
                    const std::vector<Var<T>>& fake_scores) {
    if (real_scores.empty() || fake_scores.empty())
        throw std::invalid_argument("hinge_d_loss: empty score list");
    Var<T> racc = constant_scalar<T>(0);
    for (const auto& s : real_scores) racc = add(racc, relu(affine(s, T(-1), T(1))));
    Var<T> facc = constant_scalar<T>(0);
    for (const auto& s : fake_scores) facc = add(facc, relu(affine(s, T(1), T(1))));
    return add(scale(racc, T(1) / static_cast<T>(real_scores.size())),
               scale(facc, T(1) / static_cast<T>(fake_scores.size())));
}

/// Generator adversarial loss: -E[D_S] - E[D_T] on generated content.
template <typename T>
Var<T> hinge_g_loss(const Var<T>& fake_spatial_score, const Var<T>& fake_temporal_score) {
    return neg(add(fake_spatial_score, fake_temporal_score));
}

/// Statistical consistency: squared difference of spatial variances plus
/// lambda_t times the variance of the temporal difference. Pass sr_prev as
/// null at sequence start to skip the continuity term.
template <typename T>
Var<T> stat_loss(const Var<T>& sr_t, const Var<T>& hr_t, const Var<T>& sr_prev, T lambda_t) {
    check_same_shape(sr_t, hr_t, "stat_loss");
    Var<T> energy = square(sub(variance(sr_t), variance(detach(hr_t))));
    if (!sr_prev) return energy;
    check_same_shape(sr_t, sr_prev, "stat_loss");
    return add(energy, scale(variance(sub(sr_t, sr_prev)), lambda_t));
}

/// Unweighted generator loss components.
template <typename T>
struct LossComponents {
    Var<T> l1, feat, adv, stat, ker;
};

namespace detail {

template <typename T>
void check_term(const Var<T>& v, const char* name) {
    if (!v) throw std::invalid_argument(std::string("total_generator_loss: missing term ") + name);
    if (!std::isfinite(static_cast<double>(value_of(v))))
        throw TrainingFault(std::string("non-finite loss term: ") + name);
}

}  // namespace detail

/// Weighted sum per the hybrid objective; throws TrainingFault naming the
/// offending term if any component is non-finite.
template <typename T>
Var<T> total_generator_loss(const LossComponents<T>& c, const LossWeights<T>& w,
                            LossReport<T>* report = nullptr) {
    w.validate();
    detail::check_term(c.l1, "l1");
    detail::check_term(c.feat, "feat");
    detail::check_term(c.adv, "adv");
    detail::check_term(c.stat, "stat");
    detail::check_term(c.ker, "ker");
    Var<T> total = scale(c.l1, w.lambda_1);
    total = add(total, scale(c.feat, w.lambda_feat));
    total = add(total, scale(c.adv, w.lambda_adv));
    total = add(total, scale(c.stat, w.lambda_stat));
    total = add(total, scale(c.ker, w.lambda_ker));
    if (report) {
        report->l1 = value_of(c.l1);
        report->feat = value_of(c.feat);
        report->adv = value_of(c.adv);
        report->stat = value_of(c.stat);
        report->ker = value_of(c.ker);
        report->w_l1 = w.lambda_1 * report->l1;
        report->w_feat = w.lambda_feat * report->feat;
        report->w_adv = w.lambda_adv * report->adv;
        report->w_stat = w.lambda_stat * report->stat;
        report->w_ker = w.lambda_ker * report->ker;
        report->total = value_of(total);
    }
    return total;
}

}  // namespace pestgan
