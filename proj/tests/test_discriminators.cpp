#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pestgan/discriminators.hpp"
#include "test_util.hpp"

using namespace pestgan;
using pestgan::test::random_tensor;

TEST_CASE("power iteration recovers known singular values") {
    // identity: sigma = 1, normalized weight unchanged
    Tensor<double> eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.data[i * 3 + i] = 1.0;
    SpectralState<double> st;
    Tensor<double> norm;
    for (int i = 0; i < 10; ++i) norm = spectral_normalize(eye, st);
    CHECK(st.sigma_est == doctest::Approx(1.0).epsilon(1e-9));
    for (int64_t i = 0; i < 9; ++i) CHECK(norm.data[i] == doctest::Approx(eye.data[i]));

    // diag(3,1): sigma -> 3 within 1e-6 in at most 50 iterations,
    // checked against the exact 2x2 SVD (diagonal => singular values 3, 1)
    Tensor<double> diag({2, 2});
    diag.data = {3, 0, 0, 1};
    SpectralState<double> st2;
    for (int i = 0; i < 50; ++i) spectral_normalize(diag, st2);
    CHECK(st2.sigma_est == doctest::Approx(3.0).epsilon(1e-6));
    auto norm2 = spectral_normalize(diag, st2);
    SpectralState<double> st3;
    for (int i = 0; i < 50; ++i) spectral_normalize(norm2, st3);
    CHECK(st3.sigma_est == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("normalized weights are near-nonexpansive") {
    Rng rng(1);
    Tensor<double> w = random_tensor({6, 10}, rng);
    SpectralState<double> st;
    Tensor<double> norm;
    for (int i = 0; i < 100; ++i) norm = spectral_normalize(w, st);
    for (int probe = 0; probe < 100; ++probe) {
        auto x = random_tensor({10}, rng);
        double nx = 0, ny = 0;
        for (int i = 0; i < 6; ++i) {
            double s = 0;
            for (int j = 0; j < 10; ++j) s += norm.data[i * 10 + j] * x.data[j];
            ny += s * s;
        }
        for (double v : x.data) nx += v * v;
        CHECK(std::sqrt(ny) <= (1 + 1e-3) * std::sqrt(nx));
    }
}

TEST_CASE("zero weight matrix is flagged degenerate and passed through") {
    Tensor<double> zero({4, 4});
    SpectralState<double> st;
    double sigma = -1;
    auto out = spectral_normalize(zero, st, true, &sigma);
    CHECK(sigma == 0.0);
    CHECK(st.sigma_est == 0.0);
    for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("eval-mode passes leave the power-iteration state untouched") {
    Rng rng(2);
    Tensor<double> w = random_tensor({5, 8}, rng);
    SpectralState<double> st;
    spectral_normalize(w, st);
    auto u_before = st.u.data;
    double sig_before = st.sigma_est;
    spectral_normalize(w, st, /*update=*/false);
    CHECK(st.u.data == u_before);
    CHECK(st.sigma_est == sig_before);
}

TEST_CASE("every SN layer reaches unit effective norm after warm-up") {
    ParamStore<double> ps;
    Rng rng(3);
    SpatialDiscriminator<double> ds(ps, "DS", 8, rng);
    TemporalDiscriminator<double> dt(ps, "DT", 8, rng);
    ds.warmup_sn(20);
    dt.warmup_sn(20);
    auto check_blocks = [&](const auto& d) {
        for (const auto& blk : d.blocks) {
            // estimated sigma of the normalized effective weight must be ~1;
            // the probe continues power iteration from the warmed-up vector
            int co = blk.w->value.dim(0);
            int cols = static_cast<int>(blk.w->value.size() / co);
            Tensor<double> w2d({co, cols}, blk.w->value.data);
            for (auto& v : w2d.data) v /= blk.sn.sigma_est;
            SpectralState<double> probe;
            probe.u = blk.sn.u;
            spectral_normalize(w2d, probe);
            CHECK(probe.sigma_est > 0.99);
            CHECK(probe.sigma_est < 1.01);
        }
    };
    check_blocks(ds);
    check_blocks(dt);
}

TEST_CASE("temporal stack carries frames and their differences") {
    Rng rng(4);
    auto a = random_tensor({1, 6, 6}, rng);

    auto same = build_temporal_input(a, a, a);
    for (int64_t i = 0; i < 36; ++i) {
        CHECK(same.channels[3 * 36 + i] == 0.0);
        CHECK(same.channels[4 * 36 + i] == 0.0);
    }

    auto zero = Tensor<double>({1, 4, 4});
    auto one = Tensor<double>::full({1, 4, 4}, 1.0);
    auto pulse = build_temporal_input(zero, one, zero);
    for (int64_t i = 0; i < 16; ++i) {
        CHECK(pulse.channels[3 * 16 + i] == 1.0);
        CHECK(pulse.channels[4 * 16 + i] == -1.0);
    }

    auto b = random_tensor({1, 6, 6}, rng);
    auto c = random_tensor({1, 6, 6}, rng);
    auto s = build_temporal_input(a, b, c);
    for (int64_t i = 0; i < 36; ++i) {
        // telescoping: d_prev + d_next == next - prev
        CHECK(s.channels[3 * 36 + i] + s.channels[4 * 36 + i] ==
              doctest::Approx(c.data[i] - a.data[i]).epsilon(1e-15));
        // frames are recoverable from channels 0-2 and the differences are
        // redundant functions of them
        CHECK(s.channels[0 * 36 + i] == a.data[i]);
        CHECK(s.channels[1 * 36 + i] == b.data[i]);
        CHECK(s.channels[2 * 36 + i] == c.data[i]);
        CHECK(s.channels[3 * 36 + i] == b.data[i] - a.data[i]);
        CHECK(s.channels[4 * 36 + i] == c.data[i] - b.data[i]);
    }

    CHECK_THROWS_AS(build_temporal_input(a, b, Tensor<double>({1, 5, 6})),
                    std::invalid_argument);
    CHECK_THROWS_AS(build_temporal_input(Tensor<double>({2, 6, 6}), Tensor<double>({2, 6, 6}),
                                         Tensor<double>({2, 6, 6})),
                    std::invalid_argument);
}

TEST_CASE("differentiable stack matches the plain builder") {
    Rng rng(5);
    auto a = random_tensor({1, 4, 4}, rng);
    auto b = random_tensor({1, 4, 4}, rng);
    auto c = random_tensor({1, 4, 4}, rng);
    auto plain = build_temporal_input(a, b, c);
    auto v = build_temporal_input_var(constant(a), leaf(b), constant(c));
    REQUIRE(v->value.shape == plain.channels.shape);
    for (int64_t i = 0; i < v->value.size(); ++i)
        CHECK(v->value.data[i] == doctest::Approx(plain.channels[i]).epsilon(1e-15));
}

TEST_CASE("spatial critic contract: score, features, determinism") {
    ParamStore<double> ps;
    Rng rng(6);
    SpatialDiscriminator<double> ds(ps, "DS", 8, rng);
    auto lr_up = leaf(random_tensor({1, 32, 32}, rng, 0.3));
    auto cand = leaf(random_tensor({1, 32, 32}, rng, 0.3));

    auto out = ds.forward(lr_up, cand, /*training=*/false);
    CHECK(std::isfinite(value_of(out.score)));
    REQUIRE(out.features.size() == 4);

    // features shrink spatially by the stride at every block and stay finite
    int expect = 16;
    for (const auto& f : out.features) {
        REQUIRE(f->value.rank() == 3);
        CHECK(f->value.dim(1) == expect);
        CHECK(f->value.dim(2) == expect);
        CHECK(f->value.all_finite());
        expect /= 2;
    }

    auto again = ds.forward(lr_up, cand, false);
    CHECK(value_of(again.score) == value_of(out.score));

    CHECK_THROWS_AS(ds.forward(lr_up, leaf(Tensor<double>({1, 16, 16})), false),
                    std::invalid_argument);
}

TEST_CASE("zeroed spatial head reduces the score to its bias") {
    ParamStore<double> ps;
    Rng rng(7);
    SpatialDiscriminator<double> ds(ps, "DS", 8, rng);
    std::fill(ds.headconv.w->value.data.begin(), ds.headconv.w->value.data.end(), 0.0);
    ds.headconv.b->value.data[0] = 0.625;
    auto lr_up = leaf(random_tensor({1, 32, 32}, rng, 0.3));
    auto cand = leaf(random_tensor({1, 32, 32}, rng, 0.3));
    auto out = ds.forward(lr_up, cand, false);
    CHECK(value_of(out.score) == doctest::Approx(0.625).epsilon(1e-12));
}

TEST_CASE("temporal critic contract: finiteness, determinism, input checks") {
    ParamStore<double> ps;
    Rng rng(8);
    TemporalDiscriminator<double> dt(ps, "DT", 8, rng);
    auto stack = leaf(random_tensor({5, 32, 32}, rng, 0.3));
    auto s1 = dt.forward(stack, false);
    CHECK(std::isfinite(value_of(s1)));
    CHECK(value_of(dt.forward(stack, false)) == value_of(s1));
    CHECK_THROWS_AS(dt.forward(leaf(Tensor<double>({3, 32, 32})), false), std::invalid_argument);
}

TEST_CASE("temporal critic distinguishes permuted difference channels") {
    int changed = 0;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        ParamStore<double> ps;
        Rng rng(seed + 1);
        TemporalDiscriminator<double> dt(ps, "DT", 4, rng, 2);
        auto stack = random_tensor({5, 16, 16}, rng, 0.5);
        Tensor<double> swapped = stack;
        int64_t plane = 16 * 16;
        for (int64_t i = 0; i < plane; ++i)
            std::swap(swapped[3 * plane + i], swapped[4 * plane + i]);
        double a = value_of(dt.forward(leaf(stack), false));
        double b = value_of(dt.forward(leaf(swapped), false));
        if (std::abs(a - b) > 1e-12) ++changed;
    }
    CHECK(changed >= 95);
}
