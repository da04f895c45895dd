#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pestgan/metrics.hpp"
#include "pestgan/rng.hpp"
#include "test_util.hpp"

using namespace pestgan;
using pestgan::test::random_tensor;

namespace {

Tensor<double> unit_random(int h, int w, Rng& rng) {
    Tensor<double> t({1, h, w});
    for (auto& v : t.data) v = rng.uniform();
    return t;
}

Tensor<double> offset(const Tensor<double>& t, double d) {
    Tensor<double> out = t;
    for (auto& v : out.data) v += d;
    return out;
}

}  // namespace

TEST_CASE("range mapping sends [-1,1] onto [0,1]") {
    Tensor<double> t({1, 1, 3});
    t.data = {-1.0, 0.0, 1.0};
    auto u = to_unit_range(t);
    CHECK(u.data[0] == 0.0);
    CHECK(u.data[1] == 0.5);
    CHECK(u.data[2] == 1.0);
}

TEST_CASE("psnr closed forms and the infinite sentinel") {
    Rng rng(1);
    auto ref = unit_random(8, 8, rng);
    CHECK(!psnr(ref, ref).has_value());

    auto p20 = psnr(ref, offset(ref, 0.1));
    REQUIRE(p20.has_value());
    CHECK(*p20 == doctest::Approx(20.0).epsilon(1e-9));

    auto p40 = psnr(ref, offset(ref, 0.01));
    REQUIRE(p40.has_value());
    CHECK(*p40 == doctest::Approx(40.0).epsilon(1e-9));

    CHECK_THROWS_AS(psnr(ref, Tensor<double>({1, 8, 7})), std::invalid_argument);
    CHECK_THROWS_AS(psnr(ref, ref, 0.0), std::invalid_argument);
}

TEST_CASE("psnr decreases monotonically with noise amplitude") {
    Rng rng(2);
    auto ref = unit_random(16, 16, rng);
    Tensor<double> noise({1, 16, 16});
    for (auto& v : noise.data) v = rng.normal();
    auto with_noise = [&](double amp) {
        Tensor<double> t = ref;
        for (int64_t i = 0; i < t.size(); ++i) t.data[i] += amp * noise.data[i];
        return *psnr(ref, t);
    };
    double p1 = with_noise(0.01), p2 = with_noise(0.02), p4 = with_noise(0.04);
    CHECK(p1 > p2);
    CHECK(p2 > p4);
}

TEST_CASE("ssim self-similarity, symmetry and constant closed form") {
    Rng rng(3);
    auto a = unit_random(16, 16, rng);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

    auto b = unit_random(16, 16, rng);
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-9));

    // constant images: variances vanish, closed form in the means alone
    double c = 0.4, d = 0.2;
    auto ca = Tensor<double>::full({1, 16, 16}, c);
    auto cb = Tensor<double>::full({1, 16, 16}, c + d);
    double C1 = 0.01 * 0.01;
    double want = (2 * c * (c + d) + C1) / (c * c + (c + d) * (c + d) + C1);
    CHECK(ssim(ca, cb) == doctest::Approx(want).epsilon(1e-12));

    // range-symmetric negation must not look identical
    Tensor<double> neg = a;
    for (auto& v : neg.data) v = 1.0 - v;
    CHECK(ssim(a, neg) < 1.0);

    CHECK_THROWS_AS(ssim(Tensor<double>({1, 8, 8}), Tensor<double>({1, 8, 8})),
                    std::invalid_argument);
    CHECK_THROWS_AS(ssim(a, Tensor<double>({1, 16, 15})), std::invalid_argument);
    // 2-D frames are accepted
    Tensor<double> flat({16, 16}, a.data);
    CHECK(ssim(flat, flat) == doctest::Approx(1.0));
}

TEST_CASE("rase closed forms and scale covariance") {
    auto half = Tensor<double>::full({1, 4, 4}, 0.5);
    CHECK(rase(half, half) == 0.0);

    auto six = Tensor<double>::full({1, 4, 4}, 0.6);
    CHECK(rase(half, six) == doctest::Approx(20.0).epsilon(1e-12));

    Rng rng(4);
    auto ref = unit_random(8, 8, rng);
    // independent two-pass oracle
    auto test_img = unit_random(8, 8, rng);
    double mu = 0;
    for (double v : ref.data) mu += v;
    mu /= ref.size();
    double mse = 0;
    for (int64_t i = 0; i < ref.size(); ++i) {
        double d = ref.data[i] - test_img.data[i];
        mse += d * d;
    }
    mse /= ref.size();
    CHECK(rase(ref, test_img) == doctest::Approx(100.0 / mu * std::sqrt(mse)).epsilon(1e-6));

    // doubling a uniform error doubles the metric
    CHECK(rase(ref, offset(ref, 0.08)) ==
          doctest::Approx(2 * rase(ref, offset(ref, 0.04))).epsilon(1e-9));

    CHECK_THROWS_AS(rase(Tensor<double>({1, 4, 4}), Tensor<double>({1, 4, 4})),
                    std::invalid_argument);
}

TEST_CASE("flicker cases") {
    auto c = Tensor<double>::full({1, 8, 8}, 0.3);
    std::vector<Tensor<double>> constant = {c, c, c, c};
    CHECK(flicker(constant) == 0.0);

    // uniform brightness drift has zero difference variance
    std::vector<Tensor<double>> drift;
    for (int i = 0; i < 4; ++i) drift.push_back(Tensor<double>::full({1, 8, 8}, 0.1 * i));
    CHECK(flicker(drift) == doctest::Approx(0.0).epsilon(1e-15));

    // alternating checkerboard flip: difference is a +-2a checkerboard
    double a = 0.25;
    Tensor<double> board({1, 8, 8});
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) board.at3(0, y, x) = ((x + y) % 2 ? a : -a);
    Tensor<double> flipped = board;
    for (auto& v : flipped.data) v = -v;
    std::vector<Tensor<double>> alt = {board, flipped, board};
    // difference values are +-2a with mean 0 -> variance (2a)^2
    CHECK(flicker(alt) == doctest::Approx(4 * a * a).epsilon(1e-12));

    CHECK_THROWS_AS(flicker(std::vector<Tensor<double>>{c}), std::invalid_argument);
}

TEST_CASE("report aggregates are the means of per-frame entries") {
    MetricReport<double> rep;
    rep.psnr_db = {20.0, std::nullopt, 30.0};
    rep.ssim_val = {0.5, 0.7, 0.9};
    rep.rase_percent = {10.0, 20.0, 60.0};
    CHECK(rep.mean_psnr() == doctest::Approx(25.0).epsilon(1e-9));
    CHECK(rep.infinite_psnr_count() == 1);
    CHECK(rep.mean_ssim() == doctest::Approx(0.7).epsilon(1e-9));
    CHECK(rep.mean_rase() == doctest::Approx(30.0).epsilon(1e-9));
}

TEST_CASE("metrics are deterministic") {
    Rng rng(5);
    auto a = unit_random(16, 16, rng);
    auto b = unit_random(16, 16, rng);
    CHECK(*psnr(a, b) == *psnr(a, b));
    CHECK(ssim(a, b) == ssim(a, b));
    CHECK(rase(a, b) == rase(a, b));
}
