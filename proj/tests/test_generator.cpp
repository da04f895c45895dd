#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pestgan/generator.hpp"
#include "test_util.hpp"

using namespace pestgan;
using pestgan::test::gradcheck;
using pestgan::test::random_tensor;

namespace {

GeneratorConfig tiny_config() {
    GeneratorConfig cfg;
    cfg.latent_channels = 8;
    cfg.enc_mid = 4;
    cfg.dec_mid = 4;
    cfg.dec_low = 4;
    cfg.n_resblocks = 1;
    cfg.phy_kernel = 3;
    cfg.bank_layout = {{0, 0}, {1, 0}, {0, 1}};
    return cfg;
}

FrameTriplet<double> random_triplet(int h, int w, Rng& rng) {
    FrameTriplet<double> t;
    for (auto& f : t.frames) {
        f = Tensor<double>({1, h, w});
        for (auto& v : f.data) v = rng.uniform() * 2.0 - 1.0;
    }
    return t;
}

}  // namespace

TEST_CASE("nearest-neighbor upsampling replicates pixels") {
    auto one = leaf(Tensor<double>::full({1, 1, 1}, 0.3));
    auto up = upsample_nn(one, 4);
    REQUIRE(up->value.shape == std::vector<int>({1, 4, 4}));
    for (double v : up->value.data) CHECK(v == 0.3);

    Tensor<double> board({1, 2, 2});
    board.data = {-1, 1, 1, -1};
    auto up2 = upsample_nn(leaf(board), 4);
    REQUIRE(up2->value.shape == std::vector<int>({1, 8, 8}));
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
            CHECK(up2->value.at3(0, i, j) == board.at3(0, i / 4, j / 4));

    Rng rng(1);
    auto x = leaf(random_tensor({1, 3, 5}, rng));
    auto up3 = upsample_nn(x, 4);
    double m_in = 0, m_out = 0;
    for (double v : x->value.data) m_in += v;
    for (double v : up3->value.data) m_out += v;
    CHECK(m_out / up3->value.size() == doctest::Approx(m_in / x->value.size()).epsilon(1e-12));
}

TEST_CASE("encoder contract: shape, determinism, gradients") {
    ParamStore<double> ps;
    Rng rng(2);
    Generator<double> gen(ps, "G", tiny_config(), rng);

    auto frame = leaf(random_tensor({1, 16, 16}, rng, 0.3));
    auto z = gen.encode(frame);
    REQUIRE(z->value.shape == std::vector<int>({8, 4, 4}));

    auto z2 = gen.encode(leaf(frame->value));
    for (int64_t i = 0; i < z->value.size(); ++i) CHECK(z->value.data[i] == z2->value.data[i]);

    CHECK_THROWS_AS(gen.encode(leaf(Tensor<double>({1, 15, 16}))), std::invalid_argument);
    CHECK_THROWS_AS(gen.encode(leaf(Tensor<double>({2, 16, 16}))), std::invalid_argument);

    CHECK(gradcheck([&] { return mean(square(gen.encode(frame))); }, {frame}) < 1e-3);
}

TEST_CASE("convlstm hidden state is tanh-bounded") {
    ParamStore<double> ps;
    Rng rng(3);
    ConvLSTM<double> cell(ps, "lstm", 2, rng);
    for (int trial = 0; trial < 10; ++trial) {
        auto x = leaf(random_tensor({2, 6, 6}, rng, 3.0));
        ConvLSTM<double>::State s{leaf(random_tensor({2, 6, 6}, rng)),
                                  leaf(random_tensor({2, 6, 6}, rng, 2.0))};
        auto next = cell.step(x, s);
        for (double v : next.h->value.data) {
            CHECK(v > -1.0);
            CHECK(v < 1.0);
        }
    }
}

TEST_CASE("convlstm memory passthrough with pinned gates") {
    ParamStore<double> ps;
    Rng rng(4);
    ConvLSTM<double> cell(ps, "lstm", 2, rng);
    cell.overrides.has_forget = true;
    cell.overrides.forget = 1.0;
    cell.overrides.has_input = true;
    cell.overrides.input = 0.0;
    auto x = leaf(random_tensor({2, 5, 5}, rng));
    ConvLSTM<double>::State s{leaf(random_tensor({2, 5, 5}, rng)),
                              leaf(random_tensor({2, 5, 5}, rng))};
    auto next = cell.step(x, s);
    for (int64_t i = 0; i < s.c->value.size(); ++i)
        CHECK(next.c->value.data[i] == doctest::Approx(s.c->value.data[i]).epsilon(1e-12));
}

TEST_CASE("convlstm with zero weights follows hand-computed gate algebra") {
    ParamStore<double> ps;
    Rng rng(5);
    ConvLSTM<double> cell(ps, "lstm", 2, rng);
    std::fill(cell.gates.w->value.data.begin(), cell.gates.w->value.data.end(), 0.0);
    std::fill(cell.gates.b->value.data.begin(), cell.gates.b->value.data.end(), 0.0);
    auto x = leaf(random_tensor({2, 5, 5}, rng));
    ConvLSTM<double>::State s{leaf(random_tensor({2, 5, 5}, rng)),
                              leaf(random_tensor({2, 5, 5}, rng))};
    auto next = cell.step(x, s);
    // gates = sigmoid(0) = 0.5, candidate = tanh(0) = 0:
    // c' = 0.5 c, h' = 0.5 tanh(0.5 c)
    for (int64_t i = 0; i < s.c->value.size(); ++i) {
        double c = s.c->value.data[i];
        CHECK(next.c->value.data[i] == doctest::Approx(0.5 * c).epsilon(1e-12));
        CHECK(next.h->value.data[i] == doctest::Approx(0.5 * std::tanh(0.5 * c)).epsilon(1e-12));
    }
}

TEST_CASE("convlstm rejects shape mismatches") {
    ParamStore<double> ps;
    Rng rng(6);
    ConvLSTM<double> cell(ps, "lstm", 2, rng);
    ConvLSTM<double>::State s{leaf(Tensor<double>({2, 5, 5})), leaf(Tensor<double>({2, 5, 5}))};
    CHECK_THROWS_AS(cell.step(leaf(Tensor<double>({3, 5, 5})), s), std::invalid_argument);
    ConvLSTM<double>::State bad{leaf(Tensor<double>({2, 4, 5})), leaf(Tensor<double>({2, 5, 5}))};
    CHECK_THROWS_AS(cell.step(leaf(Tensor<double>({2, 5, 5})), bad), std::invalid_argument);
}

TEST_CASE("generated frames have 4x shape and tanh-bounded values") {
    ParamStore<double> ps;
    Rng rng(7);
    Generator<double> gen(ps, "G", tiny_config(), rng);
    auto triplet = random_triplet(4, 6, rng);
    auto sr = gen.generate(triplet);
    REQUIRE(sr->value.shape == std::vector<int>({1, 16, 24}));
    for (double v : sr->value.data) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("generation is deterministic for frozen parameters") {
    ParamStore<double> ps;
    Rng rng(8);
    Generator<double> gen(ps, "G", tiny_config(), rng);
    auto triplet = random_triplet(4, 4, rng);
    auto a = gen.generate(triplet);
    auto b = gen.generate(triplet);
    for (int64_t i = 0; i < a->value.size(); ++i) CHECK(a->value.data[i] == b->value.data[i]);
}

TEST_CASE("either branch can be zeroed at fusion and still decode") {
    ParamStore<double> ps;
    Rng rng(9);
    Generator<double> gen(ps, "G", tiny_config(), rng);
    auto triplet = random_triplet(4, 4, rng);
    auto full = gen.generate(triplet);

    gen.zero_res_branch = true;
    auto phy_only = gen.generate(triplet);
    gen.zero_res_branch = false;
    gen.zero_phy_branch = true;
    auto res_only = gen.generate(triplet);
    gen.zero_phy_branch = false;

    for (const auto& img : {phy_only, res_only}) {
        REQUIRE(img->value.shape == full->value.shape);
        CHECK(img->value.all_finite());
        for (double v : img->value.data) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("all-zero triplet produces a finite image") {
    ParamStore<double> ps;
    Rng rng(10);
    Generator<double> gen(ps, "G", tiny_config(), rng);
    FrameTriplet<double> triplet;
    for (auto& f : triplet.frames) f = Tensor<double>({1, 4, 4});
    auto sr = gen.generate(triplet);
    CHECK(sr->value.all_finite());
}

TEST_CASE("triplet validation rejects malformed input") {
    ParamStore<double> ps;
    Rng rng(11);
    Generator<double> gen(ps, "G", tiny_config(), rng);

    auto triplet = random_triplet(4, 4, rng);
    triplet.frames[2] = Tensor<double>({1, 4, 5});
    CHECK_THROWS_AS(gen.generate(triplet), std::invalid_argument);

    auto out_of_range = random_triplet(4, 4, rng);
    out_of_range.frames[0].data[0] = 1.5;
    CHECK_THROWS_AS(gen.generate(out_of_range), std::invalid_argument);

    auto bad_scale = random_triplet(4, 4, rng);
    bad_scale.scale = 2;
    CHECK_THROWS_AS(gen.generate(bad_scale), std::invalid_argument);
}

TEST_CASE("end-to-end gradients match finite differences on sampled parameters") {
    ParamStore<double> ps;
    Rng rng(12);
    Generator<double> gen(ps, "G", tiny_config(), rng);
    auto triplet = random_triplet(8, 8, rng);
    std::vector<Var<double>> params;
    for (auto& [name, v] : ps.all()) params.push_back(v);
    Rng sampler(99);
    CHECK(gradcheck([&] { return mean(gen.generate(triplet)); }, params, 1e-5, 4, &sampler) <
          1e-3);
}
