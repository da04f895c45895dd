#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pestgan/trainer.hpp"

using namespace pestgan;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("pestgan_harness_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

RunConfig tiny_run_config() {
    RunConfig cfg;
    cfg.seed = 1234;
    cfg.latent_channels = 8;
    cfg.enc_mid = 8;
    cfg.dec_mid = 8;
    cfg.dec_low = 8;
    cfg.n_resblocks = 1;
    cfg.phy_kernel = 3;
    cfg.bank_layout = "0,0;1,0;0,1";
    cfg.disc_channels = 4;
    cfg.disc_blocks = 2;
    cfg.batch_size = 1;
    return cfg;
}

std::vector<ImageSequence<float>> tiny_dataset(int n_seqs = 2, int frames = 5) {
    SynthConfig sc;
    sc.grid = 16;
    sc.frames = frames;
    sc.seed = 77;
    sc.blob_sigma_min = 2.0;
    sc.blob_sigma_max = 4.0;
    return synth_vortex_dataset<float>(sc, n_seqs);
}

std::vector<TrainingSample> all_windows(const std::vector<ImageSequence<float>>& seqs) {
    std::vector<TrainingSample> out;
    for (size_t i = 0; i < seqs.size(); ++i) {
        auto w = window_triplets(seqs[i], static_cast<int>(i));
        out.insert(out.end(), w.begin(), w.end());
    }
    return out;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

uint64_t hash_params(ParamStore<float>& ps, const std::string& prefix) {
    uint64_t h = 1469598103934665603ull;
    for (const auto& [name, v] : ps.all()) {
        if (name.rfind(prefix, 0) != 0) continue;
        for (float x : v->value.data) {
            uint32_t bits;
            std::memcpy(&bits, &x, 4);
            h = (h ^ bits) * 1099511628211ull;
        }
    }
    return h;
}

}  // namespace

TEST_CASE("config serialization round-trips and rejects malformed input") {
    RunConfig cfg = tiny_run_config();
    cfg.data_manifest = "some/path.txt";
    auto text = cfg.serialize();
    RunConfig back = RunConfig::parse_text(text);
    CHECK(back.serialize() == text);

    CHECK_THROWS_WITH_AS(RunConfig::parse_text("no_such_key=1\n"),
                         doctest::Contains("unknown config key"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::parse_text("seed=1\nseed=2\n"),
                         doctest::Contains("duplicate"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::parse_text("batch_size=abc\n"),
                         doctest::Contains("bad value"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse_text("sr_factor=2\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse_text("bank_layout=oops\n"), ConfigError);
    // comments and blank lines are tolerated
    RunConfig ok = RunConfig::parse_text("# comment\n\nseed=42\n");
    CHECK(ok.seed == 42);
}

TEST_CASE("log lines carry every term in fixed order") {
    LossReport<float> r;
    r.l1 = 0.5f;
    r.total = 1.25f;
    auto line = format_log_line<float>(7, r);
    CHECK(line.rfind("7\tl1=0.5\t", 0) == 0);
    for (const char* key : {"l1=", "feat=", "adv=", "stat=", "ker=", "total=", "d_s=", "d_t="})
        CHECK(line.find(key) != std::string::npos);
    CHECK(std::count(line.begin(), line.end(), '\t') == 8);
}

TEST_CASE("identical seeds give identical loss streams for 10 steps") {
    auto seqs = tiny_dataset();
    auto samples = all_windows(seqs);
    RunConfig cfg = tiny_run_config();

    auto run_stream = [&] {
        Trainer<float> t(cfg);
        std::vector<std::string> lines;
        for (int i = 0; i < 10; ++i) {
            std::vector<TrainingSample> batch;
            for (size_t idx : t.draw_batch(samples.size())) batch.push_back(samples[idx]);
            lines.push_back(format_log_line(t.step_count(), t.train_step(seqs, batch)));
        }
        return lines;
    };
    CHECK(run_stream() == run_stream());
}

TEST_CASE("save-load-save produces byte-identical checkpoints") {
    TempDir dir("ckpt");
    auto seqs = tiny_dataset();
    auto samples = all_windows(seqs);
    RunConfig cfg = tiny_run_config();

    Trainer<float> a(cfg);
    for (int i = 0; i < 3; ++i) {
        std::vector<TrainingSample> batch;
        for (size_t idx : a.draw_batch(samples.size())) batch.push_back(samples[idx]);
        a.train_step(seqs, batch);
    }
    auto p1 = dir.path / "a.ckpt";
    auto p2 = dir.path / "b.ckpt";
    a.save_checkpoint(p1.string());

    Trainer<float> b(cfg);
    b.load_checkpoint(p1.string());
    b.save_checkpoint(p2.string());
    CHECK(file_bytes(p1) == file_bytes(p2));
}

TEST_CASE("training resumes deterministically from a checkpoint") {
    TempDir dir("resume");
    auto seqs = tiny_dataset();
    auto samples = all_windows(seqs);
    RunConfig cfg = tiny_run_config();

    auto step_once = [&](Trainer<float>& t) {
        std::vector<TrainingSample> batch;
        for (size_t idx : t.draw_batch(samples.size())) batch.push_back(samples[idx]);
        return t.train_step(seqs, batch);
    };

    // continuous run: 8 steps, record the last 5 totals
    Trainer<float> cont(cfg);
    std::vector<float> cont_totals;
    for (int i = 0; i < 8; ++i) cont_totals.push_back(step_once(cont).total);

    // interrupted run: 3 steps, checkpoint, reload, 5 more
    Trainer<float> first(cfg);
    for (int i = 0; i < 3; ++i) step_once(first);
    auto p = dir.path / "mid.ckpt";
    first.save_checkpoint(p.string());

    Trainer<float> resumed(cfg);
    resumed.load_checkpoint(p.string());
    CHECK(resumed.step_count() == 3);
    for (int i = 0; i < 5; ++i) {
        float total = step_once(resumed).total;
        float want = cont_totals[static_cast<size_t>(3 + i)];
        CHECK(total == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("loading into a differently sized model names the offending tensor") {
    TempDir dir("mismatch");
    auto p = dir.path / "small.ckpt";
    {
        Trainer<float> t(tiny_run_config());
        t.save_checkpoint(p.string());
    }
    RunConfig big = tiny_run_config();
    big.latent_channels = 16;
    Trainer<float> other(big);
    try {
        other.load_checkpoint(p.string());
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        CHECK(msg.find("shape mismatch") != std::string::npos);
        CHECK(msg.find("G/") != std::string::npos);  // names the tensor
    }

    CHECK_THROWS_WITH_AS(other.load_checkpoint((dir.path / "nothere.ckpt").string()),
                         doctest::Contains("cannot open"), ConfigError);

    // corrupt magic
    auto bad = dir.path / "bad.ckpt";
    std::ofstream(bad.string(), std::ios::binary) << "NOTMAGIC garbage";
    CHECK_THROWS_WITH_AS(other.load_checkpoint(bad.string()), doctest::Contains("bad magic"),
                         ConfigError);
}

TEST_CASE("update phases leave the other side's parameters untouched") {
    auto seqs = tiny_dataset();
    auto samples = all_windows(seqs);

    // zero generator step size: discriminator phases must not move G
    RunConfig cfg_g0 = tiny_run_config();
    cfg_g0.lr_g = 0.0;
    Trainer<float> tg(cfg_g0);
    uint64_t g_before = hash_params(tg.params(), "G/");
    uint64_t d_before = hash_params(tg.params(), "DS/") ^ hash_params(tg.params(), "DT/");
    tg.train_step(seqs, {samples[0]});
    CHECK(hash_params(tg.params(), "G/") == g_before);
    CHECK((hash_params(tg.params(), "DS/") ^ hash_params(tg.params(), "DT/")) != d_before);

    // zero discriminator step size: the generator phase must not move D
    RunConfig cfg_d0 = tiny_run_config();
    cfg_d0.lr_d = 0.0;
    Trainer<float> td(cfg_d0);
    uint64_t g2 = hash_params(td.params(), "G/");
    uint64_t d2 = hash_params(td.params(), "DS/") ^ hash_params(td.params(), "DT/");
    td.train_step(seqs, {samples[0]});
    CHECK((hash_params(td.params(), "DS/") ^ hash_params(td.params(), "DT/")) == d2);
    CHECK(hash_params(td.params(), "G/") != g2);
}

TEST_CASE("spectral state advances exactly once per training forward") {
    ParamStore<float> ps;
    Rng rng(1);
    SpatialDiscriminator<float> ds(ps, "DS", 4, rng, 2, 2);
    auto x = constant(Tensor<float>::full({1, 16, 16}, 0.1f));

    ds.forward(x, x, true);
    auto u1 = ds.blocks[0].sn.u.data;
    ds.forward(x, x, true);
    auto u2 = ds.blocks[0].sn.u.data;
    CHECK(u1 != u2);

    ds.forward(x, x, false);  // eval pass: state frozen
    CHECK(ds.blocks[0].sn.u.data == u2);
}

TEST_CASE("log file line count equals completed step count") {
    auto seqs = tiny_dataset();
    auto samples = all_windows(seqs);
    RunConfig cfg = tiny_run_config();
    cfg.train_steps = 7;
    Trainer<float> t(cfg);
    std::ostringstream log;
    t.train(seqs, samples, log);
    CHECK(t.step_count() == 7);
    std::string text = log.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 7);
}

TEST_CASE("reconstruction-only training overfits a single repeated sample") {
    auto seqs = tiny_dataset(1, 3);
    auto samples = all_windows(seqs);
    REQUIRE(samples.size() == 1);

    RunConfig cfg = tiny_run_config();
    cfg.lambda_feat = 0;
    cfg.lambda_adv = 0;
    cfg.lambda_stat = 0;
    cfg.lambda_ker = 0;
    cfg.lr_d = 0.0;  // frozen critics
    cfg.lr_g = 2e-3;
    Trainer<float> t(cfg);

    float first = t.train_step(seqs, {samples[0]}).l1;
    float last = first;
    for (int i = 1; i < 200; ++i) last = t.train_step(seqs, {samples[0]}).l1;
    CHECK(last < 0.1f * first);
}

TEST_CASE("evaluation scores the model against the replication baseline") {
    auto seqs = tiny_dataset(2, 5);
    RunConfig cfg = tiny_run_config();
    Trainer<float> t(cfg);
    auto res = t.evaluate(seqs, {0, 1});
    CHECK(res.frames == 6);  // 3 windows per 5-frame sequence
    CHECK(res.model.psnr_db.size() == 6);
    CHECK(res.baseline.psnr_db.size() == 6);
    CHECK(res.baseline.mean_ssim() > 0);
    CHECK(res.flicker_hr > 0);
    // baseline metrics are deterministic per dataset
    auto res2 = t.evaluate(seqs, {0, 1});
    CHECK(res2.baseline.mean_psnr() == res.baseline.mean_psnr());
    CHECK_THROWS_AS(t.evaluate(seqs, {}), DataError);
}
