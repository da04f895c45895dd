#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "pestgan/checkpoint.hpp"
#include "pestgan/config.hpp"
#include "pestgan/data.hpp"
#include "pestgan/discriminators.hpp"
#include "pestgan/generator.hpp"
#include "pestgan/losses.hpp"
#include "pestgan/metrics.hpp"

namespace pestgan {

/// Per-step training record formatted as one tab-separated log line.
template <typename T>
std::string format_log_line(int64_t step, const LossReport<T>& r) {
    std::ostringstream os;
    os.precision(10);
    os << step << "\tl1=" << r.l1 << "\tfeat=" << r.feat << "\tadv=" << r.adv
       << "\tstat=" << r.stat << "\tker=" << r.ker << "\ttotal=" << r.total
       << "\td_s=" << r.d_spatial << "\td_t=" << r.d_temporal;
    return os.str();
}

template <typename T>
struct EvalResult {
    MetricReport<T> model;
    MetricReport<T> baseline;  // nearest-neighbor upsample of the LR center
    T flicker_sr = T(0), flicker_hr = T(0);
    int frames = 0;
};

/// Owns the models, optimizers and RNG of one training run; all mutation
/// happens on the thread that calls train_step.
template <typename T>
class Trainer {
   public:
    explicit Trainer(const RunConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
        cfg_.validate();
        GeneratorConfig gc;
        gc.latent_channels = cfg.latent_channels;
        gc.enc_mid = cfg.enc_mid;
        gc.dec_mid = cfg.dec_mid;
        gc.dec_low = cfg.dec_low;
        gc.n_resblocks = cfg.n_resblocks;
        gc.sr_factor = cfg.sr_factor;
        gc.phy_kernel = cfg.phy_kernel;
        gc.moment_max_order = cfg.moment_max_order;
        gc.bank_layout = cfg.parsed_bank_layout();
        gen_ = std::make_unique<Generator<T>>(ps_, "G", gc, rng_);
        ds_ = std::make_unique<SpatialDiscriminator<T>>(ps_, "DS", cfg.disc_channels, rng_, 2,
                                                        cfg.disc_blocks);
        dt_ = std::make_unique<TemporalDiscriminator<T>>(ps_, "DT", cfg.disc_channels, rng_,
                                                         cfg.disc_blocks);
        adam_g_ = Adam<T>(static_cast<T>(cfg.lr_g), static_cast<T>(cfg.adam_beta1),
                          static_cast<T>(cfg.adam_beta2));
        adam_ds_ = Adam<T>(static_cast<T>(cfg.lr_d), static_cast<T>(cfg.adam_beta1),
                           static_cast<T>(cfg.adam_beta2));
        adam_dt_ = Adam<T>(static_cast<T>(cfg.lr_d), static_cast<T>(cfg.adam_beta1),
                           static_cast<T>(cfg.adam_beta2));
        weights_.lambda_1 = static_cast<T>(cfg.lambda_1);
        weights_.lambda_feat = static_cast<T>(cfg.lambda_feat);
        weights_.lambda_adv = static_cast<T>(cfg.lambda_adv);
        weights_.lambda_stat = static_cast<T>(cfg.lambda_stat);
        weights_.lambda_ker = static_cast<T>(cfg.lambda_ker);
        weights_.lambda_t = static_cast<T>(cfg.lambda_t);
    }

    const RunConfig& config() const { return cfg_; }
    ParamStore<T>& params() { return ps_; }
    Generator<T>& generator() { return *gen_; }
    SpatialDiscriminator<T>& d_spatial() { return *ds_; }
    TemporalDiscriminator<T>& d_temporal() { return *dt_; }
    int64_t step_count() const { return step_; }
    Rng& rng() { return rng_; }
    LossWeights<T>& weights() { return weights_; }

    /// Draws a batch of window indices from the training samples.
    std::vector<size_t> draw_batch(size_t n_samples) {
        std::vector<size_t> out;
        for (int i = 0; i < cfg_.batch_size; ++i)
            out.push_back(static_cast<size_t>(rng_.uniform_int(static_cast<int64_t>(n_samples))));
        return out;
    }

    /// One alternating update: D_S on (lr_up, HR) vs (lr_up, SR-detached),
    /// D_T on all-HR vs SR-center stacks, then the generator on the full
    /// hybrid objective with fresh discriminator scores.
    LossReport<T> train_step(const std::vector<ImageSequence<T>>& seqs,
                             const std::vector<TrainingSample>& batch) {
        if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
        struct Item {
            MaterializedSample<T> m;
            Var<T> lr_up, sr, sr_prev;  // sr_prev null at window-span starts
            Var<T> hr_prev_c, hr_center_c, hr_next_c;
        };
        std::vector<Item> items;
        for (const auto& s : batch) {
            Item it;
            it.m = materialize(seqs, s, cfg_.sr_factor);
            it.lr_up = upsample_nn(constant(it.m.lr.frames[1]), cfg_.sr_factor);
            it.sr = gen_->generate(it.m.lr);
            it.hr_prev_c = constant(it.m.hr_prev);
            it.hr_center_c = constant(it.m.hr_center);
            it.hr_next_c = constant(it.m.hr_next);
            // overlapping previous triplet (center-1) for the temporal
            // continuity term, if it exists within the same gap-free span
            const auto& seq = seqs[static_cast<size_t>(s.sequence)];
            if (s.center >= 2 && in_span(seq, s.center - 2, s.center)) {
                TrainingSample prev{s.sequence, s.center - 1};
                it.sr_prev = gen_->generate(materialize(seqs, prev, cfg_.sr_factor).lr);
            }
            items.push_back(std::move(it));
        }
        T invB = T(1) / static_cast<T>(items.size());
        LossReport<T> report;

        // ---- spatial discriminator ----
        ps_.zero_grad("DS/");
        {
            std::vector<Var<T>> real_scores, fake_scores;
            for (auto& it : items) {
                real_scores.push_back(ds_->forward(it.lr_up, it.hr_center_c, true).score);
                fake_scores.push_back(ds_->forward(it.lr_up, detach(it.sr), true).score);
            }
            Var<T> dl = hinge_d_loss(real_scores, fake_scores);
            report.d_spatial = value_of(dl);
            check_finite(report.d_spatial, "d_spatial");
            backward(dl);
            adam_ds_.step(ps_.with_prefix("DS/"));
        }

        // ---- temporal discriminator ----
        ps_.zero_grad("DT/");
        {
            std::vector<Var<T>> real_scores, fake_scores;
            for (auto& it : items) {
                auto real = build_temporal_input_var(it.hr_prev_c, it.hr_center_c, it.hr_next_c);
                auto fake = build_temporal_input_var(it.hr_prev_c, detach(it.sr), it.hr_next_c);
                real_scores.push_back(dt_->forward(real, true));
                fake_scores.push_back(dt_->forward(fake, true));
            }
            Var<T> dl = hinge_d_loss(real_scores, fake_scores);
            report.d_temporal = value_of(dl);
            check_finite(report.d_temporal, "d_temporal");
            backward(dl);
            adam_dt_.step(ps_.with_prefix("DT/"));
        }

        // ---- generator ----
        ps_.zero_grad("G/");
        {
            Var<T> l1_acc = constant_scalar<T>(0), feat_acc = constant_scalar<T>(0);
            Var<T> adv_acc = constant_scalar<T>(0), stat_acc = constant_scalar<T>(0);
            for (auto& it : items) {
                auto fake_out = ds_->forward(it.lr_up, it.sr, true);
                auto real_out = ds_->forward(it.lr_up, it.hr_center_c, true);
                auto fake_stack = build_temporal_input_var(it.hr_prev_c, it.sr, it.hr_next_c);
                Var<T> dt_score = dt_->forward(fake_stack, true);
                l1_acc = add(l1_acc, l1_loss(it.sr, it.hr_center_c));
                feat_acc = add(feat_acc, feature_matching_loss(real_out.features,
                                                               fake_out.features));
                adv_acc = add(adv_acc, hinge_g_loss(fake_out.score, dt_score));
                stat_acc = add(stat_acc, stat_loss(it.sr, it.hr_center_c, it.sr_prev,
                                                   weights_.lambda_t));
            }
            LossComponents<T> comps;
            comps.l1 = scale(l1_acc, invB);
            comps.feat = scale(feat_acc, invB);
            comps.adv = scale(adv_acc, invB);
            comps.stat = scale(stat_acc, invB);
            comps.ker = kernel_moment_loss(gen_->phycell.bank);
            Var<T> total = total_generator_loss(comps, weights_, &report);
            backward(total);
            adam_g_.step(ps_.with_prefix("G/"));
        }
        ++step_;
        return report;
    }

    /// Full training loop with per-step logging and periodic checkpoints.
    void train(const std::vector<ImageSequence<T>>& seqs,
               const std::vector<TrainingSample>& samples, std::ostream& log,
               const std::string& ckpt_path = "", std::ostream* progress = nullptr) {
        if (samples.empty()) throw DataError("no training samples");
        while (step_ < cfg_.train_steps) {
            std::vector<TrainingSample> batch;
            for (size_t idx : draw_batch(samples.size())) batch.push_back(samples[idx]);
            LossReport<T> r = train_step(seqs, batch);
            log << format_log_line(step_, r) << "\n";
            log.flush();
            if (progress && step_ % 50 == 0)
                *progress << "step " << step_ << "/" << cfg_.train_steps << " total=" << r.total
                          << " l1=" << r.l1 << "\n";
            if (!ckpt_path.empty() && cfg_.checkpoint_every > 0 &&
                (step_ % cfg_.checkpoint_every == 0 || step_ == cfg_.train_steps))
                save_checkpoint(ckpt_path);
        }
    }

    /// Super-resolves every eligible center frame of the given sequences and
    /// scores model vs nearest-neighbor baseline.
    EvalResult<T> evaluate(const std::vector<ImageSequence<T>>& seqs,
                           const std::vector<int>& seq_indices) {
        EvalResult<T> res;
        for (int si : seq_indices) {
            const auto& seq = seqs[static_cast<size_t>(si)];
            auto windows = window_triplets(seq, si);
            std::vector<Tensor<T>> sr_frames, hr_frames;
            int last_center = -10;
            for (const auto& w : windows) {
                auto m = materialize(seqs, w, cfg_.sr_factor);
                Var<T> sr = gen_->generate(m.lr);
                Tensor<T> sr_t = sr->value;
                Tensor<T> base =
                    upsample_nn(constant(m.lr.frames[1]), cfg_.sr_factor)->value;
                auto ref = to_unit_range(m.hr_center);
                auto sru = to_unit_range(sr_t);
                auto bu = to_unit_range(base);
                res.model.psnr_db.push_back(psnr(ref, sru));
                res.model.ssim_val.push_back(ssim(ref, sru));
                res.model.rase_percent.push_back(rase(ref, sru));
                res.baseline.psnr_db.push_back(psnr(ref, bu));
                res.baseline.ssim_val.push_back(ssim(ref, bu));
                res.baseline.rase_percent.push_back(rase(ref, bu));
                ++res.frames;
                if (w.center == last_center + 1) {
                    sr_frames.push_back(sr_t);
                    hr_frames.push_back(m.hr_center);
                } else {
                    flush_flicker(sr_frames, hr_frames, res);
                    sr_frames = {sr_t};
                    hr_frames = {m.hr_center};
                }
                last_center = w.center;
            }
            flush_flicker(sr_frames, hr_frames, res);
        }
        if (res.frames == 0) throw DataError("evaluate: empty dataset");
        if (flicker_runs_ > 0) {
            res.flicker_sr = flicker_sr_acc_ / static_cast<T>(flicker_runs_);
            res.flicker_hr = flicker_hr_acc_ / static_cast<T>(flicker_runs_);
        }
        return res;
    }

    // ---- persistence -----------------------------------------------------

    void save_checkpoint(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw ConfigError("cannot write checkpoint: " + path);
        f.write(ckpt::kMagic, 8);
        ckpt::write_u32(f, ckpt::kVersion);
        ckpt::write_u32(f, sizeof(T));
        ckpt::write_u64(f, static_cast<uint64_t>(step_));
        ckpt::write_string(f, rng_.serialize());
        ckpt::write_string(f, cfg_.serialize());
        // parameters
        const auto& all = ps_.all();
        ckpt::write_u32(f, static_cast<uint32_t>(all.size()));
        for (const auto& [name, v] : all) {
            ckpt::write_string(f, name);
            ckpt::write_tensor(f, v->value);
        }
        // optimizer groups
        auto write_adam = [&f](const Adam<T>& a) {
            ckpt::write_u64(f, static_cast<uint64_t>(a.steps()));
            ckpt::write_u32(f, static_cast<uint32_t>(a.state().size()));
            for (const auto& [name, slot] : a.state()) {
                ckpt::write_string(f, name);
                ckpt::write_tensor(f, slot.m);
                ckpt::write_tensor(f, slot.v);
            }
        };
        write_adam(adam_g_);
        write_adam(adam_ds_);
        write_adam(adam_dt_);
        // spectral states
        auto sn_layers = collect_sn();
        ckpt::write_u32(f, static_cast<uint32_t>(sn_layers.size()));
        for (auto& [name, st] : sn_layers) {
            ckpt::write_string(f, name);
            ckpt::write_tensor(f, st->u);
            ckpt::write_tensor(f, Tensor<T>::scalar(st->sigma_est));
        }
    }

    void load_checkpoint(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw ConfigError("cannot open checkpoint: " + path);
        char magic[8];
        f.read(magic, 8);
        if (!f || std::memcmp(magic, ckpt::kMagic, 8) != 0)
            throw ConfigError("corrupt checkpoint: bad magic in " + path);
        if (ckpt::read_u32(f) != ckpt::kVersion)
            throw ConfigError("checkpoint version mismatch in " + path);
        if (ckpt::read_u32(f) != sizeof(T))
            throw ConfigError("checkpoint precision mismatch in " + path);
        step_ = static_cast<int64_t>(ckpt::read_u64(f));
        rng_.deserialize(ckpt::read_string(f));
        ckpt::read_string(f);  // embedded config (informational; sizes checked below)
        uint32_t n = ckpt::read_u32(f);
        for (uint32_t i = 0; i < n; ++i) {
            std::string name = ckpt::read_string(f);
            Tensor<T> t = ckpt::read_tensor<T>(f);
            Var<T> p;
            try {
                p = ps_.get(name);
            } catch (const std::invalid_argument&) {
                throw ConfigError("checkpoint tensor not in model: " + name);
            }
            if (p->value.shape != t.shape)
                throw ConfigError("checkpoint shape mismatch for tensor " + name + ": file " +
                                  t.shape_str() + " vs model " + p->value.shape_str());
            p->value = std::move(t);
        }
        auto read_adam = [&f](Adam<T>& a) {
            a.set_steps(static_cast<int64_t>(ckpt::read_u64(f)));
            a.state().clear();
            uint32_t k = ckpt::read_u32(f);
            for (uint32_t i = 0; i < k; ++i) {
                std::string name = ckpt::read_string(f);
                auto& slot = a.state()[name];
                slot.m = ckpt::read_tensor<T>(f);
                slot.v = ckpt::read_tensor<T>(f);
            }
        };
        read_adam(adam_g_);
        read_adam(adam_ds_);
        read_adam(adam_dt_);
        uint32_t ns = ckpt::read_u32(f);
        auto sn_layers = collect_sn();
        for (uint32_t i = 0; i < ns; ++i) {
            std::string name = ckpt::read_string(f);
            Tensor<T> u = ckpt::read_tensor<T>(f);
            Tensor<T> sig = ckpt::read_tensor<T>(f);
            bool found = false;
            for (auto& [lname, st] : sn_layers)
                if (lname == name) {
                    st->u = std::move(u);
                    st->sigma_est = sig[0];
                    found = true;
                }
            if (!found) throw ConfigError("checkpoint SN state not in model: " + name);
        }
    }

   private:
    static void check_finite(T v, const char* name) {
        if (!std::isfinite(static_cast<double>(v)))
            throw TrainingFault(std::string("non-finite loss term: ") + name);
    }

    /// True when consecutive frames [first..last] have no gap > cadence.
    static bool in_span(const ImageSequence<T>& seq, int first, int last) {
        for (int i = first + 1; i <= last; ++i)
            if (seq.cadence > 0 &&
                seq.timestamps[static_cast<size_t>(i)] -
                        seq.timestamps[static_cast<size_t>(i - 1)] >
                    seq.cadence)
                return false;
        return true;
    }

    void flush_flicker(const std::vector<Tensor<T>>& sr_frames,
                       const std::vector<Tensor<T>>& hr_frames, EvalResult<T>&) {
        if (sr_frames.size() >= 2) {
            flicker_sr_acc_ += flicker(sr_frames);
            flicker_hr_acc_ += flicker(hr_frames);
            ++flicker_runs_;
        }
    }

    std::vector<std::pair<std::string, SpectralState<T>*>> collect_sn() const {
        std::vector<std::pair<std::string, SpectralState<T>*>> out;
        for (size_t i = 0; i < ds_->blocks.size(); ++i)
            out.push_back({"DS/b" + std::to_string(i), &ds_->blocks[i].sn});
        for (size_t i = 0; i < dt_->blocks.size(); ++i)
            out.push_back({"DT/b" + std::to_string(i), &dt_->blocks[i].sn});
        return out;
    }

    RunConfig cfg_;
    Rng rng_;
    ParamStore<T> ps_;
    std::unique_ptr<Generator<T>> gen_;
    std::unique_ptr<SpatialDiscriminator<T>> ds_;
    std::unique_ptr<TemporalDiscriminator<T>> dt_;
    Adam<T> adam_g_, adam_ds_, adam_dt_;
    LossWeights<T> weights_;
    int64_t step_ = 0;
    T flicker_sr_acc_ = T(0), flicker_hr_acc_ = T(0);
    int flicker_runs_ = 0;
};

}  // namespace pestgan
