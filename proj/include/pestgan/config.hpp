#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pestgan/errors.hpp"
#include "pestgan/phys_operators.hpp"

namespace pestgan {

/// Full hyperparameter record of a run. Every key has a default; unknown
/// keys in a config file are rejected. The canonical serialization is
/// embedded verbatim in every checkpoint.
struct RunConfig {
    uint64_t seed = 0;
    int sr_factor = 4;  // fixed; validated

    // generator
    int latent_channels = 64;
    int enc_mid = 32;
    int dec_mid = 32;
    int dec_low = 16;
    int n_resblocks = 3;
    int phy_kernel = 7;
    std::string bank_layout = "0,0;1,0;0,1;2,0;0,2;1,1";
    int moment_max_order = -1;

    // discriminators
    int disc_channels = 64;
    int disc_blocks = 4;

    // loss weights
    double lambda_1 = 1.0;
    double lambda_feat = 10.0;
    double lambda_adv = 0.05;
    double lambda_stat = 0.1;
    double lambda_ker = 1.0;
    double lambda_t = 0.1;

    // optimizer
    double lr_g = 2e-4;
    double lr_d = 2e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;

    // schedule
    int batch_size = 4;
    int train_steps = 1000;
    int checkpoint_every = 500;

    // data
    std::string data_manifest;
    std::string test_sequences;  // comma-separated sequence ids

    template <typename F>
    void visit(F&& f) {
        f("seed", seed);
        f("sr_factor", sr_factor);
        f("latent_channels", latent_channels);
        f("enc_mid", enc_mid);
        f("dec_mid", dec_mid);
        f("dec_low", dec_low);
        f("n_resblocks", n_resblocks);
        f("phy_kernel", phy_kernel);
        f("bank_layout", bank_layout);
        f("moment_max_order", moment_max_order);
        f("disc_channels", disc_channels);
        f("disc_blocks", disc_blocks);
        f("lambda_1", lambda_1);
        f("lambda_feat", lambda_feat);
        f("lambda_adv", lambda_adv);
        f("lambda_stat", lambda_stat);
        f("lambda_ker", lambda_ker);
        f("lambda_t", lambda_t);
        f("lr_g", lr_g);
        f("lr_d", lr_d);
        f("adam_beta1", adam_beta1);
        f("adam_beta2", adam_beta2);
        f("batch_size", batch_size);
        f("train_steps", train_steps);
        f("checkpoint_every", checkpoint_every);
        f("data_manifest", data_manifest);
        f("test_sequences", test_sequences);
    }

    void validate() const {
        if (sr_factor != 4) throw ConfigError("sr_factor is fixed at 4");
        if (latent_channels < 1 || phy_kernel < 3 || phy_kernel % 2 == 0)
            throw ConfigError("bad model sizes");
        if (batch_size < 1 || train_steps < 0) throw ConfigError("bad schedule");
        parsed_bank_layout();  // throws on malformed layout
    }

    std::vector<std::pair<int, int>> parsed_bank_layout() const {
        std::vector<std::pair<int, int>> out;
        std::istringstream is(bank_layout);
        std::string item;
        while (std::getline(is, item, ';')) {
            int a, b;
            if (std::sscanf(item.c_str(), "%d,%d", &a, &b) != 2)
                throw ConfigError("bad bank_layout entry: " + item);
            out.push_back({a, b});
        }
        if (out.empty()) throw ConfigError("empty bank_layout");
        return out;
    }

    std::set<std::string> parsed_test_sequences() const {
        std::set<std::string> out;
        std::istringstream is(test_sequences);
        std::string item;
        while (std::getline(is, item, ',')) {
            if (!item.empty()) out.insert(item);
        }
        return out;
    }

    /// Canonical key=value text, fixed field order.
    std::string serialize() const {
        std::ostringstream os;
        os.precision(17);
        auto& self = const_cast<RunConfig&>(*this);
        self.visit([&os](const char* name, auto& v) { os << name << "=" << v << "\n"; });
        return os.str();
    }

    static RunConfig parse_text(const std::string& text) {
        RunConfig cfg;
        std::map<std::string, std::string> kv;
        std::istringstream is(text);
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            size_t start = line.find_first_not_of(" \t");
            if (start == std::string::npos || line[start] == '#') continue;
            size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
            std::string key = line.substr(start, eq - start);
            while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
            std::string val = line.substr(eq + 1);
            size_t vs = val.find_first_not_of(" \t");
            val = vs == std::string::npos ? "" : val.substr(vs);
            while (!val.empty() && (val.back() == ' ' || val.back() == '\t' || val.back() == '\r'))
                val.pop_back();
            if (kv.count(key)) throw ConfigError("duplicate config key: " + key);
            kv[key] = val;
        }
        std::set<std::string> known;
        cfg.visit([&](const char* name, auto& field) {
            known.insert(name);
            auto it = kv.find(name);
            if (it == kv.end()) return;
            std::istringstream vs(it->second);
            using V = std::decay_t<decltype(field)>;
            if constexpr (std::is_same_v<V, std::string>) {
                field = it->second;
            } else {
                if (!(vs >> field) || !vs.eof())
                    throw ConfigError(std::string("bad value for config key ") + name + ": " +
                                      it->second);
            }
        });
        for (const auto& [key, _] : kv)
            if (!known.count(key)) throw ConfigError("unknown config key: " + key);
        cfg.validate();
        return cfg;
    }

    static RunConfig load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot open config file: " + path);
        std::ostringstream os;
        os << f.rdbuf();
        return parse_text(os.str());
    }
};

}  // namespace pestgan
