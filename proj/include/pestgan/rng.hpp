#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace pestgan {

/// Deterministic RNG with platform-independent uniform/normal draws.
/// std::normal_distribution is implementation-defined, so normals come
/// from an explicit Box-Muller transform over raw mt19937_64 output.
class Rng {
   public:
    explicit Rng(uint64_t seed = 0) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    /// Uniform in [0,1) with 53 bits of precision.
    double uniform() { return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    int64_t uniform_int(int64_t n) { return static_cast<int64_t>(uniform() * static_cast<double>(n)) % n; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double th = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(th);
        has_spare_ = true;
        return r * std::cos(th);
    }

    std::string serialize() const {
        std::ostringstream os;
        os << gen_ << " " << (has_spare_ ? 1 : 0) << " " << spare_;
        return os.str();
    }
    void deserialize(const std::string& s) {
        std::istringstream is(s);
        int hs = 0;
        is >> gen_ >> hs >> spare_;
        has_spare_ = hs != 0;
    }

   private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace pestgan
