#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace pipetune {

// Deterministic random source. All sampling is implemented on top of the
// raw mt19937_64 output stream, so a given seed produces the same draws on
// every platform and toolchain (std::*_distribution results are
// implementation-defined and would break replay tests).
class Rng {
public:
    Rng() : engine_(0x9e3779b97f4a7c15ULL) {}
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be positive.
    int uniform_int(int n) {
        if (n <= 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
        return static_cast<int>(uniform() * static_cast<double>(n)) % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller without the cached spare, so the generator state is fully
    // captured by the engine (needed for snapshot/restore).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double lognormal(double mu, double sigma) { return std::exp(mu + sigma * normal()); }

    // Knuth's method; fine for the small means used here.
    int poisson(double mean) {
        if (mean < 0.0) throw std::invalid_argument("Rng::poisson: negative mean");
        if (mean == 0.0) return 0;
        const double limit = std::exp(-mean);
        double prod = uniform();
        int k = 0;
        while (prod > limit) {
            prod *= uniform();
            ++k;
        }
        return k;
    }

    int binomial(int n, double p) {
        int hits = 0;
        for (int i = 0; i < n; ++i)
            if (bernoulli(p)) ++hits;
        return hits;
    }

    // Engine state round-trips exactly through the standard stream operators.
    std::string serialize() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void deserialize(const std::string& text) {
        std::istringstream is(text);
        is >> engine_;
        if (is.fail()) throw std::runtime_error("Rng::deserialize: malformed state");
    }

private:
    std::mt19937_64 engine_;
};

// SplitMix64 finalizer; used to derive independent stream seeds from a
// master seed without correlated low bits.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace pipetune
