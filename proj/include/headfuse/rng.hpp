#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace headfuse {

/// Seeded random source with a normal sampler that is byte-stable across
/// standard libraries. std::normal_distribution is implementation-defined,
/// so gaussians are produced by Box-Muller over the raw mt19937_64 stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    /// Uniform double in (0, 1).
    double uniform() {
        // 53 mantissa bits; offset by half an ulp so 0 is never produced.
        return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal draw.
    double normal();

    /// Vector of independent N(0, variances[i]) draws.
    Eigen::VectorXd normal_vector(const Eigen::VectorXd& variances);

    /// Vector of n independent N(0, sigma^2) draws.
    Eigen::VectorXd normal_vector(int n, double sigma);

    std::uint64_t raw() { return gen_(); }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace headfuse
