#pragma once

#include <cstdint>
#include <random>

namespace pwrsim {

/// Seeded generator whose streams are identical on every platform.
///
/// std::mt19937_64 output is fully specified by the standard, but the
/// standard distributions are not, so the distributions used by the workload
/// generator are implemented here on top of the raw engine.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01();
    /// Uniform integer in [lo, hi], unbiased.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    /// Exponential with the given rate (mean 1/rate).
    double exponential(double rate);
    /// Standard normal (Box-Muller, one value per call).
    double standard_normal();
    /// Log-normal parameterized by its own mean and coefficient of variation.
    double lognormal_mean_cv(double mean, double cv);

private:
    std::mt19937_64 engine_;
};

}  // namespace pwrsim
