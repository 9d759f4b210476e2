#pragma once

#include <numbers>
#include <span>

#include <Eigen/Dense>

#include "circme/random.hpp"

namespace circme {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Reduce `x` modulo 2*pi into [-pi, pi). Values already in range are returned unchanged,
/// so wrapping is idempotent bit for bit. Throws DomainError for non-finite input.
double wrap_angle(double x);

/// Angle in radians, always held in [-pi, pi).
class Angle {
public:
    constexpr Angle() = default;
    explicit Angle(double radians) : value_(wrap_angle(radians)) {}

    constexpr double value() const noexcept { return value_; }
    constexpr operator double() const noexcept { return value_; }

    friend Angle operator+(Angle a, double b) { return Angle(a.value_ + b); }
    friend Angle operator-(Angle a, double b) { return Angle(a.value_ - b); }

private:
    double value_ = 0.0;
};

struct VonMisesParams {
    Angle mu;
    double kappa = 0.0;
};

/// atan2 of the mean sine and mean cosine. Throws DomainError on an empty sample and
/// UndefinedMean when the resultant length is below 1e-12 * n.
Angle circular_mean(std::span<const double> angles);
Angle circular_mean(const Eigen::Ref<const Eigen::VectorXd>& angles);

/// Mean resultant length R-bar in [0, 1].
double mean_resultant_length(std::span<const double> angles);

/// 1 - cos(a - b), in [0, 2].
inline double cosine_dissimilarity(double a, double b) { return 1.0 - std::cos(a - b); }

/// Best-Fisher wrapped-Cauchy rejection sampler; kappa == 0 gives the circular uniform.
Angle sample_von_mises(const VonMisesParams& params, Rng& rng);

} // namespace circme
