#include "circme/circular.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "circme/errors.hpp"

namespace circme {

double wrap_angle(double x)
{
    if (!std::isfinite(x))
        throw DomainError("wrap_angle: non-finite angle");
    if (x >= -kPi && x < kPi)
        return x;
    double r = std::fmod(x + kPi, kTwoPi);
    if (r < 0.0)
        r += kTwoPi;
    double out = r - kPi;
    // fmod/addition rounding can land exactly on +pi
    if (out >= kPi)
        out = -kPi;
    return out;
}

namespace {

Angle mean_from_sums(double s, double c, std::size_t n)
{
    if (n == 0)
        throw DomainError("circular_mean: empty sample");
    if (std::hypot(s, c) <= 1e-12 * static_cast<double>(n))
        throw UndefinedMean("circular_mean: resultant vanishes (antipodal cancellation)");
    return Angle(std::atan2(s, c));
}

} // namespace

Angle circular_mean(std::span<const double> angles)
{
    double s = 0.0, c = 0.0;
    for (double a : angles) {
        s += std::sin(a);
        c += std::cos(a);
    }
    return mean_from_sums(s, c, angles.size());
}

Angle circular_mean(const Eigen::Ref<const Eigen::VectorXd>& angles)
{
    return mean_from_sums(angles.array().sin().sum(), angles.array().cos().sum(),
                          static_cast<std::size_t>(angles.size()));
}

double mean_resultant_length(std::span<const double> angles)
{
    if (angles.empty())
        throw DomainError("mean_resultant_length: empty sample");
    double s = 0.0, c = 0.0;
    for (double a : angles) {
        s += std::sin(a);
        c += std::cos(a);
    }
    return std::hypot(s, c) / static_cast<double>(angles.size());
}

Angle sample_von_mises(const VonMisesParams& params, Rng& rng)
{
    const double kappa = params.kappa;
    if (!(kappa >= 0.0) || !std::isfinite(kappa))
        throw DomainError("sample_von_mises: kappa must be finite and >= 0");
    if (kappa < 1e-8)
        return Angle(kPi * (2.0 * rng.uniform() - 1.0));

    double s;
    if (kappa < 1e-5) {
        s = 0.5 / kappa;
    } else {
        const double r = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
        const double rho = (r - std::sqrt(2.0 * r)) / (2.0 * kappa);
        s = (1.0 + rho * rho) / (2.0 * rho);
    }

    double w;
    for (;;) {
        const double z = std::cos(kPi * rng.uniform());
        w = (1.0 + s * z) / (s + z);
        const double y = kappa * (s - w);
        const double v = rng.uniform_open();
        if (y * (2.0 - y) - v >= 0.0 || std::log(y / v) + 1.0 - y >= 0.0)
            break;
    }
    double theta = std::acos(std::clamp(w, -1.0, 1.0));
    if (rng.uniform() < 0.5)
        theta = -theta;
    return Angle(theta + params.mu.value());
}

} // namespace circme
