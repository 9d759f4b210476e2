#include "circme/error_models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <string>

#include "circme/errors.hpp"

namespace circme {

ErrorModel::ErrorModel(ErrorFamily family, double sigma_u) : family_(family), sigma_u_(sigma_u)
{
    if (!std::isfinite(sigma_u) || sigma_u < 0.0)
        throw DomainError("ErrorModel: sigma_u must be finite and >= 0");
    if (family == ErrorFamily::None)
        sigma_u_ = 0.0;
}

double characteristic_fn(const ErrorModel& model, double t)
{
    const double s2t2 = model.variance() * t * t;
    switch (model.family()) {
    case ErrorFamily::None:
        return 1.0;
    case ErrorFamily::Gaussian:
        return std::exp(-0.5 * s2t2);
    case ErrorFamily::Laplace:
        return 1.0 / (1.0 + 0.5 * s2t2);
    }
    return 1.0;
}

double inverse_characteristic_fn(const ErrorModel& model, double t)
{
    const double s2t2 = model.variance() * t * t;
    switch (model.family()) {
    case ErrorFamily::None:
        return 1.0;
    case ErrorFamily::Gaussian:
        return std::exp(0.5 * s2t2);
    case ErrorFamily::Laplace:
        return 1.0 + 0.5 * s2t2;
    }
    return 1.0;
}

double density(const ErrorModel& model, double u)
{
    if (model.family() == ErrorFamily::None || model.sigma_u() == 0.0)
        throw DomainError("density: degenerate error law has no density");
    const double s = model.sigma_u();
    if (model.family() == ErrorFamily::Gaussian)
        return std::exp(-0.5 * (u / s) * (u / s)) / (s * std::sqrt(2.0 * std::numbers::pi));
    const double b = s / std::numbers::sqrt2;
    return std::exp(-std::abs(u) / b) / (2.0 * b);
}

double sample_error(const ErrorModel& model, Rng& rng)
{
    switch (model.family()) {
    case ErrorFamily::None:
        return 0.0;
    case ErrorFamily::Gaussian:
        return model.sigma_u() * rng.normal();
    case ErrorFamily::Laplace: {
        const double b = model.sigma_u() / std::numbers::sqrt2;
        const double u = rng.uniform_open() - 0.5;
        return -b * std::copysign(1.0, u) * std::log1p(-2.0 * std::abs(u));
    }
    }
    return 0.0;
}

double sigma_from_reliability(double var_x, double lambda)
{
    if (!(var_x > 0.0) || !std::isfinite(var_x))
        throw DomainError("sigma_from_reliability: var_x must be positive");
    if (!(lambda > 0.0 && lambda <= 1.0))
        throw DomainError("sigma_from_reliability: lambda must lie in (0, 1]");
    return std::sqrt(var_x * (1.0 - lambda) / lambda);
}

std::string_view to_string(ErrorFamily family)
{
    switch (family) {
    case ErrorFamily::None:
        return "none";
    case ErrorFamily::Gaussian:
        return "gaussian";
    case ErrorFamily::Laplace:
        return "laplace";
    }
    return "none";
}

ErrorFamily parse_error_family(std::string_view name)
{
    std::string s(name);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "none")
        return ErrorFamily::None;
    if (s == "gaussian" || s == "normal")
        return ErrorFamily::Gaussian;
    if (s == "laplace")
        return ErrorFamily::Laplace;
    throw DomainError("unknown error family '" + std::string(name) + "'");
}

} // namespace circme
