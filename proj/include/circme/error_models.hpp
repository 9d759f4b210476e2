#pragma once

#include <string>
#include <string_view>

#include "circme/random.hpp"

namespace circme {

enum class ErrorFamily { None, Gaussian, Laplace };

/// Additive measurement-error law U, parameterised by its standard deviation.
/// Both families are symmetric about zero, so the characteristic function is real,
/// even, and strictly positive.
class ErrorModel {
public:
    ErrorModel() = default;
    /// Throws DomainError for negative or non-finite sigma_u; family None forces sigma_u = 0.
    ErrorModel(ErrorFamily family, double sigma_u);

    static ErrorModel none() { return {}; }
    static ErrorModel gaussian(double sigma_u) { return {ErrorFamily::Gaussian, sigma_u}; }
    static ErrorModel laplace(double sigma_u) { return {ErrorFamily::Laplace, sigma_u}; }

    ErrorFamily family() const noexcept { return family_; }
    double sigma_u() const noexcept { return sigma_u_; }
    double variance() const noexcept { return sigma_u_ * sigma_u_; }

    /// True when the model perturbs nothing (family None, or sigma_u == 0).
    bool is_trivial() const noexcept { return family_ == ErrorFamily::None || sigma_u_ == 0.0; }

    friend bool operator==(const ErrorModel&, const ErrorModel&) = default;

private:
    ErrorFamily family_ = ErrorFamily::None;
    double sigma_u_ = 0.0;
};

/// phi_U(t): exp(-s^2 t^2 / 2) for Gaussian, 1 / (1 + s^2 t^2 / 2) for Laplace, 1 for None.
double characteristic_fn(const ErrorModel& model, double t);

/// 1 / phi_U(t), computed without forming phi_U first (avoids underflow for Gaussian).
double inverse_characteristic_fn(const ErrorModel& model, double t);

/// Density of U. Throws DomainError for family None or sigma_u == 0.
double density(const ErrorModel& model, double u);

/// One draw of U: polar-method normal or inverse-CDF Laplace; exactly 0 for None.
double sample_error(const ErrorModel& model, Rng& rng);

/// sigma_u such that var_x / (var_x + sigma_u^2) == lambda.
double sigma_from_reliability(double var_x, double lambda);

std::string_view to_string(ErrorFamily family);
/// Accepts "none", "gaussian"/"normal", "laplace" (case-insensitive).
ErrorFamily parse_error_family(std::string_view name);

} // namespace circme
