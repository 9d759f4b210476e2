#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "circme/error_models.hpp"

namespace circme {

/// Uniform grid start + k * spacing, k = 0..count-1.
class EvaluationGrid {
public:
    /// Throws DomainError unless spacing > 0 and count >= 2.
    EvaluationGrid(double start, double spacing, std::size_t count);

    /// Grid from `lo` to `hi` (inclusive, up to rounding) at increments of `step`.
    static EvaluationGrid from_range(double lo, double hi, double step);
    /// `count` equally spaced points covering [lo, hi].
    static EvaluationGrid linspace(double lo, double hi, std::size_t count);

    double start() const noexcept { return start_; }
    double spacing() const noexcept { return spacing_; }
    std::size_t size() const noexcept { return count_; }
    double operator[](std::size_t k) const noexcept { return start_ + spacing_ * static_cast<double>(k); }
    double back() const noexcept { return (*this)[count_ - 1]; }
    Eigen::VectorXd points() const;

    /// Same grid shifted by delta.
    EvaluationGrid shifted(double delta) const { return {start_ + delta, spacing_, count_}; }

private:
    double start_;
    double spacing_;
    std::size_t count_;
};

/// Deconvoluting kernel K_{U,ell}(v) = i^-ell (2 pi)^-1 int exp(-i t v) phi_K^(ell)(t) / phi_U(-t/h) dt,
/// equal to v^ell L_ell(v). With no measurement error it reduces to v^ell K(v).
/// Gauss-Legendre on [-1, 1], doubling from 64 nodes until the relative change is below 1e-6.
/// Throws DomainError for ell outside [0, 2] or h <= 0, NumericError on nonconvergence or
/// when 1/phi_U(1/h) overflows.
double deconv_kernel(const ErrorModel& model, int ell, double h, double v);

/// Cubic-Hermite tabulation of deconv_kernel(model, ell, h, .) on |v| <= kTableRadius with exact
/// nodal derivatives; points beyond the table are evaluated directly.
class DeconvKernelTable {
public:
    static constexpr double kTableRadius = 100.0;
    static constexpr double kTableStep = 1.0 / 32.0;

    DeconvKernelTable(const ErrorModel& model, int ell, double h);

    double operator()(double v) const;

    const ErrorModel& model() const noexcept { return model_; }
    int order() const noexcept { return ell_; }
    double bandwidth() const noexcept { return h_; }

private:
    ErrorModel model_;
    int ell_;
    double h_;
    std::vector<double> value_;
    std::vector<double> slope_;
};

/// The three tables (ell = 0, 1, 2) the deconvoluting local-linear weight needs.
struct DeconvKernelSet {
    DeconvKernelSet(const ErrorModel& model, double h);
    DeconvKernelTable k0, k1, k2;
};

/// Shared, immutable handle; building a set costs tens of milliseconds.
std::shared_ptr<const DeconvKernelSet> make_deconv_kernels(const ErrorModel& model, double h);

enum class TransformPath {
    FractionalFFT, ///< chirp-z evaluation of both Fourier sums
    Quadrature     ///< direct sums with Gauss-Legendre in frequency; slow reference path
};

/// Frequency multiplier of the regularised inverse transform:
/// 1 + phi_K(h t) (1 / phi_U(t) - 1) for |t| <= min(1/h, grid Nyquist), 1 beyond.
double transform_multiplier(const ErrorModel& model, double h, double t);

/// Regularised T_U(A)(x) = (2 pi)^-1 int exp(-i t x) phi_A(t) / phi_U(t) dt for A sampled on `grid`.
/// The identity part is kept exactly; the correction (1/phi_U - 1) is tapered by phi_K(h t)
/// and confined to |t| <= min(1/h, pi / spacing). Throws NumericError when the correction gain
/// exceeds 1e15 (h too small for the error law).
Eigen::VectorXd transform_TU(const ErrorModel& model, const Eigen::Ref<const Eigen::VectorXd>& a_values,
                             const EvaluationGrid& grid, double h,
                             TransformPath path = TransformPath::FractionalFFT);

/// Chirp-z transform: y_j = sum_m c_m exp(i theta j m), j = 0..out_count-1.
std::vector<std::complex<double>> chirp_z(const std::vector<std::complex<double>>& c, double theta,
                                          std::size_t out_count);

} // namespace circme
