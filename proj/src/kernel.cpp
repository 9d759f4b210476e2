#include "circme/kernel.hpp"

#include <complex>
#include <limits>

#include "circme/errors.hpp"
#include "circme/quadrature.hpp"

namespace circme {

double phiK_deriv(int ell, double t)
{
    if (ell < 0 || ell > 3)
        throw DomainError("phiK_deriv: derivative order must be in [0, 3]");
    if (t < -1.0 || t > 1.0)
        return 0.0;
    const double t2 = t * t;
    switch (ell) {
    case 0: {
        const double s = 1.0 - t2;
        return s * s * s;
    }
    case 1:
        return t * (-6.0 + t2 * (12.0 - 6.0 * t2));
    case 2:
        return -6.0 + t2 * (36.0 - 30.0 * t2);
    default:
        return t * (72.0 - 120.0 * t2);
    }
}

namespace {

using cplx = std::complex<double>;

constexpr double kTailStart = 30.0;
constexpr double kContourLength = 60.0;

// K(t) = Re{exp(i t) R(t)} for real t.
cplx kernel_envelope(cplx t)
{
    const cplx t2 = t * t;
    const cplx t7 = t2 * t2 * t2 * t;
    return (48.0 / std::numbers::pi) * (t * (t2 - 15.0) - cplx(0.0, 3.0) * (5.0 - 2.0 * t2)) / t7;
}

cplx ipow(cplx z, int ell)
{
    cplx r = 1.0;
    for (int i = 0; i < ell; ++i)
        r *= z;
    return r;
}

// integral over [T, inf) of Re{exp(i freq t) F(t)} by rotating onto t = T + i y.
template <class F>
double rotated_tail(F&& envelope, double freq)
{
    const cplx phase = std::exp(cplx(0.0, freq * kTailStart));
    auto part = [&](bool imag) {
        return integrate_adaptive(
                   [&](double y) {
                       const cplx v = std::exp(-freq * y) * envelope(cplx(kTailStart, y));
                       return imag ? v.imag() : v.real();
                   },
                   0.0, kContourLength / freq, 1e-13, 1e-18)
            .value;
    };
    const cplx integral(part(false), part(true));
    return (cplx(0.0, 1.0) * phase * integral).real();
}

// integral over [0, T]; K is even so the negative half only contributes through the sign
double core_integral(int ell, bool squared)
{
    // split at integers so each panel sees at most ~1/6 of a period
    double total = 0.0;
    for (int a = 0; a < static_cast<int>(kTailStart); ++a) {
        total += integrate_adaptive(
                     [&](double t) {
                         const double k = kernel_K(t);
                         return std::pow(t, ell) * (squared ? k * k : k);
                     },
                     a, a + 1.0, 1e-14, 1e-20)
                     .value;
    }
    return total;
}

} // namespace

std::pair<double, double> kernel_moments(int ell)
{
    if (ell < 0 || ell > 8)
        throw DomainError("kernel_moments: order must be in [0, 8]");
    const double sign = (ell % 2 == 0) ? 1.0 : -1.0;

    const double mu_tail = rotated_tail([&](cplx t) { return kernel_envelope(t) * ipow(t, ell); }, 1.0);
    const double mu = (1.0 + sign) * (core_integral(ell, false) + mu_tail);

    double nu;
    if (ell >= 8) {
        nu = (ell % 2 == 0) ? std::numeric_limits<double>::infinity() : 0.0;
    } else {
        // K^2 = |R|^2 / 2 + Re{exp(2 i t) R^2} / 2
        const double osc = 0.5 * rotated_tail(
                                     [&](cplx t) {
                                         const cplx r = kernel_envelope(t);
                                         return r * r * ipow(t, ell);
                                     },
                                     2.0);
        // smooth part on [T, inf) via t = T / s
        const double smooth =
            integrate_adaptive(
                [&](double s) {
                    if (s <= 0.0)
                        return 0.0;
                    const double t = kTailStart / s;
                    return 0.5 * std::norm(kernel_envelope(cplx(t, 0.0))) * std::pow(t, ell) * kTailStart / (s * s);
                },
                0.0, 1.0, 1e-13, 1e-20)
                .value;
        nu = (1.0 + sign) * (core_integral(ell, true) + osc + smooth);
    }
    return {mu, nu};
}

} // namespace circme
