#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <type_traits>
#include <utility>

namespace circme {

namespace detail {

// Maclaurin coefficients of K: K(x) = sum_k kernel_series[k] * x^(2k), obtained by
// integrating cos(t x) (1 - t^2)^3 term by term over [-1, 1].
inline constexpr std::array<double, 15> kernel_series = [] {
    std::array<double, 15> c{};
    double fact = 1.0; // (2k)!
    for (int k = 0; k < 15; ++k) {
        if (k > 0)
            fact *= (2.0 * k - 1.0) * (2.0 * k);
        const double m = 1.0 / (2 * k + 1) - 3.0 / (2 * k + 3) + 3.0 / (2 * k + 5) - 1.0 / (2 * k + 7);
        c[k] = ((k % 2 == 0) ? 1.0 : -1.0) * m / fact / std::numbers::pi;
    }
    return c;
}();

// Below this modulus the closed form loses more than ~1e-13 relative accuracy to cancellation.
inline constexpr double kernel_series_radius = 1.5;

template <class T>
double modulus_sq(const T& x)
{
    using std::norm;
    if constexpr (std::is_same_v<T, double>)
        return x * x;
    else
        return norm(x);
}

// complex product without the inf/nan recovery of operator*
inline std::complex<double> cmul(const std::complex<double>& p, const std::complex<double>& q)
{
    return {p.real() * q.real() - p.imag() * q.imag(), p.real() * q.imag() + p.imag() * q.real()};
}

} // namespace detail

/// The band-limited kernel K(x) = 96{x(x^2-15)cos x + 3(5-2x^2)sin x} / (2 pi x^7),
/// whose Fourier transform is (1 - t^2)^3 on [-1, 1].
/// Scalar may be double or std::complex<double>; K is entire, so the complex
/// extension is the same formula.
template <class Scalar>
Scalar kernel_K(const Scalar& x)
{
    if (detail::modulus_sq(x) < detail::kernel_series_radius * detail::kernel_series_radius) {
        const Scalar x2 = x * x;
        Scalar acc = Scalar(detail::kernel_series.back());
        for (int k = static_cast<int>(detail::kernel_series.size()) - 2; k >= 0; --k) {
            if constexpr (std::is_same_v<Scalar, std::complex<double>>)
                acc = detail::cmul(acc, x2) + detail::kernel_series[static_cast<std::size_t>(k)];
            else
                acc = acc * x2 + Scalar(detail::kernel_series[static_cast<std::size_t>(k)]);
        }
        return acc;
    }
    if constexpr (std::is_same_v<Scalar, std::complex<double>>) {
        // cos and sin from one exp(i x); every factor here has modulus >= 1.5
        const double a = x.real(), b = x.imag();
        const double eb = std::exp(-b), ieb = 1.0 / eb;
        const double ca = std::cos(a), sa = std::sin(a);
        const Scalar c(0.5 * ca * (eb + ieb), 0.5 * sa * (ieb - eb));
        const Scalar s(0.5 * sa * (eb + ieb), 0.5 * ca * (eb - ieb));
        const Scalar x2 = detail::cmul(x, x);
        const Scalar num = detail::cmul(detail::cmul(x, x2 - 15.0), c) + detail::cmul(3.0 * (5.0 - 2.0 * x2), s);
        const Scalar x7 = detail::cmul(detail::cmul(x2, x2), detail::cmul(x2, x));
        return (48.0 / std::numbers::pi) * detail::cmul(num, std::conj(x7)) / std::norm(x7);
    } else {
        using std::cos;
        using std::sin;
        const Scalar x2 = x * x;
        const Scalar num = x * (x2 - Scalar(15.0)) * cos(x) + Scalar(3.0) * (Scalar(5.0) - Scalar(2.0) * x2) * sin(x);
        const Scalar x7 = x2 * x2 * x2 * x;
        return Scalar(48.0 / std::numbers::pi) * num / x7;
    }
}

/// K_h(x) = K(x / h) / h.
template <class Scalar>
Scalar kernel_Kh(const Scalar& x, double h)
{
    return kernel_K(x / h) / h;
}

/// ell-th derivative (0 <= ell <= 3) of phi_K(t) = (1 - t^2)^3 on [-1, 1]; zero outside.
/// Throws DomainError for ell out of range.
double phiK_deriv(int ell, double t);

inline double phiK(double t) { return phiK_deriv(0, t); }

/// (mu_ell, nu_ell) = (int t^ell K(t) dt, int t^ell K(t)^2 dt).
/// K decays like |t|^-4, so the oscillatory tails beyond |t| = 30 are integrated along a
/// rotated contour; for ell >= 4 this yields the Abel-summed moment, which equals
/// i^-ell phi_K^(ell)(0). nu_8 diverges and is returned as +infinity.
std::pair<double, double> kernel_moments(int ell);

} // namespace circme
