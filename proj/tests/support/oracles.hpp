#pragma once

// Independent reference computations used by the tests. Nothing here calls into the library.

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

inline double bessel_i(int nu, double x)
{
    double term = std::pow(0.5 * x, nu);
    for (int k = 1; k <= nu; ++k)
        term /= k;
    double sum = term;
    for (int k = 1; k < 200; ++k) {
        term *= (0.25 * x * x) / (k * static_cast<double>(k + nu));
        sum += term;
        if (term < 1e-18 * sum)
            break;
    }
    return sum;
}

// composite Simpson with an even number of panels
inline double simpson(const std::function<double(double)>& f, double a, double b, int panels)
{
    if (panels % 2)
        ++panels;
    const double h = (b - a) / panels;
    double s = f(a) + f(b);
    for (int i = 1; i < panels; ++i)
        s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

inline double simpson_kernel(double x)
{
    return simpson([x](double t) { return std::cos(t * x) * std::pow(1.0 - t * t, 3); }, 0.0, 1.0, 4000) /
           std::numbers::pi;
}

// closed form kernel away from zero, direct Fourier inversion near it
inline double kernel(double x)
{
    if (std::abs(x) < 0.5)
        return simpson_kernel(x);
    const double x2 = x * x;
    return 96.0 * (x * (x2 - 15.0) * std::cos(x) + 3.0 * (5.0 - 2.0 * x2) * std::sin(x)) /
           (2.0 * std::numbers::pi * std::pow(x, 7));
}

inline double normal_pdf(double x, double sd = 1.0)
{
    return std::exp(-0.5 * x * x / (sd * sd)) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

struct MeanSe {
    double mean;
    double se;
};

inline MeanSe mean_se(const std::vector<double>& v)
{
    double m = 0.0;
    for (double x : v)
        m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v)
        s += (x - m) * (x - m);
    s /= static_cast<double>(v.size() - 1);
    return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

} // namespace oracle
