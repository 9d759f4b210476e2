#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace circme {

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussLegendreRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Rule with `n` points (Newton iteration on P_n). Rules are cached; the returned
/// reference stays valid for the life of the program. Thread-safe.
const GaussLegendreRule& gauss_legendre(std::size_t n);

/// Integral of f over [a, b] with an `n`-point Gauss-Legendre rule.
template <class F>
double gauss_legendre_integrate(F&& f, double a, double b, std::size_t n)
{
    const auto& rule = gauss_legendre(n);
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double sum = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
        sum += rule.weights[i] * f(mid + half * rule.nodes[i]);
    return half * sum;
}

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
    bool converged = false;
};

/// Globally adaptive Gauss-Kronrod (7/15) integration of f over [a, b].
/// Stops when the summed error estimate is below max(abs_tol, rel_tol * |I|).
template <class F>
QuadratureResult integrate_adaptive(F&& f, double a, double b, double rel_tol = 1e-12,
                                    double abs_tol = 1e-14, std::size_t max_intervals = 4000)
{
    static constexpr double xgk[8] = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                                      0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                                      0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                                      0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
    static constexpr double wgk[8] = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                                      0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                                      0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                                      0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
    static constexpr double wg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                     0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

    struct Segment {
        double a, b, value, error;
    };
    auto rule = [&](double lo, double hi) {
        const double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
        const double fc = f(c);
        double k15 = wgk[7] * fc, g7 = wg[3] * fc;
        for (int i = 0; i < 7; ++i) {
            const double fs = f(c - h * xgk[i]) + f(c + h * xgk[i]);
            k15 += wgk[i] * fs;
            if (i % 2 == 1)
                g7 += wg[i / 2] * fs;
        }
        return Segment{lo, hi, k15 * h, std::abs((k15 - g7) * h)};
    };

    std::vector<Segment> segs{rule(a, b)};
    QuadratureResult out;
    for (;;) {
        double total = 0.0, err = 0.0;
        std::size_t worst = 0;
        for (std::size_t i = 0; i < segs.size(); ++i) {
            total += segs[i].value;
            err += segs[i].error;
            if (segs[i].error > segs[worst].error)
                worst = i;
        }
        out.value = total;
        out.error = err;
        if (err <= std::max(abs_tol, rel_tol * std::abs(total))) {
            out.converged = true;
            return out;
        }
        if (segs.size() >= max_intervals)
            return out;
        const Segment s = segs[worst];
        const double mid = 0.5 * (s.a + s.b);
        segs[worst] = rule(s.a, mid);
        segs.push_back(rule(mid, s.b));
    }
}

} // namespace circme
