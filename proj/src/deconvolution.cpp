#include "circme/deconvolution.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <unsupported/Eigen/FFT>

#include "circme/errors.hpp"
#include "circme/kernel.hpp"
#include "circme/quadrature.hpp"

namespace circme {

using cplx = std::complex<double>;

// ---------------------------------------------------------------------------
// EvaluationGrid

EvaluationGrid::EvaluationGrid(double start, double spacing, std::size_t count)
    : start_(start), spacing_(spacing), count_(count)
{
    if (!std::isfinite(start) || !(spacing > 0.0) || !std::isfinite(spacing))
        throw DomainError("EvaluationGrid: spacing must be positive and finite");
    if (count < 2)
        throw DomainError("EvaluationGrid: need at least two points");
}

EvaluationGrid EvaluationGrid::from_range(double lo, double hi, double step)
{
    if (!(hi > lo) || !(step > 0.0))
        throw DomainError("EvaluationGrid::from_range: need lo < hi and step > 0");
    const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    return {lo, step, count};
}

EvaluationGrid EvaluationGrid::linspace(double lo, double hi, std::size_t count)
{
    if (!(hi > lo) || count < 2)
        throw DomainError("EvaluationGrid::linspace: need lo < hi and count >= 2");
    return {lo, (hi - lo) / static_cast<double>(count - 1), count};
}

Eigen::VectorXd EvaluationGrid::points() const
{
    Eigen::VectorXd p(static_cast<Eigen::Index>(count_));
    for (std::size_t k = 0; k < count_; ++k)
        p[static_cast<Eigen::Index>(k)] = (*this)[k];
    return p;
}

// ---------------------------------------------------------------------------
// deconvoluting kernel

namespace {

constexpr std::size_t kStartNodes = 64;
constexpr std::size_t kMaxNodes = 8192;
constexpr double kRelTol = 1e-6;

struct KernelValue {
    double value;
    double slope;
    double imag;
};

// phi_K^(ell)(t) / phi_U(-t/h) sampled on Gauss-Legendre node sets of growing size.
class DeconvIntegrand {
public:
    DeconvIntegrand(const ErrorModel& model, int ell, double h) : model_(model), ell_(ell), h_(h)
    {
        if (ell < 0 || ell > 2)
            throw DomainError("deconv_kernel: order must be in [0, 2]");
        if (!(h > 0.0) || !std::isfinite(h))
            throw DomainError("deconv_kernel: bandwidth must be positive");
        if (!std::isfinite(inverse_characteristic_fn(model, 1.0 / h)))
            throw NumericError("deconv_kernel: 1/phi_U(1/h) overflows at h = " + std::to_string(h) +
                               "; use a larger bandwidth");
    }

    const std::vector<double>& samples(std::size_t n)
    {
        const std::size_t level = static_cast<std::size_t>(std::log2(static_cast<double>(n / kStartNodes)) + 0.5);
        if (levels_.size() <= level)
            levels_.resize(level + 1);
        auto& g = levels_[level];
        if (g.empty()) {
            const auto& rule = gauss_legendre(n);
            g.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double t = rule.nodes[i];
                g[i] = rule.weights[i] * phiK_deriv(ell_, t) * inverse_characteristic_fn(model_, -t / h_);
            }
        }
        return g;
    }

    KernelValue evaluate(double v, std::size_t n)
    {
        const auto& rule = gauss_legendre(n);
        const auto& g = samples(n);
        double a = 0.0, b = 0.0, da = 0.0, db = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double t = rule.nodes[i];
            const double c = std::cos(t * v), s = std::sin(t * v);
            a += c * g[i];
            b += s * g[i];
            da -= t * s * g[i];
            db += t * c * g[i];
        }
        constexpr double inv2pi = 0.5 / std::numbers::pi;
        switch (ell_) {
        case 0:
            return {a * inv2pi, da * inv2pi, -b * inv2pi};
        case 1:
            return {-b * inv2pi, -db * inv2pi, -a * inv2pi};
        default:
            return {-a * inv2pi, -da * inv2pi, b * inv2pi};
        }
    }

    // (2 pi)^-1 int |phi_K^(ell) / phi_U|: an upper bound on |K_{U,ell}|.
    double scale()
    {
        double s = 0.0;
        for (double gi : samples(kStartNodes))
            s += std::abs(gi);
        return s * 0.5 / std::numbers::pi;
    }

    KernelValue converged(double v)
    {
        const double floor = 1e-13 * scale();
        KernelValue prev = evaluate(v, kStartNodes);
        for (std::size_t n = 2 * kStartNodes; n <= kMaxNodes; n *= 2) {
            const KernelValue cur = evaluate(v, n);
            if (std::abs(cur.value - prev.value) <= kRelTol * std::abs(cur.value) + floor) {
                if (std::abs(cur.imag) >= 1e-8 * (1.0 + std::abs(cur.value)))
                    throw NumericError("deconv_kernel: imaginary part does not cancel");
                return cur;
            }
            prev = cur;
        }
        throw NumericError("deconv_kernel: quadrature did not converge at v = " + std::to_string(v) +
                           " (relative change " + std::to_string(std::abs(prev.value)) + ")");
    }

private:
    ErrorModel model_;
    int ell_;
    double h_;
    std::vector<std::vector<double>> levels_;
};

} // namespace

double deconv_kernel(const ErrorModel& model, int ell, double h, double v)
{
    DeconvIntegrand integrand(model, ell, h);
    return integrand.converged(v).value;
}

DeconvKernelTable::DeconvKernelTable(const ErrorModel& model, int ell, double h) : model_(model), ell_(ell), h_(h)
{
    DeconvIntegrand integrand(model, ell, h);
    const auto n = static_cast<std::size_t>(std::lround(kTableRadius / kTableStep)) + 1;
    value_.resize(n);
    slope_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const KernelValue kv = integrand.converged(static_cast<double>(i) * kTableStep);
        value_[i] = kv.value;
        slope_[i] = kv.slope;
    }
}

double DeconvKernelTable::operator()(double v) const
{
    const double sign = (v < 0.0 && ell_ % 2 == 1) ? -1.0 : 1.0;
    const double a = std::abs(v);
    if (a >= kTableRadius)
        return sign * deconv_kernel(model_, ell_, h_, a);
    const double pos = a / kTableStep;
    auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= value_.size())
        i = value_.size() - 2;
    const double s = pos - static_cast<double>(i);
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
    return sign * (h00 * value_[i] + h10 * kTableStep * slope_[i] + h01 * value_[i + 1] +
                   h11 * kTableStep * slope_[i + 1]);
}

DeconvKernelSet::DeconvKernelSet(const ErrorModel& model, double h) : k0(model, 0, h), k1(model, 1, h), k2(model, 2, h)
{
}

std::shared_ptr<const DeconvKernelSet> make_deconv_kernels(const ErrorModel& model, double h)
{
    return std::make_shared<const DeconvKernelSet>(model, h);
}

// ---------------------------------------------------------------------------
// chirp-z

std::vector<cplx> chirp_z(const std::vector<cplx>& c, double theta, std::size_t out_count)
{
    const std::size_t m = c.size();
    if (m == 0 || out_count == 0)
        return std::vector<cplx>(out_count, cplx(0.0));
    std::size_t len = 1;
    while (len < m + out_count - 1)
        len <<= 1;

    // exp(i theta k^2 / 2); k^2 reduced modulo the period to keep the phase accurate
    auto chirp = [theta](std::size_t k) {
        const double kk = static_cast<double>(k) * static_cast<double>(k);
        return std::polar(1.0, 0.5 * theta * kk);
    };

    std::vector<cplx> a(len, cplx(0.0)), b(len, cplx(0.0));
    for (std::size_t k = 0; k < m; ++k)
        a[k] = c[k] * chirp(k);
    for (std::size_t k = 0; k < out_count; ++k)
        b[k] = std::conj(chirp(k));
    for (std::size_t k = 1; k < m; ++k)
        b[len - k] = std::conj(chirp(k));

    Eigen::FFT<double> fft;
    std::vector<cplx> fa, fb, conv;
    fft.fwd(fa, a);
    fft.fwd(fb, b);
    for (std::size_t k = 0; k < len; ++k)
        fa[k] *= fb[k];
    fft.inv(conv, fa);

    std::vector<cplx> y(out_count);
    for (std::size_t j = 0; j < out_count; ++j)
        y[j] = chirp(j) * conv[j];
    return y;
}

// ---------------------------------------------------------------------------
// T_U

namespace {

constexpr double kMaxGain = 1e15;

double band_limit(double h, const EvaluationGrid& grid)
{
    return std::min(1.0 / h, std::numbers::pi / grid.spacing());
}

double correction_gain(const ErrorModel& model, double h, double t)
{
    return phiK(h * t) * (inverse_characteristic_fn(model, t) - 1.0);
}

} // namespace

double transform_multiplier(const ErrorModel& model, double h, double t)
{
    if (model.is_trivial() || std::abs(t) > 1.0 / h)
        return 1.0;
    return 1.0 + correction_gain(model, h, t);
}

Eigen::VectorXd transform_TU(const ErrorModel& model, const Eigen::Ref<const Eigen::VectorXd>& a_values,
                             const EvaluationGrid& grid, double h, TransformPath path)
{
    if (static_cast<std::size_t>(a_values.size()) != grid.size())
        throw DomainError("transform_TU: values do not match the grid");
    if (!(h > 0.0))
        throw DomainError("transform_TU: bandwidth must be positive");
    if (!a_values.allFinite())
        throw DomainError("transform_TU: non-finite input");
    Eigen::VectorXd out = a_values;
    if (model.is_trivial())
        return out;

    const std::size_t g = grid.size();
    const double dx = grid.spacing();
    const double band = band_limit(h, grid);
    const double span = dx * static_cast<double>(g);

    // frequency resolution: aliasing period 2 pi / dt covers four grid spans
    const double dt_max = 2.0 * std::numbers::pi / (4.0 * span);
    std::size_t m = std::max<std::size_t>(64, static_cast<std::size_t>(std::ceil(2.0 * band / dt_max)));
    m += m % 2;
    const double dt = 2.0 * band / static_cast<double>(m);

    std::vector<double> gain(m + 1);
    double max_gain = 0.0;
    for (std::size_t k = 0; k <= m; ++k) {
        const double t = -band + dt * static_cast<double>(k);
        gain[k] = correction_gain(model, h, t);
        max_gain = std::max(max_gain, std::abs(gain[k]));
    }
    if (!std::isfinite(max_gain) || max_gain > kMaxGain)
        throw NumericError("transform_TU: deconvolution gain overflows at h = " + std::to_string(h) +
                           "; use a larger bandwidth");

    // trapezoid weights in x
    auto xweight = [&](std::size_t k) { return (k == 0 || k + 1 == g) ? 0.5 * dx : dx; };
    constexpr double inv2pi = 0.5 / std::numbers::pi;

    if (path == TransformPath::FractionalFFT) {
        std::vector<cplx> c(g);
        for (std::size_t k = 0; k < g; ++k)
            c[k] = xweight(k) * a_values[static_cast<Eigen::Index>(k)] *
                   std::polar(1.0, -band * dx * static_cast<double>(k));
        // psi_m = phi_A(t_m) exp(-i t_m x_0)
        std::vector<cplx> psi = chirp_z(c, dt * dx, m + 1);
        for (std::size_t k = 0; k <= m; ++k) {
            const double w = (k == 0 || k == m) ? 0.5 * dt : dt;
            psi[k] *= w * gain[k];
        }
        const std::vector<cplx> corr = chirp_z(psi, -dt * dx, g);
        for (std::size_t j = 0; j < g; ++j) {
            const cplx v = inv2pi * std::polar(1.0, band * dx * static_cast<double>(j)) * corr[j];
            out[static_cast<Eigen::Index>(j)] += v.real();
        }
        return out;
    }

    // reference path: composite Gauss-Legendre in t, direct Fourier sums in x
    const double periods = 2.0 * band * span / (2.0 * std::numbers::pi);
    const auto panels = static_cast<std::size_t>(std::ceil(2.0 * periods)) + 8;
    const auto& rule = gauss_legendre(16);
    const double pw = 2.0 * band / static_cast<double>(panels);
    std::vector<double> corr(g, 0.0);
    for (std::size_t p = 0; p < panels; ++p) {
        const double mid = -band + pw * (static_cast<double>(p) + 0.5);
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            const double t = mid + 0.5 * pw * rule.nodes[i];
            cplx phi(0.0);
            for (std::size_t k = 0; k < g; ++k)
                phi += xweight(k) * a_values[static_cast<Eigen::Index>(k)] * std::polar(1.0, t * dx * static_cast<double>(k));
            const cplx f = 0.5 * pw * rule.weights[i] * correction_gain(model, h, t) * phi;
            for (std::size_t j = 0; j < g; ++j)
                corr[j] += (f * std::polar(1.0, -t * dx * static_cast<double>(j))).real();
        }
    }
    for (std::size_t j = 0; j < g; ++j)
        out[static_cast<Eigen::Index>(j)] += inv2pi * corr[j];
    return out;
}

} // namespace circme
