#include "circme/local_fit.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <string>

#include "circme/circular.hpp"

namespace circme {

using cplx = std::complex<double>;

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(Eigen::VectorXd theta, Eigen::VectorXd w, std::optional<Eigen::VectorXd> x_true)
    : theta_(std::move(theta)), w_(std::move(w)), x_true_(std::move(x_true))
{
    if (theta_.size() != w_.size() || (x_true_ && x_true_->size() != w_.size()))
        throw DataError("Dataset: columns have different lengths");
    if (theta_.size() < 5)
        throw DataError("Dataset: need at least 5 observations, got " + std::to_string(theta_.size()));
    if (!theta_.allFinite() || !w_.allFinite() || (x_true_ && !x_true_->allFinite()))
        throw DataError("Dataset: non-finite value");
    for (auto& t : theta_)
        t = wrap_angle(t);
}

const Eigen::VectorXd& Dataset::x_true() const
{
    if (!x_true_)
        throw DataError("Dataset: true covariate not available");
    return *x_true_;
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& idx) const
{
    const auto m = static_cast<Eigen::Index>(idx.size());
    Eigen::VectorXd t(m), w(m);
    std::optional<Eigen::VectorXd> x;
    if (x_true_)
        x.emplace(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto k = idx[static_cast<std::size_t>(i)];
        t[i] = theta_[k];
        w[i] = w_[k];
        if (x)
            (*x)[i] = (*x_true_)[k];
    }
    return {std::move(t), std::move(w), std::move(x)};
}

Dataset Dataset::with_w(Eigen::VectorXd w) const { return {theta_, std::move(w), x_true_}; }

Dataset Dataset::with_theta(Eigen::VectorXd theta) const { return {std::move(theta), w_, x_true_}; }

std::string_view to_string(Estimator e)
{
    switch (e) {
    case Estimator::Ideal:
        return "ideal";
    case Estimator::Naive:
        return "naive";
    case Estimator::DK:
        return "dk";
    case Estimator::CE:
        return "ce";
    case Estimator::OS:
        return "os";
    }
    return "?";
}

Estimator parse_estimator(std::string_view name)
{
    std::string s(name);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "ideal")
        return Estimator::Ideal;
    if (s == "naive")
        return Estimator::Naive;
    if (s == "dk")
        return Estimator::DK;
    if (s == "ce")
        return Estimator::CE;
    if (s == "os")
        return Estimator::OS;
    throw DomainError("unknown estimator '" + std::string(name) + "'");
}

void FitConfig::validate() const
{
    if (!(h > 0.0) || !std::isfinite(h))
        throw DomainError("FitConfig: bandwidth must be positive");
    if (b_star < 1)
        throw DomainError("FitConfig: b_star must be >= 1");
    if (kernels && (kernels->k0.bandwidth() != h || !(kernels->k0.model() == error_model)))
        throw DomainError("FitConfig: kernel tables built for a different model or bandwidth");
}

std::size_t Prediction::undefined_count() const
{
    return static_cast<std::size_t>(std::count(defined.begin(), defined.end(), false));
}

// ---------------------------------------------------------------------------
// weights

namespace {

Eigen::VectorXd plain_weight(const Eigen::Ref<const Eigen::VectorXd>& data, double x, double h, WeightOrder order)
{
    if (order == WeightOrder::LocalLinear)
        return weight_local_linear<double>(data, x, h);
    Eigen::VectorXd k(data.size());
    for (Eigen::Index j = 0; j < data.size(); ++j)
        k[j] = kernel_Kh(data[j] - x, h);
    return k;
}

} // namespace

Eigen::VectorXd weight_dk(const DeconvKernelSet& kernels, const Eigen::Ref<const Eigen::VectorXd>& wdata, double x,
                          WeightOrder order)
{
    const double h = kernels.k0.bandwidth();
    const Eigen::Index n = wdata.size();
    if (kernels.k0.model().is_trivial())
        return plain_weight(wdata, x, h, order);
    Eigen::VectorXd d0(n);
    for (Eigen::Index j = 0; j < n; ++j)
        d0[j] = kernels.k0((wdata[j] - x) / h) / h;
    if (order == WeightOrder::LocalConstant)
        return d0;
    Eigen::VectorXd d1(n);
    double s1 = 0.0, s2 = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double v = (wdata[j] - x) / h;
        d1[j] = kernels.k1(v) / h;
        s1 += d1[j];
        s2 += kernels.k2(v) / h;
    }
    s1 /= static_cast<double>(n);
    s2 /= static_cast<double>(n);
    return d0 * s2 - d1 * s1;
}

Eigen::VectorXd weight_dk(const ErrorModel& model, const Eigen::Ref<const Eigen::VectorXd>& wdata, double x, double h,
                          WeightOrder order)
{
    if (model.is_trivial())
        return plain_weight(wdata, x, h, order);
    return weight_dk(DeconvKernelSet(model, h), wdata, x, order);
}

Eigen::MatrixXd ce_draws(Eigen::Index n, int b_star, std::uint64_t seed)
{
    Rng rng(seed);
    Eigen::MatrixXd z(n, b_star);
    for (Eigen::Index b = 0; b < b_star; ++b)
        for (Eigen::Index j = 0; j < n; ++j)
            z(j, b) = rng.normal();
    return z;
}

Eigen::VectorXd weight_ce(double sigma_u, const Eigen::Ref<const Eigen::VectorXd>& wdata, double x, double h,
                          const Eigen::Ref<const Eigen::MatrixXd>& z, Rng& redraw, CeDiagnostics* diag)
{
    if (sigma_u == 0.0)
        return weight_normalized<double>(wdata, x, h);
    const Eigen::Index n = wdata.size();
    const auto reps = z.cols();
    if (z.rows() != n || reps < 1)
        throw DomainError("weight_ce: draw matrix does not match the data");

    Eigen::VectorXd re = Eigen::VectorXd::Zero(n), im = Eigen::VectorXd::Zero(n), im2 = Eigen::VectorXd::Zero(n);
    VectorX<cplx> wc(n);
    Eigen::VectorXd fresh(n);
    int rejected = 0;
    for (Eigen::Index b = 0; b < reps; ++b) {
        const double* col = z.col(b).data();
        for (;;) {
            for (Eigen::Index j = 0; j < n; ++j)
                wc[j] = cplx(wdata[j], sigma_u * col[j]);
            try {
                const VectorX<cplx> wt = weight_normalized<cplx>(wc, cplx(x, 0.0), h);
                re += wt.real();
                im += wt.imag();
                im2 += wt.imag().cwiseAbs2();
                break;
            } catch (const DegenerateNeighborhood&) {
                if (++rejected * 10 > reps)
                    throw DegenerateNeighborhood("weight_ce: more than 10% of replicates degenerate");
                for (Eigen::Index j = 0; j < n; ++j)
                    fresh[j] = redraw.normal();
                col = fresh.data();
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(reps);
    re *= inv;
    double worst = 0.0;
    if (reps >= 2) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double mean = im[j] * inv;
            const double var = std::max(0.0, (im2[j] * inv - mean * mean) * reps / (reps - 1.0));
            const double se = std::sqrt(var * inv);
            const double tol = 1e-14 * (1.0 + std::abs(re[j]));
            if (std::abs(mean) > tol)
                worst = std::max(worst, std::abs(mean) / std::max(se, tol));
        }
        if (worst > 10.0)
            throw NumericError("weight_ce: imaginary part of the averaged weight exceeds 10 standard errors (" +
                               std::to_string(worst) + ")");
    }
    if (diag) {
        diag->rejected += rejected;
        diag->max_imag_z = std::max(diag->max_imag_z, worst);
    }
    return re;
}

Eigen::VectorXd weight_ce(const ErrorModel& model, const Eigen::Ref<const Eigen::VectorXd>& wdata, double x, double h,
                          int b_star, Rng& rng)
{
    if (b_star < 1)
        throw DomainError("weight_ce: b_star must be >= 1");
    const Eigen::MatrixXd z = ce_draws(wdata.size(), b_star, rng.bits());
    return weight_ce(model.sigma_u(), wdata, x, h, z, rng);
}

// ---------------------------------------------------------------------------
// estimators

namespace {

void finish(Prediction& p)
{
    double scale = 1.0;
    for (Eigen::Index i = 0; i < p.x.size(); ++i)
        if (p.defined[static_cast<std::size_t>(i)])
            scale = std::max({scale, std::abs(p.g1[i]), std::abs(p.g2[i])});
    const double eps = 1e-12 * scale;
    for (Eigen::Index i = 0; i < p.x.size(); ++i) {
        auto&& d = p.defined[static_cast<std::size_t>(i)];
        if (d && std::abs(p.g1[i]) < eps && std::abs(p.g2[i]) < eps)
            d = false;
        p.m_hat[i] = d ? wrap_angle(std::atan2(p.g1[i], p.g2[i])) : std::numeric_limits<double>::quiet_NaN();
    }
}

Prediction blank(const Eigen::Ref<const Eigen::VectorXd>& points)
{
    const auto m = points.size();
    return {points, Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(m),
            std::vector<bool>(static_cast<std::size_t>(m), true)};
}

// Catmull-Rom interpolation of samples on a uniform grid
double interpolate(const Eigen::VectorXd& f, const EvaluationGrid& g, double x)
{
    const double pos = (x - g.start()) / g.spacing();
    const auto last = static_cast<Eigen::Index>(g.size()) - 1;
    auto i = static_cast<Eigen::Index>(std::floor(pos));
    i = std::clamp<Eigen::Index>(i, 0, last - 1);
    const double s = std::clamp(pos - static_cast<double>(i), 0.0, 1.0);
    if (s == 0.0)
        return f[i];
    if (i == 0 || i + 1 == last)
        return (1.0 - s) * f[i] + s * f[i + 1];
    const double p0 = f[i - 1], p1 = f[i], p2 = f[i + 1], p3 = f[i + 2];
    return p1 + 0.5 * s * (p2 - p0 + s * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + s * (3.0 * (p1 - p2) + p3 - p0)));
}

Prediction predict_os(const Dataset& data, const FitConfig& cfg, const Eigen::Ref<const Eigen::VectorXd>& points)
{
    const Eigen::VectorXd& w = data.w();
    const Eigen::VectorXd& th = data.theta();
    const double h = cfg.h;
    const auto grid = os_extended_grid(w, points, h);
    const auto gsize = static_cast<Eigen::Index>(grid.size());
    const double n = static_cast<double>(data.n());
    const Eigen::VectorXd sn = th.array().sin(), cs = th.array().cos();

    Eigen::VectorXd a1(gsize), a2(gsize);
    for (Eigen::Index k = 0; k < gsize; ++k) {
        const auto s = detail::local_sums<double>(w, grid[static_cast<std::size_t>(k)], h);
        if (detail::degenerate_denominator(s.s0, s.s1, s.s2)) {
            a1[k] = a2[k] = 0.0;
            continue;
        }
        // m*(x) f_W(x) with normalized local-linear weights and the same-bandwidth density estimate
        const Eigen::VectorXd wt = s.kh * s.s2 - s.v.cwiseProduct(s.kh) * s.s1;
        const double factor = s.s0 / (n * (s.s0 * s.s2 - s.s1 * s.s1));
        a1[k] = sn.dot(wt) * factor;
        a2[k] = cs.dot(wt) * factor;
    }
    const Eigen::VectorXd g1 = transform_TU(cfg.error_model, a1, grid, h);
    const Eigen::VectorXd g2 = transform_TU(cfg.error_model, a2, grid, h);

    Prediction p = blank(points);
    for (Eigen::Index i = 0; i < points.size(); ++i) {
        p.g1[i] = interpolate(g1, grid, points[i]);
        p.g2[i] = interpolate(g2, grid, points[i]);
    }
    return p;
}

} // namespace

EvaluationGrid os_extended_grid(const Eigen::Ref<const Eigen::VectorXd>& wdata,
                                const Eigen::Ref<const Eigen::VectorXd>& points, double h)
{
    double lo = wdata.minCoeff() - 3.0 * h, hi = wdata.maxCoeff() + 3.0 * h;
    if (points.size() > 0) {
        lo = std::min(lo, points.minCoeff());
        hi = std::max(hi, points.maxCoeff());
    }
    double dx = std::min(h / 8.0, (hi - lo) / 511.0);

    // line the grid up with a uniform request so requested points are nodes
    bool uniform = points.size() >= 2;
    const double step = uniform ? points[1] - points[0] : 0.0;
    for (Eigen::Index i = 1; uniform && i < points.size(); ++i)
        uniform = step > 0.0 && std::abs(points[i] - points[i - 1] - step) <= 1e-9 * step;
    double start = lo;
    if (uniform) {
        dx = step / std::ceil(step / dx - 1e-9);
        start = points[0] - std::ceil((points[0] - lo) / dx - 1e-9) * dx;
    }
    const auto count = static_cast<std::size_t>(std::ceil((hi - start) / dx - 1e-9)) + 1;
    return {start, dx, std::max<std::size_t>(count, 512)};
}

Prediction predict(const Dataset& data, const FitConfig& cfg, const Eigen::Ref<const Eigen::VectorXd>& points)
{
    cfg.validate();
    const double h = cfg.h;
    const Eigen::VectorXd& th = data.theta();
    const Eigen::VectorXd sn = th.array().sin(), cs = th.array().cos();
    const double inv_n = 1.0 / static_cast<double>(data.n());

    Prediction p = blank(points);
    switch (cfg.estimator) {
    case Estimator::Ideal:
    case Estimator::Naive: {
        const Eigen::VectorXd& cov = cfg.estimator == Estimator::Ideal ? data.x_true() : data.w();
        for (Eigen::Index i = 0; i < points.size(); ++i) {
            const Eigen::VectorXd wt = plain_weight(cov, points[i], h, cfg.weight_order);
            p.g1[i] = sn.dot(wt) * inv_n;
            p.g2[i] = cs.dot(wt) * inv_n;
        }
        break;
    }
    case Estimator::DK: {
        auto kernels = cfg.kernels;
        if (!kernels && !cfg.error_model.is_trivial())
            kernels = make_deconv_kernels(cfg.error_model, h);
        for (Eigen::Index i = 0; i < points.size(); ++i) {
            const Eigen::VectorXd wt = kernels ? weight_dk(*kernels, data.w(), points[i], cfg.weight_order)
                                               : weight_dk(cfg.error_model, data.w(), points[i], h, cfg.weight_order);
            p.g1[i] = sn.dot(wt) * inv_n;
            p.g2[i] = cs.dot(wt) * inv_n;
        }
        break;
    }
    case Estimator::CE: {
        const double sigma = cfg.error_model.sigma_u();
        const Eigen::MatrixXd z = sigma > 0.0 ? ce_draws(data.n(), cfg.b_star, cfg.seed) : Eigen::MatrixXd();
        Rng base(derive_seed(cfg.seed, {0x7265647261777ULL}));
        for (Eigen::Index i = 0; i < points.size(); ++i) {
            Rng redraw = base.split(static_cast<std::uint64_t>(i));
            try {
                const Eigen::VectorXd wt = sigma > 0.0 ? weight_ce(sigma, data.w(), points[i], h, z, redraw)
                                                       : weight_normalized<double>(data.w(), points[i], h);
                p.g1[i] = sn.dot(wt);
                p.g2[i] = cs.dot(wt);
            } catch (const DegenerateNeighborhood&) {
                p.defined[static_cast<std::size_t>(i)] = false;
            }
        }
        break;
    }
    case Estimator::OS:
        p = predict_os(data, cfg, points);
        break;
    }
    finish(p);
    return p;
}

FitResult fit(const Dataset& data, const FitConfig& config, const EvaluationGrid& grid)
{
    Prediction p = predict(data, config, grid.points());
    return FitResult{std::move(p), grid, config};
}

} // namespace circme
