#include "circme/bandwidth_select.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <string>

#include "circme/circular.hpp"
#include "circme/errors.hpp"

namespace circme {

using cplx = std::complex<double>;

BandwidthGrid BandwidthGrid::manual(std::vector<double> candidates)
{
    if (candidates.empty())
        throw DomainError("BandwidthGrid: no candidates");
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!(candidates[i] > 0.0) || !std::isfinite(candidates[i]))
            throw DomainError("BandwidthGrid: candidates must be positive");
        if (i > 0 && !(candidates[i] > candidates[i - 1]))
            throw DomainError("BandwidthGrid: candidates must be strictly increasing");
    }
    return {std::move(candidates), GridProvenance::Manual};
}

BandwidthGrid make_grid(double h0, double lo, double hi, std::size_t count)
{
    if (!(h0 > 0.0) || !(lo > 0.0) || !(hi > lo) || count < 2)
        throw DomainError("make_grid: need h0 > 0, 0 < lo < hi and count >= 2");
    std::vector<double> c(count);
    const double a = std::log(lo * h0), b = std::log(hi * h0);
    for (std::size_t i = 0; i < count; ++i)
        c[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
    c.front() = lo * h0;
    c.back() = hi * h0;
    return {std::move(c), GridProvenance::AnchoredAtNaive};
}

std::string_view to_string(Selector s)
{
    switch (s) {
    case Selector::NaiveCV:
        return "naive-cv";
    case Selector::SIMEX:
        return "cv-simex";
    case Selector::CE:
        return "cv-ce";
    case Selector::Oracle:
        return "oracle";
    }
    return "?";
}

Folds make_folds(Eigen::Index n, int k, std::uint64_t seed)
{
    if (k < 2 || n < k)
        throw DomainError("make_folds: need 2 <= folds <= n");
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    Rng rng(seed);
    for (Eigen::Index i = n - 1; i > 0; --i) {
        const auto j = static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(i + 1));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(std::min(j, i))]);
    }
    Folds folds(static_cast<std::size_t>(k));
    std::size_t pos = 0;
    for (int f = 0; f < k; ++f) {
        const auto size = static_cast<std::size_t>(n / k + (f < n % k ? 1 : 0));
        folds[static_cast<std::size_t>(f)].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                                                  perm.begin() + static_cast<std::ptrdiff_t>(pos + size));
        pos += size;
    }
    return folds;
}

namespace {

std::vector<Eigen::Index> complement(const Folds& folds, std::size_t k)
{
    std::vector<Eigen::Index> out;
    for (std::size_t f = 0; f < folds.size(); ++f)
        if (f != k)
            out.insert(out.end(), folds[f].begin(), folds[f].end());
    std::sort(out.begin(), out.end());
    return out;
}

Eigen::VectorXd take(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& idx)
{
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i)
        out[static_cast<Eigen::Index>(i)] = v[idx[i]];
    return out;
}

FitConfig at_bandwidth(FitConfig cfg, double h)
{
    cfg.h = h;
    cfg.kernels.reset();
    if (cfg.estimator == Estimator::DK && !cfg.error_model.is_trivial())
        cfg.kernels = make_deconv_kernels(cfg.error_model, h);
    return cfg;
}

std::size_t argmin(const std::vector<double>& v)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] < v[best])
            best = i;
    if (!std::isfinite(v[best]))
        throw SelectionError("bandwidth selection: no candidate produced a usable loss");
    return best;
}

bool at_edge(std::size_t i, std::size_t size) { return size >= 2 && (i == 0 || i + 1 == size); }

} // namespace

double cv_loss(const Eigen::VectorXd& theta, const Eigen::VectorXd& train_cov, const Eigen::VectorXd& val_cov,
               const FitConfig& config, const Folds& folds, std::uint64_t fold_seed, CvTally* tally)
{
    FitConfig cfg = config;
    if (cfg.estimator == Estimator::Ideal)
        cfg.estimator = Estimator::Naive;
    double total = 0.0;
    for (std::size_t k = 0; k < folds.size(); ++k) {
        const auto train = complement(folds, k);
        const Dataset d(take(theta, train), take(train_cov, train));
        cfg.seed = derive_seed(fold_seed, {k});
        const Prediction p = predict(d, cfg, take(val_cov, folds[k]));
        if (tally)
            ++tally->fits;
        double sum = 0.0;
        std::size_t undefined = 0;
        for (std::size_t i = 0; i < folds[k].size(); ++i) {
            if (p.defined[i]) {
                sum += cosine_dissimilarity(theta[folds[k][i]], p.m_hat[static_cast<Eigen::Index>(i)]);
            } else {
                sum += 1.0;
                ++undefined;
            }
        }
        if (undefined == folds[k].size())
            throw SelectionError("cv_loss: every prediction in fold " + std::to_string(k) + " is undefined");
        if (tally)
            tally->undefined += undefined;
        total += sum / static_cast<double>(folds[k].size());
    }
    return total;
}

double cv_loss(const Dataset& data, const FitConfig& config, const Folds& folds, CvTally* tally)
{
    const Eigen::VectorXd& cov = config.estimator == Estimator::Ideal ? data.x_true() : data.w();
    return cv_loss(data.theta(), cov, cov, config, folds, config.seed, tally);
}

BandwidthReport select_naive_cv(const Dataset& data, const BandwidthGrid& grid, const FitConfig& config, int folds,
                                std::uint64_t seed)
{
    const Folds f = make_folds(data.n(), folds, seed);
    BandwidthReport r;
    r.grid = grid;
    r.selector = Selector::NaiveCV;
    r.loss.assign(grid.size(), std::numeric_limits<double>::infinity());
    const Eigen::VectorXd& cov = config.estimator == Estimator::Ideal ? data.x_true() : data.w();
    for (std::size_t c = 0; c < grid.size(); ++c) {
        CvTally tally;
        try {
            const FitConfig cfg = at_bandwidth(config, grid.candidates[c]);
            r.loss[c] = cv_loss(data.theta(), cov, cov, cfg, f, derive_seed(seed, {1}), &tally);
        } catch (const NumericError&) {
        } catch (const SelectionError&) {
        }
        r.fit_count += tally.fits;
        r.undefined_predictions += tally.undefined;
    }
    const std::size_t best = argmin(r.loss);
    r.selected = grid.candidates[best];
    r.boundary_hit = at_edge(best, grid.size());
    return r;
}

BandwidthReport select_simex(const Dataset& data, const BandwidthGrid& grid, const FitConfig& config, int b,
                             int folds, std::uint64_t seed)
{
    if (config.error_model.family() == ErrorFamily::None)
        throw DomainError("select_simex: needs an error model");
    if (b < 1)
        throw DomainError("select_simex: B must be >= 1");
    const Folds f = make_folds(data.n(), folds, seed);
    const ErrorModel& m = config.error_model;
    const Eigen::Index n = data.n();

    std::vector<Eigen::VectorXd> w1(static_cast<std::size_t>(b)), w2(static_cast<std::size_t>(b));
    for (int r = 0; r < b; ++r) {
        Rng u1(derive_seed(seed, {2, static_cast<std::uint64_t>(r)}));
        Rng u2(derive_seed(seed, {3, static_cast<std::uint64_t>(r)}));
        auto& a = w1[static_cast<std::size_t>(r)];
        auto& c = w2[static_cast<std::size_t>(r)];
        a.resize(n);
        c.resize(n);
        for (Eigen::Index j = 0; j < n; ++j)
            a[j] = data.w()[j] + sample_error(m, u1);
        for (Eigen::Index j = 0; j < n; ++j)
            c[j] = a[j] + sample_error(m, u2);
    }

    BandwidthReport rep;
    rep.grid = grid;
    rep.selector = Selector::SIMEX;
    rep.loss.assign(grid.size(), std::numeric_limits<double>::infinity());
    rep.loss_stage2.assign(grid.size(), std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < grid.size(); ++c) {
        CvTally tally;
        try {
            const FitConfig cfg = at_bandwidth(config, grid.candidates[c]);
            double s1 = 0.0, s2 = 0.0;
            for (int r = 0; r < b; ++r) {
                const auto ur = static_cast<std::size_t>(r);
                const std::uint64_t fs = derive_seed(seed, {4, ur});
                s1 += cv_loss(data.theta(), w1[ur], data.w(), cfg, f, fs, &tally);
                s2 += cv_loss(data.theta(), w2[ur], w1[ur], cfg, f, fs, &tally);
            }
            rep.loss[c] = s1 / b;
            rep.loss_stage2[c] = s2 / b;
        } catch (const NumericError&) {
        } catch (const SelectionError&) {
        }
        rep.fit_count += tally.fits;
        rep.undefined_predictions += tally.undefined;
    }
    const std::size_t i1 = argmin(rep.loss), i2 = argmin(rep.loss_stage2);
    rep.h1 = grid.candidates[i1];
    rep.h2 = grid.candidates[i2];
    // h1^2/h2 can round away from h1 when the stages agree
    rep.selected = rep.h1 == rep.h2 ? rep.h1 : rep.h1 * rep.h1 / rep.h2;
    rep.boundary_hit = at_edge(i1, grid.size()) || at_edge(i2, grid.size());
    return rep;
}

BandwidthReport select_cv_ce(const Dataset& data, const BandwidthGrid& grid, const FitConfig& config, int b,
                             int folds, std::uint64_t seed)
{
    if (b < 1)
        throw DomainError("select_cv_ce: B must be >= 1");
    const double sigma = config.error_model.sigma_u();
    FitConfig base = config;
    base.estimator = Estimator::CE;
    if (sigma == 0.0) {
        BandwidthReport r = select_naive_cv(data, grid, base, folds, seed);
        r.selector = Selector::CE;
        return r;
    }

    const Folds f = make_folds(data.n(), folds, seed);
    const Eigen::MatrixXd z = ce_draws(data.n(), b, derive_seed(seed, {5}));
    const Eigen::VectorXd& th = data.theta();
    const Eigen::VectorXd& w = data.w();

    BandwidthReport rep;
    rep.grid = grid;
    rep.selector = Selector::CE;
    rep.loss.assign(grid.size(), std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < grid.size(); ++c) {
        const double h = grid.candidates[c];
        double total = 0.0;
        bool ok = true;
        for (std::size_t k = 0; k < f.size() && ok; ++k) {
            const auto train = complement(f, k);
            const auto nt = static_cast<Eigen::Index>(train.size());
            const Eigen::VectorXd sn = take(th, train).array().sin(), cs = take(th, train).array().cos();
            std::vector<VectorX<cplx>> wt(static_cast<std::size_t>(b), VectorX<cplx>(nt));
            for (int r = 0; r < b; ++r)
                for (Eigen::Index l = 0; l < nt; ++l)
                    wt[static_cast<std::size_t>(r)][l] = cplx(w[train[static_cast<std::size_t>(l)]],
                                                              sigma * z(train[static_cast<std::size_t>(l)], r));
            double sum = 0.0;
            std::size_t undefined = 0;
            for (Eigen::Index j : f[k]) {
                Eigen::VectorXd avg = Eigen::VectorXd::Zero(nt);
                int used = 0;
                for (int r = 0; r < b; ++r) {
                    try {
                        avg += weight_normalized<cplx>(wt[static_cast<std::size_t>(r)], cplx(w[j], sigma * z(j, r)), h)
                                   .real();
                        ++used;
                    } catch (const DegenerateNeighborhood&) {
                    }
                }
                bool defined = used * 10 >= 9 * b;
                double g1 = 0.0, g2 = 0.0;
                if (defined) {
                    g1 = sn.dot(avg) / used;
                    g2 = cs.dot(avg) / used;
                    defined = std::max(std::abs(g1), std::abs(g2)) > 1e-12;
                }
                if (defined) {
                    sum += cosine_dissimilarity(th[j], std::atan2(g1, g2));
                } else {
                    sum += 1.0;
                    ++undefined;
                }
            }
            rep.undefined_predictions += undefined;
            if (undefined == f[k].size())
                ok = false;
            total += sum / static_cast<double>(f[k].size());
        }
        if (ok)
            rep.loss[c] = total;
    }
    const std::size_t best = argmin(rep.loss);
    rep.selected = grid.candidates[best];
    rep.boundary_hit = at_edge(best, grid.size());
    return rep;
}

double empirical_risk(const Prediction& fit, const Eigen::Ref<const Eigen::VectorXd>& truth,
                      const std::vector<bool>& include, std::size_t* skipped)
{
    if (truth.size() != fit.x.size() || (!include.empty() && include.size() != fit.defined.size()))
        throw DomainError("empirical_risk: truth does not match the fit grid");
    double sum = 0.0;
    std::size_t used = 0, undefined = 0, considered = 0;
    for (Eigen::Index i = 0; i < truth.size(); ++i) {
        const auto ui = static_cast<std::size_t>(i);
        if (!include.empty() && !include[ui])
            continue;
        ++considered;
        if (!fit.defined[ui]) {
            ++undefined;
            continue;
        }
        sum += cosine_dissimilarity(truth[i], fit.m_hat[i]);
        ++used;
    }
    if (skipped)
        *skipped = undefined;
    if (considered == 0 || undefined * 5 >= considered)
        throw NumericError("empirical_risk: " + std::to_string(undefined) + " of " + std::to_string(considered) +
                           " grid points undefined");
    return sum / static_cast<double>(used);
}

BandwidthReport select_oracle(const Dataset& data, const BandwidthGrid& grid, const FitConfig& config,
                              const EvaluationGrid& eval_grid, const Eigen::VectorXd& truth,
                              const std::vector<bool>& include)
{
    BandwidthReport r;
    r.grid = grid;
    r.selector = Selector::Oracle;
    r.loss.assign(grid.size(), std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < grid.size(); ++c) {
        try {
            const FitResult f = fit(data, at_bandwidth(config, grid.candidates[c]), eval_grid);
            ++r.fit_count;
            r.loss[c] = empirical_risk(f, truth, include);
        } catch (const NumericError&) {
        }
    }
    const std::size_t best = argmin(r.loss);
    r.selected = grid.candidates[best];
    r.boundary_hit = at_edge(best, grid.size());
    return r;
}

double amise_h(double beta, double integral_dv, double integral_db2, double n)
{
    if (!(beta >= 0.0) || !(integral_dv > 0.0) || !(integral_db2 > 0.0) || !(n > 0.0))
        throw DomainError("amise_h: inputs must be positive");
    return std::pow((1.0 + 2.0 * beta) / (4.0 * n) * integral_dv / integral_db2, 1.0 / (5.0 + 2.0 * beta));
}

} // namespace circme
