#include "circme/sim_lab.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <ostream>
#include <thread>

#include "circme/circular.hpp"

namespace circme {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string csv_safe(std::string s)
{
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r' || c == '"')
            c = ';';
    return s;
}

} // namespace

void Scenario::validate() const
{
    if (n < 10)
        throw DomainError("scenario needs n >= 10");
    if (!(kappa >= 0.0) || !std::isfinite(kappa))
        throw DomainError("kappa must be finite and >= 0");
    if (reliability && !(*reliability > 0.0 && *reliability <= 1.0))
        throw DomainError("reliability must lie in (0, 1]");
    if (!reliability && !(sigma_u >= 0.0 && std::isfinite(sigma_u)))
        throw DomainError("sigma_u must be finite and >= 0");
}

double Scenario::var_x() const { return covariate == Covariate::Uniform ? 100.0 / 12.0 : 4.0; }

ErrorModel Scenario::error_model() const
{
    const double s = reliability ? sigma_from_reliability(var_x(), *reliability) : sigma_u;
    return family == ErrorFamily::Laplace ? ErrorModel::laplace(s) : ErrorModel::gaussian(s);
}

std::string Scenario::name() const
{
    std::string s = covariate == Covariate::Uniform ? "uniform" : "normal";
    s += regression == Regression::TwoAtanX ? "_2atanx" : "_2ataninvx";
    s += family == ErrorFamily::Laplace ? "_laplace" : "_gaussian";
    s += reliability ? fmt("_l%.2f", *reliability) : fmt("_s%.3f", sigma_u);
    if (kappa != 3.0)
        s += fmt("_k%g", kappa);
    s += "_n" + std::to_string(n);
    return s;
}

double truth_m(Regression r, double x)
{
    if (r == Regression::TwoAtanX)
        return wrap_angle(2.0 * std::atan(x));
    if (x == 0.0)
        return wrap_angle(kPi);
    return wrap_angle(2.0 * std::atan(1.0 / x));
}

Dataset generate(const Scenario& s, Rng& rng)
{
    s.validate();
    const ErrorModel m = s.error_model();
    Eigen::VectorXd x(s.n), th(s.n), w(s.n);
    for (int j = 0; j < s.n; ++j) {
        x[j] = s.covariate == Covariate::Uniform ? 10.0 * rng.uniform() - 5.0 : 2.0 * rng.normal();
        th[j] = truth_m(s.regression, x[j]) + sample_von_mises({Angle(0.0), s.kappa}, rng).value();
        w[j] = x[j] + (m.is_trivial() ? 0.0 : sample_error(m, rng));
    }
    return {th, w, x};
}

EvaluationGrid risk_grid(Regression r)
{
    return r == Regression::TwoAtanX ? EvaluationGrid(-4.5, 0.1, 91) : EvaluationGrid(-3.0, 0.1, 61);
}

std::vector<bool> risk_mask(Regression r, const EvaluationGrid& grid)
{
    std::vector<bool> m(grid.size(), true);
    if (r == Regression::TwoAtanInvX)
        for (std::size_t i = 0; i < grid.size(); ++i)
            if (std::abs(grid[i]) < 1e-9)
                m[i] = false;
    return m;
}

std::vector<Procedure> thirteen_procedures()
{
    using E = Estimator;
    using W = WeightOrder;
    using S = SelectorKind;
    return {
        {"T-O", E::Ideal, W::LocalLinear, S::Oracle},   {"T-CV", E::Ideal, W::LocalLinear, S::NaiveCV},
        {"N-O", E::Naive, W::LocalLinear, S::Oracle},   {"N-CV", E::Naive, W::LocalLinear, S::NaiveCV},
        {"CE-O", E::CE, W::LocalLinear, S::Oracle},     {"CE-C", E::CE, W::LocalLinear, S::CVCE},
        {"CE-S", E::CE, W::LocalLinear, S::SIMEX},      {"DKC-O", E::DK, W::LocalConstant, S::Oracle},
        {"DKC-S", E::DK, W::LocalConstant, S::SIMEX},   {"DKL-O", E::DK, W::LocalLinear, S::Oracle},
        {"DKL-S", E::DK, W::LocalLinear, S::SIMEX},     {"OS-O", E::OS, W::LocalLinear, S::Oracle},
        {"OS-S", E::OS, W::LocalLinear, S::SIMEX},
    };
}

std::vector<Procedure> procedures_by_label(const std::vector<std::string>& labels)
{
    auto all = thirteen_procedures();
    all.push_back({"DKL-CV", Estimator::DK, WeightOrder::LocalLinear, SelectorKind::NaiveCV});
    std::vector<Procedure> out;
    for (const auto& l : labels) {
        auto it = std::find_if(all.begin(), all.end(), [&](const Procedure& p) { return p.label == l; });
        if (it == all.end())
            throw DomainError("unknown procedure: " + l);
        out.push_back(*it);
    }
    return out;
}

std::vector<double> ExperimentResult::risks(std::string_view scenario, std::string_view procedure) const
{
    std::vector<double> r;
    for (const auto& rec : records)
        if (rec.scenario == scenario && rec.procedure == procedure)
            r.push_back(rec.risk);
    return r;
}

std::vector<std::string> ExperimentResult::flagged_cells() const
{
    std::map<std::pair<std::string, std::string>, std::pair<int, int>> cells; // failed, total
    std::vector<std::pair<std::string, std::string>> order;
    for (const auto& rec : records) {
        auto key = std::make_pair(rec.scenario, rec.procedure);
        auto [it, fresh] = cells.try_emplace(key, 0, 0);
        if (fresh)
            order.push_back(key);
        it->second.second += 1;
        if (rec.status != "ok")
            it->second.first += 1;
    }
    std::vector<std::string> out;
    for (const auto& key : order) {
        const auto [failed, total] = cells[key];
        if (failed * 10 > total)
            out.push_back(key.first + "/" + key.second);
    }
    return out;
}

BandwidthGrid anchored_grid(const Dataset& data, const RunSettings& settings, std::uint64_t seed)
{
    const Eigen::VectorXd& w = data.w();
    const double mean = w.mean();
    const double sd = std::sqrt((w.array() - mean).square().sum() / static_cast<double>(w.size() - 1));
    const BandwidthGrid pilot = make_grid(sd, settings.pilot_lo, settings.pilot_hi,
                                          static_cast<std::size_t>(settings.pilot_count));
    FitConfig cfg;
    cfg.estimator = Estimator::Naive;
    const auto r = select_naive_cv(data, pilot, cfg, settings.folds, seed);
    return make_grid(r.selected, settings.grid_lo, settings.grid_hi, static_cast<std::size_t>(settings.grid_count));
}

ReplicateSeeds replicate_seeds(std::uint64_t master, std::size_t scenario_index, int replicate)
{
    const std::uint64_t rep =
        derive_seed(master, {static_cast<std::uint64_t>(scenario_index), static_cast<std::uint64_t>(replicate)});
    return {derive_seed(rep, {0}), derive_seed(rep, {3}), derive_seed(rep, {1}), derive_seed(rep, {2})};
}

std::vector<RiskRecord> run_replicate(const Scenario& s, const std::vector<Procedure>& procedures,
                                      const RunSettings& settings, std::size_t scenario_index, int replicate,
                                      std::vector<FittedValues>* fits)
{
    std::vector<RiskRecord> out;
    if (procedures.empty())
        return out;
    const std::string name = s.name();
    const ReplicateSeeds seeds = replicate_seeds(settings.seed, scenario_index, replicate);
    Rng gen(seeds.data);
    const Dataset data = generate(s, gen);
    const std::uint64_t cv_seed = seeds.selector;
    const std::uint64_t est_seed = seeds.estimator;
    const BandwidthGrid grid = anchored_grid(data, settings, seeds.pilot);

    const EvaluationGrid eval = risk_grid(s.regression);
    const std::vector<bool> mask = risk_mask(s.regression, eval);
    Eigen::VectorXd truth(static_cast<Eigen::Index>(eval.size()));
    for (std::size_t i = 0; i < eval.size(); ++i)
        truth[static_cast<Eigen::Index>(i)] = truth_m(s.regression, eval[i]);

    for (const auto& p : procedures) {
        RiskRecord rec;
        rec.scenario = name;
        rec.procedure = p.label;
        rec.replicate = replicate;
        FitConfig cfg;
        cfg.estimator = p.estimator;
        cfg.weight_order = p.order;
        cfg.error_model = s.error_model();
        cfg.b_star = settings.b_star;
        cfg.seed = est_seed;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            BandwidthReport rep;
            switch (p.selector) {
            case SelectorKind::Oracle:
                rep = select_oracle(data, grid, cfg, eval, truth, mask);
                break;
            case SelectorKind::NaiveCV:
                rep = select_naive_cv(data, grid, cfg, settings.folds, cv_seed);
                break;
            case SelectorKind::SIMEX:
                rep = select_simex(data, grid, cfg, settings.simex_b, settings.folds, cv_seed);
                break;
            case SelectorKind::CVCE:
                rep = select_cv_ce(data, grid, cfg, settings.cvce_b, settings.folds, cv_seed);
                break;
            }
            cfg.h = rep.selected;
            const FitResult f = fit(data, cfg, eval);
            std::size_t skipped = 0;
            rec.risk = empirical_risk(f, truth, mask, &skipped);
            rec.h = rep.selected;
            rec.boundary_hit = rep.boundary_hit;
            rec.undefined_points = skipped;
            if (fits)
                fits->push_back({name, p.label, replicate, f.x, f.m_hat, truth});
        } catch (const std::exception& e) {
            rec.risk = kNaN;
            rec.h = cfg.h;
            rec.status = csv_safe(std::string("failed: ") + e.what());
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.push_back(std::move(rec));
    }
    return out;
}

ExperimentResult run_matrix(const std::vector<Scenario>& scenarios, const std::vector<Procedure>& procedures,
                            const RunSettings& settings)
{
    for (const auto& s : scenarios)
        s.validate();
    if (settings.replicates < 0)
        throw DomainError("replicates must be >= 0");
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentResult result;
    const std::size_t jobs = scenarios.size() * static_cast<std::size_t>(settings.replicates);
    std::vector<std::vector<RiskRecord>> recs(jobs);
    std::vector<std::vector<FittedValues>> fits(jobs);
    std::vector<std::exception_ptr> errors(jobs);
    std::atomic<std::size_t> next{0};

    auto work = [&] {
        for (std::size_t k = next++; k < jobs; k = next++) {
            const std::size_t si = k / static_cast<std::size_t>(settings.replicates);
            const int rep = static_cast<int>(k % static_cast<std::size_t>(settings.replicates));
            try {
                recs[k] = run_replicate(scenarios[si], procedures, settings, si, rep,
                                        settings.keep_fits ? &fits[k] : nullptr);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    unsigned nthreads = settings.threads > 0 ? static_cast<unsigned>(settings.threads)
                                             : std::max(1u, std::thread::hardware_concurrency());
    nthreads = static_cast<unsigned>(std::min<std::size_t>(nthreads, std::max<std::size_t>(jobs, 1)));
    if (nthreads <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < nthreads; ++i)
            pool.emplace_back(work);
        for (auto& t : pool)
            t.join();
    }
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    for (std::size_t k = 0; k < jobs; ++k) {
        for (auto& r : recs[k])
            result.records.push_back(std::move(r));
        for (auto& f : fits[k])
            result.fits.push_back(std::move(f));
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

std::vector<std::string> preset_names() { return {"fig4-desk", "fig1-desk", "fig3-desk", "appI-desk", "table1-desk"}; }

Preset preset(std::string_view name)
{
    Preset p;
    p.name = std::string(name);
    Scenario s;
    s.reliability = 0.8;
    s.n = 100;
    p.procedures = thirteen_procedures();
    if (name == "fig4-desk") {
        s.covariate = Covariate::Uniform;
        s.regression = Regression::TwoAtanX;
        p.scenarios = {s};
    } else if (name == "fig1-desk") {
        s.covariate = Covariate::Normal;
        s.regression = Regression::TwoAtanInvX;
        Scenario s9 = s;
        s9.reliability = 0.9;
        p.scenarios = {s, s9};
    } else if (name == "fig3-desk") {
        s.covariate = Covariate::Normal;
        s.regression = Regression::TwoAtanInvX;
        s.family = ErrorFamily::Laplace;
        s.reliability = 0.9;
        p.scenarios = {s};
    } else if (name == "appI-desk") {
        s.covariate = Covariate::Normal;
        s.regression = Regression::TwoAtanInvX;
        s.reliability.reset();
        s.sigma_u = 1.0;
        p.scenarios = {s};
        p.procedures = procedures_by_label({"DKL-O", "DKL-CV", "DKL-S"});
    } else if (name == "table1-desk") {
        s.covariate = Covariate::Normal;
        s.regression = Regression::TwoAtanInvX;
        s.n = 50;
        p.scenarios = {s};
        p.procedures = procedures_by_label({"N-CV", "CE-C", "CE-S", "DKC-S", "DKL-S", "OS-S"});
        p.settings.replicates = 1;
        p.settings.grid_count = 50;
    } else {
        throw DomainError("unknown preset: " + std::string(name));
    }
    return p;
}

void write_long_csv(std::ostream& os, const ExperimentResult& result)
{
    os << "scenario,procedure,replicate,risk,h,seconds,undefined_points,boundary_hit,status\n";
    char buf[128];
    for (const auto& r : result.records) {
        std::snprintf(buf, sizeof buf, ",%d,%.17g,%.17g,%.6f,%zu,%d,", r.replicate, r.risk, r.h, r.seconds,
                      r.undefined_points, r.boundary_hit ? 1 : 0);
        os << r.scenario << ',' << r.procedure << buf << r.status << '\n';
    }
}

void write_fitted_csv(std::ostream& os, const ExperimentResult& result)
{
    os << "scenario,procedure,replicate,x,m_hat,truth\n";
    char buf[160];
    for (const auto& f : result.fits)
        for (Eigen::Index i = 0; i < f.x.size(); ++i) {
            std::snprintf(buf, sizeof buf, ",%d,%.17g,%.17g,%.17g\n", f.replicate, f.x[i], f.m_hat[i], f.truth[i]);
            os << f.scenario << ',' << f.procedure << buf;
        }
}

double median(std::vector<double> v)
{
    v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
    if (v.empty())
        return kNaN;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2)
        return hi;
    return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

} // namespace circme
