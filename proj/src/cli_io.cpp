#include "circme/cli_io.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unistd.h>

#include "circme/circular.hpp"
#include "circme/sim_lab.hpp"

namespace circme {

namespace {

std::string trim(std::string_view s)
{
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    auto e = s.find_last_not_of(" \t\r\n");
    std::string out(s.substr(b, e - b + 1));
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"')
        out = out.substr(1, out.size() - 2);
    return out;
}

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
        if (comma == std::string::npos)
            break;
        start = comma + 1;
    }
    return cells;
}

bool is_missing(const std::string& cell)
{
    const std::string l = lower(cell);
    return l.empty() || l == "na" || l == "nan" || l == "null";
}

std::optional<double> parse_number(const std::string& cell)
{
    if (cell.empty())
        return std::nullopt;
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end != cell.c_str() + cell.size() || errno == ERANGE)
        return std::nullopt;
    return v;
}

std::string where(std::size_t line) { return "line " + std::to_string(line); }

} // namespace

AngleUnits parse_units(std::string_view s)
{
    const std::string l = lower(std::string(s));
    if (l == "rad" || l == "radians")
        return AngleUnits::Radians;
    if (l == "deg" || l == "degrees")
        return AngleUnits::Degrees;
    throw DomainError("unknown angle units '" + std::string(s) + "'");
}

Dataset Table::to_dataset() const
{
    if (n() < 5)
        throw DataError("need at least 5 usable rows, found " + std::to_string(n()));
    return {theta, w, x};
}

Table parse_table(std::istream& in, AngleUnits units)
{
    std::string line;
    std::size_t lineno = 0;
    // header: first non-blank line
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++lineno;
        if (!trim(line).empty()) {
            header = split(line);
            break;
        }
    }
    if (header.empty())
        throw DataError("empty input: no header line");
    int ct = -1, cw = -1, cx = -1;
    for (std::size_t k = 0; k < header.size(); ++k) {
        const std::string name = lower(header[k]);
        int* slot = name == "theta" ? &ct : name == "w" ? &cw : name == "x" ? &cx : nullptr;
        if (!slot)
            continue;
        if (*slot >= 0)
            throw DataError(where(lineno) + ": duplicate column '" + name + "'");
        *slot = static_cast<int>(k);
    }
    if (ct < 0 || cw < 0)
        throw DataError(where(lineno) + ": header must name columns 'theta' and 'w'");

    Table t;
    std::vector<double> th, w, x;
    const double scale = units == AngleUnits::Degrees ? kPi / 180.0 : 1.0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty())
            continue;
        ++t.rows_read;
        const auto cells = split(line);
        if (cells.size() != header.size())
            throw DataError(where(lineno) + ": expected " + std::to_string(header.size()) + " fields, found " +
                            std::to_string(cells.size()));
        bool missing = false;
        double vals[3] = {0, 0, 0};
        const int cols[3] = {ct, cw, cx};
        for (int k = 0; k < 3; ++k) {
            if (cols[k] < 0)
                continue;
            const std::string& cell = cells[static_cast<std::size_t>(cols[k])];
            if (is_missing(cell)) {
                missing = true;
                continue;
            }
            const auto v = parse_number(cell);
            if (!v || !std::isfinite(*v))
                throw DataError(where(lineno) + ": non-numeric value '" + cell + "' in column '" +
                                header[static_cast<std::size_t>(cols[k])] + "'");
            vals[k] = *v;
        }
        if (missing) {
            t.skipped_rows.push_back(t.rows_read);
            t.warnings.push_back(where(lineno) + ": missing value, row skipped");
            continue;
        }
        th.push_back(wrap_angle(vals[0] * scale));
        w.push_back(vals[1]);
        if (cx >= 0)
            x.push_back(vals[2]);
    }
    if (th.empty())
        throw DataError("no usable rows (" + std::to_string(t.rows_read) + " read, " +
                        std::to_string(t.skipped_rows.size()) + " with missing values)");
    t.theta = Eigen::Map<Eigen::VectorXd>(th.data(), static_cast<Eigen::Index>(th.size()));
    t.w = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    if (cx >= 0)
        t.x = Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    return t;
}

Table load_table(const std::filesystem::path& path, AngleUnits units)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open " + path.string());
    try {
        return parse_table(in, units);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

Dataset load_dataset(const std::filesystem::path& path, AngleUnits units) { return load_table(path, units).to_dataset(); }

double sample_variance(const Eigen::Ref<const Eigen::VectorXd>& v)
{
    if (v.size() < 2)
        throw DataError("sample variance needs at least two values");
    return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
}

Eigen::VectorXd contaminate(const Eigen::Ref<const Eigen::VectorXd>& x, double target, ErrorFamily family, Rng& rng)
{
    if (!(target > 0.0 && target <= 1.0))
        throw DomainError("target reliability must lie in (0, 1]");
    if (family == ErrorFamily::None)
        throw DomainError("contaminate: an error family is required");
    if (target == 1.0)
        return x;
    const Eigen::Index n = x.size();
    const ErrorModel unit = family == ErrorFamily::Laplace ? ErrorModel::laplace(1.0) : ErrorModel::gaussian(1.0);
    Eigen::VectorXd u(n);
    for (Eigen::Index j = 0; j < n; ++j)
        u[j] = sample_error(unit, rng);
    const double sxx = sample_variance(x);
    if (!(sxx > 0.0))
        throw DataError("contaminate: x has zero sample variance");
    const Eigen::ArrayXd dx = x.array() - x.mean(), du = u.array() - u.mean();
    const double sxu = (dx * du).sum() / static_cast<double>(n - 1);
    const double suu = du.square().sum() / static_cast<double>(n - 1);
    // suu c^2 + 2 sxu c + sxx (1 - 1/target) = 0, positive root
    const double b = 2.0 * sxu, c = sxx * (1.0 - 1.0 / target);
    const double disc = std::sqrt(b * b - 4.0 * suu * c);
    const double root = b >= 0.0 ? -2.0 * c / (b + disc) : (-b + disc) / (2.0 * suu);
    return x + root * u;
}

Eigen::VectorXd contaminate(const Eigen::Ref<const Eigen::VectorXd>& x, const ErrorModel& model, Rng& rng)
{
    Eigen::VectorXd w = x;
    if (model.is_trivial())
        return w;
    for (Eigen::Index j = 0; j < w.size(); ++j)
        w[j] += sample_error(model, rng);
    return w;
}

double sigma_from_observed(const Eigen::Ref<const Eigen::VectorXd>& w, double lambda)
{
    if (!(lambda > 0.0 && lambda <= 1.0))
        throw DomainError("assumed reliability must lie in (0, 1]");
    return std::sqrt(sample_variance(w) * (1.0 - lambda));
}

BandwidthReport select_bandwidth(const Dataset& data, const FitConfig& config, const SelectionSpec& spec,
                                 std::uint64_t seed)
{
    if (spec.selector == Selector::Oracle)
        throw DomainError("the oracle selector needs the true regression function");
    BandwidthGrid grid;
    if (!spec.manual.empty()) {
        grid = BandwidthGrid::manual(spec.manual);
    } else {
        RunSettings rs;
        rs.folds = spec.folds;
        rs.grid_lo = spec.lo;
        rs.grid_hi = spec.hi;
        rs.grid_count = spec.count;
        grid = anchored_grid(data, rs, derive_seed(seed, {0}));
    }
    const std::uint64_t s = derive_seed(seed, {1});
    switch (spec.selector) {
    case Selector::NaiveCV:
        return select_naive_cv(data, grid, config, spec.folds, s);
    case Selector::SIMEX:
        return select_simex(data, grid, config, spec.b, spec.folds, s);
    case Selector::CE:
        return select_cv_ce(data, grid, config, spec.b, spec.folds, s);
    case Selector::Oracle:
        break;
    }
    throw DomainError("unsupported selector");
}

std::string sensitivity_file_name(double lambda, ErrorFamily family, Estimator estimator)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", lambda);
    std::string e(to_string(estimator));
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::toupper(c); });
    return "fit_lambda" + std::string(buf) + "_" + std::string(to_string(family)) + "_" + e + ".csv";
}

EvaluationGrid default_grid(const Eigen::Ref<const Eigen::VectorXd>& w, std::size_t count)
{
    const double lo = w.minCoeff(), hi = w.maxCoeff();
    if (!(hi > lo))
        throw DataError("observed covariate is constant; give an explicit grid");
    return EvaluationGrid::linspace(lo, hi, count);
}

std::vector<SensitivityCell> sensitivity_scan(const Dataset& data, const SensitivityOptions& options)
{
    std::vector<SensitivityCell> cells;
    if (options.lambdas.empty() || options.families.empty() || options.estimators.empty())
        return cells;
    for (double l : options.lambdas)
        if (!(l > 0.0 && l <= 1.0))
            throw DomainError("assumed reliability must lie in (0, 1]");
    const EvaluationGrid grid = options.grid ? *options.grid : default_grid(data.w());
    std::filesystem::create_directories(options.out_dir);
    for (double lambda : options.lambdas)
        for (ErrorFamily fam : options.families)
            for (Estimator est : options.estimators) {
                SensitivityCell cell;
                cell.lambda = lambda;
                cell.family = fam;
                cell.estimator = est;
                try {
                    cell.sigma_u = sigma_from_observed(data.w(), lambda);
                    FitConfig cfg = options.base;
                    cfg.estimator = est;
                    cfg.error_model =
                        fam == ErrorFamily::Laplace ? ErrorModel::laplace(cell.sigma_u) : ErrorModel::gaussian(cell.sigma_u);
                    cfg.kernels.reset();
                    cfg.h = options.fixed_h ? *options.fixed_h
                                            : select_bandwidth(data, cfg, options.selection, cfg.seed).selected;
                    cell.h = cfg.h;
                    const FitResult f = fit(data, cfg, grid);
                    std::ostringstream os;
                    write_fit_csv(os, f);
                    cell.file = options.out_dir / sensitivity_file_name(lambda, fam, est);
                    atomic_write(cell.file, os.str());
                } catch (const std::exception& e) {
                    std::string msg = e.what();
                    std::replace(msg.begin(), msg.end(), ',', ';');
                    std::replace(msg.begin(), msg.end(), '\n', ' ');
                    cell.status = "failed: " + msg;
                }
                cells.push_back(std::move(cell));
            }
    return cells;
}

std::string format_double(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17e", v);
    return buf;
}

void write_fit_csv(std::ostream& os, const Prediction& fit)
{
    os << "x,m_hat,g1,g2,defined\n";
    for (Eigen::Index i = 0; i < fit.x.size(); ++i)
        os << format_double(fit.x[i]) << ',' << format_double(fit.m_hat[i]) << ',' << format_double(fit.g1[i]) << ','
           << format_double(fit.g2[i]) << ',' << (fit.defined[static_cast<std::size_t>(i)] ? 1 : 0) << '\n';
}

Prediction read_fit_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line) || trim(line) != "x,m_hat,g1,g2,defined")
        throw DataError("fit file: unexpected header");
    std::vector<double> cols[4];
    std::vector<bool> defined;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty())
            continue;
        const auto cells = split(line);
        if (cells.size() != 5)
            throw DataError("fit file " + where(lineno) + ": expected 5 fields");
        for (int k = 0; k < 4; ++k) {
            const std::string l = lower(cells[static_cast<std::size_t>(k)]);
            double v;
            if (l == "nan")
                v = std::nan("");
            else if (auto p = parse_number(cells[static_cast<std::size_t>(k)]))
                v = *p;
            else
                throw DataError("fit file " + where(lineno) + ": bad number '" + cells[static_cast<std::size_t>(k)] + "'");
            cols[k].push_back(v);
        }
        if (cells[4] != "0" && cells[4] != "1")
            throw DataError("fit file " + where(lineno) + ": defined must be 0 or 1");
        defined.push_back(cells[4] == "1");
    }
    Prediction p;
    const auto n = static_cast<Eigen::Index>(defined.size());
    p.x = Eigen::Map<Eigen::VectorXd>(cols[0].data(), n);
    p.m_hat = Eigen::Map<Eigen::VectorXd>(cols[1].data(), n);
    p.g1 = Eigen::Map<Eigen::VectorXd>(cols[2].data(), n);
    p.g2 = Eigen::Map<Eigen::VectorXd>(cols[3].data(), n);
    p.defined = std::move(defined);
    return p;
}

void write_bandwidth_csv(std::ostream& os, const BandwidthReport& report)
{
    const bool two = !report.loss_stage2.empty();
    os << (two ? "candidate,loss,loss_stage2\n" : "candidate,loss\n");
    for (std::size_t k = 0; k < report.grid.size(); ++k) {
        os << format_double(report.grid.candidates[k]) << ',' << format_double(report.loss[k]);
        if (two)
            os << ',' << format_double(report.loss_stage2[k]);
        os << '\n';
    }
}

void write_table_csv(std::ostream& os, const Eigen::VectorXd& theta, const Eigen::VectorXd& w,
                     const std::optional<Eigen::VectorXd>& x)
{
    os << (x ? "theta,w,x\n" : "theta,w\n");
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        os << format_double(theta[j]) << ',' << format_double(w[j]);
        if (x)
            os << ',' << format_double((*x)[j]);
        os << '\n';
    }
}

void atomic_write(const std::filesystem::path& path, const std::string& content)
{
    const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    std::filesystem::create_directories(dir);
    auto tmp = path;
    tmp += ".tmp" + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw DataError("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out)
            throw DataError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw DataError("cannot move output into place at " + path.string() + ": " + ec.message());
    }
}

std::map<std::string, std::string> read_config(std::istream& in)
{
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        const std::string body = trim(line.substr(0, hash));
        if (body.empty())
            continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw DataError("config " + where(lineno) + ": expected key = value");
        const std::string key = trim(body.substr(0, eq));
        if (key.empty())
            throw DataError("config " + where(lineno) + ": empty key");
        kv[key] = trim(body.substr(eq + 1));
    }
    return kv;
}

} // namespace circme
