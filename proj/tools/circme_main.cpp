#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "circme/cli_io.hpp"
#include "circme/sim_lab.hpp"

using namespace circme;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Opts {
    std::string config;
    std::string out = ".";
    std::uint64_t seed = 0;
    std::string input;
    std::string units = "rad";
    std::string estimator = "naive";
    std::string order = "linear";
    std::string error = "gaussian";
    double sigma_u = 0.0;
    double reliability = 1.0;
    int b_star = 250;
    double h = 0.0;
    std::string selector;
    int folds = 5;
    int b = 30;
    double h_lo = 0.4, h_hi = 3.0;
    int h_count = 20;
    std::vector<double> h_grid;
    double grid_lo = 0.0, grid_hi = 0.0;
    int grid_count = 101;
    std::string preset;
    int replicates = 0;
    std::vector<std::string> procedures;
    int threads = 0;
    bool keep_fits = false;
    std::vector<double> lambdas;
    std::vector<std::string> families{"gaussian", "laplace"};
    std::vector<std::string> estimators{"naive", "dk", "ce", "os"};
};

std::string one_line(std::string s)
{
    for (char& c : s)
        if (c == '\n' || c == '\r')
            c = ' ';
    return s;
}

std::string utc_now()
{
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

Selector parse_selector(const std::string& s)
{
    if (s == "naive-cv")
        return Selector::NaiveCV;
    if (s == "cv-simex")
        return Selector::SIMEX;
    if (s == "cv-ce")
        return Selector::CE;
    throw UsageError("unknown selector '" + s + "' (naive-cv, cv-simex, cv-ce)");
}

WeightOrder parse_order(const std::string& s)
{
    if (s == "linear")
        return WeightOrder::LocalLinear;
    if (s == "constant")
        return WeightOrder::LocalConstant;
    throw UsageError("unknown weight order '" + s + "' (linear, constant)");
}

// config entries become --key=value flags placed before the user's own, so flags win
std::vector<std::string> expand_config(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string path;
    for (std::size_t k = 0; k < args.size(); ++k) {
        if (args[k] == "--config" && k + 1 < args.size())
            path = args[k + 1];
        else if (args[k].rfind("--config=", 0) == 0)
            path = args[k].substr(9);
    }
    if (path.empty() || args.empty())
        return args;
    std::ifstream in(path);
    if (!in)
        throw UsageError("cannot open config file " + path);
    std::vector<std::string> extra;
    for (const auto& [k, v] : read_config(in)) {
        if (k == "config")
            continue;
        // list values are comma separated
        std::stringstream ss(v);
        std::string item;
        std::vector<std::string> items;
        while (std::getline(ss, item, ','))
            items.push_back(item);
        if (items.size() > 1) {
            extra.push_back("--" + k);
            for (auto& i : items)
                extra.push_back(i);
        } else {
            extra.push_back("--" + k + "=" + v);
        }
    }
    args.insert(args.begin() + 1, extra.begin(), extra.end());
    return args;
}

struct Run {
    json manifest;
    fs::path out;
    std::vector<std::string> outputs;

    void write(const std::string& name, const std::string& content)
    {
        const fs::path p = out / name;
        atomic_write(p, content);
        outputs.push_back(p.string());
    }
};

Dataset load(const Opts& o, Run& run)
{
    if (o.input.empty())
        throw UsageError("--input is required");
    const Table t = load_table(o.input, parse_units(o.units));
    for (const auto& w : t.warnings)
        std::cerr << "WARN " << o.input << ": " << w << '\n';
    run.manifest["inputs"].push_back({{"path", o.input},
                                      {"rows_read", t.rows_read},
                                      {"rows_used", t.n()},
                                      {"rows_skipped", t.skipped_rows}});
    return t.to_dataset();
}

ErrorModel model_from(const Opts& o, const CLI::App& sub, const Dataset& d)
{
    const ErrorFamily fam = parse_error_family(o.error);
    const bool has_sigma = sub.count("--sigma-u") > 0, has_rel = sub.count("--reliability") > 0;
    if (fam == ErrorFamily::None || (!has_sigma && !has_rel))
        return ErrorModel::none();
    const double s = has_sigma ? o.sigma_u : sigma_from_observed(d.w(), o.reliability);
    return fam == ErrorFamily::Laplace ? ErrorModel::laplace(s) : ErrorModel::gaussian(s);
}

FitConfig config_from(const Opts& o, const CLI::App& sub, const Dataset& d)
{
    FitConfig c;
    c.estimator = parse_estimator(o.estimator);
    c.weight_order = parse_order(o.order);
    c.error_model = model_from(o, sub, d);
    c.b_star = o.b_star;
    c.seed = o.seed;
    return c;
}

SelectionSpec selection_from(const Opts& o)
{
    SelectionSpec s;
    s.selector = parse_selector(o.selector);
    s.manual = o.h_grid;
    s.lo = o.h_lo;
    s.hi = o.h_hi;
    s.count = o.h_count;
    s.folds = o.folds;
    s.b = o.b;
    return s;
}

EvaluationGrid grid_from(const Opts& o, const CLI::App& sub, const Dataset& d)
{
    if (sub.count("--grid-lo") || sub.count("--grid-hi")) {
        if (!(sub.count("--grid-lo") && sub.count("--grid-hi")))
            throw UsageError("--grid-lo and --grid-hi go together");
        if (o.grid_count < 2 || !(o.grid_hi > o.grid_lo))
            throw UsageError("grid needs grid-hi > grid-lo and at least 2 points");
        return EvaluationGrid::linspace(o.grid_lo, o.grid_hi, static_cast<std::size_t>(o.grid_count));
    }
    if (o.grid_count < 2)
        throw UsageError("--grid-count must be at least 2");
    return default_grid(d.w(), static_cast<std::size_t>(o.grid_count));
}

void need_seed(const CLI::App& sub, const std::string& why)
{
    if (!sub.count("--seed"))
        throw UsageError("--seed is required " + why);
}

void report_selection(const BandwidthReport& r)
{
    std::cout << "selected h=" << format_double(r.selected) << " selector=" << to_string(r.selector)
              << " boundary=" << (r.boundary_hit ? 1 : 0) << '\n';
    if (r.boundary_hit)
        std::cerr << "WARN boundary: selected bandwidth lies at the edge of the candidate grid\n";
}

json selection_json(const BandwidthReport& r)
{
    json j{{"selector", std::string(to_string(r.selector))},
           {"selected", r.selected},
           {"boundary_hit", r.boundary_hit},
           {"fit_count", r.fit_count},
           {"undefined_predictions", r.undefined_predictions}};
    if (r.selector == Selector::SIMEX) {
        j["h1"] = r.h1;
        j["h2"] = r.h2;
    }
    return j;
}

void cmd_fit(const Opts& o, const CLI::App& sub, Run& run)
{
    const Dataset d = load(o, run);
    FitConfig cfg = config_from(o, sub, d);
    const bool select = !o.selector.empty();
    if (select == (sub.count("--h") > 0))
        throw UsageError("give exactly one of --h and --selector");
    if (select || cfg.estimator == Estimator::CE)
        need_seed(sub, "for bandwidth selection and the CE estimator");
    if (select) {
        const BandwidthReport r = select_bandwidth(d, cfg, selection_from(o), o.seed);
        std::ostringstream bw;
        write_bandwidth_csv(bw, r);
        run.write("bandwidth.csv", bw.str());
        run.manifest["selection"] = selection_json(r);
        report_selection(r);
        cfg.h = r.selected;
    } else {
        cfg.h = o.h;
    }
    const FitResult f = fit(d, cfg, grid_from(o, sub, d));
    std::ostringstream os;
    write_fit_csv(os, f);
    run.write("fit.csv", os.str());
    run.manifest["fit"] = {{"h", cfg.h},
                           {"sigma_u", cfg.error_model.sigma_u()},
                           {"undefined_points", f.undefined_count()}};
    std::cout << "fit estimator=" << to_string(cfg.estimator) << " h=" << format_double(cfg.h)
              << " points=" << f.x.size() << " undefined=" << f.undefined_count() << '\n';
}

void cmd_select(const Opts& o, const CLI::App& sub, Run& run)
{
    need_seed(sub, "for bandwidth selection");
    const Dataset d = load(o, run);
    const FitConfig cfg = config_from(o, sub, d);
    const BandwidthReport r = select_bandwidth(d, cfg, selection_from(o), o.seed);
    std::ostringstream bw;
    write_bandwidth_csv(bw, r);
    run.write("bandwidth.csv", bw.str());
    run.manifest["selection"] = selection_json(r);
    report_selection(r);
}

void cmd_simulate(const Opts& o, const CLI::App& sub, Run& run)
{
    need_seed(sub, "for simulations");
    Preset p = preset(o.preset);
    p.settings.seed = o.seed;
    if (sub.count("--replicates"))
        p.settings.replicates = o.replicates;
    if (!o.procedures.empty())
        p.procedures = procedures_by_label(o.procedures);
    p.settings.threads = o.threads;
    p.settings.keep_fits = o.keep_fits;
    const ExperimentResult r = run_matrix(p.scenarios, p.procedures, p.settings);
    std::ostringstream os;
    write_long_csv(os, r);
    run.write("risks.csv", os.str());
    if (o.keep_fits) {
        std::ostringstream fv;
        write_fitted_csv(fv, r);
        run.write("fitted.csv", fv.str());
    }
    json cells = json::array();
    for (const auto& s : p.scenarios)
        for (const auto& pr : p.procedures) {
            const double m = median(r.risks(s.name(), pr.label));
            cells.push_back({{"scenario", s.name()}, {"procedure", pr.label}, {"median_risk", m}});
            std::cout << s.name() << ' ' << pr.label << " median_risk=" << format_double(m) << '\n';
        }
    const auto flagged = r.flagged_cells();
    for (const auto& f : flagged)
        std::cerr << "WARN flagged " << f << ": more than 10% of replicates failed\n";
    run.manifest["simulation"] = {{"preset", p.name},
                                  {"replicates", p.settings.replicates},
                                  {"cells", cells},
                                  {"flagged", flagged},
                                  {"seconds", r.seconds}};
}

void cmd_contaminate(const Opts& o, const CLI::App& sub, Run& run)
{
    need_seed(sub, "for contamination");
    if (o.input.empty())
        throw UsageError("--input is required");
    const Table t = load_table(o.input, parse_units(o.units));
    run.manifest["inputs"].push_back({{"path", o.input}, {"rows_read", t.rows_read}, {"rows_used", t.n()}});
    if (!t.x)
        throw DataError(o.input + ": contamination needs an 'x' column");
    const bool has_sigma = sub.count("--sigma-u") > 0, has_rel = sub.count("--reliability") > 0;
    if (has_sigma == has_rel)
        throw UsageError("give exactly one of --sigma-u and --reliability");
    Rng rng(o.seed);
    const ErrorFamily fam = parse_error_family(o.error);
    Eigen::VectorXd w;
    if (has_rel) {
        w = contaminate(*t.x, o.reliability, fam, rng);
    } else {
        const ErrorModel m = fam == ErrorFamily::Laplace ? ErrorModel::laplace(o.sigma_u) : ErrorModel::gaussian(o.sigma_u);
        w = contaminate(*t.x, m, rng);
    }
    std::ostringstream os;
    write_table_csv(os, t.theta, w, t.x);
    run.write("contaminated.csv", os.str());
    const double ratio = sample_variance(*t.x) / sample_variance(w);
    run.manifest["contamination"] = {{"achieved_reliability", ratio}};
    std::cout << "contaminated n=" << t.n() << " reliability=" << format_double(ratio) << '\n';
}

void cmd_sensitivity(const Opts& o, const CLI::App& sub, Run& run)
{
    const Dataset d = load(o, run);
    SensitivityOptions so;
    so.lambdas = o.lambdas;
    for (const auto& f : o.families)
        so.families.push_back(parse_error_family(f));
    for (const auto& e : o.estimators)
        so.estimators.push_back(parse_estimator(e));
    so.base.weight_order = parse_order(o.order);
    so.base.b_star = o.b_star;
    so.base.seed = o.seed;
    const bool select = !o.selector.empty();
    if (select == (sub.count("--h") > 0))
        throw UsageError("give exactly one of --h and --selector");
    const bool uses_ce = std::find(so.estimators.begin(), so.estimators.end(), Estimator::CE) != so.estimators.end();
    if (!so.lambdas.empty() && (select || uses_ce))
        need_seed(sub, "for bandwidth selection and the CE estimator");
    if (select)
        so.selection = selection_from(o);
    else
        so.fixed_h = o.h;
    so.grid = grid_from(o, sub, d);
    so.out_dir = run.out;
    const auto cells = sensitivity_scan(d, so);
    std::ostringstream os;
    os << "lambda,family,estimator,sigma_u,h,file,status\n";
    json jc = json::array();
    for (const auto& c : cells) {
        os << format_double(c.lambda) << ',' << to_string(c.family) << ',' << to_string(c.estimator) << ','
           << format_double(c.sigma_u) << ',' << format_double(c.h) << ',' << c.file.filename().string() << ','
           << c.status << '\n';
        if (!c.file.empty())
            run.outputs.push_back(c.file.string());
        else
            std::cerr << "WARN cell lambda=" << c.lambda << ' ' << to_string(c.family) << ' ' << to_string(c.estimator)
                      << ' ' << c.status << '\n';
        jc.push_back({{"lambda", c.lambda},
                      {"family", std::string(to_string(c.family))},
                      {"estimator", std::string(to_string(c.estimator))},
                      {"sigma_u", c.sigma_u},
                      {"h", c.h},
                      {"status", c.status}});
    }
    if (!cells.empty())
        run.write("sensitivity.csv", os.str());
    run.manifest["cells"] = jc;
    std::cout << "sensitivity cells=" << cells.size() << '\n';
}

json option_values(const CLI::App& sub)
{
    json j = json::object();
    for (const CLI::Option* opt : sub.get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || name == "config")
            continue;
        const auto& res = opt->results();
        if (res.empty()) {
            if (!opt->get_default_str().empty())
                j[name] = opt->get_default_str();
            continue;
        }
        if (opt->get_expected_max() > 1)
            j[name] = res;
        else
            j[name] = res.back();
    }
    return j;
}

void add_data(CLI::App* s, Opts& o)
{
    s->add_option("--input", o.input, "CSV with columns theta, w and optionally x");
    s->add_option("--units", o.units, "theta units: rad or deg")->capture_default_str();
}

void add_model(CLI::App* s, Opts& o)
{
    s->add_option("--estimator", o.estimator, "ideal, naive, dk, ce or os")->capture_default_str();
    s->add_option("--order", o.order, "weight order: linear or constant")->capture_default_str();
    s->add_option("--error", o.error, "error family: none, gaussian or laplace")->capture_default_str();
    auto* sg = s->add_option("--sigma-u", o.sigma_u, "error standard deviation");
    auto* rl = s->add_option("--reliability", o.reliability, "assumed reliability; sigma_u^2 = S2(W)(1 - lambda)");
    sg->excludes(rl);
    s->add_option("--b-star", o.b_star, "replicates inside the CE weight")->capture_default_str();
}

void add_selection(CLI::App* s, Opts& o)
{
    s->add_option("--folds", o.folds, "cross-validation folds")->capture_default_str();
    s->add_option("--b", o.b, "replicates for cv-simex and cv-ce")->capture_default_str();
    s->add_option("--h-lo", o.h_lo, "grid lower end as a multiple of the naive-CV pilot bandwidth")->capture_default_str();
    s->add_option("--h-hi", o.h_hi, "grid upper end as a multiple of the pilot")->capture_default_str();
    s->add_option("--h-count", o.h_count, "number of candidate bandwidths")->capture_default_str();
    s->add_option("--h-grid", o.h_grid, "explicit candidate bandwidths")->delimiter(',');
}

void add_grid(CLI::App* s, Opts& o)
{
    s->add_option("--grid-lo", o.grid_lo, "evaluation grid start (default: min W)");
    s->add_option("--grid-hi", o.grid_hi, "evaluation grid end (default: max W)");
    s->add_option("--grid-count", o.grid_count, "evaluation grid points")->capture_default_str();
}

void add_common(CLI::App* s, Opts& o)
{
    s->add_option("--config", o.config, "flat key = value file; flags override it");
    s->add_option("--out", o.out, "output directory")->capture_default_str();
    s->add_option("--seed", o.seed, "master seed");
}

} // namespace

int main(int argc, char** argv)
{
    const auto t0 = std::chrono::steady_clock::now();
    Opts o;
    CLI::App app{"Nonparametric circular regression with a covariate measured with error"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    app.set_help_flag("--help", "print this help and exit");
    app.set_version_flag("--version", kVersion);

    auto* fit_cmd = app.add_subcommand("fit", "fit one estimator and write fit.csv");
    add_common(fit_cmd, o);
    add_data(fit_cmd, o);
    add_model(fit_cmd, o);
    fit_cmd->add_option("--h", o.h, "bandwidth");
    fit_cmd->add_option("--selector", o.selector, "naive-cv, cv-simex or cv-ce instead of --h");
    add_selection(fit_cmd, o);
    add_grid(fit_cmd, o);

    auto* sel_cmd = app.add_subcommand("select-h", "select a bandwidth and write bandwidth.csv");
    add_common(sel_cmd, o);
    add_data(sel_cmd, o);
    add_model(sel_cmd, o);
    sel_cmd->add_option("--selector", o.selector, "naive-cv, cv-simex or cv-ce")->required();
    add_selection(sel_cmd, o);

    auto* sim_cmd = app.add_subcommand("simulate", "run a simulation preset and write risks.csv");
    add_common(sim_cmd, o);
    sim_cmd->add_option("--preset", o.preset, "fig4-desk, fig1-desk, fig3-desk, appI-desk or table1-desk")->required();
    sim_cmd->add_option("--replicates", o.replicates, "override the preset's replicate count");
    sim_cmd->add_option("--procedures", o.procedures, "override the procedure labels, e.g. N-CV,DKL-S")->delimiter(',');
    sim_cmd->add_option("--threads", o.threads, "worker threads (0: all cores)")->capture_default_str();
    sim_cmd->add_flag("--keep-fits", o.keep_fits, "also write fitted.csv");

    auto* con_cmd = app.add_subcommand("contaminate", "add measurement error to the x column");
    add_common(con_cmd, o);
    add_data(con_cmd, o);
    con_cmd->add_option("--error", o.error, "gaussian or laplace")->capture_default_str();
    auto* cs = con_cmd->add_option("--sigma-u", o.sigma_u, "error standard deviation");
    auto* cr = con_cmd->add_option("--reliability", o.reliability, "target sample ratio S2(X)/S2(W)");
    cs->excludes(cr);

    auto* sen_cmd = app.add_subcommand("sensitivity", "fit over assumed reliabilities and error families");
    add_common(sen_cmd, o);
    add_data(sen_cmd, o);
    sen_cmd->add_option("--lambdas", o.lambdas, "assumed reliabilities")->delimiter(',');
    sen_cmd->add_option("--families", o.families, "error families")->delimiter(',')->capture_default_str();
    sen_cmd->add_option("--estimators", o.estimators, "estimators")->delimiter(',')->capture_default_str();
    sen_cmd->add_option("--order", o.order, "weight order: linear or constant")->capture_default_str();
    sen_cmd->add_option("--b-star", o.b_star, "replicates inside the CE weight")->capture_default_str();
    sen_cmd->add_option("--h", o.h, "bandwidth for every cell");
    sen_cmd->add_option("--selector", o.selector, "select per cell instead of --h");
    add_selection(sen_cmd, o);
    add_grid(sen_cmd, o);

    std::vector<std::string> args;
    try {
        args = expand_config(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "ERROR usage: " << one_line(e.what()) << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "ERROR usage: " << one_line(e.what()) << '\n';
        return 1;
    }

    CLI::App* sub = app.get_subcommands().front();
    Run run;
    run.out = o.out;
    run.manifest = {{"tool", "circme"},
                    {"version", kVersion},
                    {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                  std::to_string(EIGEN_MINOR_VERSION)},
                    {"command", sub->get_name()},
                    {"argv", std::vector<std::string>(argv, argv + argc)},
                    {"config_file", o.config},
                    {"started", utc_now()},
                    {"inputs", json::array()}};

    int code = 0;
    std::string reason;
    try {
        run.manifest["options"] = option_values(*sub);
        const std::string name = sub->get_name();
        if (name == "fit")
            cmd_fit(o, *sub, run);
        else if (name == "select-h")
            cmd_select(o, *sub, run);
        else if (name == "simulate")
            cmd_simulate(o, *sub, run);
        else if (name == "contaminate")
            cmd_contaminate(o, *sub, run);
        else
            cmd_sensitivity(o, *sub, run);
    } catch (const UsageError& e) {
        code = 1;
        reason = "ERROR usage: " + one_line(e.what());
    } catch (const UndefinedMean& e) {
        code = 3;
        reason = "ERROR numeric: " + one_line(e.what());
    } catch (const DomainError& e) {
        code = 1;
        reason = "ERROR usage: " + one_line(e.what());
    } catch (const DataError& e) {
        code = 2;
        reason = "ERROR data: " + one_line(e.what());
    } catch (const fs::filesystem_error& e) {
        code = 2;
        reason = "ERROR data: " + one_line(e.what());
    } catch (const NumericError& e) {
        code = 3;
        reason = "ERROR numeric: " + one_line(e.what());
    } catch (const SelectionError& e) {
        code = 3;
        reason = "ERROR numeric: " + one_line(e.what());
    } catch (const std::exception& e) {
        code = 3;
        reason = "ERROR numeric: " + one_line(e.what());
    }
    if (code != 0) {
        std::cerr << reason << '\n';
        return code;
    }
    run.manifest["outputs"] = run.outputs;
    run.manifest["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    try {
        run.write("manifest.json", run.manifest.dump(2) + "\n");
    } catch (const std::exception& e) {
        std::cerr << "ERROR data: " << one_line(e.what()) << '\n';
        return 2;
    }
    return 0;
}
