#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "circme/bandwidth_select.hpp"
#include "circme/local_fit.hpp"

namespace circme {

enum class Covariate { Uniform, Normal }; ///< Uniform(-5, 5) or N(0, 4)
enum class Regression { TwoAtanX, TwoAtanInvX };

struct Scenario {
    Covariate covariate = Covariate::Uniform;
    Regression regression = Regression::TwoAtanX;
    double kappa = 3.0;
    ErrorFamily family = ErrorFamily::Gaussian;
    std::optional<double> reliability; ///< when set, sigma_u follows from Var(X)
    double sigma_u = 0.0;
    int n = 100;

    /// Throws DomainError for n < 10 or a reliability outside (0, 1].
    void validate() const;
    double var_x() const;
    ErrorModel error_model() const;
    std::string name() const;
};

/// 2 atan(x) or 2 atan(1/x), wrapped; 2 atan(1/x) at x = 0 returns the right limit (pi, i.e. -pi).
double truth_m(Regression r, double x);

/// X from the covariate law, theta = m(X) + von Mises(0, kappa) noise, W = X + U.
Dataset generate(const Scenario& s, Rng& rng);

/// Risk grid: [-4.5, 4.5] for 2 atan(x), [-3, 3] for 2 atan(1/x), both at step 0.1.
EvaluationGrid risk_grid(Regression r);
/// Points of the risk grid that enter the risk (x = 0 is dropped for 2 atan(1/x)).
std::vector<bool> risk_mask(Regression r, const EvaluationGrid& grid);

enum class SelectorKind { Oracle, NaiveCV, SIMEX, CVCE };

struct Procedure {
    std::string label; ///< e.g. "DKL-S"
    Estimator estimator = Estimator::Naive;
    WeightOrder order = WeightOrder::LocalLinear;
    SelectorKind selector = SelectorKind::Oracle;
};

/// T-O, T-CV, N-O, N-CV, CE-O, CE-C, CE-S, DKC-O, DKC-S, DKL-O, DKL-S, OS-O, OS-S.
std::vector<Procedure> thirteen_procedures();
/// Look up procedures by label (the thirteen plus DKL-CV). Throws DomainError on an unknown label.
std::vector<Procedure> procedures_by_label(const std::vector<std::string>& labels);

struct RunSettings {
    int replicates = 20;
    int folds = 5;
    int simex_b = 30; ///< B for CV-SIMEX
    int cvce_b = 30;  ///< B for CV-CE
    int b_star = 250; ///< B* inside the CE weight
    // pilot naive CV on a geometric grid [pilot_lo, pilot_hi] * sd(W), then candidates on [lo, hi] * h0
    double pilot_lo = 0.03, pilot_hi = 0.8;
    int pilot_count = 25;
    double grid_lo = 0.4, grid_hi = 3.0;
    int grid_count = 20;
    int threads = 0; ///< 0: hardware concurrency
    bool keep_fits = false;
    std::uint64_t seed = 20240101;
};

struct RiskRecord {
    std::string scenario;
    std::string procedure;
    int replicate = 0;
    double risk = 0.0; ///< NaN when the procedure failed
    double h = 0.0;
    double seconds = 0.0;
    std::size_t undefined_points = 0;
    bool boundary_hit = false;
    std::string status = "ok";
};

struct FittedValues {
    std::string scenario;
    std::string procedure;
    int replicate = 0;
    Eigen::VectorXd x;
    Eigen::VectorXd m_hat;
    Eigen::VectorXd truth;
};

struct ExperimentResult {
    std::vector<RiskRecord> records; ///< scenario-major, then replicate, then procedure
    std::vector<FittedValues> fits;  ///< filled when keep_fits
    double seconds = 0.0;

    /// Risks of one procedure in replicate order (NaN for failures).
    std::vector<double> risks(std::string_view scenario, std::string_view procedure) const;
    /// Cells where more than 10% of replicates failed.
    std::vector<std::string> flagged_cells() const;
};

/// Candidate grid anchored at the naive-CV bandwidth from a pilot grid.
BandwidthGrid anchored_grid(const Dataset& data, const RunSettings& settings, std::uint64_t seed);

/// Seeds of one replicate, all derived from the master seed, the scenario index and the replicate.
struct ReplicateSeeds {
    std::uint64_t data;      ///< generate()
    std::uint64_t pilot;     ///< folds of the pilot naive CV behind the candidate grid
    std::uint64_t selector;  ///< folds and pseudo-errors of every selector
    std::uint64_t estimator; ///< CE draws
};
ReplicateSeeds replicate_seeds(std::uint64_t master, std::size_t scenario_index, int replicate);

/// One replicate of every procedure on one data set.
std::vector<RiskRecord> run_replicate(const Scenario& s, const std::vector<Procedure>& procedures,
                                      const RunSettings& settings, std::size_t scenario_index, int replicate,
                                      std::vector<FittedValues>* fits = nullptr);

/// Every scenario x replicate x procedure. Replicates run on worker threads with seeds derived
/// from settings.seed; results are merged in replicate order.
ExperimentResult run_matrix(const std::vector<Scenario>& scenarios, const std::vector<Procedure>& procedures,
                            const RunSettings& settings);

struct Preset {
    std::string name;
    std::vector<Scenario> scenarios;
    std::vector<Procedure> procedures;
    RunSettings settings;
};

/// fig4-desk, fig1-desk, fig3-desk, appI-desk, table1-desk. Throws DomainError on unknown names.
Preset preset(std::string_view name);
std::vector<std::string> preset_names();

/// scenario,procedure,replicate,risk,h,seconds,undefined_points,boundary_hit,status
void write_long_csv(std::ostream& os, const ExperimentResult& result);
/// scenario,procedure,replicate,x,m_hat,truth
void write_fitted_csv(std::ostream& os, const ExperimentResult& result);

/// Median ignoring NaN entries; NaN when nothing is left.
double median(std::vector<double> v);

} // namespace circme
