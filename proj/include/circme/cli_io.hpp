#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "circme/bandwidth_select.hpp"
#include "circme/local_fit.hpp"
#include "circme/random.hpp"

namespace circme {

enum class AngleUnits { Radians, Degrees };
AngleUnits parse_units(std::string_view s);

/// Rows of a theta,w[,x] CSV after NA rows are dropped.
struct Table {
    Eigen::VectorXd theta; ///< radians, wrapped
    Eigen::VectorXd w;
    std::optional<Eigen::VectorXd> x;
    std::size_t rows_read = 0;               ///< data rows in the file
    std::vector<std::size_t> skipped_rows;   ///< 1-based data row numbers dropped for NA
    std::vector<std::string> warnings;

    Eigen::Index n() const noexcept { return theta.size(); }
    /// Throws DataError when fewer than five rows remain.
    Dataset to_dataset() const;
};

/// CSV with a header naming `theta` and `w` (optional `x`), in any column order. Empty cells, NA
/// and NaN mark a row as missing: it is dropped and reported. Throws DataError on missing columns,
/// ragged or non-numeric rows (with the row number) and when no usable row is left.
Table parse_table(std::istream& in, AngleUnits units);
Table load_table(const std::filesystem::path& path, AngleUnits units);
Dataset load_dataset(const std::filesystem::path& path, AngleUnits units);

/// Unbiased sample variance.
double sample_variance(const Eigen::Ref<const Eigen::VectorXd>& v);

/// W = X + c u with u drawn from the family at unit scale and c > 0 solving the sample quadratic
/// S2(X) / S2(X + c u) = target. target = 1 returns X. Throws DomainError unless 0 < target <= 1.
Eigen::VectorXd contaminate(const Eigen::Ref<const Eigen::VectorXd>& x, double target, ErrorFamily family, Rng& rng);
/// W = X + U with U drawn from a fixed model.
Eigen::VectorXd contaminate(const Eigen::Ref<const Eigen::VectorXd>& x, const ErrorModel& model, Rng& rng);

/// sigma_u^2 = S2(W) (1 - lambda): the error scale implied by an assumed reliability when X is unobserved.
double sigma_from_observed(const Eigen::Ref<const Eigen::VectorXd>& w, double lambda);

/// How a bandwidth is chosen outside the simulation lab.
struct SelectionSpec {
    Selector selector = Selector::NaiveCV; ///< Oracle is not available without a truth
    std::vector<double> manual;            ///< candidate list; when empty the grid is anchored at naive CV
    double lo = 0.4, hi = 3.0;
    int count = 20;
    int folds = 5;
    int b = 30;
};

/// Candidate grid (manual or anchored) and the chosen selector's report.
BandwidthReport select_bandwidth(const Dataset& data, const FitConfig& config, const SelectionSpec& spec,
                                 std::uint64_t seed);

struct SensitivityOptions {
    std::vector<double> lambdas;
    std::vector<ErrorFamily> families;
    std::vector<Estimator> estimators;
    FitConfig base;                      ///< order, b_star, seed
    std::optional<double> fixed_h;       ///< otherwise select per cell
    SelectionSpec selection;
    std::optional<EvaluationGrid> grid;  ///< default: 101 points over the range of W
    std::filesystem::path out_dir;
};

struct SensitivityCell {
    double lambda = 0.0;
    ErrorFamily family = ErrorFamily::Gaussian;
    Estimator estimator = Estimator::Naive;
    double sigma_u = 0.0;
    double h = 0.0;
    std::filesystem::path file;
    std::string status = "ok";
};

/// fit_lambda0.75_gaussian_DK.csv
std::string sensitivity_file_name(double lambda, ErrorFamily family, Estimator estimator);

/// One fit per (lambda, family, estimator), each written to out_dir. A failing cell is recorded
/// in its status and the scan goes on.
std::vector<SensitivityCell> sensitivity_scan(const Dataset& data, const SensitivityOptions& options);

/// Default evaluation grid: `count` points spanning the observed covariate.
EvaluationGrid default_grid(const Eigen::Ref<const Eigen::VectorXd>& w, std::size_t count = 101);

/// %.17e; non-finite values as nan / inf / -inf.
std::string format_double(double v);

/// x,m_hat,g1,g2,defined
void write_fit_csv(std::ostream& os, const Prediction& fit);
/// Inverse of write_fit_csv. Throws DataError on a malformed file.
Prediction read_fit_csv(std::istream& in);
/// candidate,loss (plus loss_stage2 for SIMEX)
void write_bandwidth_csv(std::ostream& os, const BandwidthReport& report);
/// theta,w[,x] in radians
void write_table_csv(std::ostream& os, const Eigen::VectorXd& theta, const Eigen::VectorXd& w,
                     const std::optional<Eigen::VectorXd>& x);

/// Write to a temporary file in the same directory, then rename over `path`.
void atomic_write(const std::filesystem::path& path, const std::string& content);

/// Flat `key = value` lines; blank lines and # comments ignored. Throws DataError on other lines.
std::map<std::string, std::string> read_config(std::istream& in);

} // namespace circme
