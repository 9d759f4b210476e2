#pragma once

#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "circme/local_fit.hpp"

namespace circme {

enum class GridProvenance { Manual, AnchoredAtNaive };

struct BandwidthGrid {
    std::vector<double> candidates;
    GridProvenance provenance = GridProvenance::Manual;

    /// Throws DomainError unless the candidates are positive and strictly increasing.
    static BandwidthGrid manual(std::vector<double> candidates);
    std::size_t size() const noexcept { return candidates.size(); }
};

/// `count` geometrically spaced candidates on [lo * h0, hi * h0].
BandwidthGrid make_grid(double h0, double lo, double hi, std::size_t count);

enum class Selector { NaiveCV, SIMEX, CE, Oracle };
std::string_view to_string(Selector s);

struct BandwidthReport {
    BandwidthGrid grid;
    std::vector<double> loss;        ///< per candidate (stage 1 for SIMEX); +inf where the fit failed
    std::vector<double> loss_stage2; ///< SIMEX only
    double selected = 0.0;
    Selector selector = Selector::NaiveCV;
    bool boundary_hit = false;
    double h1 = std::numeric_limits<double>::quiet_NaN(); ///< SIMEX stage minimisers
    double h2 = std::numeric_limits<double>::quiet_NaN();
    std::size_t fit_count = 0;             ///< estimator fits performed
    std::size_t undefined_predictions = 0; ///< validation points scored with the penalty 1
};

using Folds = std::vector<std::vector<Eigen::Index>>;

/// Seeded Fisher-Yates shuffle of 0..n-1 cut into `k` contiguous blocks of near-equal size.
Folds make_folds(Eigen::Index n, int k, std::uint64_t seed);

struct CvTally {
    std::size_t fits = 0;
    std::size_t undefined = 0;
};

/// k-fold cosine loss: sum over folds of the fold-mean of 1 - cos(theta_j - m_hat(v_j)), fitting
/// on `train_cov` without fold k and predicting at `val_cov` of fold k. Undefined predictions
/// count 1. The estimator seed of fold k is derive_seed(fold_seed, {k}). Ideal is treated as Naive
/// (pass the true covariate as `train_cov`). Throws SelectionError if a fold has no defined prediction.
double cv_loss(const Eigen::VectorXd& theta, const Eigen::VectorXd& train_cov, const Eigen::VectorXd& val_cov,
               const FitConfig& config, const Folds& folds, std::uint64_t fold_seed, CvTally* tally = nullptr);

/// cv_loss on a dataset at config.h, validating at W (at X for the ideal estimator).
double cv_loss(const Dataset& data, const FitConfig& config, const Folds& folds, CvTally* tally = nullptr);

/// Argmin of the naive CV loss over the grid; config.h is ignored. Ties go to the smallest h.
/// Candidates whose fits fail numerically get loss +inf; SelectionError if all do.
BandwidthReport select_naive_cv(const Dataset& data, const BandwidthGrid& grid, const FitConfig& config, int folds,
                                std::uint64_t seed);

/// CV-SIMEX: stage 1 trains on W*_b = W + U*_b and validates at W; stage 2 trains on
/// W**_b = W*_b + U**_b and validates at W*_b; losses averaged over b = 1..B; returns h1^2 / h2.
/// The estimator runs with config.error_model, which also generates U* and U**.
BandwidthReport select_simex(const Dataset& data, const BandwidthGrid& grid, const FitConfig& config, int b,
                             int folds, std::uint64_t seed);

/// CV-CE: the prediction at W_j uses the replicate-averaged normalized weight
/// B^-1 sum_b W*(W_l + i s Z_lb - (W_j + i s Z_jb); training covariates of replicate b),
/// with one n x B matrix Z shared by all folds and candidates. sigma_u == 0 reduces to
/// select_naive_cv for the CE estimator.
BandwidthReport select_cv_ce(const Dataset& data, const BandwidthGrid& grid, const FitConfig& config, int b,
                             int folds, std::uint64_t seed);

/// 1 - mean cos(truth - m_hat) over defined points with include[i] set (all points when empty).
/// Throws NumericError when 20% or more of the included points are undefined.
double empirical_risk(const Prediction& fit, const Eigen::Ref<const Eigen::VectorXd>& truth,
                      const std::vector<bool>& include = {}, std::size_t* skipped = nullptr);

/// Argmin over the grid of empirical_risk of the fit on `eval_grid`.
BandwidthReport select_oracle(const Dataset& data, const BandwidthGrid& grid, const FitConfig& config,
                              const EvaluationGrid& eval_grid, const Eigen::VectorXd& truth,
                              const std::vector<bool>& include = {});

/// [(1 + 2 beta) / (4 n) * int DV / int DB^2]^(1 / (5 + 2 beta)).
double amise_h(double beta, double integral_dv, double integral_db2, double n);

} // namespace circme
