#pragma once

#include <complex>
#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "circme/deconvolution.hpp"
#include "circme/error_models.hpp"
#include "circme/errors.hpp"
#include "circme/kernel.hpp"

namespace circme {

template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Paired circular responses and observed covariates; x_true only in simulations.
class Dataset {
public:
    /// Wraps theta into [-pi, pi). Throws DataError on unequal lengths, n < 5 or non-finite values.
    Dataset(Eigen::VectorXd theta, Eigen::VectorXd w, std::optional<Eigen::VectorXd> x_true = std::nullopt);

    Eigen::Index n() const noexcept { return theta_.size(); }
    const Eigen::VectorXd& theta() const noexcept { return theta_; }
    const Eigen::VectorXd& w() const noexcept { return w_; }
    bool has_x() const noexcept { return x_true_.has_value(); }
    /// Throws DataError when the true covariate is absent.
    const Eigen::VectorXd& x_true() const;

    /// Rows `idx`, in that order.
    Dataset subset(const std::vector<Eigen::Index>& idx) const;
    /// Same responses (and truth) with a different observed covariate.
    Dataset with_w(Eigen::VectorXd w) const;
    Dataset with_theta(Eigen::VectorXd theta) const;

private:
    Eigen::VectorXd theta_;
    Eigen::VectorXd w_;
    std::optional<Eigen::VectorXd> x_true_;
};

enum class Estimator { Ideal, Naive, DK, CE, OS };
enum class WeightOrder { LocalConstant, LocalLinear };

std::string_view to_string(Estimator e);
Estimator parse_estimator(std::string_view name);

struct FitConfig {
    Estimator estimator = Estimator::Naive;
    WeightOrder weight_order = WeightOrder::LocalLinear;
    double h = 1.0;
    ErrorModel error_model{};
    int b_star = 250;
    std::uint64_t seed = 0;
    /// Optional precomputed deconvoluting kernels for (error_model, h); built on demand otherwise.
    std::shared_ptr<const DeconvKernelSet> kernels{};

    /// Throws DomainError on h <= 0, b_star < 1, or a kernel set built for another (model, h).
    void validate() const;
};

/// Estimates at a set of points. m_hat is NaN where undefined.
struct Prediction {
    Eigen::VectorXd x;
    Eigen::VectorXd m_hat;
    Eigen::VectorXd g1;
    Eigen::VectorXd g2;
    std::vector<bool> defined;

    std::size_t undefined_count() const;
};

struct FitResult : Prediction {
    EvaluationGrid grid;
    FitConfig config;
};

// ---------------------------------------------------------------------------
// weights

namespace detail {

template <class Scalar>
struct LocalSums {
    VectorX<Scalar> kh; // K_h(X_j - x)
    VectorX<Scalar> v;  // (X_j - x) / h
    Scalar s0, s1, s2;
};

template <class Scalar>
LocalSums<Scalar> local_sums(const Eigen::Ref<const VectorX<Scalar>>& xdata, const Scalar& x, double h)
{
    const Eigen::Index n = xdata.size();
    LocalSums<Scalar> s{VectorX<Scalar>(n), VectorX<Scalar>(n), Scalar(0), Scalar(0), Scalar(0)};
    for (Eigen::Index j = 0; j < n; ++j) {
        const Scalar v = (xdata[j] - x) / h;
        const Scalar k = kernel_K(v) / h;
        s.v[j] = v;
        s.kh[j] = k;
        s.s0 += k;
        s.s1 += v * k;
        s.s2 += v * v * k;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    s.s0 *= inv_n;
    s.s1 *= inv_n;
    s.s2 *= inv_n;
    return s;
}

template <class Scalar>
bool degenerate_denominator(const Scalar& s0, const Scalar& s1, const Scalar& s2)
{
    using std::abs;
    const double c = abs(s0 * s2 - s1 * s1);
    return !(c > 1e-12 * std::max(abs(s0 * s2), abs(s1 * s1)) + 1e-300);
}

} // namespace detail

/// Local-linear weight K_h(X_j - x) S_2 - ((X_j - x)/h) K_h(X_j - x) S_1,
/// S_r = n^-1 sum_k ((X_k - x)/h)^r K_h(X_k - x). Scalar may be complex.
template <class Scalar>
VectorX<Scalar> weight_local_linear(const Eigen::Ref<const VectorX<Scalar>>& xdata, const Scalar& x, double h)
{
    if (xdata.size() < 2)
        throw DomainError("weight_local_linear: need at least two points");
    const auto s = detail::local_sums<Scalar>(xdata, x, h);
    return (s.kh * s.s2 - s.v.cwiseProduct(s.kh) * s.s1).eval();
}

/// Local-linear weight divided by n (S_0 S_2 - S_1^2): sums to one and annihilates X_j - x.
/// Throws DegenerateNeighborhood when |S_0 S_2 - S_1^2| is negligible relative to its terms.
template <class Scalar>
VectorX<Scalar> weight_normalized(const Eigen::Ref<const VectorX<Scalar>>& xdata, const Scalar& x, double h)
{
    if (xdata.size() < 2)
        throw DomainError("weight_normalized: need at least two points");
    const auto s = detail::local_sums<Scalar>(xdata, x, h);
    if (detail::degenerate_denominator(s.s0, s.s1, s.s2))
        throw DegenerateNeighborhood("weight_normalized: vanishing local-linear denominator");
    const Scalar scale = Scalar(1.0) / (static_cast<double>(xdata.size()) * (s.s0 * s.s2 - s.s1 * s.s1));
    return ((s.kh * s.s2 - s.v.cwiseProduct(s.kh) * s.s1) * scale).eval();
}

inline Eigen::VectorXd weight_local_linear(const Eigen::VectorXd& xdata, double x, double h)
{
    return weight_local_linear<double>(xdata, x, h);
}

inline Eigen::VectorXd weight_normalized(const Eigen::VectorXd& xdata, double x, double h)
{
    return weight_normalized<double>(xdata, x, h);
}

/// Deconvoluting weight at x from contaminated covariates. LocalLinear gives
/// h^-1 K_{U,0}(v_j) S'_2 - h^-1 K_{U,1}(v_j) S'_1 with S'_r = n^-1 sum_k h^-1 K_{U,r}(v_k);
/// LocalConstant gives h^-1 K_{U,0}(v_j). With a trivial model this is the plain weight.
Eigen::VectorXd weight_dk(const DeconvKernelSet& kernels, const Eigen::Ref<const Eigen::VectorXd>& wdata, double x,
                          WeightOrder order);
Eigen::VectorXd weight_dk(const ErrorModel& model, const Eigen::Ref<const Eigen::VectorXd>& wdata, double x, double h,
                          WeightOrder order);

/// Standard normal draws Z (n x b_star) shared by all evaluation points of one CE fit.
Eigen::MatrixXd ce_draws(Eigen::Index n, int b_star, std::uint64_t seed);

struct CeDiagnostics {
    int rejected = 0;
    double max_imag_z = 0.0; ///< largest |mean Im| / SE over the weights
};

/// Complex-error weight: real part of the average over b of the normalized local-linear weight
/// evaluated at covariates W_j + i sigma_u Z_{j,b}. Replicates with a degenerate complex
/// denominator are redrawn from `redraw` (counted); more than 10% rejected, or an imaginary
/// average larger than 10 standard errors, is an error. sigma_u == 0 returns weight_normalized.
Eigen::VectorXd weight_ce(double sigma_u, const Eigen::Ref<const Eigen::VectorXd>& wdata, double x, double h,
                          const Eigen::Ref<const Eigen::MatrixXd>& z, Rng& redraw, CeDiagnostics* diag = nullptr);

/// Convenience form drawing its own Z from `rng`.
Eigen::VectorXd weight_ce(const ErrorModel& model, const Eigen::Ref<const Eigen::VectorXd>& wdata, double x, double h,
                          int b_star, Rng& rng);

// ---------------------------------------------------------------------------
// estimators

/// Estimates at arbitrary points. Ideal uses x_true, the others W. Ideal, Naive and DK use the
/// unnormalized weights, so g1, g2 are n^-1 sum trig(theta_j) weight_j; CE uses its averaged
/// normalized weight and OS the transformed product m*(x) f_W(x). Points where both |g1| and |g2|
/// fall below 1e-12 max(1, max|g|) are undefined, as are points with a degenerate neighbourhood.
Prediction predict(const Dataset& data, const FitConfig& config, const Eigen::Ref<const Eigen::VectorXd>& points);

/// predict() on an evaluation grid.
FitResult fit(const Dataset& data, const FitConfig& config, const EvaluationGrid& grid);

/// The evaluation grid OS uses internally for a fit requested at `points`: covers the data range
/// widened by 3h and the requested points, spacing at most h/8, at least 512 points.
EvaluationGrid os_extended_grid(const Eigen::Ref<const Eigen::VectorXd>& wdata,
                                const Eigen::Ref<const Eigen::VectorXd>& points, double h);

} // namespace circme
