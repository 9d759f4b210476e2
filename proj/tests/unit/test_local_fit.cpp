#include "doctest.h"

#include <cmath>

#include "circme/circular.hpp"
#include "circme/local_fit.hpp"
#include "oracles.hpp"

using namespace circme;

namespace {

Eigen::VectorXd random_vector(Rng& rng, int n, double scale)
{
    Eigen::VectorXd v(n);
    for (auto& x : v)
        x = scale * (2.0 * rng.uniform() - 1.0);
    return v;
}

Dataset scenario(std::uint64_t seed, int n = 80, double sigma_u = 0.0)
{
    Rng rng(seed);
    Eigen::VectorXd x = random_vector(rng, n, 4.0), th(n), w(n);
    for (int j = 0; j < n; ++j) {
        th[j] = 2.0 * std::atan(x[j]) + sample_von_mises({Angle(0.0), 4.0}, rng).value();
        w[j] = x[j] + sigma_u * rng.normal();
    }
    return {th, w, x};
}

double max_angle_gap(const Prediction& a, const Prediction& b)
{
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.x.size(); ++i) {
        REQUIRE(a.defined[i] == b.defined[i]);
        if (a.defined[i])
            worst = std::max(worst, std::abs(wrap_angle(a.m_hat[i] - b.m_hat[i])));
    }
    return worst;
}

FitConfig config(Estimator e, double h, ErrorModel m = {})
{
    FitConfig c;
    c.estimator = e;
    c.h = h;
    c.error_model = m;
    c.b_star = 40;
    c.seed = 12;
    return c;
}

} // namespace

TEST_CASE("local-linear weight against a direct re-implementation")
{
    Rng rng(1);
    const Eigen::VectorXd xs = random_vector(rng, 10, 2.0);
    const double x = 0.3, h = 0.6;
    double s1 = 0, s2 = 0;
    for (double xj : xs) {
        const double v = (xj - x) / h;
        s1 += v * oracle::kernel(v) / h;
        s2 += v * v * oracle::kernel(v) / h;
    }
    s1 /= 10;
    s2 /= 10;
    const Eigen::VectorXd w = weight_local_linear(xs, x, h);
    for (int j = 0; j < 10; ++j) {
        const double v = (xs[j] - x) / h;
        const double ref = oracle::kernel(v) / h * s2 - v * oracle::kernel(v) / h * s1;
        CHECK(w[j] == doctest::Approx(ref).epsilon(1e-10));
    }
}

TEST_CASE("symmetric pair kills the linear term")
{
    Eigen::VectorXd xs(2);
    xs << 1.0 - 0.4, 1.0 + 0.4;
    const double h = 0.5;
    const Eigen::VectorXd w = weight_local_linear(xs, 1.0, h);
    const double kd = kernel_Kh(0.4, h);
    const double s2 = 0.64 * kd; // n^-1 sum v^2 K_h, v = +-0.8
    CHECK(w[0] == doctest::Approx(kd * s2));
    CHECK(w[1] == doctest::Approx(kd * s2));
}

TEST_CASE("far data gives negligible weights")
{
    Eigen::VectorXd xs(4);
    xs << 150.0, 160.0, -170.0, 200.0;
    const double h = 1.0;
    const Eigen::VectorXd w = weight_local_linear(xs, 0.0, h);
    const double near = std::pow(kernel_K(0.0), 2);
    CHECK(w.cwiseAbs().maxCoeff() < 1e-6 * near);
}

TEST_CASE("normalized weights reproduce constants and lines")
{
    Rng rng(2);
    for (int rep = 0; rep < 30; ++rep) {
        const Eigen::VectorXd xs = random_vector(rng, 25, 3.0);
        const double x = rng.uniform() - 0.5, h = 0.4 + rng.uniform();
        const Eigen::VectorXd w = weight_normalized(xs, x, h);
        CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(std::abs(w.dot((xs.array() - x).matrix())) < 1e-10);
    }
}

TEST_CASE("normalized weights equal 2x2 weighted least squares")
{
    Eigen::VectorXd xs(3);
    xs << -0.4, 0.1, 0.9;
    const double x = 0.2, h = 0.7;
    Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
    Eigen::Matrix<double, 2, 3> bt;
    for (int j = 0; j < 3; ++j) {
        const double d = xs[j] - x, k = oracle::kernel(d / h) / h;
        a(0, 0) += k;
        a(0, 1) += k * d;
        a(1, 1) += k * d * d;
        bt(0, j) = k;
        bt(1, j) = k * d;
    }
    a(1, 0) = a(0, 1);
    const Eigen::RowVector3d ref = a.inverse().row(0) * bt;
    const Eigen::VectorXd w = weight_normalized(xs, x, h);
    for (int j = 0; j < 3; ++j)
        CHECK(w[j] == doctest::Approx(ref[j]).epsilon(1e-11));
}

TEST_CASE("degenerate neighbourhood")
{
    Eigen::VectorXd xs = Eigen::VectorXd::Constant(5, 0.3);
    CHECK_THROWS_AS(weight_normalized(xs, 0.0, 0.5), DegenerateNeighborhood);
}

TEST_CASE("complex weights: real input reproduces the real weights")
{
    Rng rng(3);
    const Eigen::VectorXd xs = random_vector(rng, 12, 2.0);
    const VectorX<std::complex<double>> xc = xs.cast<std::complex<double>>();
    const auto wc = weight_normalized<std::complex<double>>(xc, {0.1, 0.0}, 0.5);
    const Eigen::VectorXd wr = weight_normalized(xs, 0.1, 0.5);
    CHECK((wc.real() - wr).cwiseAbs().maxCoeff() < 1e-13);
    CHECK(wc.imag().cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("DK weights without error")
{
    Rng rng(4);
    const Eigen::VectorXd ws = random_vector(rng, 30, 3.0);
    for (double x : {-1.0, 0.0, 0.7}) {
        const Eigen::VectorXd dk = weight_dk(ErrorModel::none(), ws, x, 0.5, WeightOrder::LocalLinear);
        CHECK((dk - weight_local_linear(ws, x, 0.5)).cwiseAbs().maxCoeff() < 1e-8);
        const Eigen::VectorXd lc = weight_dk(ErrorModel::none(), ws, x, 0.5, WeightOrder::LocalConstant);
        for (int j = 0; j < 30; ++j)
            CHECK(lc[j] == doctest::Approx(kernel_Kh(ws[j] - x, 0.5)));
        // the table path with a vanishing error agrees too
        const Eigen::VectorXd tiny = weight_dk(ErrorModel::laplace(1e-6), ws, x, 0.5, WeightOrder::LocalLinear);
        CHECK((tiny - weight_local_linear(ws, x, 0.5)).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("DK local-linear weight is unbiased for the error-free weight in expectation over U")
{
    // E[L(W_j - x)] over independent errors equals W(X_j - x) up to the j-th term's own
    // contribution to S'_1 and S'_2; with many points that term is O(1/n) -- use n = 400
    // and compare sums against the error-free weight applied to a smooth function
    Rng rng(5);
    const int n = 400, reps = 400;
    const Eigen::VectorXd xs = random_vector(rng, n, 3.0);
    const auto m = ErrorModel::laplace(0.3);
    const double h = 0.6, x = 0.4;
    const DeconvKernelSet kernels(m, h);
    std::vector<double> est(reps);
    for (int r = 0; r < reps; ++r) {
        Eigen::VectorXd ws = xs;
        for (auto& w : ws)
            w += sample_error(m, rng);
        const Eigen::VectorXd l = weight_dk(kernels, ws, x, WeightOrder::LocalLinear);
        est[r] = l.dot(xs.array().cos().matrix()) / n;
    }
    const auto ms = oracle::mean_se(est);
    const double ref = weight_local_linear(xs, x, h).dot(xs.array().cos().matrix()) / n;
    CHECK(std::abs(ms.mean - ref) < 4.0 * ms.se + 0.02 * std::abs(ref));
}

TEST_CASE("CE weights")
{
    Rng rng(6);
    const Eigen::VectorXd ws = random_vector(rng, 40, 3.0);
    SUBCASE("sigma zero is exactly the normalized weight")
    {
        for (int b : {1, 7, 250}) {
            Rng r(1);
            const Eigen::VectorXd ce = weight_ce(ErrorModel::gaussian(0.0), ws, 0.2, 0.7, b, r);
            CHECK(ce == weight_normalized(ws, 0.2, 0.7));
        }
    }
    SUBCASE("deterministic under a fixed seed")
    {
        Rng a(77), b(77);
        const auto m = ErrorModel::gaussian(0.4);
        CHECK(weight_ce(m, ws, 0.2, 0.7, 1, a) == weight_ce(m, ws, 0.2, 0.7, 1, b));
    }
    SUBCASE("still sums to one")
    {
        Rng a(8);
        const Eigen::VectorXd ce = weight_ce(ErrorModel::gaussian(0.4), ws, 0.2, 0.7, 100, a);
        CHECK(ce.sum() == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("complex moments of W + i sigma Z are unbiased for X^k")
{
    Rng rng(9);
    const double x = 0.8, s = 0.6;
    const int n = 200000;
    for (int k = 1; k <= 4; ++k) {
        std::vector<double> re(n);
        Rng r = rng.split(static_cast<std::uint64_t>(k));
        for (int i = 0; i < n; ++i) {
            const std::complex<double> z(x + s * r.normal(), s * r.normal());
            re[i] = std::pow(z, k).real();
        }
        const auto ms = oracle::mean_se(re);
        CHECK(std::abs(ms.mean - std::pow(x, k)) < 4.0 * ms.se);
    }
}

TEST_CASE("fit degeneration without measurement error")
{
    const Dataset d = scenario(10);
    const auto grid = EvaluationGrid::from_range(-3.0, 3.0, 0.1);
    const double h = 0.6;
    const FitResult ideal = fit(d, config(Estimator::Ideal, h), grid);
    const FitResult naive = fit(d, config(Estimator::Naive, h), grid);
    CHECK(ideal.m_hat.cwiseEqual(naive.m_hat).all());
    CHECK(max_angle_gap(fit(d, config(Estimator::DK, h), grid), ideal) < 1e-6);
    CHECK(max_angle_gap(fit(d, config(Estimator::CE, h, ErrorModel::gaussian(0.0)), grid), ideal) < 1e-6);
    CHECK(max_angle_gap(fit(d, config(Estimator::OS, h), grid), ideal) < 1e-3);
}

TEST_CASE("constant responses are reproduced by every estimator")
{
    const Dataset base = scenario(11, 60, 0.3);
    const Dataset d = base.with_theta(Eigen::VectorXd::Constant(60, 2.5));
    const auto grid = EvaluationGrid::from_range(-3.0, 3.0, 0.25);
    const auto m = ErrorModel::gaussian(0.3);
    for (auto e : {Estimator::Ideal, Estimator::Naive, Estimator::DK, Estimator::CE, Estimator::OS}) {
        const FitResult f = fit(d, config(e, 0.8, m), grid);
        for (Eigen::Index i = 0; i < f.x.size(); ++i)
            if (f.defined[i])
                CHECK(std::abs(wrap_angle(f.m_hat[i] - 2.5)) < 1e-9);
    }
}

TEST_CASE("rotation, scale and translation equivariance")
{
    const Dataset d = scenario(12, 70, 0.3);
    const auto grid = EvaluationGrid::from_range(-3.0, 3.0, 0.2);
    const auto m = ErrorModel::laplace(0.3);
    const double alpha = 1.234;
    Eigen::VectorXd rot = d.theta();
    for (auto& t : rot)
        t = wrap_angle(t + alpha);
    const Dataset dr = d.with_theta(rot);
    const double delta = 2.75;
    const Dataset ds(d.theta(), (d.w().array() + delta).matrix(), (d.x_true().array() + delta).matrix());
    const auto gs = grid.shifted(delta);

    for (auto e : {Estimator::Ideal, Estimator::Naive, Estimator::DK, Estimator::CE, Estimator::OS}) {
        CAPTURE(to_string(e));
        const auto c = config(e, 0.7, m);
        const FitResult f = fit(d, c, grid);
        const FitResult fr = fit(dr, c, grid);
        for (Eigen::Index i = 0; i < f.x.size(); ++i) {
            REQUIRE(f.defined[i] == fr.defined[i]);
            if (f.defined[i])
                CHECK(std::abs(wrap_angle(fr.m_hat[i] - f.m_hat[i] - alpha)) < 1e-12);
        }
        const FitResult fs = fit(ds, c, gs);
        CHECK(max_angle_gap(f, fs) < (e == Estimator::OS ? 1e-6 : 1e-9));
    }
}

TEST_CASE("ratio identity: unnormalized and normalized pairs share the angle up to the sign of C")
{
    const Dataset d = scenario(13, 40);
    const double h = 0.35;
    const Eigen::VectorXd sn = d.theta().array().sin(), cs = d.theta().array().cos();
    int flipped = 0, kept = 0;
    for (double x = -3.9; x <= 3.9; x += 0.05) {
        const Eigen::VectorXd u = weight_local_linear(d.x_true(), x, h);
        Eigen::VectorXd nw;
        try {
            nw = weight_normalized(d.x_true(), x, h);
        } catch (const DegenerateNeighborhood&) {
            continue;
        }
        const double c = u.sum() / d.n();
        const double a = std::atan2(sn.dot(u), cs.dot(u));
        const double b = std::atan2(sn.dot(nw), cs.dot(nw));
        if (c > 0) {
            CHECK(std::abs(wrap_angle(a - b)) < 1e-10);
            ++kept;
        } else {
            CHECK(std::abs(std::abs(wrap_angle(a - b)) - kPi) < 1e-10);
            ++flipped;
        }
    }
    CHECK(kept > 0);

    // one point at the centre, one in a negative lobe of K: C = v^2 K(0) K(v) / 4 < 0
    Eigen::VectorXd xs(2), th(2);
    xs << 0.0, 8.0;
    th << 0.3, 2.0;
    REQUIRE(kernel_K(8.0) < 0.0);
    const Eigen::VectorXd u = weight_local_linear(xs, 0.0, 1.0);
    const Eigen::VectorXd nw = weight_normalized(xs, 0.0, 1.0);
    const double a = std::atan2(th.array().sin().matrix().dot(u), th.array().cos().matrix().dot(u));
    const double b = std::atan2(th.array().sin().matrix().dot(nw), th.array().cos().matrix().dot(nw));
    CHECK(u.sum() < 0.0);
    CHECK(std::abs(std::abs(wrap_angle(a - b)) - kPi) < 1e-12);
}

TEST_CASE("positive rescaling of the numerator pair leaves the fit unchanged")
{
    const Dataset d = scenario(14);
    const FitResult f = fit(d, config(Estimator::Naive, 0.5), EvaluationGrid::from_range(-3, 3, 0.1));
    for (double c : {1e-6, 0.37, 5.0, 1e8})
        for (Eigen::Index i = 0; i < f.x.size(); ++i)
            if (f.defined[i])
                CHECK(std::atan2(c * f.g1[i], c * f.g2[i]) == doctest::Approx(f.m_hat[i]).epsilon(1e-15));
}

TEST_CASE("OS extended grid")
{
    Eigen::VectorXd w(5);
    w << -2, -1, 0, 1, 2;
    const auto g = EvaluationGrid::from_range(-3.0, 3.0, 0.1);
    const auto e = os_extended_grid(w, g.points(), 0.4);
    CHECK(e.size() >= 512);
    CHECK(e.start() <= -3.2 + 1e-12);
    CHECK(e.back() >= 3.2 - 1e-12);
    CHECK(e.spacing() <= 0.05 + 1e-15);
    const double pos = (g[7] - e.start()) / e.spacing();
    CHECK(std::abs(pos - std::round(pos)) < 1e-6);
}

TEST_CASE("ideal needs the true covariate")
{
    const Dataset d = scenario(15);
    const Dataset no_x(d.theta(), d.w());
    CHECK_THROWS_AS(fit(no_x, config(Estimator::Ideal, 0.5), EvaluationGrid::from_range(-1, 1, 0.5)), DataError);
    CHECK_THROWS_AS(Dataset(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3)), DataError);
}
