#include "doctest.h"

#include <cmath>
#include <vector>

#include "circme/circular.hpp"
#include "circme/errors.hpp"
#include "oracles.hpp"

using namespace circme;

TEST_CASE("wrap_angle basics")
{
    CHECK(wrap_angle(0.0) == 0.0);
    CHECK(wrap_angle(1.5 * kPi) == doctest::Approx(-0.5 * kPi).epsilon(1e-15));
    CHECK(wrap_angle(kPi) == -kPi);
    CHECK(wrap_angle(-kPi) == -kPi);
    CHECK(wrap_angle(-3.0 * kPi) == -kPi);
    CHECK_THROWS_AS(wrap_angle(NAN), DomainError);
    CHECK_THROWS_AS(wrap_angle(INFINITY), DomainError);
}

TEST_CASE("wrap_angle is idempotent and lands in [-pi, pi)")
{
    Rng rng(7);
    for (int i = 0; i < 20000; ++i) {
        const double x = (rng.uniform() - 0.5) * 1e4;
        const double w = wrap_angle(x);
        CHECK(w >= -kPi);
        CHECK(w < kPi);
        CHECK(wrap_angle(w) == w);
        CHECK(std::cos(w) == doctest::Approx(std::cos(x)).epsilon(1e-9));
    }
}

TEST_CASE("circular_mean examples")
{
    std::vector<double> a{kPi / 4, kPi / 4, kPi / 4};
    CHECK(circular_mean(a).value() == doctest::Approx(kPi / 4));
    std::vector<double> b{0.0, kPi / 2};
    CHECK(circular_mean(b).value() == doctest::Approx(kPi / 4));
    std::vector<double> c{0.0, kPi};
    CHECK_THROWS_AS(circular_mean(c), UndefinedMean);
    CHECK_THROWS_AS(circular_mean(std::vector<double>{}), DomainError);
}

TEST_CASE("circular_mean rotation equivariance and argmin property")
{
    Rng rng(11);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> th(15);
        for (auto& t : th)
            t = wrap_angle(1.0 + 0.8 * rng.normal());
        const double m = circular_mean(th);
        const double alpha = (rng.uniform() - 0.5) * 20.0;
        std::vector<double> rot(th.size());
        for (std::size_t j = 0; j < th.size(); ++j)
            rot[j] = wrap_angle(th[j] + alpha);
        CHECK(std::cos(circular_mean(rot) - wrap_angle(m + alpha)) == doctest::Approx(1.0).epsilon(1e-12));

        auto loss = [&](double a) {
            double s = 0.0;
            for (double t : th)
                s += cosine_dissimilarity(t, a);
            return s;
        };
        const double best = loss(m);
        for (int k = 0; k < 360; ++k)
            CHECK(best <= loss(-kPi + k * kTwoPi / 360.0) + 1e-12);
    }
}

TEST_CASE("cosine_dissimilarity")
{
    CHECK(cosine_dissimilarity(0.3, 0.3) == 0.0);
    CHECK(cosine_dissimilarity(0.0, kPi) == doctest::Approx(2.0));
    CHECK(cosine_dissimilarity(0.0, kPi / 2) == doctest::Approx(1.0));
    CHECK(cosine_dissimilarity(0.4, 1.7) == doctest::Approx(cosine_dissimilarity(1.7, 0.4)));
    CHECK(cosine_dissimilarity(0.4 + 4 * kPi, 1.7) == doctest::Approx(cosine_dissimilarity(0.4, 1.7)));
}

TEST_CASE("von Mises sampler moments")
{
    const int n = 100000;
    SUBCASE("kappa 0 is uniform")
    {
        Rng rng(1);
        std::vector<double> d(n);
        for (auto& x : d)
            x = sample_von_mises({Angle(0.0), 0.0}, rng);
        CHECK(mean_resultant_length(d) < 0.02);
    }
    SUBCASE("kappa 3 resultant matches I1/I0")
    {
        Rng rng(2);
        std::vector<double> d(n);
        for (auto& x : d)
            x = sample_von_mises({Angle(0.0), 3.0}, rng);
        const double ratio = oracle::bessel_i(1, 3.0) / oracle::bessel_i(0, 3.0);
        CHECK(ratio == doctest::Approx(0.80999).epsilon(1e-4));
        CHECK(std::abs(mean_resultant_length(d) - ratio) < 0.01);
    }
    SUBCASE("location")
    {
        Rng rng(3);
        std::vector<double> d(n);
        for (auto& x : d)
            x = sample_von_mises({Angle(1.0), 3.0}, rng);
        CHECK(std::abs(circular_mean(d).value() - 1.0) < 0.02);
    }
    SUBCASE("negative kappa")
    {
        Rng rng(4);
        CHECK_THROWS_AS(sample_von_mises({Angle(0.0), -1.0}, rng), DomainError);
    }
    SUBCASE("same seed same stream")
    {
        Rng a(99), b(99);
        for (int i = 0; i < 100; ++i)
            CHECK(sample_von_mises({Angle(0.5), 2.0}, a).value() == sample_von_mises({Angle(0.5), 2.0}, b).value());
    }
}
