#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <qmiss/dist.hpp>

using namespace qmiss;

namespace {

struct Moments {
    double mean, sd, gamma;
};

Moments sample_moments(const dist::Generator& g, uint64_t seed, size_t n) {
    auto xs = dist::sample_stream(g, seed, n);
    double m = 0.0;
    for (double x : xs) m += x;
    m /= double(n);
    double v = 0.0, s3 = 0.0;
    for (double x : xs) {
        double d = x - m;
        v += d * d;
        s3 += d * d * d;
    }
    v /= double(n);
    s3 /= double(n);
    return {m, std::sqrt(v), s3 / (v * std::sqrt(v))};
}

void check_spec(const dist::Generator& g, uint64_t seed) {
    const size_t n = 2000000;
    auto spec = dist::generator_spec(g);
    auto mom = sample_moments(g, seed, n);
    double se_mean = spec.sigma / std::sqrt(double(n));
    CAPTURE(dist::generator_name(g));
    CHECK(std::fabs(mom.mean - spec.xi) < 5.0 * se_mean);
    CHECK(std::fabs(mom.sd - spec.sigma) < 0.01 * spec.sigma);
    CHECK(std::fabs(mom.gamma - spec.gamma) < 0.05 * (1.0 + std::fabs(spec.gamma)));
}

}  // namespace

TEST_CASE("declared moments match simulated moments") {
    check_spec(dist::Exponential{1.0}, 11);
    check_spec(dist::Exponential{0.25}, 12);
    check_spec(dist::Normal{0.0, 1.0}, 13);
    check_spec(dist::Normal{-3.0, 2.5}, 14);
    check_spec(dist::ChiSquare1{}, 15);
    check_spec(dist::Bernoulli{0.3}, 16);
    check_spec(dist::SmoothedBernoulli{0.5, 0.01}, 17);
    check_spec(dist::SmoothedBernoulli{0.2, 0.3}, 18);
}

TEST_CASE("declared moment formulas at reference points") {
    auto e = dist::spec_of(dist::Exponential{2.0});
    CHECK(e.xi == 2.0);
    CHECK(e.sigma == 2.0);
    CHECK(e.gamma == 2.0);

    auto c = dist::spec_of(dist::ChiSquare1{});
    CHECK(c.xi == 1.0);
    CHECK(c.sigma == Catch::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(c.gamma == Catch::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-15));

    auto b = dist::spec_of(dist::Bernoulli{0.5});
    CHECK(b.xi == 0.5);
    CHECK(b.sigma == 0.5);
    CHECK(b.gamma == 0.0);
    CHECK(b.is_lattice);

    auto sb = dist::spec_of(dist::SmoothedBernoulli{0.5, 0.01});
    CHECK_FALSE(sb.is_lattice);
    // one-sided eta-smearing perturbs sd and skewness by O(eta^2); at p = 1/2
    // the leading skewness term is exactly 2 eta^2
    CHECK(std::fabs(sb.sigma - 0.5) < 1e-4);
    CHECK(sb.gamma == Catch::Approx(2.0 * 0.01 * 0.01).epsilon(1e-3));
}

TEST_CASE("draw consumes exactly one uniform per variate") {
    // a Stream must replay as a manual loop drawing one u01 per value
    auto check = [](const dist::Generator& g) {
        dist::Stream s(g, 321);
        rng::Xoshiro256pp r(321);
        for (int i = 0; i < 5000; ++i) {
            double manual = dist::draw(g, r.u01());
            REQUIRE(s.next() == manual);
        }
    };
    check(dist::Exponential{1.0});
    check(dist::Normal{1.0, 2.0});
    check(dist::ChiSquare1{});
    check(dist::Bernoulli{0.25});
    check(dist::SmoothedBernoulli{0.5, 0.01});
}

TEST_CASE("draw maps uniforms the way the quantile transforms say") {
    CHECK(dist::draw(dist::Bernoulli{0.5}, 0.499) == 1.0);
    CHECK(dist::draw(dist::Bernoulli{0.5}, 0.501) == 0.0);
    // smoothed bernoulli smears the unit mass over [1-eta, 1+eta]
    auto sb = dist::SmoothedBernoulli{0.5, 0.01};
    CHECK(dist::draw(sb, 0.0000001) == Catch::Approx(0.99).epsilon(1e-5));
    CHECK(dist::draw(sb, 0.4999999) == Catch::Approx(1.01).epsilon(1e-5));
    CHECK(dist::draw(sb, 0.25) == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(dist::draw(sb, 0.75) == 0.0);
    // exponential is the negative log
    CHECK(dist::draw(dist::Exponential{2.0}, 0.5) ==
          Catch::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    // chi-square(1) is the squared normal quantile
    double z = rng::normal_from_u(0.9);
    CHECK(dist::draw(dist::ChiSquare1{}, 0.9) == z * z);
    // normal is affine in the standard quantile
    CHECK(dist::draw(dist::Normal{3.0, 2.0}, 0.9) == 3.0 + 2.0 * rng::normal_from_u(0.9));
}

TEST_CASE("generator validation rejects bad parameters") {
    CHECK_THROWS_AS(dist::generator_spec(dist::Exponential{0.0}), std::invalid_argument);
    CHECK_THROWS_AS(dist::generator_spec(dist::Exponential{-1.0}), std::invalid_argument);
    CHECK_THROWS_AS(dist::generator_spec(dist::Normal{0.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(dist::generator_spec(dist::Bernoulli{0.0}), std::invalid_argument);
    CHECK_THROWS_AS(dist::generator_spec(dist::Bernoulli{1.0}), std::invalid_argument);
    CHECK_THROWS_AS(dist::generator_spec(dist::SmoothedBernoulli{0.5, 0.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(dist::generator_spec(dist::SmoothedBernoulli{0.5, 1.0}),
                    std::invalid_argument);
    CHECK_NOTHROW(dist::generator_spec(dist::SmoothedBernoulli{0.5, 0.999}));
}

TEST_CASE("generator names are stable") {
    CHECK(std::string(dist::generator_name(dist::Exponential{})) == "exponential");
    CHECK(std::string(dist::generator_name(dist::Normal{})) == "normal");
    CHECK(std::string(dist::generator_name(dist::ChiSquare1{})) == "chisq1");
    CHECK(std::string(dist::generator_name(dist::Bernoulli{})) == "bernoulli");
    CHECK(std::string(dist::generator_name(dist::SmoothedBernoulli{})) == "smoothed-bernoulli");
}
