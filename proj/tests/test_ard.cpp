#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <qmiss/ard.hpp>
#include <qmiss/special.hpp>

// Reference values computed with mpmath 1.3.0 / scipy 1.15 at 40-digit
// precision, truncated to double.

using namespace qmiss;
using ard::MomentSpec;

namespace {
double rel(double got, double want) {
    if (want == 0.0) return std::fabs(got);
    return std::fabs(got - want) / std::fabs(want);
}
}  // namespace

TEST_CASE("lambda0 against reference values") {
    struct Row {
        double c, d, xi, sigma, gamma, v;
    };
    static const Row rows[] = {
        {1.3, 0.4, 1.7, 2.2, 0.9, -1.5489876033057854},
        {0.5, -1.0, 1.0, 1.0, 2.0, 1.3333333333333333},
        {2.0, 0.0, 1.0, 1.0, 2.0, 2.6666666666666665},
    };
    for (const auto& r : rows) {
        CAPTURE(r.c, r.d);
        auto v = ard::lambda0(r.c, r.d, {r.xi, r.sigma, r.gamma});
        CHECK(rel(v.value, r.v) < 1e-14);
        CHECK(v.formula == "lambda0");
        CHECK(v.c == r.c);
        CHECK(v.d == r.d);
    }
    // vanishes at c = 0 for any parameters
    CHECK(ard::lambda0(0.0, 0.7, {1.0, 2.0, 1.0}).value == 0.0);
}

TEST_CASE("lambda0 optimal shrinkage for the exponential-type mean") {
    // xi = sigma (gamma = 2): curve c^2 - (2/3) c -> c0 = 1/3, value -1/9
    MomentSpec exp1{1.0, 1.0, 2.0};
    auto curve = ard::lambda0_curve(0.0, exp1);
    auto opt = ard::argmin_c(curve);
    CHECK(rel(opt.c0, 1.0 / 3.0) < 1e-15);
    CHECK(rel(opt.value, -1.0 / 9.0) < 1e-15);
    CHECK_FALSE(opt.unbounded);
    // the c=1 vs c=1/3 gap is 4/9
    CHECK(rel(curve(1.0) - curve(1.0 / 3.0), 4.0 / 9.0) < 1e-14);
}

TEST_CASE("lambda_a against reference values and its shrinking limit") {
    struct Row {
        double c, xi, sigma, gamma, a, v;
    };
    static const Row rows[] = {
        {1.0, 1.0, 1.0, 2.0, 1.0, -0.2168574634045531},
        {0.7, 1.3, 2.1, -0.6, 0.25, -1.1087998531236214},
        {2.0, 1.0, 1.4142135623730951, 2.8284271247461903, 4.0, -0.4486105251939362},
    };
    for (const auto& r : rows) {
        CAPTURE(r.c, r.a);
        auto v = ard::lambda_a(r.c, {r.xi, r.sigma, r.gamma}, r.a);
        CHECK(rel(v.value, r.v) < 1e-13);
        CHECK(v.a == r.a);
    }
    // as a -> 0 the fixed-cutoff curve approaches lambda0 (d = 0)
    MomentSpec s{1.0, 1.3, 0.8};
    double lim = ard::lambda0(0.9, 0.0, s).value;
    double prev = std::fabs(ard::lambda_a(0.9, s, 1.0).value - lim);
    for (double a : {0.1, 0.01, 1e-6}) {
        double gap = std::fabs(ard::lambda_a(0.9, s, a).value - lim);
        CHECK(gap < prev);
        prev = gap;
    }
    CHECK(prev < 1e-3);
    CHECK_THROWS_AS(ard::lambda_a(1.0, s, 0.0), std::invalid_argument);
}

TEST_CASE("transformed lambda0: scale family of the variance estimator") {
    // ratio model of the normal variance family: xi=1, sigma=sqrt(2),
    // gamma=2 sqrt(2)
    MomentSpec ratio{1.0, std::sqrt(2.0), 2.0 * std::sqrt(2.0)};

    SECTION("variance scale reduces to the identity curve") {
        auto h = ard::make_transform(ard::TransformTag::identity, 1.0);
        auto curve = ard::lambda0_transformed_curve(0.0, ratio, h);
        // 0.5 c^2 - (2/3) c: argmin 2/3, value -2/9
        auto opt = ard::argmin_c(curve);
        CHECK(rel(opt.c0, 2.0 / 3.0) < 1e-14);
        CHECK(rel(opt.value, -2.0 / 9.0) < 1e-14);
        CHECK(rel(curve(1.0), -1.0 / 6.0) < 1e-14);
    }
    SECTION("sd scale") {
        auto h = ard::make_transform(ard::TransformTag::sqrt_scale, 1.0);
        CHECK(h.h_ratio == 0.5);
        auto opt = ard::argmin_c(ard::lambda0_transformed_curve(0.0, ratio, h));
        CHECK(rel(opt.c0, 1.0 / 6.0) < 1e-12);
        CHECK(rel(opt.value, -1.0 / 72.0) < 1e-12);
    }
    SECTION("log scale") {
        auto h = ard::make_transform(ard::TransformTag::log_scale, 1.0);
        CHECK(h.h_ratio == 1.0);
        auto curve = ard::lambda0_transformed_curve(0.0, ratio, h);
        // 0.5 c^2 + (1/3) c: argmin -1/3, value -1/18
        auto opt = ard::argmin_c(curve);
        CHECK(rel(opt.c0, -1.0 / 3.0) < 1e-12);
        CHECK(rel(opt.value, -1.0 / 18.0) < 1e-12);
    }
    SECTION("identity transform reduces exactly to lambda0") {
        auto h = ard::make_transform(ard::TransformTag::identity, 1.0);
        for (double c : {-0.5, 0.3, 1.0, 2.7}) {
            for (double d : {0.0, 0.4}) {
                MomentSpec s{1.2, 0.9, 1.1};
                CHECK(ard::lambda0_transformed(c, d, s, h).value ==
                      ard::lambda0(c, d, s).value);
            }
        }
    }
}

TEST_CASE("transform ratios") {
    CHECK(ard::make_transform(ard::TransformTag::sqrt_scale, 4.0).h_ratio == 0.125);
    CHECK(ard::make_transform(ard::TransformTag::log_scale, 4.0).h_ratio == 0.25);
    CHECK(ard::make_transform(ard::TransformTag::square_scale, 4.0).h_ratio == -0.25);
    CHECK(ard::make_transform(ard::TransformTag::custom, 0.0, 0.77).h_ratio == 0.77);
    CHECK_THROWS_AS(ard::make_transform(ard::TransformTag::log_scale, 0.0),
                    std::invalid_argument);
    CHECK(std::string(ard::transform_name(ard::TransformTag::sqrt_scale)) == "sqrt");
}

TEST_CASE("hodges-lehmann curve and the skewness decomposition") {
    // lambda0 - hl = (2 gamma / 3) ((xi - d)/sigma) c on a parameter grid
    for (double xi : {0.5, 1.0, 2.0})
        for (double sigma : {0.7, 1.0, 1.9})
            for (double gamma : {-1.0, 0.0, 2.0})
                for (double d : {-0.5, 0.0, 0.8})
                    for (double c : {0.25, 1.0, 3.0}) {
                        MomentSpec s{xi, sigma, gamma};
                        double l = ard::lambda0(c, d, s).value;
                        double h = ard::hl_deficiency(c, d, s).value;
                        double want = (2.0 * gamma / 3.0) * ((xi - d) / sigma) * c;
                        CAPTURE(xi, sigma, gamma, d, c);
                        REQUIRE(std::fabs(l - h - want) < 1e-12);
                    }
    // hl itself: ((xi-d)^2/sigma^2) c^2 - 2c
    CHECK(rel(ard::hl_deficiency(1.0, 0.0, {1.0, 1.0, 0.0}).value, -1.0) < 1e-15);
    CHECK(rel(ard::hl_deficiency(2.0, 0.0, {1.0, 1.0, 5.0}).value, 0.0) < 1e-15);
}

TEST_CASE("numeric MSE-matching deficiency converges to the closed form") {
    std::vector<double> grid{100, 200, 400, 800, 1600, 3200};
    for (double c : {1.0, 2.0}) {
        double numeric = ard::hl_deficiency_numeric(c, 0.0, 1.0, 1.0, grid);
        double closed = ard::hl_deficiency(c, 0.0, {1.0, 1.0, 0.0}).value;
        CAPTURE(c);
        CHECK(rel(numeric, closed) < 0.01);
    }
    // insensitive to xi-d and sigma separately, only through their ratio
    double a = ard::hl_deficiency_numeric(1.5, 0.0, 2.0, 2.0, grid);
    double b = ard::hl_deficiency_numeric(1.5, 0.0, 1.0, 1.0, grid);
    CHECK(rel(a, b) < 1e-12);
    CHECK_THROWS_AS(ard::hl_deficiency_numeric(1.0, 0.0, 1.0, 1.0, {}),
                    std::invalid_argument);
}

TEST_CASE("binomial risk against reference values and its constant optimum") {
    CHECK(rel(ard::binomial_risk(4.0 / 3.0, 0.5, 0.3).value, -2.6666666666666665) < 1e-14);
    CHECK(rel(ard::binomial_risk(1.0, 0.2, 0.7).value, -1.4444444444444444) < 1e-14);
    // (c,d) = (4/3, 1/2) gives -8/3 for every p
    for (int i = 1; i <= 99; ++i) {
        double p = double(i) / 100.0;
        CAPTURE(p);
        REQUIRE(std::fabs(ard::binomial_risk(4.0 / 3.0, 0.5, p).value + 8.0 / 3.0) < 1e-12);
    }
    CHECK_THROWS_AS(ard::binomial_risk(1.0, 0.5, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(ard::binomial_risk(1.0, 0.5, 1.0), std::invalid_argument);
}

TEST_CASE("squared-mean deficiency and its optimum") {
    // (d^2/4 + d/2) sigma^2/xi^2, optimal at d = -1 with value -sigma^2/(4 xi^2)
    MomentSpec s{1.0, 1.0, 0.0};
    CHECK(ard::lambda0_squared_mean(0.0, s).value == 0.0);
    CHECK(rel(ard::lambda0_squared_mean(-1.0, s).value, -0.25) < 1e-15);
    CHECK(rel(ard::lambda0_squared_mean(-2.0, s).value, 0.0) < 1e-15);
    CHECK(rel(ard::lambda0_squared_mean(1.0, {2.0, 3.0, 0.0}).value, 0.75 * 9.0 / 4.0) < 1e-14);
    // exact argmin over d via the quadratic machinery
    ard::QuadCurve in_d{0.25 * 1.0, 0.5 * 1.0};  // sigma = xi = 1
    auto opt = ard::argmin_c(in_d);
    CHECK(opt.c0 == -1.0);
    CHECK(opt.value == -0.25);
    CHECK_THROWS_AS(ard::lambda0_squared_mean(1.0, MomentSpec{0.0, 1.0, 0.0}),
                    std::invalid_argument);
}

TEST_CASE("bayes averaged deficiency") {
    CHECK(ard::bayes_averaged_deficiency(1.0, 0.0, 0.0, 1.0) == 0.0 - 1.0);
    auto opt = ard::bayes_optimal_cd(2.5, 0.5);
    CHECK(opt.c == 2.0);
    CHECK(opt.d == 2.5);
    CHECK(opt.value == -2.0);
    // optimum is a true minimum of the averaged curve
    double at = ard::bayes_averaged_deficiency(opt.c, opt.d, 2.5, 0.5);
    CHECK(rel(at, opt.value) < 1e-15);
    for (double dc : {-0.1, 0.1})
        for (double dd : {-0.2, 0.0, 0.2})
            CHECK(ard::bayes_averaged_deficiency(opt.c + dc, opt.d + dd, 2.5, 0.5) >=
                  at - 1e-15);
    CHECK_THROWS_AS(ard::bayes_optimal_cd(0.0, 0.0), std::invalid_argument);
}

TEST_CASE("argmin_c on degenerate quadratics") {
    auto flat = ard::argmin_c(ard::QuadCurve{0.0, 0.0});
    CHECK(flat.c0 == 0.0);
    CHECK_FALSE(flat.unbounded);
    CHECK(ard::argmin_c(ard::QuadCurve{0.0, 1.0}).unbounded);
    CHECK(ard::argmin_c(ard::QuadCurve{-1.0, 0.0}).unbounded);
}

TEST_CASE("denominator zoo at N = 20") {
    auto rows = ard::denominator_zoo(20);
    REQUIRE(rows.size() == 11);
    // independently computed exact denominators (n = 19)
    CHECK(rows[0].exact == 20.0);                                       // ML
    CHECK(rows[1].exact == 19.0);                                       // UMV
    CHECK(rel(rows[2].exact, 18.50674571987413) < 1e-12);               // unbiased sigma
    CHECK(rows[3].exact == 21.0);                                       // MSE sigma^2
    CHECK(rel(rows[4].exact, 19.50640082617698) < 1e-12);               // MSE sigma
    CHECK(rel(rows[5].exact, 18.337652896756474) < 1e-9);               // median
    CHECK(rel(rows[6].exact, 18.009241754890308) < 1e-11);              // log unbiased
    CHECK(rows[7].exact == 17.0);                                       // Bayes
    CHECK(rel(rows[8].exact, 19.0 + 2.0 / 3.0) < 1e-15);
    CHECK(rel(rows[9].exact, 19.0 + 1.0 / 6.0) < 1e-15);
    CHECK(rel(rows[10].exact, 19.0 + 2.0 / 3.0 - std::exp(-1.0)) < 1e-15);
    // catalogued approximations sit close to the exact forms
    CHECK(std::fabs(rows[2].exact - rows[2].approx) < 0.01);   // N-3/2
    CHECK(std::fabs(rows[4].exact - rows[4].approx) < 0.01);   // N-1/2
    CHECK(std::fabs(rows[5].exact - rows[5].approx) < 0.01);   // Wilson-Hilferty
    CHECK(std::fabs(rows[6].exact - rows[6].approx) < 0.01);   // N-2
    CHECK_THROWS_AS(ard::denominator_zoo(1), std::invalid_argument);
    CHECK_THROWS_AS(ard::denominator_zoo(3), std::invalid_argument);
}

TEST_CASE("formula registry dispatches and rejects unknown ids") {
    ard::FormulaInputs in;
    in.c = 1.0;
    in.d = 0.0;
    in.spec = {1.0, 1.0, 2.0};
    CHECK(ard::evaluate_formula("lambda0", in).value ==
          ard::lambda0(1.0, 0.0, in.spec).value);
    CHECK(ard::evaluate_formula("hl", in).value == -1.0);
    in.p = 0.5;
    in.c = 4.0 / 3.0;
    in.d = 0.5;
    CHECK(rel(ard::evaluate_formula("binomial", in).value, -8.0 / 3.0) < 1e-14);
    CHECK_THROWS_AS(ard::evaluate_formula("nope", in), std::invalid_argument);
}
