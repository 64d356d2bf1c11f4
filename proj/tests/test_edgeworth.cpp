#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <qmiss/edgeworth.hpp>

// Reference values computed with mpmath 1.3.0 at 40-digit precision,
// truncated to double.

using namespace qmiss;

namespace {
double rel(double got, double want) {
    if (want == 0.0) return std::fabs(got);
    return std::fabs(got - want) / std::fabs(want);
}
}  // namespace

TEST_CASE("edgeworth_cdf against reference values") {
    struct Row {
        double t;
        int64_t n;
        double gamma, v;
    };
    static const Row rows[] = {
        {0.7, 25, 1.5, 0.7659988230777793},
        {-1.3, 100, 2.0, 0.09285900696851075},
        {2.0, 9, -0.8, 0.9844486635869125},
        {0.0, 50, 2.8284271247461903, 0.5265961520267621},
    };
    for (const auto& r : rows) {
        CAPTURE(r.t, r.n, r.gamma);
        CHECK(rel(edgeworth::edgeworth_cdf(r.t, r.n, r.gamma), r.v) < 1e-13);
    }
}

TEST_CASE("edgeworth_cdf reduces to the normal cdf at gamma = 0") {
    for (double t : {-6.0, -1.7, 0.0, 0.3, 2.9, 8.0})
        CHECK(edgeworth::edgeworth_cdf(t, 7, 0.0) == special::norm_cdf(t));
}

TEST_CASE("edgeworth_cdf clamps out-of-range corrections and counts them") {
    edgeworth::ClampStats st;
    // heavy correction at small n drives the raw value negative
    CHECK(edgeworth::edgeworth_cdf(-4.0, 1, 30.0, &st) == 0.0);
    CHECK(edgeworth::edgeworth_cdf(4.0, 1, -30.0, &st) == 1.0);
    CHECK(edgeworth::edgeworth_cdf(0.5, 100, 1.0, &st) > 0.0);
    CHECK(st.terms == 3);
    CHECK(st.clamped == 2);
    CHECK_THROWS_AS(edgeworth::edgeworth_cdf(0.0, 0, 1.0), std::invalid_argument);

    edgeworth::EdgeworthCdf g{25, 1.5};
    CHECK(g(0.7) == edgeworth::edgeworth_cdf(0.7, 25, 1.5));
}

TEST_CASE("semi-analytic expected miss count, symmetric case") {
    // c = 0 baseline of the standard normal mean, eps = 0.05, window
    // [4, 16000]: sum of 2 Phibar(eps sqrt n) = 396.67355498119316,
    // i.e. eps^2 E Q = 0.9916838874529829
    dist::MomentSpec normal{0.0, 1.0, 0.0};
    edgeworth::ClampStats st;
    double v = edgeworth::semi_analytic_eq(0.0, 0.0, normal, 0.05, 4, 16000, &st);
    CHECK(rel(v, 396.67355498119316) < 1e-10);
    CHECK(rel(0.05 * 0.05 * v, 0.9916838874529829) < 1e-10);
    CHECK(st.terms == 2 * (16000 - 4 + 1));
    CHECK(st.clamped == 0);
}

TEST_CASE("semi-analytic expected miss count, skewed shrinkage case") {
    // Exp(1) summands, shrinkage c = 1/3 toward d = 0, eps = 0.05,
    // window [20, 16000]
    dist::MomentSpec exp1{1.0, 1.0, 2.0};
    double v = edgeworth::semi_analytic_eq(1.0 / 3.0, 0.0, exp1, 0.05, 20, 16000);
    CHECK(rel(v, 382.649800068581) < 1e-10);
}

TEST_CASE("semi-analytic oracle rejects bad inputs") {
    dist::MomentSpec s{0.0, 1.0, 0.0};
    CHECK_THROWS_AS(edgeworth::semi_analytic_eq(0.0, 0.0, s, 0.0, 4, 100),
                    std::invalid_argument);
    CHECK_THROWS_AS(edgeworth::semi_analytic_eq(0.0, 0.0, s, -0.1, 4, 100),
                    std::invalid_argument);
    CHECK_THROWS_AS(edgeworth::semi_analytic_eq(0.0, 0.0, s, 0.05, 0, 100),
                    std::invalid_argument);
    CHECK_THROWS_AS(edgeworth::semi_analytic_eq(0.0, 0.0, s, 0.05, 100, 99),
                    std::invalid_argument);
    dist::MomentSpec bad{0.0, 0.0, 0.0};
    CHECK_THROWS_AS(edgeworth::semi_analytic_eq(0.0, 0.0, bad, 0.05, 4, 100),
                    std::invalid_argument);
}

TEST_CASE("truncation tail bound") {
    CHECK(rel(edgeworth::tail_bound(40.0, 1.0, 0.05), 4.57487890106618e-07) < 1e-13);
    // monotone decreasing in the truncation point
    CHECK(edgeworth::tail_bound(50.0, 1.0, 0.05) < edgeworth::tail_bound(40.0, 1.0, 0.05));
    // exact degree -2 homogeneity in eps (power-of-two ratio is exact)
    CHECK(edgeworth::tail_bound(40.0, 1.0, 0.1) ==
          edgeworth::tail_bound(40.0, 1.0, 0.05) / 4.0);
    CHECK(edgeworth::kTailSigmaSafety == 1.02);
    CHECK_THROWS_AS(edgeworth::tail_bound(0.0, 1.0, 0.05), std::invalid_argument);
    CHECK_THROWS_AS(edgeworth::tail_bound(40.0, 0.0, 0.05), std::invalid_argument);
    CHECK_THROWS_AS(edgeworth::tail_bound(40.0, 1.0, 0.0), std::invalid_argument);
}
