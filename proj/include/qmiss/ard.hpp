#pragma once
// Closed-form asymptotic relative deficiency curves, their minimizers, and
// the reference table of variance-estimator denominators.
//
// Conventions. All curves compare a shrinkage estimator against the c = 0
// baseline on the same data, so every formula vanishes at c = 0 and has no
// constant term. Negative values mean fewer epsilon-misses than the baseline
// in the limit. MomentSpec carries (xi, sigma, gamma) of a single summand.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "dist.hpp"
#include "special.hpp"

namespace qmiss::ard {

using dist::MomentSpec;

enum class TransformTag { identity, sqrt_scale, log_scale, square_scale, custom };

// A smooth increasing reparametrization h applied to the estimand. The curve
// depends on h only through h_ratio = -h''(xi)/h'(xi), so custom transforms
// supply that scalar directly.
struct TransformSpec {
    TransformTag tag = TransformTag::identity;
    double h_ratio = 0.0;
};

inline TransformSpec make_transform(TransformTag tag, double xi, double h_ratio = 0.0) {
    switch (tag) {
        case TransformTag::identity:
            return {tag, 0.0};
        case TransformTag::sqrt_scale:
            if (!(xi > 0.0)) throw std::invalid_argument("sqrt transform needs xi > 0");
            return {tag, 0.5 / xi};
        case TransformTag::log_scale:
            if (!(xi > 0.0)) throw std::invalid_argument("log transform needs xi > 0");
            return {tag, 1.0 / xi};
        case TransformTag::square_scale:
            if (!(xi > 0.0)) throw std::invalid_argument("square transform needs xi > 0 to be increasing");
            return {tag, -1.0 / xi};
        case TransformTag::custom:
            return {tag, h_ratio};
    }
    throw std::invalid_argument("unknown transform tag");
}

inline const char* transform_name(TransformTag tag) {
    switch (tag) {
        case TransformTag::identity: return "identity";
        case TransformTag::sqrt_scale: return "sqrt";
        case TransformTag::log_scale: return "log";
        case TransformTag::square_scale: return "square";
        case TransformTag::custom: return "custom";
    }
    return "?";
}

struct ArdValue {
    double value = 0.0;
    std::string formula;
    double c = 0.0;
    double d = 0.0;
    MomentSpec spec{0.0, 1.0, 0.0};
    double h_ratio = 0.0;
    double a = std::numeric_limits<double>::quiet_NaN();  // fixed-cutoff curves only
};

// Deficiency curves are quadratics through the origin: value(c) = a2 c^2 + a1 c.
struct QuadCurve {
    double a2 = 0.0;
    double a1 = 0.0;
    double operator()(double c) const { return (a2 * c + a1) * c; }
};

inline void require_sigma(const MomentSpec& s) {
    if (!(s.sigma > 0.0)) throw std::invalid_argument("MomentSpec: sigma must be > 0");
}

inline QuadCurve lambda0_curve(double d, const MomentSpec& s) {
    require_sigma(s);
    double k = s.xi - d;
    return {k * k / (s.sigma * s.sigma), -2.0 * (1.0 - (s.gamma / 3.0) * k / s.sigma)};
}

inline QuadCurve lambda0_transformed_curve(double d, const MomentSpec& s, const TransformSpec& h) {
    require_sigma(s);
    double k = s.xi - d;
    return {k * k / (s.sigma * s.sigma),
            -2.0 + (2.0 * s.gamma / 3.0) * k / s.sigma + h.h_ratio * k};
}

inline QuadCurve hl_curve(double d, const MomentSpec& s) {
    require_sigma(s);
    double k = s.xi - d;
    return {k * k / (s.sigma * s.sigma), -2.0};
}

inline QuadCurve binomial_curve(double d, double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("binomial_risk: p must be in (0,1)");
    double q = 1.0 - p;
    return {(p - d) * (p - d) / (p * q),
            -2.0 - (2.0 / 3.0) * (p - q) * (p - d) / (p * q)};
}

inline ArdValue lambda0(double c, double d, const MomentSpec& s) {
    return {lambda0_curve(d, s)(c), "lambda0", c, d, s};
}

inline ArdValue lambda0_transformed(double c, double d, const MomentSpec& s, const TransformSpec& h) {
    ArdValue r{lambda0_transformed_curve(d, s, h)(c), "lambda0_transformed", c, d, s};
    r.h_ratio = h.h_ratio;
    return r;
}

inline ArdValue hl_deficiency(double c, double d, const MomentSpec& s) {
    return {hl_curve(d, s)(c), "hl", c, d, s};
}

inline ArdValue binomial_risk(double c, double d, double p) {
    ArdValue r{binomial_curve(d, p)(c), "binomial", c, d};
    double q = 1.0 - p;
    double sd = std::sqrt(p * q);
    r.spec = {p, sd, (q - p) / sd, true, true};
    return r;
}

// Deficiency of the level-d mean-corrected squared-mean estimator against the
// d = 0 plug-in, as a function of d. The same value holds whether the
// correction uses the known variance or its unbiased estimate.
inline ArdValue lambda0_squared_mean(double d, const MomentSpec& s) {
    require_sigma(s);
    if (s.xi == 0.0)
        throw std::invalid_argument("squared_mean: xi = 0 not admitted (degenerate asymptotics)");
    double ratio = s.sigma * s.sigma / (s.xi * s.xi);
    return {(0.25 * d * d + 0.5 * d) * ratio, "squared_mean", 0.0, d, s};
}

// Fixed-cutoff deficiency curve (window n >= a/eps^2), d = 0 baseline.
inline ArdValue lambda_a(double c, const MomentSpec& s, double a) {
    require_sigma(s);
    if (!(a > 0.0)) throw std::invalid_argument("lambda_a: a must be > 0");
    double w = std::sqrt(a) / s.sigma;
    double ratio = s.xi / s.sigma;
    double quad = (ratio * ratio) * c * c - (2.0 - (2.0 * s.gamma / 3.0) * ratio) * c;
    double val = 2.0 * quad * special::norm_sf(w) -
                 (2.0 * s.gamma / 3.0) * ratio * w * special::norm_pdf(w) * c;
    ArdValue r{val, "lambda_a", c, 0.0, s};
    r.a = a;
    return r;
}

struct ArgminResult {
    double c0 = 0.0;
    double value = 0.0;
    bool unbounded = false;
};

inline ArgminResult argmin_c(const QuadCurve& q) {
    if (q.a2 > 0.0) {
        double c0 = -q.a1 / (2.0 * q.a2);
        return {c0, q(c0), false};
    }
    if (q.a2 == 0.0 && q.a1 == 0.0) return {0.0, 0.0, false};
    double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, -std::numeric_limits<double>::infinity(), q.a2 < 0.0 || q.a1 != 0.0};
}

struct BayesOptimum {
    double c = 0.0;
    double d = 0.0;
    double value = 0.0;  // averaged deficiency at the optimum, = -1/tau2
};

inline double bayes_averaged_deficiency(double c, double d, double theta0, double tau2) {
    if (!(tau2 > 0.0)) throw std::invalid_argument("bayes: tau2 must be > 0");
    double k = theta0 - d;
    return (tau2 + k * k) * c * c - 2.0 * c;
}

inline BayesOptimum bayes_optimal_cd(double theta0, double tau2) {
    if (!(tau2 > 0.0)) throw std::invalid_argument("bayes: tau2 must be > 0");
    return {1.0 / tau2, theta0, -1.0 / tau2};
}

// Sample size n(n0) at which the (c,d) family's exact normal-model MSE equals
// sigma^2/n0, minus n0, extrapolated in 1/n0 from the last two grid points.
// Converges to hl_deficiency(c, d, {xi, sigma, .}).
inline double hl_deficiency_numeric(double c, double d, double xi, double sigma,
                                    const std::vector<double>& n_grid) {
    if (!(sigma > 0.0)) throw std::invalid_argument("hl_numeric: sigma must be > 0");
    if (n_grid.empty()) throw std::invalid_argument("hl_numeric: empty n_grid");
    double k2 = (xi - d) * (xi - d) / (sigma * sigma);
    std::vector<double> defs;
    defs.reserve(n_grid.size());
    for (double n0 : n_grid) {
        if (!(n0 > 0.0)) throw std::invalid_argument("hl_numeric: n0 must be > 0");
        // MSE(n) = (n sigma^2 + c^2 (xi-d)^2) / (n+c)^2 = sigma^2/n0 reduces to
        // n^2 + (2c - n0) n + c^2 (1 - n0 k2) = 0.
        double b = 2.0 * c - n0;
        double cc = c * c * (1.0 - n0 * k2);
        double disc = b * b - 4.0 * cc;
        if (disc < 0.0) throw std::runtime_error("hl_numeric: no root in bracket");
        double n = 0.5 * (-b + std::sqrt(disc));
        if (!(n > 0.0)) throw std::runtime_error("hl_numeric: no root in bracket");
        defs.push_back(n - n0);
    }
    if (defs.size() == 1) return defs[0];
    // d(n0) = L + b/n0: the line n0*d(n0) vs n0 has slope L.
    double n1 = n_grid[n_grid.size() - 2], n2 = n_grid.back();
    double d1 = defs[defs.size() - 2], d2 = defs.back();
    return (d2 * n2 - d1 * n1) / (n2 - n1);
}

struct ZooRow {
    std::string principle;
    double exact = 0.0;   // exact denominator at this N
    double approx = 0.0;  // catalogued approximate / constant form
    std::string note;
};

// The distinguished list of denominators for SS = sum (x_i - xbar)^2 in the
// normal model, evaluated at sample size N (n = N-1 degrees of freedom).
inline std::vector<ZooRow> denominator_zoo(int N) {
    if (N < 2) throw std::invalid_argument("denominator_zoo: N must be >= 2");
    if (N < 4)
        throw std::invalid_argument("denominator_zoo: N too small for the vague-prior Bayes rule");
    double n = N - 1;
    double es = special::e_sqrt_chi2(n);  // E sqrt(chi2_n)
    double wh_median = n - 2.0 / 3.0 + 4.0 / (27.0 * n);
    std::vector<ZooRow> rows;
    rows.push_back({"ML", double(N), double(N), "N"});
    rows.push_back({"unbiased for sigma^2 (UMV)", n, n, "N-1"});
    rows.push_back({"unbiased for sigma", es * es, n - 0.5,
                    "exact (E sqrt(chi2_n))^2, approx N-3/2"});
    rows.push_back({"MSE-optimal for sigma^2", double(N + 1), double(N + 1), "N+1"});
    rows.push_back({"MSE-optimal for sigma", n * n / (es * es), n + 0.5,
                    "exact n^2/(E sqrt(chi2_n))^2, approx N-1/2"});
    rows.push_back({"median-unbiased for sigma^2", special::chi2_quantile(0.5, n), wh_median,
                    "exact chi2_n median, approx n-2/3+4/(27n)"});
    rows.push_back({"unbiased for log sigma^2", 2.0 * std::exp(special::digamma(0.5 * n)),
                    n - 1.0, "exact 2 exp(psi(n/2)), approx N-2"});
    rows.push_back({"Bayes, vague prior", double(N - 3), double(N - 1),
                    "N-3 under squared loss for sigma^2, N-1 under squared loss for 1/sigma^2"});
    rows.push_back({"fewest eps-misses, sigma^2 scale", n + 2.0 / 3.0, n + 2.0 / 3.0, "N-1/3"});
    rows.push_back({"fewest eps-misses, sigma scale", n + 1.0 / 6.0, n + 1.0 / 6.0, "N-5/6"});
    rows.push_back({"fewest eps-misses, log scale (catalogued)",
                    n + 2.0 / 3.0 - std::exp(-1.0), n + 2.0 / 3.0 - std::exp(-1.0),
                    "N-0.695 as catalogued"});
    return rows;
}

struct FormulaInputs {
    double c = 0.0;
    double d = 0.0;
    MomentSpec spec{1.0, 1.0, 0.0};
    TransformSpec h{};
    double a = 1.0;    // lambda_a
    double p = 0.5;    // binomial
};

// String-addressable entry point used by the CLI and config files.
inline ArdValue evaluate_formula(const std::string& id, const FormulaInputs& in) {
    if (id == "lambda0") return lambda0(in.c, in.d, in.spec);
    if (id == "lambda0_transformed") return lambda0_transformed(in.c, in.d, in.spec, in.h);
    if (id == "hl") return hl_deficiency(in.c, in.d, in.spec);
    if (id == "binomial") return binomial_risk(in.c, in.d, in.p);
    if (id == "squared_mean") return lambda0_squared_mean(in.d, in.spec);
    if (id == "lambda_a") return lambda_a(in.c, in.spec, in.a);
    throw std::invalid_argument("unknown formula id: " + id);
}

}  // namespace qmiss::ard
