#pragma once
// One-term Edgeworth CDF, a semi-analytic oracle for the expected miss count
// of shrinkage-mean estimators, and certified truncation tail bounds.

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "dist.hpp"
#include "special.hpp"

namespace qmiss::edgeworth {

struct ClampStats {
    uint64_t clamped = 0;
    uint64_t terms = 0;
};

// G_n(t) = Phi(t) - (gamma / (6 sqrt n)) (t^2 - 1) phi(t), clamped to [0,1].
// Only the 1/sqrt(n) correction is carried; the omitted next term makes the
// approximation error O(1/n). Clamping can trigger for extreme t at small n
// and large |gamma|; ClampStats records how often.
inline double edgeworth_cdf(double t, int64_t n, double gamma, ClampStats* stats = nullptr) {
    if (n < 1) throw std::invalid_argument("edgeworth_cdf: n must be >= 1");
    double g = special::norm_cdf(t) -
               gamma / (6.0 * std::sqrt(double(n))) * (t * t - 1.0) * special::norm_pdf(t);
    if (stats) ++stats->terms;
    if (g < 0.0 || g > 1.0) {
        if (stats) ++stats->clamped;
        g = g < 0.0 ? 0.0 : 1.0;
    }
    return g;
}

struct EdgeworthCdf {
    int64_t n = 1;
    double gamma = 0.0;
    double operator()(double t) const { return edgeworth_cdf(t, n, gamma); }
};

// Expected number of eps-misses of the shrinkage mean (n xbar + c d)/(n + c)
// over the window n in [n_min, n_max], from per-n two-sided tail
// probabilities of the Edgeworth CDF at the exact indicator roots
//   l, r = [c (xi - d) -+ eps (n + c)] / (sigma sqrt n).
// Serves as an independent oracle for Monte Carlo estimates of E Q_eps.
inline double semi_analytic_eq(double c, double d, const dist::MomentSpec& spec, double epsilon,
                               int64_t n_min, int64_t n_max, ClampStats* stats = nullptr) {
    if (!(spec.sigma > 0.0)) throw std::invalid_argument("semi_analytic_eq: sigma must be > 0");
    if (!(epsilon > 0.0)) throw std::invalid_argument("semi_analytic_eq: epsilon must be > 0");
    if (n_min < 1 || n_max < n_min) throw std::invalid_argument("semi_analytic_eq: bad window");
    double k = c * (spec.xi - d);
    double sum = 0.0, comp = 0.0;
    for (int64_t n = n_min; n <= n_max; ++n) {
        double rsn = 1.0 / (spec.sigma * std::sqrt(double(n)));
        double l = (k - epsilon * (double(n) + c)) * rsn;
        double r = (k + epsilon * (double(n) + c)) * rsn;
        double p = edgeworth_cdf(l, n, spec.gamma, stats) +
                   (1.0 - edgeworth_cdf(r, n, spec.gamma, stats));
        double y = p - comp;
        double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return sum;
}

// Safety inflation applied to sigma inside tail bounds, covering the O(1/n)
// Edgeworth error left out of the Gaussian tail comparison. At the window
// ends used here (n >= a_max/eps^2 with a_max >= 8 sigma^2) the true miss
// probability is within a factor (1 + o(1)) of the Gaussian one; 2% on sigma
// is a large multiple of that slack.
inline constexpr double kTailSigmaSafety = 1.02;

// Upper bound on the expected miss count beyond the truncation point
// n_max = a_max/eps^2, via the integral comparison
//   (1/eps^2) * Int_{a_max}^inf 2 Phibar(sqrt(s)/sigma_eff) ds
//     = (2 sigma_eff^2/eps^2) [(1 - w^2) Phibar(w) + w phi(w)],
// with w = sqrt(a_max)/sigma_eff and sigma_eff = kTailSigmaSafety * sigma.
inline double tail_bound(double a_max, double sigma, double epsilon) {
    if (!(a_max > 0.0)) throw std::invalid_argument("tail_bound: a_max must be > 0");
    if (!(sigma > 0.0 && epsilon > 0.0))
        throw std::invalid_argument("tail_bound: sigma and epsilon must be > 0");
    double se = kTailSigmaSafety * sigma;
    double w = std::sqrt(a_max) / se;
    double integral = 2.0 * se * se *
                      ((1.0 - w * w) * special::norm_sf(w) + w * special::norm_pdf(w));
    return integral / (epsilon * epsilon);
}

}  // namespace qmiss::edgeworth
