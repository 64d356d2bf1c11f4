#pragma once
// Data-generating distributions and their (mean, sd, skewness) summaries.
//
// Every generator turns exactly one uniform into one variate. Keeping the
// uniform budget fixed at one per draw is what makes common-random-number
// coupling exact: two estimator families replayed against the same stream see
// the same data at every index n.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <variant>
#include <vector>

#include "rng.hpp"

namespace qmiss::dist {

struct MomentSpec {
    double xi;     // mean
    double sigma;  // standard deviation
    double gamma;  // skewness, E(X - xi)^3 / sigma^3
    bool has_fourth_moment = true;
    bool is_lattice = false;
};

struct Exponential {
    double mean = 1.0;
    bool operator==(const Exponential&) const = default;
};

struct Normal {
    double mu = 0.0;
    double sigma = 1.0;
    bool operator==(const Normal&) const = default;
};

struct ChiSquare1 {
    bool operator==(const ChiSquare1&) const = default;
};

struct Bernoulli {
    double p = 0.5;
    bool operator==(const Bernoulli&) const = default;
};

// Bernoulli(p) with the point mass at 1 smeared uniformly over
// [1-eta, 1+eta]. The smearing kills the lattice structure while perturbing
// the first three moments by O(eta^2).
struct SmoothedBernoulli {
    double p = 0.5;
    double eta = 0.01;
    bool operator==(const SmoothedBernoulli&) const = default;
};

using Generator = std::variant<Exponential, Normal, ChiSquare1, Bernoulli, SmoothedBernoulli>;

inline void validate(const Generator& g) {
    std::visit(
        [](const auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                if (!(c.mean > 0.0)) throw std::invalid_argument("Exponential: mean must be > 0");
            } else if constexpr (std::is_same_v<T, Normal>) {
                if (!(c.sigma > 0.0)) throw std::invalid_argument("Normal: sigma must be > 0");
            } else if constexpr (std::is_same_v<T, Bernoulli>) {
                if (!(c.p > 0.0 && c.p < 1.0))
                    throw std::invalid_argument("Bernoulli: p must be in (0,1)");
            } else if constexpr (std::is_same_v<T, SmoothedBernoulli>) {
                if (!(c.p > 0.0 && c.p < 1.0))
                    throw std::invalid_argument("SmoothedBernoulli: p must be in (0,1)");
                if (!(c.eta > 0.0 && c.eta < 1.0))
                    throw std::invalid_argument("SmoothedBernoulli: eta must be in (0,1)");
            }
        },
        g);
}

inline const char* generator_name(const Generator& g) {
    struct V {
        const char* operator()(const Exponential&) const { return "exponential"; }
        const char* operator()(const Normal&) const { return "normal"; }
        const char* operator()(const ChiSquare1&) const { return "chisq1"; }
        const char* operator()(const Bernoulli&) const { return "bernoulli"; }
        const char* operator()(const SmoothedBernoulli&) const { return "smoothed-bernoulli"; }
    };
    return std::visit(V{}, g);
}

inline MomentSpec spec_of(const Exponential& g) { return {g.mean, g.mean, 2.0}; }

inline MomentSpec spec_of(const Normal& g) { return {g.mu, g.sigma, 0.0}; }

inline MomentSpec spec_of(const ChiSquare1&) {
    return {1.0, std::sqrt(2.0), 2.0 * std::sqrt(2.0)};
}

inline MomentSpec spec_of(const Bernoulli& g) {
    double q = 1.0 - g.p;
    double sd = std::sqrt(g.p * q);
    return {g.p, sd, (q - g.p) / sd, true, true};
}

inline MomentSpec spec_of(const SmoothedBernoulli& g) {
    double p = g.p, e2 = g.eta * g.eta;
    double ex2 = p * (1.0 + e2 / 3.0);
    double ex3 = p * (1.0 + e2);
    double var = ex2 - p * p;
    double mu3 = ex3 - 3.0 * p * ex2 + 2.0 * p * p * p;
    double sd = std::sqrt(var);
    return {p, sd, mu3 / (var * sd)};
}

inline MomentSpec generator_spec(const Generator& g) {
    validate(g);
    return std::visit([](const auto& c) { return spec_of(c); }, g);
}

inline double draw(const Exponential& g, double u) {
    return rng::exponential_from_u(u, g.mean);
}

inline double draw(const Normal& g, double u) {
    return g.mu + g.sigma * rng::normal_from_u(u);
}

inline double draw(const ChiSquare1&, double u) {
    double z = rng::normal_from_u(u);
    return z * z;
}

inline double draw(const Bernoulli& g, double u) { return u < g.p ? 1.0 : 0.0; }

inline double draw(const SmoothedBernoulli& g, double u) {
    return u < g.p ? 1.0 + g.eta * (2.0 * u / g.p - 1.0) : 0.0;
}

inline double draw(const Generator& g, double u) {
    return std::visit([u](const auto& c) { return draw(c, u); }, g);
}

// Constant-memory i.i.d. stream from a generator.
struct Stream {
    Generator g;
    rng::Xoshiro256pp rng;

    Stream(const Generator& gen, uint64_t seed) : g(gen), rng(seed) { validate(gen); }
    double next() { return draw(g, rng.u01()); }
};

inline std::vector<double> sample_stream(const Generator& g, uint64_t seed, size_t n) {
    Stream s(g, seed);
    std::vector<double> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) out.push_back(s.next());
    return out;
}

}  // namespace qmiss::dist
