#pragma once
// Streaming computation of Q_eps, the number of indices n in a counting
// window at which an estimator sequence misses its target by eps or more,
// plus coupled differences Q1 - Q2 evaluated on one shared data stream.
//
// Engine layout. Data is generated in blocks of kBlock steps for kLanes
// independent substreams at once, stored slot-major (x[step][lane]) so the
// per-step lane loops vectorize. Every lane's state lives in its own array
// slot and all arithmetic is elementwise, so a lane's result depends only on
// its own seed: running one stream alone or sixteen in a bank produces
// bit-identical counts, and the scalar entry points below are just the bank
// with one active lane.
//
// Miss indicators are evaluated without forming the estimate itself. Each
// family reduces to comparing a running statistic (centered sum or Welford
// sum of squares) against two per-step thresholds that are affine in n with
// lane-independent coefficients, computed fresh each step (no incremental
// threshold drift). Counters are doubles holding exact small integers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ard.hpp"
#include "dist.hpp"
#include "edgeworth.hpp"
#include "rng.hpp"

namespace qmiss::qsim {

using ard::TransformTag;
using dist::Generator;
using dist::MomentSpec;

struct ShrinkMean {
    double c = 0.0;
    double d = 0.0;
    bool operator==(const ShrinkMean&) const = default;
};

enum class VarScale { variance, sd, log_scale };

struct VarianceDenom {
    double c = 0.0;
    VarScale scale = VarScale::variance;
    bool operator==(const VarianceDenom&) const = default;
};

enum class VarianceMode { known, unbiased };

struct SquaredMean {
    double d = 0.0;
    VarianceMode variance_mode = VarianceMode::known;
    bool operator==(const SquaredMean&) const = default;
};

struct Transformed {
    ShrinkMean base;
    TransformTag h = TransformTag::identity;
    bool operator==(const Transformed&) const = default;
};

using EstimatorFamily = std::variant<ShrinkMean, VarianceDenom, SquaredMean, Transformed>;

enum class CutoffRule { fixed, shrinking };

// Counting-window configuration. Zero n_min/n_max mean "derive from the
// rule": n_min = ceil(a(eps)/eps^2) with a(eps) = a under the fixed rule and
// a(eps) = eps under the shrinking rule (which satisfies a -> 0 and
// a/eps^2 -> infinity), n_max = ceil(40 sigma_limit^2 / eps_eff^2) where
// sigma_limit is the sd of the limiting normal of the standardized estimator.
// A NaN target means "resolve from family + generator". step_budget caps the
// window length; exceeding it is an error, never a silent clip.
struct QConfig {
    double epsilon = 0.05;
    CutoffRule cutoff_rule = CutoffRule::shrinking;
    double a = 1.0;
    int64_t n_min = 0;
    int64_t n_max = 0;
    double target = std::numeric_limits<double>::quiet_NaN();
    int64_t step_budget = 2000000000;
};

struct QCount {
    uint64_t q = 0;
    double truncated_tail_bound = 0.0;
};

// Scale identity and limiting behaviour of a family under a given generator:
// target on the family's own scale, sd of sqrt(n) * (miss statistic), the
// conservative absolute miss distance eps_eff on that statistic's scale, and
// the coupling-compatibility key (kind, sub).
struct FamilyTraits {
    int kind = 0;
    int sub = 0;
    double target = 0.0;
    double sigma_limit = 1.0;
    double eps_eff = 0.0;
    int64_t min_n = 1;
};

// Base-scale thresholds [lo, hi] such that an absolute eps-miss of h(est)
// around h(theta) is exactly est <= lo or est >= hi. lo may be -infinity
// when the lower h-band extends past the domain edge.
struct TransformBounds {
    double lo = 0.0;
    double hi = 0.0;
};

inline TransformBounds transform_bounds(TransformTag tag, double theta, double eps) {
    constexpr double ninf = -std::numeric_limits<double>::infinity();
    switch (tag) {
        case TransformTag::identity:
            return {theta - eps, theta + eps};
        case TransformTag::sqrt_scale: {
            if (!(theta > 0.0)) throw std::invalid_argument("sqrt transform needs target > 0");
            double s = std::sqrt(theta);
            double lo = s - eps;
            return {lo >= 0.0 ? lo * lo : ninf, (s + eps) * (s + eps)};
        }
        case TransformTag::log_scale:
            if (!(theta > 0.0)) throw std::invalid_argument("log transform needs target > 0");
            return {theta * std::exp(-eps), theta * std::exp(eps)};
        case TransformTag::square_scale: {
            if (!(theta > 0.0))
                throw std::invalid_argument("square transform needs target > 0 to be increasing");
            double t2 = theta * theta;
            return {t2 - eps >= 0.0 ? std::sqrt(t2 - eps) : ninf, std::sqrt(t2 + eps)};
        }
        case TransformTag::custom:
            throw std::invalid_argument("custom transforms carry no evaluable h; simulation needs a tag");
    }
    throw std::invalid_argument("unknown transform tag");
}

inline double apply_transform(TransformTag tag, double v) {
    switch (tag) {
        case TransformTag::identity: return v;
        case TransformTag::sqrt_scale: return std::sqrt(v);
        case TransformTag::log_scale: return std::log(v);
        case TransformTag::square_scale: return v * v;
        case TransformTag::custom: break;
    }
    throw std::invalid_argument("custom transforms carry no evaluable h");
}

inline FamilyTraits family_traits(const EstimatorFamily& f, const MomentSpec& spec,
                                  double epsilon) {
    if (!(spec.sigma > 0.0)) throw std::invalid_argument("family_traits: sigma must be > 0");
    if (!(epsilon > 0.0)) throw std::invalid_argument("family_traits: epsilon must be > 0");
    FamilyTraits t;
    t.kind = int(f.index());
    if (const auto* m = std::get_if<ShrinkMean>(&f)) {
        (void)m;
        t.target = spec.xi;
        t.sigma_limit = spec.sigma;
        t.eps_eff = epsilon;
        t.min_n = 1;
    } else if (const auto* v = std::get_if<VarianceDenom>(&f)) {
        t.sub = int(v->scale);
        double s2 = spec.sigma * spec.sigma;
        switch (v->scale) {
            case VarScale::variance:
                t.target = s2;
                t.eps_eff = epsilon;
                break;
            case VarScale::sd:
                t.target = spec.sigma;
                t.eps_eff = epsilon < 1.0 ? 2.0 * epsilon - epsilon * epsilon : 1.0;
                break;
            case VarScale::log_scale:
                t.target = std::log(s2);
                t.eps_eff = 1.0 - std::exp(-epsilon);
                break;
        }
        // sd of sqrt(N)(SS/((N-1+c) sigma^2) - 1) in the normal model.
        t.sigma_limit = std::sqrt(2.0);
        t.min_n = 2;
    } else if (const auto* s = std::get_if<SquaredMean>(&f)) {
        t.target = spec.xi * spec.xi;
        t.sigma_limit = 2.0 * std::abs(spec.xi) * spec.sigma;
        if (t.sigma_limit == 0.0) t.sigma_limit = spec.sigma;  // xi = 0: countable, degenerate rate
        t.eps_eff = epsilon;
        t.min_n = s->variance_mode == VarianceMode::unbiased ? 2 : 1;
    } else if (const auto* tr = std::get_if<Transformed>(&f)) {
        t.sub = int(tr->h);
        auto b = transform_bounds(tr->h, spec.xi, epsilon);
        t.target = apply_transform(tr->h, spec.xi);
        t.sigma_limit = spec.sigma;
        double dlo = std::isfinite(b.lo) ? spec.xi - b.lo : std::numeric_limits<double>::infinity();
        t.eps_eff = std::min(dlo, b.hi - spec.xi);
        t.min_n = 1;
    }
    return t;
}

struct ResolvedConfig {
    double epsilon = 0.0;
    double a_eps = 0.0;  // cutoff a(eps) in force
    int64_t n_min = 1;
    int64_t n_max = 1;
    double target = 0.0;
    FamilyTraits traits;
};

inline ResolvedConfig resolve_config(const QConfig& cfg, const EstimatorFamily& fam,
                                     const MomentSpec& spec) {
    if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("QConfig: epsilon must be > 0");
    ResolvedConfig rc;
    rc.epsilon = cfg.epsilon;
    rc.traits = family_traits(fam, spec, cfg.epsilon);
    if (cfg.cutoff_rule == CutoffRule::fixed) {
        if (!(cfg.a > 0.0)) throw std::invalid_argument("QConfig: fixed cutoff needs a > 0");
        rc.a_eps = cfg.a;
    } else {
        rc.a_eps = cfg.epsilon;
    }
    double e2 = cfg.epsilon * cfg.epsilon;
    rc.n_min = cfg.n_min > 0 ? cfg.n_min : int64_t(std::ceil(rc.a_eps / e2));
    rc.n_min = std::max<int64_t>({rc.n_min, 1, rc.traits.min_n});
    double ee = rc.traits.eps_eff;
    rc.n_max = cfg.n_max > 0
                   ? cfg.n_max
                   : int64_t(std::ceil(40.0 * rc.traits.sigma_limit * rc.traits.sigma_limit /
                                       (ee * ee)));
    if (rc.n_max < rc.n_min) throw std::invalid_argument("QConfig: n_max < n_min");
    if (rc.n_max > cfg.step_budget)
        throw std::runtime_error("QConfig: counting window of " + std::to_string(rc.n_max) +
                                 " steps exceeds step_budget " + std::to_string(cfg.step_budget));
    rc.target = std::isnan(cfg.target) ? rc.traits.target : cfg.target;
    return rc;
}

// Analytic upper bound on the expected misses beyond n_max for this family
// and window, on the standardized scale used by family_traits.
inline double window_tail_bound(const ResolvedConfig& rc) {
    double ee = rc.traits.eps_eff;
    return edgeworth::tail_bound(double(rc.n_max) * ee * ee, rc.traits.sigma_limit, ee);
}

namespace detail {

inline constexpr int kLanes = 16;
inline constexpr int kBlock = 512;

struct LaneRng {
    alignas(64) uint64_t s0[kLanes];
    alignas(64) uint64_t s1[kLanes];
    alignas(64) uint64_t s2[kLanes];
    alignas(64) uint64_t s3[kLanes];

    void seed_lane(int j, uint64_t seed) {
        rng::Xoshiro256pp r(seed);
        s0[j] = r.s[0];
        s1[j] = r.s[1];
        s2[j] = r.s[2];
        s3[j] = r.s[3];
    }

    static constexpr uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    // One step of all lanes; same update as Xoshiro256pp::next, elementwise.
    void row_u01(double* u) {
        for (int j = 0; j < kLanes; ++j) {
            uint64_t r = rotl(s0[j] + s3[j], 23) + s0[j];
            uint64_t t = s1[j] << 17;
            s2[j] ^= s0[j];
            s3[j] ^= s1[j];
            s1[j] ^= s2[j];
            s0[j] ^= s3[j];
            s2[j] ^= t;
            s3[j] = rotl(s3[j], 45);
            u[j] = double(r >> 11) * 0x1.0p-53 + 0x1.0p-54;
        }
    }
};

template <class G>
inline void fill_block(LaneRng& r, const G& g, double* x, int rows) {
    alignas(64) double u[kLanes];
    for (int i = 0; i < rows; ++i) {
        r.row_u01(u);
        double* xi = x + size_t(i) * kLanes;
        for (int j = 0; j < kLanes; ++j) xi[j] = dist::draw(g, u[j]);
    }
}

// Normal draws split the inversion: the central rational vectorizes over the
// row, the two tails (4.85% of lanes) are fixed up scalar. Values are
// bitwise those of dist::draw(Normal, u); only the evaluation order differs.
inline void fill_block(LaneRng& r, const dist::Normal& g, double* x, int rows) {
    alignas(64) double u[kLanes];
    constexpr double plow = special::kAcklamPlow;
    for (int i = 0; i < rows; ++i) {
        r.row_u01(u);
        double* xi = x + size_t(i) * kLanes;
        for (int j = 0; j < kLanes; ++j)
            xi[j] = g.mu + g.sigma * special::acklam_central(u[j]);
        for (int j = 0; j < kLanes; ++j) {
            if (u[j] < plow)
                xi[j] = g.mu +
                        g.sigma * special::acklam_tail(std::sqrt(2.0 * rng::neg_log(u[j])));
            else if (u[j] > 1.0 - plow)
                xi[j] = g.mu -
                        g.sigma * special::acklam_tail(std::sqrt(2.0 * rng::neg_log(1.0 - u[j])));
        }
    }
}

struct IWalk {
    virtual ~IWalk() = default;
    virtual void run(const double* x, int rows, int64_t n0) = 0;
    virtual void reset_counts() = 0;
    virtual uint64_t count(size_t fam, int lane) const = 0;
};

// ShrinkMean and Transformed. Order the centered sum U_n = S_n - n*theta
// against two thresholds affine in n: a miss at n is
//   U_n <= klo + n*dlo  or  U_n >= khi + n*dhi.
struct MeanWalk final : IWalk {
    struct Fam {
        double dlo, klo, dhi, khi;
        alignas(64) double q[kLanes] = {};
    };
    double theta = 0.0;
    std::vector<Fam> fams;
    alignas(64) double U[kLanes] = {};

    void run(const double* x, int rows, int64_t n0) override {
        for (int i = 0; i < rows; ++i) {
            const double* xi = x + size_t(i) * kLanes;
            for (int j = 0; j < kLanes; ++j) U[j] += xi[j] - theta;
            double nd = double(n0 + i);
            for (auto& f : fams) {
                double lo = f.klo + nd * f.dlo;
                double hi = f.khi + nd * f.dhi;
                for (int j = 0; j < kLanes; ++j)
                    f.q[j] += (U[j] <= lo ? 1.0 : 0.0) + (U[j] >= hi ? 1.0 : 0.0);
            }
        }
    }
    void reset_counts() override {
        for (auto& f : fams)
            for (auto& v : f.q) v = 0.0;
    }
    uint64_t count(size_t fam, int lane) const override { return uint64_t(fams[fam].q[lane]); }
};

// VarianceDenom on any scale: a miss at N is
//   SS_N <= (N-1+c)*Klo  or  SS_N >= (N-1+c)*Khi
// with scale constants Klo/Khi shared by the couple and SS_N the running
// centered sum of squares (Welford, division-free via the 1/n table).
struct VarWalk final : IWalk {
    struct Fam {
        double c;
        alignas(64) double q[kLanes] = {};
    };
    double klo = 0.0, khi = 0.0;
    const double* inv = nullptr;
    std::vector<Fam> fams;
    alignas(64) double M[kLanes] = {};
    alignas(64) double SS[kLanes] = {};
    std::vector<double> ssrow;

    void run(const double* x, int rows, int64_t n0) override {
        ssrow.resize(size_t(rows) * kLanes);
        for (int i = 0; i < rows; ++i) {
            const double* xi = x + size_t(i) * kLanes;
            double* sr = ssrow.data() + size_t(i) * kLanes;
            double invn = inv[n0 + i];
            for (int j = 0; j < kLanes; ++j) {
                double delta = xi[j] - M[j];
                M[j] += delta * invn;
                SS[j] += delta * (xi[j] - M[j]);
                sr[j] = SS[j];
            }
        }
        for (auto& f : fams) {
            alignas(64) double acc[kLanes] = {};
            for (int i = 0; i < rows; ++i) {
                const double* sr = ssrow.data() + size_t(i) * kLanes;
                double t = double(n0 + i) - 1.0 + f.c;
                double lo = t * klo;
                double hi = t * khi;
                for (int j = 0; j < kLanes; ++j)
                    acc[j] += (sr[j] <= lo ? 1.0 : 0.0) + (sr[j] >= hi ? 1.0 : 0.0);
            }
            for (int j = 0; j < kLanes; ++j) f.q[j] += acc[j];
        }
    }
    void reset_counts() override {
        for (auto& f : fams)
            for (auto& v : f.q) v = 0.0;
    }
    uint64_t count(size_t fam, int lane) const override { return uint64_t(fams[fam].q[lane]); }
};

// SquaredMean, both variance modes, sharing one Welford state. A miss at n is
// |xbar^2 - d*v/n - target| >= eps with v = sigma^2 (known) or SS/(n-1).
struct SqMeanWalk final : IWalk {
    struct Fam {
        double d;
        bool unbiased;
        alignas(64) double q[kLanes] = {};
    };
    double tlo = 0.0, thi = 0.0;  // target -+ eps
    double sigma2 = 1.0;
    const double* inv = nullptr;
    std::vector<Fam> fams;
    alignas(64) double M[kLanes] = {};
    alignas(64) double SS[kLanes] = {};
    std::vector<double> m2row, ssrow;

    void run(const double* x, int rows, int64_t n0) override {
        m2row.resize(size_t(rows) * kLanes);
        ssrow.resize(size_t(rows) * kLanes);
        for (int i = 0; i < rows; ++i) {
            const double* xi = x + size_t(i) * kLanes;
            double* mr = m2row.data() + size_t(i) * kLanes;
            double* sr = ssrow.data() + size_t(i) * kLanes;
            double invn = inv[n0 + i];
            for (int j = 0; j < kLanes; ++j) {
                double delta = xi[j] - M[j];
                M[j] += delta * invn;
                SS[j] += delta * (xi[j] - M[j]);
                mr[j] = M[j] * M[j];
                sr[j] = SS[j];
            }
        }
        for (auto& f : fams) {
            alignas(64) double acc[kLanes] = {};
            if (f.unbiased) {
                for (int i = 0; i < rows; ++i) {
                    const double* mr = m2row.data() + size_t(i) * kLanes;
                    const double* sr = ssrow.data() + size_t(i) * kLanes;
                    int64_t n = n0 + i;
                    double w = f.d * inv[n] * inv[n - 1];  // inv[0] = 0 keeps the warm n = 1 step finite
                    for (int j = 0; j < kLanes; ++j) {
                        double e = mr[j] - w * sr[j];
                        acc[j] += (e <= tlo ? 1.0 : 0.0) + (e >= thi ? 1.0 : 0.0);
                    }
                }
            } else {
                for (int i = 0; i < rows; ++i) {
                    const double* mr = m2row.data() + size_t(i) * kLanes;
                    double dv = f.d * sigma2 * inv[n0 + i];
                    for (int j = 0; j < kLanes; ++j) {
                        double e = mr[j] - dv;
                        acc[j] += (e <= tlo ? 1.0 : 0.0) + (e >= thi ? 1.0 : 0.0);
                    }
                }
            }
            for (int j = 0; j < kLanes; ++j) f.q[j] += acc[j];
        }
    }
    void reset_counts() override {
        for (auto& f : fams)
            for (auto& v : f.q) v = 0.0;
    }
    uint64_t count(size_t fam, int lane) const override { return uint64_t(fams[fam].q[lane]); }
};

}  // namespace detail

inline constexpr int kMaxStreams = detail::kLanes;

// Reusable scratch: the slot-major data block and the 1/n table. Optional;
// callers running many windows (the mc module) keep one per thread.
struct Workspace {
    std::vector<double> x;
    std::vector<double> inv;

    void ensure(int64_t n_max) {
        x.resize(size_t(detail::kBlock) * detail::kLanes);
        if (int64_t(inv.size()) < n_max + 1) {
            size_t old = inv.size();
            inv.resize(size_t(n_max) + 1);
            if (old == 0) {
                inv[0] = 0.0;
                old = 1;
            }
            for (size_t n = old; n < inv.size(); ++n) inv[n] = 1.0 / double(n);
        }
    }
};

namespace detail {

inline void check_couple(const std::vector<EstimatorFamily>& fams, const MomentSpec& spec,
                         double epsilon, const ResolvedConfig& rc) {
    for (const auto& f : fams) {
        FamilyTraits t = family_traits(f, spec, epsilon);
        if (t.kind != rc.traits.kind || t.sub != rc.traits.sub || t.target != rc.traits.target)
            throw std::invalid_argument("coupled families have mismatched targets/scales");
        double c = 0.0;
        if (const auto* m = std::get_if<ShrinkMean>(&f)) c = m->c;
        if (const auto* tr = std::get_if<Transformed>(&f)) c = tr->base.c;
        if (const auto* v = std::get_if<VarianceDenom>(&f)) {
            if (double(rc.n_min) - 1.0 + v->c <= 0.0)
                throw std::invalid_argument("VarianceDenom: need N_min - 1 + c > 0");
            continue;
        }
        if (std::holds_alternative<ShrinkMean>(f) || std::holds_alternative<Transformed>(f)) {
            if (double(rc.n_min) + c <= 0.0)
                throw std::invalid_argument("ShrinkMean: need n_min + c > 0 (reject c <= -n_min)");
        }
    }
}

inline std::unique_ptr<IWalk> make_walker(const std::vector<EstimatorFamily>& fams,
                                          const ResolvedConfig& rc, const MomentSpec& spec,
                                          const double* inv) {
    const EstimatorFamily& f0 = fams.front();
    if (std::holds_alternative<ShrinkMean>(f0) || std::holds_alternative<Transformed>(f0)) {
        auto w = std::make_unique<MeanWalk>();
        bool transformed = std::holds_alternative<Transformed>(f0);
        // Base-scale centering constant; for transformed families the target
        // lives on the h scale and thresholds are mapped back to base scale.
        double theta = transformed ? spec.xi : rc.target;
        w->theta = theta;
        for (const auto& f : fams) {
            double c, d;
            TransformBounds b;
            if (transformed) {
                const auto& tr = std::get<Transformed>(f);
                c = tr.base.c;
                d = tr.base.d;
                b = transform_bounds(tr.h, spec.xi, rc.epsilon);
            } else {
                const auto& m = std::get<ShrinkMean>(f);
                c = m.c;
                d = m.d;
                b = {theta - rc.epsilon, theta + rc.epsilon};
            }
            MeanWalk::Fam fam{};
            fam.dhi = b.hi - theta;
            fam.khi = c * (b.hi - d);
            if (std::isfinite(b.lo)) {
                fam.dlo = b.lo - theta;
                fam.klo = c * (b.lo - d);
            } else {
                fam.dlo = 0.0;
                fam.klo = -std::numeric_limits<double>::infinity();
            }
            w->fams.push_back(fam);
        }
        return w;
    }
    if (std::holds_alternative<VarianceDenom>(f0)) {
        auto w = std::make_unique<VarWalk>();
        w->inv = inv;
        const auto& v0 = std::get<VarianceDenom>(f0);
        double s2;
        switch (v0.scale) {  // rc.target is on the family's own scale
            case VarScale::variance: s2 = rc.target; break;
            case VarScale::sd: s2 = rc.target * rc.target; break;
            default: s2 = std::exp(rc.target); break;
        }
        double e = rc.epsilon;
        switch (v0.scale) {
            case VarScale::variance:
                w->klo = s2 * (1.0 - e);
                w->khi = s2 * (1.0 + e);
                break;
            case VarScale::sd:
                w->klo = e <= 1.0 ? s2 * (1.0 - e) * (1.0 - e) : -1.0;
                w->khi = s2 * (1.0 + e) * (1.0 + e);
                break;
            case VarScale::log_scale:
                w->klo = s2 * std::exp(-e);
                w->khi = s2 * std::exp(e);
                break;
        }
        for (const auto& f : fams) w->fams.push_back({std::get<VarianceDenom>(f).c});
        return w;
    }
    auto w = std::make_unique<SqMeanWalk>();
    w->inv = inv;
    w->tlo = rc.target - rc.epsilon;
    w->thi = rc.target + rc.epsilon;
    w->sigma2 = spec.sigma * spec.sigma;
    for (const auto& f : fams) {
        const auto& s = std::get<SquaredMean>(f);
        w->fams.push_back({s.d, s.variance_mode == VarianceMode::unbiased});
    }
    return w;
}

}  // namespace detail

struct CoupleOutcome {
    std::vector<std::array<uint64_t, kMaxStreams>> q;  // [family][stream]
    double tail_bound = 0.0;
    ResolvedConfig resolved;
};

// Core entry point: run every family in `fams` over n_streams shared data
// streams (seeded individually) and count misses per family per stream.
inline CoupleOutcome run_couple(const std::vector<EstimatorFamily>& fams, const Generator& g,
                                const QConfig& cfg, const uint64_t* seeds, int n_streams,
                                Workspace* ws = nullptr) {
    if (fams.empty()) throw std::invalid_argument("run_couple: no families");
    if (n_streams < 1 || n_streams > kMaxStreams)
        throw std::invalid_argument("run_couple: n_streams must be in [1, 16]");
    MomentSpec spec = dist::generator_spec(g);
    ResolvedConfig rc = resolve_config(cfg, fams.front(), spec);
    detail::check_couple(fams, spec, cfg.epsilon, rc);

    Workspace local;
    Workspace& w = ws ? *ws : local;
    w.ensure(rc.n_max);

    detail::LaneRng lr;
    for (int j = 0; j < detail::kLanes; ++j)
        lr.seed_lane(j, j < n_streams ? seeds[j] : rng::mix64(seeds[n_streams - 1] + uint64_t(j)));

    auto walk = detail::make_walker(fams, rc, spec, w.inv.data());

    int64_t n = 1;
    int64_t reset_at = rc.n_min > 1 ? rc.n_min : -1;
    while (n <= rc.n_max) {
        int64_t lim = (reset_at > 0 && n < reset_at) ? reset_at - 1 : rc.n_max;
        int rows = int(std::min<int64_t>(detail::kBlock, lim - n + 1));
        std::visit([&](const auto& gen) { detail::fill_block(lr, gen, w.x.data(), rows); }, g);
        walk->run(w.x.data(), rows, n);
        n += rows;
        if (n == reset_at) {
            walk->reset_counts();
            reset_at = -1;
        }
    }

    CoupleOutcome out;
    out.resolved = rc;
    out.tail_bound = window_tail_bound(rc);
    out.q.resize(fams.size());
    for (size_t f = 0; f < fams.size(); ++f)
        for (int j = 0; j < n_streams; ++j) out.q[f][size_t(j)] = walk->count(f, j);
    return out;
}

inline std::vector<QCount> count_couple(const std::vector<EstimatorFamily>& fams,
                                        const Generator& g, const QConfig& cfg, uint64_t seed,
                                        Workspace* ws = nullptr) {
    uint64_t s[1] = {seed};
    auto out = run_couple(fams, g, cfg, s, 1, ws);
    std::vector<QCount> r(fams.size());
    for (size_t f = 0; f < fams.size(); ++f) r[f] = {out.q[f][0], out.tail_bound};
    return r;
}

inline QCount count_q(const EstimatorFamily& f, const Generator& g, const QConfig& cfg,
                      uint64_t seed, Workspace* ws = nullptr) {
    return count_couple({f}, g, cfg, seed, ws)[0];
}

// Q1 - Q2 on one shared stream; equals count_q(f1) - count_q(f2) run
// separately with the same seed, by lane independence.
inline int64_t coupled_diff(const EstimatorFamily& f1, const EstimatorFamily& f2,
                            const Generator& g, const QConfig& cfg, uint64_t seed,
                            Workspace* ws = nullptr) {
    auto v = count_couple({f1, f2}, g, cfg, seed, ws);
    return int64_t(v[0].q) - int64_t(v[1].q);
}

// eps * (Q1 - Q2) under the shrinking cutoff: one draw from the scaled
// difference statistic whose limit law is the coupled Brownian difference.
inline double scaled_diff_sample(const EstimatorFamily& f1, const EstimatorFamily& f2,
                                 const Generator& g, const QConfig& cfg, uint64_t seed,
                                 Workspace* ws = nullptr) {
    if (cfg.cutoff_rule != CutoffRule::shrinking)
        throw std::invalid_argument("scaled_diff_sample requires the shrinking cutoff a(eps) = eps");
    return cfg.epsilon * double(coupled_diff(f1, f2, g, cfg, seed, ws));
}

}  // namespace qmiss::qsim

namespace qmiss::edgeworth {

// Window-typed overload of the scalar oracle in edgeworth.hpp.
inline double semi_analytic_eq(const qsim::ShrinkMean& f, const dist::MomentSpec& spec,
                               const qsim::QConfig& cfg, ClampStats* stats = nullptr) {
    auto rc = qsim::resolve_config(cfg, qsim::EstimatorFamily{f}, spec);
    return semi_analytic_eq(f.c, f.d, spec, cfg.epsilon, rc.n_min, rc.n_max, stats);
}

}  // namespace qmiss::edgeworth
