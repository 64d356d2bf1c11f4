#pragma once
// Replication harness: coupled Q-difference experiments over epsilon grids,
// deterministic parallel aggregation, and JSON/CSV persistence.
//
// Seed lineage. Replication r of experiment id e under master seed m draws
// its stream seed as stream_seed(m, fnv1a(e), r) (rng.hpp); per-epsilon runs
// append "@eps=<%.17g>" to the experiment id. Replications are processed in
// fixed blocks of 16 (one lane bank per block); a work queue hands block
// indices to threads, per-block partial sums are stored by block index and
// combined in index order with compensated summation, so results are
// bit-identical for every thread count.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ard.hpp"
#include "brownian.hpp"
#include "dist.hpp"
#include "qsim.hpp"
#include "rng.hpp"

#include "json.hpp"

namespace qmiss::mc {

inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    int64_t n_reps = 0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double truncation_bound_total = 0.0;
    uint64_t master_seed = 0;
    std::string experiment_id;
};

struct ExperimentPlan {
    std::string experiment_id = "ard";
    dist::Generator generator = dist::Exponential{1.0};
    qsim::EstimatorFamily f1 = qsim::ShrinkMean{};
    qsim::EstimatorFamily f2 = qsim::ShrinkMean{};
    std::vector<double> epsilon_grid;  // strictly decreasing
    qsim::CutoffRule cutoff_rule = qsim::CutoffRule::shrinking;
    double a = 1.0;      // fixed-cutoff parameter
    int64_t n_min = 0;   // optional window overrides, 0 = derive
    int64_t n_max = 0;
    int64_t n_reps = 2000;
    uint64_t master_seed = 42;
    std::optional<ard::ArdValue> closed_form_target;
    int threads = 0;  // 0 = hardware concurrency
};

// Default replication counts: shrinkage-mean experiments are light per rep,
// variance-family windows are ~4x heavier at equal epsilon.
inline int64_t default_reps(const qsim::EstimatorFamily& f) {
    return std::holds_alternative<qsim::VarianceDenom>(f) ? 500 : 2000;
}

namespace detail {

inline void parallel_blocks(int64_t n_blocks, int threads,
                            const std::function<void(int64_t)>& fn) {
    int hw = int(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    int t = threads > 0 ? threads : hw;
    if (int64_t(t) > n_blocks) t = int(n_blocks);
    if (t <= 1) {
        for (int64_t b = 0; b < n_blocks; ++b) fn(b);
        return;
    }
    std::atomic<int64_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(size_t(t));
    for (int i = 0; i < t; ++i)
        pool.emplace_back([&] {
            for (;;) {
                int64_t b = next.fetch_add(1);
                if (b >= n_blocks) return;
                fn(b);
            }
        });
    for (auto& th : pool) th.join();
}

struct Kahan {
    double s = 0.0, c = 0.0;
    void add(double v) {
        double y = v - c;
        double t = s + y;
        c = (t - s) - y;
        s = t;
    }
};

inline McEstimate finalize(double s1, double s2, int64_t n, double trunc, uint64_t master,
                           std::string id) {
    McEstimate e;
    e.n_reps = n;
    e.mean = s1 / double(n);
    double var = n > 1 ? (s2 - s1 * s1 / double(n)) / double(n - 1) : 0.0;
    if (var < 0.0) var = 0.0;
    e.std_error = std::sqrt(var / double(n));
    e.ci_lo = e.mean - 1.96 * e.std_error;
    e.ci_hi = e.mean + 1.96 * e.std_error;
    e.truncation_bound_total = trunc;
    e.master_seed = master;
    e.experiment_id = std::move(id);
    return e;
}

}  // namespace detail

// k coupled families on shared streams; each requested diff (i, j) is
// estimated as the replication mean of Q_i - Q_j.
struct CoupleSpec {
    std::vector<qsim::EstimatorFamily> families;
    std::vector<std::pair<int, int>> diffs;
};

inline std::vector<McEstimate> run_couple_experiment(const dist::Generator& g,
                                                     const CoupleSpec& spec,
                                                     const qsim::QConfig& cfg, int64_t n_reps,
                                                     uint64_t master_seed,
                                                     const std::string& experiment_id,
                                                     int threads = 0) {
    if (spec.families.empty()) throw std::invalid_argument("run_couple_experiment: no families");
    if (spec.diffs.empty()) throw std::invalid_argument("run_couple_experiment: no diffs");
    for (auto [i, j] : spec.diffs)
        if (i < 0 || j < 0 || size_t(i) >= spec.families.size() || size_t(j) >= spec.families.size())
            throw std::invalid_argument("run_couple_experiment: diff index out of range");
    if (n_reps < 2) throw std::invalid_argument("run_couple_experiment: n_reps must be >= 2");

    dist::MomentSpec mspec = dist::generator_spec(g);
    auto rc = qsim::resolve_config(cfg, spec.families.front(), mspec);  // budget check up front
    double trunc = 2.0 * qsim::window_tail_bound(rc);

    uint64_t eh = fnv1a(experiment_id);
    size_t nd = spec.diffs.size();
    int64_t n_blocks = (n_reps + qsim::kMaxStreams - 1) / qsim::kMaxStreams;
    std::vector<double> part(size_t(n_blocks) * nd * 2, 0.0);

    detail::parallel_blocks(n_blocks, threads, [&](int64_t b) {
        thread_local qsim::Workspace ws;
        uint64_t seeds[qsim::kMaxStreams];
        int cnt = int(std::min<int64_t>(qsim::kMaxStreams, n_reps - b * qsim::kMaxStreams));
        for (int j = 0; j < cnt; ++j)
            seeds[j] = rng::stream_seed(master_seed, eh, uint64_t(b) * qsim::kMaxStreams + j);
        auto out = qsim::run_couple(spec.families, g, cfg, seeds, cnt, &ws);
        for (size_t d = 0; d < nd; ++d) {
            auto [fi, fj] = spec.diffs[d];
            double s1 = 0.0, s2 = 0.0;
            for (int j = 0; j < cnt; ++j) {
                double D = double(int64_t(out.q[size_t(fi)][size_t(j)]) -
                                  int64_t(out.q[size_t(fj)][size_t(j)]));
                s1 += D;
                s2 += D * D;
            }
            part[(size_t(b) * nd + d) * 2] = s1;
            part[(size_t(b) * nd + d) * 2 + 1] = s2;
        }
    });

    std::vector<McEstimate> out;
    out.reserve(nd);
    for (size_t d = 0; d < nd; ++d) {
        detail::Kahan s1, s2;
        for (int64_t b = 0; b < n_blocks; ++b) {
            s1.add(part[(size_t(b) * nd + d) * 2]);
            s2.add(part[(size_t(b) * nd + d) * 2 + 1]);
        }
        out.push_back(detail::finalize(s1.s, s2.s, n_reps, trunc, master_seed, experiment_id));
    }
    return out;
}

// Mean miss count of a single family (no coupling); used by the CRN
// efficiency comparison and the first-order checks.
inline McEstimate run_count_experiment(const dist::Generator& g, const qsim::EstimatorFamily& f,
                                       const qsim::QConfig& cfg, int64_t n_reps,
                                       uint64_t master_seed, const std::string& experiment_id,
                                       int threads = 0) {
    if (n_reps < 2) throw std::invalid_argument("run_count_experiment: n_reps must be >= 2");
    dist::MomentSpec mspec = dist::generator_spec(g);
    auto rc = qsim::resolve_config(cfg, f, mspec);
    double trunc = qsim::window_tail_bound(rc);

    uint64_t eh = fnv1a(experiment_id);
    int64_t n_blocks = (n_reps + qsim::kMaxStreams - 1) / qsim::kMaxStreams;
    std::vector<double> part(size_t(n_blocks) * 2, 0.0);
    std::vector<qsim::EstimatorFamily> fams{f};

    detail::parallel_blocks(n_blocks, threads, [&](int64_t b) {
        thread_local qsim::Workspace ws;
        uint64_t seeds[qsim::kMaxStreams];
        int cnt = int(std::min<int64_t>(qsim::kMaxStreams, n_reps - b * qsim::kMaxStreams));
        for (int j = 0; j < cnt; ++j)
            seeds[j] = rng::stream_seed(master_seed, eh, uint64_t(b) * qsim::kMaxStreams + j);
        auto out = qsim::run_couple(fams, g, cfg, seeds, cnt, &ws);
        double s1 = 0.0, s2 = 0.0;
        for (int j = 0; j < cnt; ++j) {
            double q = double(out.q[0][size_t(j)]);
            s1 += q;
            s2 += q * q;
        }
        part[size_t(b) * 2] = s1;
        part[size_t(b) * 2 + 1] = s2;
    });

    detail::Kahan s1, s2;
    for (int64_t b = 0; b < n_blocks; ++b) {
        s1.add(part[size_t(b) * 2]);
        s2.add(part[size_t(b) * 2 + 1]);
    }
    return detail::finalize(s1.s, s2.s, n_reps, trunc, master_seed, experiment_id);
}

// One scaled-difference draw per replication, in replication order.
inline std::vector<double> sample_scaled_diffs(const dist::Generator& g,
                                               const qsim::EstimatorFamily& f1,
                                               const qsim::EstimatorFamily& f2,
                                               const qsim::QConfig& cfg, int64_t n_reps,
                                               uint64_t master_seed,
                                               const std::string& experiment_id,
                                               int threads = 0) {
    if (cfg.cutoff_rule != qsim::CutoffRule::shrinking)
        throw std::invalid_argument("sample_scaled_diffs requires the shrinking cutoff");
    if (n_reps < 1) throw std::invalid_argument("sample_scaled_diffs: n_reps must be >= 1");
    uint64_t eh = fnv1a(experiment_id);
    int64_t n_blocks = (n_reps + qsim::kMaxStreams - 1) / qsim::kMaxStreams;
    std::vector<double> out(static_cast<size_t>(n_reps));
    std::vector<qsim::EstimatorFamily> fams{f1, f2};
    detail::parallel_blocks(n_blocks, threads, [&](int64_t b) {
        thread_local qsim::Workspace ws;
        uint64_t seeds[qsim::kMaxStreams];
        int cnt = int(std::min<int64_t>(qsim::kMaxStreams, n_reps - b * qsim::kMaxStreams));
        for (int j = 0; j < cnt; ++j)
            seeds[j] = rng::stream_seed(master_seed, eh, uint64_t(b) * qsim::kMaxStreams + j);
        auto r = qsim::run_couple(fams, g, cfg, seeds, cnt, &ws);
        for (int j = 0; j < cnt; ++j)
            out[size_t(b) * qsim::kMaxStreams + size_t(j)] =
                cfg.epsilon * double(int64_t(r.q[0][size_t(j)]) - int64_t(r.q[1][size_t(j)]));
    });
    return out;
}

struct ArdEpsRow {
    double epsilon = 0.0;
    int64_t n_min = 0, n_max = 0;
    McEstimate est;
};

struct Convergence {
    double extrapolated = 0.0;  // intercept of the linear-in-epsilon fit
    double slope = 0.0;
    bool has_target = false;
    double target = 0.0;
    bool ci_contains_target = false;  // at the smallest epsilon
    // |mean - target| non-increasing along the grid, up to a 2 se(1) + 2 se(2)
    // noise allowance per step; a strict check on noisy means would reject
    // valid runs half the time, this one only flags significant divergence
    bool monotone_trend = false;
    bool pass = false;
};

struct ArdExperimentResult {
    ExperimentPlan plan;
    std::vector<ArdEpsRow> rows;
    Convergence summary;
};

inline ArdExperimentResult run_ard_experiment(const ExperimentPlan& plan) {
    if (plan.epsilon_grid.empty())
        throw std::invalid_argument("ExperimentPlan: empty epsilon_grid");
    for (size_t i = 1; i < plan.epsilon_grid.size(); ++i)
        if (!(plan.epsilon_grid[i] < plan.epsilon_grid[i - 1]))
            throw std::invalid_argument("ExperimentPlan: epsilon_grid must be strictly decreasing");
    if (plan.n_reps < 2) throw std::invalid_argument("ExperimentPlan: n_reps must be >= 2");
    dist::MomentSpec mspec = dist::generator_spec(plan.generator);

    // budget check for every epsilon before any compute
    for (double eps : plan.epsilon_grid) {
        qsim::QConfig cfg{eps, plan.cutoff_rule, plan.a, plan.n_min, plan.n_max};
        (void)qsim::resolve_config(cfg, plan.f1, mspec);
    }

    ArdExperimentResult res;
    res.plan = plan;
    CoupleSpec spec{{plan.f1, plan.f2}, {{0, 1}}};
    for (double eps : plan.epsilon_grid) {
        qsim::QConfig cfg{eps, plan.cutoff_rule, plan.a, plan.n_min, plan.n_max};
        auto rc = qsim::resolve_config(cfg, plan.f1, mspec);
        char tag[48];
        std::snprintf(tag, sizeof tag, "@eps=%.17g", eps);
        auto est = run_couple_experiment(plan.generator, spec, cfg, plan.n_reps,
                                         plan.master_seed, plan.experiment_id + tag,
                                         plan.threads)[0];
        res.rows.push_back({eps, rc.n_min, rc.n_max, est});
    }

    // least-squares line mean(eps) = extrapolated + slope * eps
    size_t k = res.rows.size();
    if (k == 1) {
        res.summary.extrapolated = res.rows[0].est.mean;
    } else {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (const auto& r : res.rows) {
            sx += r.epsilon;
            sy += r.est.mean;
            sxx += r.epsilon * r.epsilon;
            sxy += r.epsilon * r.est.mean;
        }
        double n = double(k);
        double denom = n * sxx - sx * sx;
        res.summary.slope = (n * sxy - sx * sy) / denom;
        res.summary.extrapolated = (sy - res.summary.slope * sx) / n;
    }

    if (plan.closed_form_target) {
        res.summary.has_target = true;
        double t = plan.closed_form_target->value;
        res.summary.target = t;
        const auto& last = res.rows.back().est;
        res.summary.ci_contains_target = last.ci_lo <= t && t <= last.ci_hi;
        res.summary.monotone_trend = true;
        for (size_t i = 1; i < k; ++i) {
            double allow =
                2.0 * (res.rows[i].est.std_error + res.rows[i - 1].est.std_error);
            if (std::fabs(res.rows[i].est.mean - t) >
                std::fabs(res.rows[i - 1].est.mean - t) + allow)
                res.summary.monotone_trend = false;
        }
        res.summary.pass = res.summary.ci_contains_target && (k < 2 || res.summary.monotone_trend);
    } else {
        res.summary.pass = true;
    }
    return res;
}

inline McEstimate run_qlaw_experiment(int64_t paths, const brownian::PathConfig& cfg,
                                      int threads = 0,
                                      const std::string& experiment_id = "qlaw") {
    if (paths < 1) throw std::invalid_argument("run_qlaw_experiment: need at least 1 path");
    double s2 = cfg.sigma * cfg.sigma;
    double T = cfg.horizon > 0.0 ? cfg.horizon : 40.0 * s2;
    uint64_t eh = fnv1a(experiment_id);
    int64_t n_blocks = (paths + qsim::kMaxStreams - 1) / qsim::kMaxStreams;
    std::vector<double> part(size_t(n_blocks) * 2, 0.0);
    detail::parallel_blocks(n_blocks, threads, [&](int64_t b) {
        int cnt = int(std::min<int64_t>(qsim::kMaxStreams, paths - b * qsim::kMaxStreams));
        double s1 = 0.0, sq2 = 0.0;
        for (int j = 0; j < cnt; ++j) {
            brownian::PathConfig pc = cfg;
            pc.seed = rng::stream_seed(cfg.seed, eh, uint64_t(b) * qsim::kMaxStreams + j);
            double q = brownian::simulate_q(pc).q;
            s1 += q;
            sq2 += q * q;
        }
        part[size_t(b) * 2] = s1;
        part[size_t(b) * 2 + 1] = sq2;
    });
    detail::Kahan s1, sq2;
    for (int64_t b = 0; b < n_blocks; ++b) {
        s1.add(part[size_t(b) * 2]);
        sq2.add(part[size_t(b) * 2 + 1]);
    }
    // horizon truncation: Gaussian tail integral beyond T, no 1/eps^2 scaling
    double trunc = edgeworth::tail_bound(T, cfg.sigma, 1.0);
    auto e = detail::finalize(s1.s, sq2.s, paths, trunc, cfg.seed, experiment_id);
    return e;
}

struct CrnReport {
    double coupled_se = 0.0;
    double independent_se = 0.0;
    double variance_ratio = 0.0;  // independent variance / coupled variance
};

// Coupled-difference standard error vs the difference of two independently
// seeded single-family means at equal replication count.
inline CrnReport crn_efficiency(const dist::Generator& g, const qsim::EstimatorFamily& f1,
                                const qsim::EstimatorFamily& f2, const qsim::QConfig& cfg,
                                int64_t n_reps, uint64_t master_seed,
                                const std::string& experiment_id, int threads = 0) {
    CoupleSpec spec{{f1, f2}, {{0, 1}}};
    auto coupled =
        run_couple_experiment(g, spec, cfg, n_reps, master_seed, experiment_id, threads)[0];
    auto a = run_count_experiment(g, f1, cfg, n_reps, master_seed, experiment_id + "#ind1", threads);
    auto b = run_count_experiment(g, f2, cfg, n_reps, master_seed, experiment_id + "#ind2", threads);
    CrnReport r;
    r.coupled_se = coupled.std_error;
    r.independent_se = std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
    r.variance_ratio = (r.independent_se * r.independent_se) /
                       (r.coupled_se * r.coupled_se);
    return r;
}

// ---------------- persistence ----------------

inline std::string fmt17(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.17g", v);
    return b;
}

namespace detail {

using nlohmann::json;

inline json to_json(const dist::Generator& g) {
    json params = json::object();
    if (const auto* e = std::get_if<dist::Exponential>(&g)) params["mean"] = e->mean;
    if (const auto* n = std::get_if<dist::Normal>(&g)) {
        params["mu"] = n->mu;
        params["sigma"] = n->sigma;
    }
    if (const auto* b = std::get_if<dist::Bernoulli>(&g)) params["p"] = b->p;
    if (const auto* s = std::get_if<dist::SmoothedBernoulli>(&g)) {
        params["p"] = s->p;
        params["eta"] = s->eta;
    }
    return {{"family", dist::generator_name(g)}, {"params", params}};
}

inline dist::Generator generator_from_json(const json& j) {
    std::string fam = j.at("family").get<std::string>();
    const json& p = j.at("params");
    if (fam == "exponential") return dist::Exponential{p.at("mean").get<double>()};
    if (fam == "normal") return dist::Normal{p.at("mu").get<double>(), p.at("sigma").get<double>()};
    if (fam == "chisq1") return dist::ChiSquare1{};
    if (fam == "bernoulli") return dist::Bernoulli{p.at("p").get<double>()};
    if (fam == "smoothed-bernoulli")
        return dist::SmoothedBernoulli{p.at("p").get<double>(), p.at("eta").get<double>()};
    throw std::invalid_argument("unknown generator family: " + fam);
}

inline const char* var_scale_name(qsim::VarScale s) {
    switch (s) {
        case qsim::VarScale::variance: return "variance";
        case qsim::VarScale::sd: return "sd";
        case qsim::VarScale::log_scale: return "log";
    }
    return "?";
}

inline qsim::VarScale var_scale_from(const std::string& s) {
    if (s == "variance") return qsim::VarScale::variance;
    if (s == "sd") return qsim::VarScale::sd;
    if (s == "log") return qsim::VarScale::log_scale;
    throw std::invalid_argument("unknown variance scale: " + s);
}

inline ard::TransformTag transform_from(const std::string& s) {
    if (s == "identity") return ard::TransformTag::identity;
    if (s == "sqrt") return ard::TransformTag::sqrt_scale;
    if (s == "log") return ard::TransformTag::log_scale;
    if (s == "square") return ard::TransformTag::square_scale;
    if (s == "custom") return ard::TransformTag::custom;
    throw std::invalid_argument("unknown transform tag: " + s);
}

inline json to_json(const qsim::EstimatorFamily& f) {
    if (const auto* m = std::get_if<qsim::ShrinkMean>(&f))
        return {{"kind", "shrink-mean"}, {"c", m->c}, {"d", m->d}};
    if (const auto* v = std::get_if<qsim::VarianceDenom>(&f))
        return {{"kind", "variance-denom"}, {"c", v->c}, {"scale", var_scale_name(v->scale)}};
    if (const auto* s = std::get_if<qsim::SquaredMean>(&f))
        return {{"kind", "squared-mean"},
                {"d", s->d},
                {"variance_mode",
                 s->variance_mode == qsim::VarianceMode::known ? "known" : "unbiased"}};
    const auto& t = std::get<qsim::Transformed>(f);
    return {{"kind", "transformed"},
            {"c", t.base.c},
            {"d", t.base.d},
            {"h", ard::transform_name(t.h)}};
}

inline qsim::EstimatorFamily family_from_json(const json& j) {
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "shrink-mean")
        return qsim::ShrinkMean{j.at("c").get<double>(), j.at("d").get<double>()};
    if (kind == "variance-denom")
        return qsim::VarianceDenom{j.at("c").get<double>(),
                                   var_scale_from(j.at("scale").get<std::string>())};
    if (kind == "squared-mean")
        return qsim::SquaredMean{j.at("d").get<double>(),
                                 j.at("variance_mode").get<std::string>() == "known"
                                     ? qsim::VarianceMode::known
                                     : qsim::VarianceMode::unbiased};
    if (kind == "transformed")
        return qsim::Transformed{{j.at("c").get<double>(), j.at("d").get<double>()},
                                 transform_from(j.at("h").get<std::string>())};
    throw std::invalid_argument("unknown estimator family kind: " + kind);
}

inline json to_json(const ard::ArdValue& v) {
    json j{{"value", v.value}, {"formula", v.formula},      {"c", v.c},
           {"d", v.d},         {"xi", v.spec.xi},           {"sigma", v.spec.sigma},
           {"gamma", v.spec.gamma}, {"h_ratio", v.h_ratio}};
    if (std::isfinite(v.a)) j["a"] = v.a;
    return j;
}

inline ard::ArdValue ard_value_from_json(const json& j) {
    ard::ArdValue v;
    v.value = j.at("value").get<double>();
    v.formula = j.at("formula").get<std::string>();
    v.c = j.at("c").get<double>();
    v.d = j.at("d").get<double>();
    v.spec = {j.at("xi").get<double>(), j.at("sigma").get<double>(),
              j.at("gamma").get<double>()};
    v.h_ratio = j.at("h_ratio").get<double>();
    if (j.contains("a")) v.a = j.at("a").get<double>();
    return v;
}

}  // namespace detail

inline nlohmann::json to_json(const ArdExperimentResult& r) {
    using nlohmann::json;
    const auto& p = r.plan;
    json j;
    j["experiment_id"] = p.experiment_id;
    j["master_seed"] = p.master_seed;
    j["generator"] = detail::to_json(p.generator);
    j["f1"] = detail::to_json(p.f1);
    j["f2"] = detail::to_json(p.f2);
    j["epsilon_grid"] = p.epsilon_grid;
    j["cutoff_rule"] = p.cutoff_rule == qsim::CutoffRule::fixed ? "fixed" : "shrinking";
    j["a"] = p.a;
    j["n_min"] = p.n_min;
    j["n_max"] = p.n_max;
    j["n_reps"] = p.n_reps;
    j["threads"] = p.threads;
    j["closed_form_target"] =
        p.closed_form_target ? detail::to_json(*p.closed_form_target) : nlohmann::json();
    json rows = json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"epsilon", row.epsilon},
                        {"n_min", row.n_min},
                        {"n_max", row.n_max},
                        {"mean", row.est.mean},
                        {"std_error", row.est.std_error},
                        {"n_reps", row.est.n_reps},
                        {"ci_lo", row.est.ci_lo},
                        {"ci_hi", row.est.ci_hi},
                        {"truncation_bound_total", row.est.truncation_bound_total},
                        {"master_seed", row.est.master_seed},
                        {"experiment_id", row.est.experiment_id}});
    }
    j["rows"] = rows;
    j["summary"] = {{"extrapolated", r.summary.extrapolated},
                    {"slope", r.summary.slope},
                    {"has_target", r.summary.has_target},
                    {"target", r.summary.target},
                    {"ci_contains_target", r.summary.ci_contains_target},
                    {"monotone_trend", r.summary.monotone_trend},
                    {"pass", r.summary.pass}};
    return j;
}

inline ArdExperimentResult from_json(const nlohmann::json& j) {
    ArdExperimentResult r;
    ExperimentPlan& p = r.plan;
    p.experiment_id = j.at("experiment_id").get<std::string>();
    p.master_seed = j.at("master_seed").get<uint64_t>();
    p.generator = detail::generator_from_json(j.at("generator"));
    p.f1 = detail::family_from_json(j.at("f1"));
    p.f2 = detail::family_from_json(j.at("f2"));
    p.epsilon_grid = j.at("epsilon_grid").get<std::vector<double>>();
    p.cutoff_rule = j.at("cutoff_rule").get<std::string>() == "fixed"
                        ? qsim::CutoffRule::fixed
                        : qsim::CutoffRule::shrinking;
    p.a = j.at("a").get<double>();
    p.n_min = j.at("n_min").get<int64_t>();
    p.n_max = j.at("n_max").get<int64_t>();
    p.n_reps = j.at("n_reps").get<int64_t>();
    p.threads = j.at("threads").get<int>();
    if (!j.at("closed_form_target").is_null())
        p.closed_form_target = detail::ard_value_from_json(j.at("closed_form_target"));
    for (const auto& row : j.at("rows")) {
        ArdEpsRow er;
        er.epsilon = row.at("epsilon").get<double>();
        er.n_min = row.at("n_min").get<int64_t>();
        er.n_max = row.at("n_max").get<int64_t>();
        er.est.mean = row.at("mean").get<double>();
        er.est.std_error = row.at("std_error").get<double>();
        er.est.n_reps = row.at("n_reps").get<int64_t>();
        er.est.ci_lo = row.at("ci_lo").get<double>();
        er.est.ci_hi = row.at("ci_hi").get<double>();
        er.est.truncation_bound_total = row.at("truncation_bound_total").get<double>();
        er.est.master_seed = row.at("master_seed").get<uint64_t>();
        er.est.experiment_id = row.at("experiment_id").get<std::string>();
        r.rows.push_back(er);
    }
    const auto& s = j.at("summary");
    r.summary.extrapolated = s.at("extrapolated").get<double>();
    r.summary.slope = s.at("slope").get<double>();
    r.summary.has_target = s.at("has_target").get<bool>();
    r.summary.target = s.at("target").get<double>();
    r.summary.ci_contains_target = s.at("ci_contains_target").get<bool>();
    r.summary.monotone_trend = s.at("monotone_trend").get<bool>();
    r.summary.pass = s.at("pass").get<bool>();
    return r;
}

inline void persist_results(const ArdExperimentResult& r, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("persist_results: cannot open " + path + " for writing");
    f << to_json(r).dump(2) << "\n";
    if (!f) throw std::runtime_error("persist_results: write failed for " + path);
}

inline ArdExperimentResult load_results(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_results: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("load_results: parse error in " + path + ": " + e.what());
    }
    return from_json(j);
}

// Flat plot-ready CSV, one row per epsilon. Header order is fixed.
inline std::string csv_string(const ArdExperimentResult& r) {
    std::string s =
        "experiment_id,epsilon,n_reps,mean,std_error,ci_lo,ci_hi,target,truncation_bound,"
        "master_seed\n";
    for (const auto& row : r.rows) {
        s += r.plan.experiment_id;
        s += ',';
        s += fmt17(row.epsilon);
        s += ',';
        s += std::to_string(row.est.n_reps);
        s += ',';
        s += fmt17(row.est.mean);
        s += ',';
        s += fmt17(row.est.std_error);
        s += ',';
        s += fmt17(row.est.ci_lo);
        s += ',';
        s += fmt17(row.est.ci_hi);
        s += ',';
        if (r.plan.closed_form_target) s += fmt17(r.plan.closed_form_target->value);
        s += ',';
        s += fmt17(row.est.truncation_bound_total);
        s += ',';
        s += std::to_string(r.plan.master_seed);
        s += '\n';
    }
    return s;
}

// exact equality (NaN-tolerant on optional fields), for round-trip checks
inline bool same_double(double a, double b) {
    return a == b || (std::isnan(a) && std::isnan(b));
}

inline bool operator==(const McEstimate& a, const McEstimate& b) {
    return same_double(a.mean, b.mean) && same_double(a.std_error, b.std_error) &&
           a.n_reps == b.n_reps && same_double(a.ci_lo, b.ci_lo) &&
           same_double(a.ci_hi, b.ci_hi) &&
           same_double(a.truncation_bound_total, b.truncation_bound_total) &&
           a.master_seed == b.master_seed && a.experiment_id == b.experiment_id;
}

inline bool operator==(const ArdEpsRow& a, const ArdEpsRow& b) {
    return same_double(a.epsilon, b.epsilon) && a.n_min == b.n_min && a.n_max == b.n_max &&
           a.est == b.est;
}

inline bool operator==(const Convergence& a, const Convergence& b) {
    return same_double(a.extrapolated, b.extrapolated) && same_double(a.slope, b.slope) &&
           a.has_target == b.has_target && same_double(a.target, b.target) &&
           a.ci_contains_target == b.ci_contains_target &&
           a.monotone_trend == b.monotone_trend && a.pass == b.pass;
}

inline bool operator==(const ExperimentPlan& a, const ExperimentPlan& b) {
    bool t = true;
    if (a.closed_form_target.has_value() != b.closed_form_target.has_value()) return false;
    if (a.closed_form_target) {
        const auto& x = *a.closed_form_target;
        const auto& y = *b.closed_form_target;
        t = same_double(x.value, y.value) && x.formula == y.formula && same_double(x.c, y.c) &&
            same_double(x.d, y.d) && same_double(x.spec.xi, y.spec.xi) &&
            same_double(x.spec.sigma, y.spec.sigma) && same_double(x.spec.gamma, y.spec.gamma) &&
            same_double(x.h_ratio, y.h_ratio) && same_double(x.a, y.a);
    }
    return t && a.experiment_id == b.experiment_id && a.generator == b.generator &&
           a.f1 == b.f1 && a.f2 == b.f2 && a.epsilon_grid == b.epsilon_grid &&
           a.cutoff_rule == b.cutoff_rule && same_double(a.a, b.a) && a.n_min == b.n_min &&
           a.n_max == b.n_max && a.n_reps == b.n_reps && a.master_seed == b.master_seed &&
           a.threads == b.threads;
}

inline bool operator==(const ArdExperimentResult& a, const ArdExperimentResult& b) {
    return a.plan == b.plan && a.rows == b.rows && a.summary == b.summary;
}

}  // namespace qmiss::mc
