#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cptlaw/dataset.hpp"
#include "cptlaw/laws.hpp"
#include "cptlaw/metrics.hpp"
#include "cptlaw/optimize.hpp"
#include "cptlaw/parallel.hpp"
#include "cptlaw/rng.hpp"

namespace cptlaw {

struct ParamBounds {
    std::array<double, kNumParams> lo;
    std::array<double, kNumParams> hi;

    // Positivity boxes wide enough for any plausible surface; lambda stays
    // strictly below 1 so the gate clamp is a safety net, not the operating
    // regime.
    static ParamBounds defaults() {
        ParamBounds b;
        b.lo.fill(1e-9);
        b.hi.fill(1e6);
        b.lo[kE] = 1e-9;
        b.hi[kE] = 20.0;
        b.lo[kLambda] = 0.0;
        b.hi[kLambda] = 1.0 - 1e-6;
        b.lo[kZeta] = -20.0;
        b.hi[kZeta] = 20.0;
        return b;
    }
};

struct FitConfig {
    double huber_delta = kDefaultHuberDelta;
    ParamBounds bounds = ParamBounds::defaults();
    int n_starts = 64;
    std::uint64_t seed = 0;
    int max_iters = 2000;
    double grad_tol = 1e-10;
    double objective_tol = 1e-14;
    unsigned threads = 0; // 0 = hardware concurrency

    void validate() const {
        if (!(huber_delta > 0.0)) throw ConfigError("huber_delta must be > 0");
        if (n_starts < 1) throw ConfigError("n_starts must be >= 1");
        if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
        for (int i = 0; i < kNumParams; ++i)
            if (!(bounds.lo[i] < bounds.hi[i]))
                throw ConfigError(std::string("bounds for ") + std::string(kParamNames[i]) +
                                  " must satisfy lo < hi");
    }
};

struct StartOutcome {
    double objective = std::numeric_limits<double>::quiet_NaN();
    double pg_inf = std::numeric_limits<double>::quiet_NaN();
    int iters = 0;
    OptStatus status = OptStatus::non_finite;
};

struct FitResult {
    LawForm form = LawForm::DcptBaseline;
    LawParams params;
    double objective = std::numeric_limits<double>::quiet_NaN();
    bool converged = false;
    int n_iters = 0;
    int best_start_index = -1;
    std::uint64_t seed = 0;
    std::vector<StartOutcome> starts; // per-start final objectives and diagnostics
};

namespace detail {

// Measurement slice with cached log coordinates; shared by objective and
// gradient evaluations inside the optimizer loop.
struct PreparedSlice {
    std::vector<PreparedPoint> points;
    std::vector<double> ln_loss;
    double min_loss = 0.0;

    static PreparedSlice from(std::span<const Measurement> rows) {
        if (rows.empty()) throw DataError("fit slice is empty");
        PreparedSlice s;
        s.points.reserve(rows.size());
        s.ln_loss.reserve(rows.size());
        s.min_loss = std::numeric_limits<double>::infinity();
        const Domain tag = rows.front().domain;
        for (const Measurement& m : rows) {
            if (m.domain != tag)
                throw DataError("fit slice mixes source and target measurements");
            if (!(m.adapt_tokens > 0.0))
                throw DataError("fit slice contains a zero-token row; the law is singular at D=0");
            if (!(m.loss > 0.0)) throw DataError("fit slice contains a non-positive loss");
            s.points.push_back(PreparedPoint::from(m.point()));
            s.ln_loss.push_back(std::log(m.loss));
            s.min_loss = std::min(s.min_loss, m.loss);
        }
        return s;
    }
};

inline std::vector<int> active_ids(LawForm form) {
    std::vector<int> ids;
    for (int i = 0; i < kNumParams; ++i)
        if (param_active(form, i)) ids.push_back(i);
    return ids;
}

inline double objective_impl(LawForm form, const LawParams& p, const PreparedSlice& slice,
                             double delta, std::span<const int> ids, double* grad_out) {
    const std::size_t n = slice.points.size();
    double sum = 0.0;
    GradVec law_grad;
    if (grad_out)
        for (std::size_t k = 0; k < ids.size(); ++k) grad_out[k] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double pred = eval_core(form, p, slice.points[i], grad_out ? &law_grad : nullptr);
        assert(pred > 0.0);
        const double r = std::log(pred) - slice.ln_loss[i];
        sum += huber(r, delta);
        if (grad_out) {
            const double w = d_huber(r, delta) / (pred * static_cast<double>(n));
            for (std::size_t k = 0; k < ids.size(); ++k) grad_out[k] += w * law_grad[ids[k]];
        }
    }
    return sum / static_cast<double>(n);
}

} // namespace detail

// Mean Huber penalty on log residuals of the law against a slice.
inline double objective(const LawParams& p, LawForm form, std::span<const Measurement> slice,
                        double delta = kDefaultHuberDelta) {
    validate_params(form, p);
    const auto prepared = detail::PreparedSlice::from(slice);
    const auto ids = detail::active_ids(form);
    return detail::objective_impl(form, p, prepared, delta, ids, nullptr);
}

// Objective gradient with respect to the active parameters, in canonical
// parameter order.
inline std::vector<double> objective_grad(const LawParams& p, LawForm form,
                                          std::span<const Measurement> slice,
                                          double delta = kDefaultHuberDelta) {
    validate_params(form, p);
    const auto prepared = detail::PreparedSlice::from(slice);
    const auto ids = detail::active_ids(form);
    std::vector<double> grad(ids.size());
    detail::objective_impl(form, p, prepared, delta, ids, grad.data());
    return grad;
}

// Deterministic multistart initialization. Draw order is the canonical
// parameter order restricted to the form's active set, so a given seed always
// produces the same starts.
inline std::vector<LawParams> multistart_init(const FitConfig& cfg, LawForm form,
                                              std::span<const Measurement> slice) {
    cfg.validate();
    double min_loss = std::numeric_limits<double>::infinity();
    for (const Measurement& m : slice) min_loss = std::min(min_loss, m.loss);
    if (!(min_loss > 0.0) || !std::isfinite(min_loss))
        throw DataError("multistart_init: slice must contain positive losses");

    Rng rng(cfg.seed);
    std::vector<LawParams> starts;
    starts.reserve(static_cast<std::size_t>(cfg.n_starts));
    for (int s = 0; s < cfg.n_starts; ++s) {
        LawParams p;
        for (int id = 0; id < kNumParams; ++id) {
            if (!param_active(form, id)) continue;
            double v = 0.0;
            switch (id) {
                case kE: v = rng.uniform(0.5 * min_loss, min_loss); break;
                case kA:
                case kB:
                case kC:
                case kF: v = rng.log_uniform(1e-3, 1e3); break;
                case kAlpha:
                case kBeta:
                case kNu:
                case kGamma:
                case kEta: v = rng.log_uniform(0.05, 1.5); break;
                case kLambda: v = rng.uniform(0.0, 0.95); break;
                case kZeta: v = rng.uniform(-5.0, 5.0); break;
            }
            p[id] = std::clamp(v, cfg.bounds.lo[id], cfg.bounds.hi[id]);
        }
        starts.push_back(p);
    }
    return starts;
}

namespace detail {

// Coefficients and exponents are multiplicative quantities spanning many
// decades, so the optimizer works on their logarithms; lambda and zeta stay
// linear (lambda's box includes 0, zeta is signed). The box maps onto a box,
// and the original-space projected gradient is still reported for the
// convergence contract.
struct ParamScaling {
    std::vector<int> ids;
    std::vector<bool> log_scale;
    std::vector<double> lo, hi; // transformed box

    ParamScaling(LawForm form, const ParamBounds& bounds) {
        ids = active_ids(form);
        log_scale.resize(ids.size());
        lo.resize(ids.size());
        hi.resize(ids.size());
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const int id = ids[k];
            log_scale[k] = bounds.lo[id] > 0.0;
            lo[k] = log_scale[k] ? std::log(bounds.lo[id]) : bounds.lo[id];
            hi[k] = log_scale[k] ? std::log(bounds.hi[id]) : bounds.hi[id];
        }
    }

    void to_internal(const LawParams& p, std::vector<double>& x) const {
        x.resize(ids.size());
        for (std::size_t k = 0; k < ids.size(); ++k)
            x[k] = log_scale[k] ? std::log(p[ids[k]]) : p[ids[k]];
    }

    void to_params(std::span<const double> x, LawParams& p) const {
        for (std::size_t k = 0; k < ids.size(); ++k)
            p[ids[k]] = log_scale[k] ? std::exp(x[k]) : x[k];
    }
};

// Projected gradient in original parameter space at p.
inline double original_pg_inf(LawForm form, const LawParams& p, const PreparedSlice& prepared,
                              double delta, const ParamScaling& sc, const ParamBounds& bounds) {
    std::vector<double> grad(sc.ids.size());
    objective_impl(form, p, prepared, delta, sc.ids, grad.data());
    double pg = 0.0;
    for (std::size_t k = 0; k < sc.ids.size(); ++k) {
        const int id = sc.ids[k];
        const double v = p[id];
        const double g = grad[k];
        if ((v <= bounds.lo[id] && g > 0.0) || (v >= bounds.hi[id] && g < 0.0)) continue;
        pg = std::max(pg, std::abs(g));
    }
    return pg;
}

} // namespace detail

// Bounded multistart quasi-Newton fit. Starts are optimized independently
// (optionally in parallel); the reported result is the lowest final objective,
// ties broken by start index.
inline FitResult fit(std::span<const Measurement> slice, LawForm form, const FitConfig& cfg = {}) {
    cfg.validate();
    const auto prepared = detail::PreparedSlice::from(slice);
    const detail::ParamScaling scaling(form, cfg.bounds);
    const auto starts = multistart_init(cfg, form, slice);

    BoxLbfgsOptions oopts;
    oopts.max_iters = cfg.max_iters;
    oopts.grad_tol = cfg.grad_tol;
    oopts.f_tol = cfg.objective_tol;

    struct StartRun {
        StartOutcome outcome;
        LawParams params;
    };
    std::vector<StartRun> runs(starts.size());

    detail::parallel_for(starts.size(), cfg.threads, [&](std::size_t s) {
        LawParams p = starts[s];
        auto fg = [&](std::span<const double> x, std::span<double> grad_out) {
            scaling.to_params(x, p);
            const double f = detail::objective_impl(form, p, prepared, cfg.huber_delta,
                                                    scaling.ids, grad_out.data());
            for (std::size_t k = 0; k < scaling.ids.size(); ++k)
                if (scaling.log_scale[k]) grad_out[k] *= p[scaling.ids[k]];
            return f;
        };
        std::vector<double> x0;
        scaling.to_internal(starts[s], x0);
        const BoxLbfgsResult r = box_lbfgs(fg, scaling.lo, scaling.hi, std::move(x0), oopts);

        StartRun run;
        run.params = starts[s];
        scaling.to_params(r.x, run.params);
        run.outcome.objective = r.f;
        run.outcome.pg_inf = std::isfinite(r.f)
                                 ? detail::original_pg_inf(form, run.params, prepared,
                                                           cfg.huber_delta, scaling, cfg.bounds)
                                 : std::numeric_limits<double>::quiet_NaN();
        run.outcome.iters = r.iters;
        run.outcome.status = r.status;
        runs[s] = std::move(run);
    });

    int best = -1;
    for (std::size_t s = 0; s < runs.size(); ++s) {
        const double obj = runs[s].outcome.objective;
        if (!std::isfinite(obj)) continue;
        if (best < 0 || obj < runs[best].outcome.objective) best = static_cast<int>(s);
    }
    if (best < 0) {
        std::string msg = "fit: all " + std::to_string(runs.size()) + " starts diverged; statuses:";
        for (const auto& run : runs)
            msg += run.outcome.status == OptStatus::non_finite ? " non-finite" : " other";
        throw FitError(msg);
    }

    FitResult result;
    result.form = form;
    result.params = runs[best].params;
    result.objective = runs[best].outcome.objective;
    result.converged = runs[best].outcome.pg_inf <= 1e-6;
    result.n_iters = runs[best].outcome.iters;
    result.best_start_index = best;
    result.seed = cfg.seed;
    result.starts.reserve(runs.size());
    for (const auto& run : runs) result.starts.push_back(run.outcome);
    return result;
}

// Fit over the concatenation of train and anchor slices; anchors carry the
// same weight as ordinary points.
inline FitResult fit_with_anchors(std::span<const Measurement> train,
                                  std::span<const Measurement> anchors, LawForm form,
                                  const FitConfig& cfg = {}) {
    if (anchors.empty()) throw ConfigError("fit_with_anchors: anchor slice is empty");
    if (train.empty()) throw DataError("fit_with_anchors: train slice is empty");
    if (anchors.front().domain != train.front().domain)
        throw DataError("fit_with_anchors: anchors and train rows differ in domain");
    std::vector<Measurement> all(train.begin(), train.end());
    all.insert(all.end(), anchors.begin(), anchors.end());
    return fit(all, form, cfg);
}

} // namespace cptlaw
