#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cptlaw/fit.hpp"
#include "cptlaw/laws.hpp"
#include "cptlaw/parallel.hpp"

namespace cptlaw {

enum class ToleranceMode { absolute, relative };

struct PlanConstraints {
    double forgetting_tolerance = 0.02; // delta: nats (absolute) or fraction of baseline (relative)
    ToleranceMode tolerance_mode = ToleranceMode::relative;
    double target_threshold = 0.0; // tau, nats

    void validate() const {
        if (!(forgetting_tolerance >= 0.0)) throw ConfigError("forgetting tolerance must be >= 0");
        // tau = 0 is allowed; every positive-loss law makes it infeasible,
        // and infeasibility is an answer rather than an error.
        if (!(target_threshold >= 0.0)) throw ConfigError("target threshold must be >= 0");
    }
};

struct PlanProblem {
    FitResult src_fit;
    FitResult tgt_fit;
    double model_params = 0.0;
    double ptpp = 0.0;
    SourceBaseline baseline; // pre-adaptation source loss
    PlanConstraints constraints;
    int r_points = 512;      // replay grid resolution, log-spaced in 1-r
    double r_min = 1e-3;
    double atpp_max = 1e3;
    int landscape_atpp_points = 128; // feasibility-grid resolution
    double landscape_atpp_min = 1e-2;
    unsigned threads = 0;

    void validate() const {
        constraints.validate();
        if (!(model_params > 0.0) || !(ptpp > 0.0))
            throw ConfigError("plan: model_params and ptpp must be > 0");
        if (!src_fit.converged || !tgt_fit.converged)
            throw ConfigError("plan: both fits must be converged");
        if (r_points < 2) throw ConfigError("plan: r_points must be >= 2");
        if (!(r_min >= kReplayClipLo && r_min < 1.0)) throw ConfigError("plan: bad r_min");
        if (!(atpp_max > 0.0)) throw ConfigError("plan: atpp_max must be > 0");
        if (landscape_atpp_points < 2 || !(landscape_atpp_min > 0.0) ||
            !(landscape_atpp_min < atpp_max))
            throw ConfigError("plan: bad landscape grid");
        validate_params(src_fit.form, src_fit.params);
        validate_params(tgt_fit.form, tgt_fit.params);
    }
};

// Source-domain loss increase caused by adaptation, relative to the
// unadapted model. May be negative (replay-heavy mixtures can improve it).
inline double forgetting(const FitResult& src_fit, const EvalPoint& x,
                         const SourceBaseline& baseline) {
    const double adapted = eval_law(src_fit.form, src_fit.params, x);
    const double base =
        baseline_source_loss(src_fit.form, src_fit.params, x.model_params, x.ptpp, baseline);
    return adapted - base;
}

inline double flops_for(double model_params, double atpp) {
    return 6.0 * model_params * (atpp * model_params);
}

enum class BindingConstraint { none, source, target, both };

inline std::string_view binding_name(BindingConstraint b) {
    switch (b) {
        case BindingConstraint::none: return "none";
        case BindingConstraint::source: return "source";
        case BindingConstraint::target: return "target";
        case BindingConstraint::both: return "both";
    }
    return "?";
}

struct RatioFeasibility {
    double replay_ratio = 0.0;
    bool feasible = false;
    double atpp = std::numeric_limits<double>::quiet_NaN(); // smallest feasible, if any
    double src_slack = 0.0; // delta_limit - forgetting, at atpp (or at atpp_max if infeasible)
    double tgt_slack = 0.0; // tau - target loss
};

struct LandscapeCell {
    double replay_ratio = 0.0;
    double atpp = 0.0;
    double delta_src = 0.0;
    double target_loss = 0.0;
    double src_slack = 0.0;
    double tgt_slack = 0.0;
    bool feasible = false;
};

struct PlanResult {
    bool feasible = false;
    double atpp_star = std::numeric_limits<double>::quiet_NaN();
    double r_star = std::numeric_limits<double>::quiet_NaN();
    double d_star = std::numeric_limits<double>::quiet_NaN();
    double flops = std::numeric_limits<double>::quiet_NaN();
    BindingConstraint binding = BindingConstraint::none;
    double src_slack = 0.0;
    double tgt_slack = 0.0;
    double baseline_loss = 0.0;  // resolved pre-adaptation source loss
    double delta_limit = 0.0;    // forgetting budget in nats
    std::vector<RatioFeasibility> per_ratio;
    std::vector<LandscapeCell> landscape;
};

namespace detail {

inline constexpr double kAtppSearchMin = 1e-12;

struct ConstraintEval {
    double delta_src;
    double target_loss;
    double src_violation; // delta_src - delta_limit
    double tgt_violation; // target_loss - tau
    double max_violation() const { return std::max(src_violation, tgt_violation); }
};

struct PlanContext {
    const PlanProblem& problem;
    double baseline_loss;
    double delta_limit;

    ConstraintEval at(double r, double atpp) const {
        EvalPoint x{problem.model_params, atpp * problem.model_params, clip_replay(r),
                    problem.ptpp};
        ConstraintEval e;
        e.delta_src = eval_law(problem.src_fit.form, problem.src_fit.params, x) - baseline_loss;
        e.target_loss = eval_law(problem.tgt_fit.form, problem.tgt_fit.params, x);
        e.src_violation = e.delta_src - delta_limit;
        e.tgt_violation = e.target_loss - problem.constraints.target_threshold;
        return e;
    }
};

// Both fitted families are strictly decreasing in D when the data term is
// genuinely present; the planner then solves each ratio by bisection.
inline bool monotone_in_tokens(const FitResult& f) {
    return f.params.B > 0.0 && f.params.beta > 0.0;
}

} // namespace detail

// Smallest atpp in (0, atpp_max] meeting both constraints at a fixed replay
// ratio. Bisection on the max violation when both laws are monotone in D,
// otherwise a dense 4096-point log scan.
inline RatioFeasibility min_feasible_atpp(double r, const PlanProblem& problem) {
    problem.validate();
    const double baseline = baseline_source_loss(problem.src_fit.form, problem.src_fit.params,
                                                 problem.model_params, problem.ptpp,
                                                 problem.baseline);
    const double delta_limit = problem.constraints.tolerance_mode == ToleranceMode::absolute
                                   ? problem.constraints.forgetting_tolerance
                                   : problem.constraints.forgetting_tolerance * baseline;
    detail::PlanContext ctx{problem, baseline, delta_limit};

    RatioFeasibility out;
    out.replay_ratio = clip_replay(r);

    const auto fill = [&](double atpp, const detail::ConstraintEval& e, bool feasible) {
        out.feasible = feasible;
        out.atpp = feasible ? atpp : std::numeric_limits<double>::quiet_NaN();
        out.src_slack = -e.src_violation;
        out.tgt_slack = -e.tgt_violation;
    };

    const detail::ConstraintEval at_max = ctx.at(out.replay_ratio, problem.atpp_max);
    if (at_max.max_violation() > 0.0) {
        fill(problem.atpp_max, at_max, false);
        return out;
    }

    if (detail::monotone_in_tokens(problem.src_fit) && detail::monotone_in_tokens(problem.tgt_fit)) {
        double lo = detail::kAtppSearchMin;
        const detail::ConstraintEval at_lo = ctx.at(out.replay_ratio, lo);
        if (at_lo.max_violation() <= 0.0) {
            fill(lo, at_lo, true);
            return out;
        }
        double hi = problem.atpp_max;
        detail::ConstraintEval at_hi = at_max;
        while (hi / lo > 1.0 + 1e-6) {
            const double mid = std::exp(0.5 * (std::log(lo) + std::log(hi)));
            const detail::ConstraintEval at_mid = ctx.at(out.replay_ratio, mid);
            if (at_mid.max_violation() <= 0.0) {
                hi = mid;
                at_hi = at_mid;
            } else {
                lo = mid;
            }
        }
        fill(hi, at_hi, true); // feasible end of the bracket
        return out;
    }

    // Non-monotone fallback: first feasible point of a dense log grid.
    const int kScan = 4096;
    const double ln_lo = std::log(detail::kAtppSearchMin);
    const double ln_hi = std::log(problem.atpp_max);
    for (int i = 0; i < kScan; ++i) {
        const double a = std::exp(ln_lo + (ln_hi - ln_lo) * static_cast<double>(i) / (kScan - 1));
        const detail::ConstraintEval e = ctx.at(out.replay_ratio, a);
        if (e.max_violation() <= 0.0) {
            fill(a, e, true);
            return out;
        }
    }
    fill(problem.atpp_max, at_max, false);
    return out;
}

// Replay grid: log-spaced in (1 - r) from r_min up to the clip ceiling.
inline std::vector<double> replay_grid(double r_min, int points) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(points));
    const double u_lo = std::log(1.0 - r_min);
    const double u_hi = std::log(1.0 - kReplayClipHi);
    for (int i = 0; i < points; ++i) {
        const double u = u_lo + (u_hi - u_lo) * static_cast<double>(i) / (points - 1);
        out.push_back(clip_replay(1.0 - std::exp(u)));
    }
    return out;
}

// Joint plan: minimize atpp over the replay grid subject to the forgetting
// and target-loss constraints. Ties within 1e-9 relative atpp are broken by
// larger minimum slack, then by smaller replay ratio.
inline PlanResult plan(const PlanProblem& problem) {
    problem.validate();
    const double baseline = baseline_source_loss(problem.src_fit.form, problem.src_fit.params,
                                                 problem.model_params, problem.ptpp,
                                                 problem.baseline);
    const double delta_limit = problem.constraints.tolerance_mode == ToleranceMode::absolute
                                   ? problem.constraints.forgetting_tolerance
                                   : problem.constraints.forgetting_tolerance * baseline;
    detail::PlanContext ctx{problem, baseline, delta_limit};

    PlanResult result;
    result.baseline_loss = baseline;
    result.delta_limit = delta_limit;

    const std::vector<double> ratios = replay_grid(problem.r_min, problem.r_points);
    result.per_ratio.resize(ratios.size());
    detail::parallel_for(ratios.size(), problem.threads, [&](std::size_t i) {
        result.per_ratio[i] = min_feasible_atpp(ratios[i], problem);
    });

    int best = -1;
    for (std::size_t i = 0; i < result.per_ratio.size(); ++i) {
        const RatioFeasibility& cand = result.per_ratio[i];
        if (!cand.feasible) continue;
        if (best < 0) {
            best = static_cast<int>(i);
            continue;
        }
        const RatioFeasibility& cur = result.per_ratio[best];
        if (cand.atpp < cur.atpp * (1.0 - 1e-9)) {
            best = static_cast<int>(i);
        } else if (cand.atpp <= cur.atpp * (1.0 + 1e-9)) {
            const double cand_slack = std::min(cand.src_slack, cand.tgt_slack);
            const double cur_slack = std::min(cur.src_slack, cur.tgt_slack);
            if (cand_slack > cur_slack) best = static_cast<int>(i);
            // equal slack: keep the earlier (smaller) ratio
        }
    }

    if (best >= 0) {
        const RatioFeasibility& b = result.per_ratio[best];
        result.feasible = true;
        result.atpp_star = b.atpp;
        result.r_star = b.replay_ratio;
        result.d_star = b.atpp * problem.model_params;
        result.flops = flops_for(problem.model_params, b.atpp);
        result.src_slack = b.src_slack;
        result.tgt_slack = b.tgt_slack;
        // With monotone constraints the bisection stops just inside the
        // feasible region, so the binding side is the one with less slack.
        const double tol = 1e-9 * std::max(1.0, std::abs(delta_limit) +
                                                    problem.constraints.target_threshold);
        const bool src_tight = b.src_slack <= b.tgt_slack + tol;
        const bool tgt_tight = b.tgt_slack <= b.src_slack + tol;
        result.binding = src_tight && tgt_tight ? BindingConstraint::both
                         : src_tight            ? BindingConstraint::source
                                                : BindingConstraint::target;
    }

    // Landscape for the two heatmap panels (forgetting and target loss).
    const std::vector<double> atpps =
        log_spaced(problem.landscape_atpp_min, problem.atpp_max, problem.landscape_atpp_points);
    result.landscape.reserve(ratios.size() * atpps.size());
    for (double r : ratios) {
        for (double a : atpps) {
            const detail::ConstraintEval e = ctx.at(r, a);
            LandscapeCell cell;
            cell.replay_ratio = clip_replay(r);
            cell.atpp = a;
            cell.delta_src = e.delta_src;
            cell.target_loss = e.target_loss;
            cell.src_slack = -e.src_violation;
            cell.tgt_slack = -e.tgt_violation;
            cell.feasible = e.max_violation() <= 0.0;
            result.landscape.push_back(cell);
        }
    }
    return result;
}

} // namespace cptlaw
