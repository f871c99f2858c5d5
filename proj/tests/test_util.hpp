#pragma once

#include <cmath>
#include <vector>

#include "cptlaw/cptlaw.hpp"

namespace cptlaw::testutil {

// Random but well-scaled parameters: every term is finite and the gate stays
// clear of its clamp so derivatives exist everywhere we probe.
inline LawParams draw_params(LawForm form, Rng& rng) {
    LawParams p;
    p.E = rng.uniform(0.5, 3.0);
    p.A = rng.log_uniform(1.0, 500.0);
    p.alpha = rng.uniform(0.1, 0.6);
    p.B = rng.log_uniform(0.5, 100.0);
    p.beta = rng.uniform(0.05, 0.6);
    p.nu = rng.uniform(0.02, 0.8);
    p.C = rng.log_uniform(1e-3, 0.5);
    p.gamma = rng.uniform(0.1, 1.0);
    if (has_floor(form)) {
        p.F = rng.log_uniform(0.05, 5.0);
        p.eta = rng.uniform(0.1, 1.2);
    }
    if (has_gate(form)) {
        p.lambda = rng.uniform(0.05, 0.9);
        p.zeta = rng.uniform(-4.0, 4.0);
    }
    return p;
}

inline EvalPoint draw_point(Rng& rng) {
    EvalPoint x;
    x.model_params = rng.log_uniform(1e8, 1e10);
    x.adapt_tokens = rng.log_uniform(1e8, 1e12);
    x.replay_ratio = clip_replay(rng.uniform(0.05, 0.95));
    x.ptpp = rng.log_uniform(5.0, 500.0);
    return x;
}

inline double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

// ||a-b|| / max(||b||, tiny)
inline double vec_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        norm += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-300);
}

// Central finite differences of the fit objective w.r.t. active params.
inline std::vector<double> fd_objective_grad(const LawParams& p, LawForm form,
                                             const std::vector<Measurement>& slice,
                                             double delta) {
    std::vector<double> grad;
    for (int id = 0; id < kNumParams; ++id) {
        if (!param_active(form, id)) continue;
        const double h = 1e-6 * std::max(1.0, std::abs(p[id]));
        LawParams lo = p, hi = p;
        lo[id] -= h;
        hi[id] += h;
        grad.push_back((objective(hi, form, slice, delta) - objective(lo, form, slice, delta)) /
                       (2.0 * h));
    }
    return grad;
}

inline std::vector<double> fd_law_grad(const LawParams& p, LawForm form, const EvalPoint& x) {
    std::vector<double> grad;
    for (int id = 0; id < kNumParams; ++id) {
        if (!param_active(form, id)) continue;
        const double h = 1e-6 * std::max(1.0, std::abs(p[id]));
        LawParams lo = p, hi = p;
        lo[id] -= h;
        hi[id] += h;
        grad.push_back((eval_law(form, hi, x) - eval_law(form, lo, x)) / (2.0 * h));
    }
    return grad;
}

inline std::vector<double> active_entries(LawForm form, const GradVec& g) {
    std::vector<double> out;
    for (int id = 0; id < kNumParams; ++id)
        if (param_active(form, id)) out.push_back(g[id]);
    return out;
}

} // namespace cptlaw::testutil
