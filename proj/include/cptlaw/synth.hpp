#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cptlaw/dataset.hpp"
#include "cptlaw/laws.hpp"
#include "cptlaw/rng.hpp"

namespace cptlaw {

// Synthetic loss-surface generator: one measurement per grid point with
// multiplicative log-normal noise, loss = exp(ln law(x) + sigma * z).
struct SynthSpec {
    LawForm form = LawForm::GatedPlusFloor;
    LawParams true_params;
    GridSpec grid;
    // When set, grid.token_points are adaptation tokens per parameter and the
    // raw token count is token_points[j] * N, so every model size spans the
    // same atpp range.
    bool tokens_per_param = false;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    Domain domain_tag = Domain::target;

    void validate() const {
        validate_params(form, true_params);
        grid.validate();
        if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
    }
};

// Deterministic generation: nested loops over (N, r, stage, D) in grid order,
// one noise draw per point in that order.
inline Dataset generate(const SynthSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    Dataset ds;
    ds.source_path = "<synthetic>";
    for (double n : spec.grid.model_sizes) {
        for (double r : spec.grid.replay_ratios) {
            for (double stage : spec.grid.ptpp_stages) {
                for (double t : spec.grid.token_points) {
                    Measurement m;
                    m.model_params = n;
                    m.adapt_tokens = spec.tokens_per_param ? t * n : t;
                    m.replay_ratio = clip_replay(r);
                    m.ptpp = stage;
                    m.domain = spec.domain_tag;
                    const double clean = eval_law(spec.form, spec.true_params, m.point());
                    const double z = rng.normal();
                    m.loss = std::exp(std::log(clean) + spec.noise_sigma * z);
                    ds.rows.push_back(m);
                }
            }
        }
    }
    ds.content_hash = canonical_hash(ds);
    return ds;
}

// Ground-truth constants for the default target-domain fixture. Magnitudes
// are chosen so every term is material at the grid scales: the budget gate
// and floor both move stage 15/31 surfaces visibly away from stage 279.
inline LawParams default_target_truth() {
    LawParams p;
    p.E = 1.45;
    p.A = 90.0;
    p.alpha = 0.30;
    p.B = 6.0;
    p.beta = 0.33;
    p.nu = 0.18;
    p.C = 0.04;
    p.gamma = 0.45;
    p.F = 0.3;
    p.eta = 0.40;
    p.lambda = 0.50;
    p.zeta = 1.0;
    return p;
}

// Stress fixture for form-ranking trials: budget effects large enough that a
// law missing the gate or the floor pays a visible forecasting penalty at the
// held-out stage. Meant to be fitted with at least three training stages;
// with only two, the budget-extrapolation directions of the gated+floor
// family are not identified and rankings degenerate into noise.
inline LawParams ranking_target_truth() {
    LawParams p = default_target_truth();
    p.B = 25.0;
    p.beta = 0.45;
    p.F = 0.9;
    p.lambda = 0.8;
    p.zeta = 0.5;
    return p;
}

// Four-stage variant of the default grid (adds an early stage so fits can
// identify the budget terms before forecasting the late stage).
inline SynthSpec ranking_synth_spec() {
    SynthSpec spec;
    spec.form = LawForm::GatedPlusFloor;
    spec.true_params = ranking_target_truth();
    spec.grid.model_sizes = {2.41e8, 5.17e8, 1.4e9, 8.1e9};
    spec.grid.replay_ratios = {0.10, 0.25, 0.50};
    spec.grid.ptpp_stages = {8.0, 15.0, 31.0, 279.0};
    spec.grid.token_points = log_spaced(0.5, 50.0, 16);
    spec.tokens_per_param = true;
    spec.noise_sigma = 0.005;
    spec.seed = 0;
    spec.domain_tag = Domain::target;
    return spec;
}

// Source-domain fixture (additive-floor family), used by the planner demos:
// higher irreducible loss, shallow data term, strong replay barrier.
inline LawParams default_source_truth() {
    LawParams p;
    p.E = 1.90;
    p.A = 120.0;
    p.alpha = 0.28;
    p.B = 2.2;
    p.beta = 0.22;
    p.nu = 0.05;
    p.C = 0.12;
    p.gamma = 0.55;
    p.F = 1.4;
    p.eta = 0.60;
    return p;
}

// Default synthetic setup: the standard evaluation axes (four model sizes,
// three replay ratios, stages 15/31/279) with 16 log-spaced token budgets per
// (N, r, stage) spanning 0.5-50 adaptation tokens per parameter.
inline SynthSpec default_synth_spec() {
    SynthSpec spec;
    spec.form = LawForm::GatedPlusFloor;
    spec.true_params = default_target_truth();
    spec.grid.model_sizes = {2.41e8, 5.17e8, 1.4e9, 8.1e9};
    spec.grid.replay_ratios = {0.10, 0.25, 0.50};
    spec.grid.ptpp_stages = {15.0, 31.0, 279.0};
    spec.grid.token_points = log_spaced(0.5, 50.0, 16);
    spec.tokens_per_param = true;
    spec.noise_sigma = 0.0;
    spec.seed = 0;
    spec.domain_tag = Domain::target;
    return spec;
}

} // namespace cptlaw
