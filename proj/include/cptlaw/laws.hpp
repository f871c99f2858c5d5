#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include "cptlaw/errors.hpp"

namespace cptlaw {

// Continual-pretraining adaptation loss families. All share an offset, a
// model-size term and a replay barrier; they differ in how the pre-training
// budget (ptpp = pre-training tokens per parameter) enters:
//
//   AdditiveFloor   L = E + A/N^a + B r^nu / D^b          + C/(r+eps)^g + F/ptpp^eta
//   GatedExponent   L = E + A/N^a + B r^nu / D^b_eff      + C/(r+eps)^g
//   GatedPlusFloor  L = E + A/N^a + B r^nu / D^b_eff      + C/(r+eps)^g + F/ptpp^eta
//   DcptBaseline    L = E + A/N^a + B r^nu / D^b          + C/(r+eps)^g
//
// with b_eff = b * (1 - lambda * ptpp^zeta / (1 + ptpp^zeta)), clamped below.
enum class LawForm {
    AdditiveFloor,
    GatedExponent,
    GatedPlusFloor,
    DcptBaseline,
};

inline constexpr double kReplayEps = 1e-5;    // eps in the replay barrier (r+eps)^-gamma
inline constexpr double kBetaEffFloor = 1e-6; // clamp floor for the gated data exponent
inline constexpr double kReplayClipLo = 1e-9;
inline constexpr double kReplayClipHi = 1.0 - 1e-9;

enum ParamId : int {
    kE = 0,
    kA,
    kAlpha,
    kB,
    kBeta,
    kNu,
    kC,
    kGamma,
    kF,
    kEta,
    kLambda,
    kZeta,
    kNumParams,
};

inline constexpr std::array<std::string_view, kNumParams> kParamNames = {
    "E", "A", "alpha", "B", "beta", "nu", "C", "gamma", "F", "eta", "lambda", "zeta",
};

struct LawParams {
    double E = 0.0;
    double A = 0.0;
    double alpha = 0.0;
    double B = 0.0;
    double beta = 0.0;
    double nu = 0.0;
    double C = 0.0;
    double gamma = 0.0;
    double F = 0.0;
    double eta = 0.0;
    double lambda = 0.0;
    double zeta = 0.0;

    double& operator[](int id) {
        switch (id) {
            case kE: return E;
            case kA: return A;
            case kAlpha: return alpha;
            case kB: return B;
            case kBeta: return beta;
            case kNu: return nu;
            case kC: return C;
            case kGamma: return gamma;
            case kF: return F;
            case kEta: return eta;
            case kLambda: return lambda;
            case kZeta: return zeta;
        }
        throw Error("bad parameter id");
    }
    double operator[](int id) const { return const_cast<LawParams&>(*this)[id]; }
};

using GradVec = std::array<double, kNumParams>;

inline bool has_gate(LawForm form) {
    return form == LawForm::GatedExponent || form == LawForm::GatedPlusFloor;
}

inline bool has_floor(LawForm form) {
    return form == LawForm::AdditiveFloor || form == LawForm::GatedPlusFloor;
}

inline bool param_active(LawForm form, int id) {
    switch (id) {
        case kF:
        case kEta:
            return has_floor(form);
        case kLambda:
        case kZeta:
            return has_gate(form);
        default:
            return true; // E, A, alpha, B, beta, nu, C, gamma are shared
    }
}

inline std::string_view form_name(LawForm form) {
    switch (form) {
        case LawForm::AdditiveFloor: return "additive-floor";
        case LawForm::GatedExponent: return "gated-exponent";
        case LawForm::GatedPlusFloor: return "gated-floor";
        case LawForm::DcptBaseline: return "dcpt-baseline";
    }
    return "?";
}

inline LawForm form_from_name(std::string_view name) {
    if (name == "additive-floor") return LawForm::AdditiveFloor;
    if (name == "gated-exponent") return LawForm::GatedExponent;
    if (name == "gated-floor") return LawForm::GatedPlusFloor;
    if (name == "dcpt-baseline") return LawForm::DcptBaseline;
    throw ConfigError("unknown law form '" + std::string(name) +
                      "'; valid forms: additive-floor, gated-exponent, gated-floor, dcpt-baseline");
}

// Rejects params that are invalid for the form: inactive entries must be
// exactly zero (guards against form confusion), active ones non-negative
// (zeta is unconstrained), lambda < 1 so the gate cannot flip sign.
inline void validate_params(LawForm form, const LawParams& p) {
    for (int id = 0; id < kNumParams; ++id) {
        const double v = p[id];
        if (!std::isfinite(v))
            throw ConfigError(std::string("parameter ") + std::string(kParamNames[id]) + " is not finite");
        if (!param_active(form, id)) {
            if (v != 0.0)
                throw ConfigError(std::string("parameter ") + std::string(kParamNames[id]) +
                                  " is inactive for form '" + std::string(form_name(form)) +
                                  "' but nonzero");
            continue;
        }
        if (id != kZeta && v < 0.0)
            throw ConfigError(std::string("parameter ") + std::string(kParamNames[id]) + " must be >= 0");
    }
    if (has_gate(form) && p.lambda >= 1.0)
        throw ConfigError("lambda must lie in [0, 1)");
}

struct EvalPoint {
    double model_params = 0.0; // N
    double adapt_tokens = 0.0; // D
    double replay_ratio = 0.0; // r, clipped
    double ptpp = 0.0;

    void validate() const {
        if (!(model_params > 0.0)) throw ConfigError("eval point: model_params must be > 0");
        if (!(adapt_tokens > 0.0))
            throw ConfigError("eval point: adapt_tokens must be > 0 (the law is singular at D=0; "
                              "use baseline_source_loss for the unadapted model)");
        if (!(ptpp > 0.0)) throw ConfigError("eval point: ptpp must be > 0");
        if (replay_ratio < kReplayClipLo || replay_ratio > kReplayClipHi)
            throw ConfigError("eval point: replay_ratio must lie in the clipped range");
    }
};

inline double clip_replay(double r) {
    if (r < kReplayClipLo) return kReplayClipLo;
    if (r > kReplayClipHi) return kReplayClipHi;
    return r;
}

// Log-space coordinates of an evaluation point. The fit path caches these per
// measurement so every law/gradient evaluation costs a handful of exp calls.
struct PreparedPoint {
    double ln_n;
    double ln_d;
    double ln_r;      // ln of clipped r
    double ln_r_eps;  // ln(r + kReplayEps)
    double ln_ptpp;

    static PreparedPoint from(const EvalPoint& x) {
        x.validate();
        return PreparedPoint{std::log(x.model_params), std::log(x.adapt_tokens),
                             std::log(x.replay_ratio), std::log(x.replay_ratio + kReplayEps),
                             std::log(x.ptpp)};
    }
};

namespace detail {

// logistic(u) without overflow for large |u|
inline double logistic(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

} // namespace detail

// Gate fraction g = ptpp^zeta / (1 + ptpp^zeta), computed as the logistic of
// zeta*ln(ptpp) so it never overflows. g is in (0,1) for finite zeta.
inline double gate_fraction(double zeta, double ln_ptpp) {
    return detail::logistic(zeta * ln_ptpp);
}

// Effective data exponent beta * (1 - lambda*g), clamped at kBetaEffFloor.
inline double beta_eff(double beta, double lambda, double zeta, double ptpp) {
    if (!(ptpp > 0.0)) throw ConfigError("beta_eff: ptpp must be > 0");
    const double g = gate_fraction(zeta, std::log(ptpp));
    return std::max(beta * (1.0 - lambda * g), kBetaEffFloor);
}

namespace detail {

// Shared evaluation core. Fills grad (active entries only) when non-null.
// Callers are expected to have validated params against the form.
inline double eval_core(LawForm form, const LawParams& p, const PreparedPoint& q,
                        GradVec* grad) {
    double g = 0.0;
    double beff = p.beta;
    bool clamped = false;
    if (has_gate(form)) {
        g = gate_fraction(p.zeta, q.ln_ptpp);
        beff = p.beta * (1.0 - p.lambda * g);
        if (beff < kBetaEffFloor) {
            beff = kBetaEffFloor;
            clamped = true;
        }
    }

    const double size_term = p.A * std::exp(-p.alpha * q.ln_n);
    const double data_term = p.B * std::exp(p.nu * q.ln_r - beff * q.ln_d);
    const double barrier_term = p.C * std::exp(-p.gamma * q.ln_r_eps);
    const double floor_term = has_floor(form) ? p.F * std::exp(-p.eta * q.ln_ptpp) : 0.0;
    const double loss = p.E + size_term + data_term + barrier_term + floor_term;

    if (grad) {
        GradVec& d = *grad;
        d.fill(0.0);
        d[kE] = 1.0;
        d[kA] = (p.A != 0.0) ? size_term / p.A : std::exp(-p.alpha * q.ln_n);
        d[kAlpha] = -q.ln_n * size_term;
        const double data_unit = (p.B != 0.0) ? data_term / p.B
                                              : std::exp(p.nu * q.ln_r - beff * q.ln_d);
        d[kB] = data_unit;
        d[kNu] = q.ln_r * data_term;
        const double d_beff = -q.ln_d * data_term;
        if (has_gate(form)) {
            if (!clamped) {
                d[kBeta] = d_beff * (1.0 - p.lambda * g);
                d[kLambda] = d_beff * (-p.beta * g);
                d[kZeta] = d_beff * (-p.beta * p.lambda * g * (1.0 - g) * q.ln_ptpp);
            }
        } else {
            d[kBeta] = d_beff;
        }
        d[kC] = (p.C != 0.0) ? barrier_term / p.C : std::exp(-p.gamma * q.ln_r_eps);
        d[kGamma] = -q.ln_r_eps * barrier_term;
        if (has_floor(form)) {
            d[kF] = (p.F != 0.0) ? floor_term / p.F : std::exp(-p.eta * q.ln_ptpp);
            d[kEta] = -q.ln_ptpp * floor_term;
        }
    }
    return loss;
}

} // namespace detail

// Predicted loss in nats.
inline double eval_law(LawForm form, const LawParams& p, const EvalPoint& x) {
    validate_params(form, p);
    return detail::eval_core(form, p, PreparedPoint::from(x), nullptr);
}

// Partial derivatives of the predicted loss w.r.t. each active parameter;
// inactive entries are zero.
inline GradVec grad_law(LawForm form, const LawParams& p, const EvalPoint& x) {
    validate_params(form, p);
    GradVec grad;
    detail::eval_core(form, p, PreparedPoint::from(x), &grad);
    return grad;
}

enum class BaselineMode { law_limit, measured };

struct SourceBaseline {
    BaselineMode mode = BaselineMode::law_limit;
    double measured_value = 0.0; // only read when mode == measured
};

// Pre-adaptation source loss L_src(N, 0, 1, ptpp). The fitted family is
// singular at D=0, so the law-limit mode drops the data term and evaluates the
// remaining terms at r=1.
inline double baseline_source_loss(LawForm form, const LawParams& p, double model_params,
                                   double ptpp, const SourceBaseline& baseline) {
    if (baseline.mode == BaselineMode::measured) {
        if (!(baseline.measured_value > 0.0))
            throw ConfigError("measured baseline source loss must be > 0");
        return baseline.measured_value;
    }
    validate_params(form, p);
    if (!(model_params > 0.0) || !(ptpp > 0.0))
        throw ConfigError("baseline_source_loss: model_params and ptpp must be > 0");
    double loss = p.E + p.A * std::exp(-p.alpha * std::log(model_params)) +
                  p.C * std::exp(-p.gamma * std::log(1.0 + kReplayEps));
    if (has_floor(form)) loss += p.F * std::exp(-p.eta * std::log(ptpp));
    return loss;
}

} // namespace cptlaw
