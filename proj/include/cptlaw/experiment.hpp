#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cptlaw/dataset.hpp"
#include "cptlaw/fit.hpp"
#include "cptlaw/laws.hpp"
#include "cptlaw/metrics.hpp"

namespace cptlaw {

enum class AnchorPolicyKind { none, from_flags, auto_rule };

struct AnchorPolicy {
    AnchorPolicyKind kind = AnchorPolicyKind::none;
    int n_anchors = 0;       // auto_rule only
    double model_size = 0.0; // auto_rule: 0 means smallest size present
};

// Picks the calibration anchors at an evaluation stage. from_flags returns
// the rows marked is_anchor; auto_rule picks n_anchors rows at one model size
// deterministically: round-robin over replay ratios in ascending order,
// within each ratio token counts at evenly spaced rank positions.
inline std::vector<Measurement> select_anchors(const Dataset& ds, double stage, Domain domain,
                                               const AnchorPolicy& policy) {
    if (policy.kind == AnchorPolicyKind::none) return {};

    std::vector<Measurement> at_stage;
    bool stage_present = false;
    for (const Measurement& m : ds.rows) {
        if (m.ptpp == stage) stage_present = true;
        if (m.ptpp == stage && m.domain == domain && m.adapt_tokens > 0.0)
            at_stage.push_back(m);
    }
    if (!stage_present)
        throw DataError("select_anchors: stage " + detail::format_double(stage) +
                        " absent from dataset");

    if (policy.kind == AnchorPolicyKind::from_flags) {
        std::vector<Measurement> flagged;
        for (const Measurement& m : at_stage)
            if (m.is_anchor) flagged.push_back(m);
        if (flagged.empty())
            throw DataError("select_anchors: no rows flagged is_anchor at stage " +
                            detail::format_double(stage));
        return flagged;
    }

    if (policy.n_anchors < 1) throw ConfigError("auto anchor rule needs n_anchors >= 1");
    double size = policy.model_size;
    if (size == 0.0) {
        size = std::numeric_limits<double>::infinity();
        for (const Measurement& m : at_stage) size = std::min(size, m.model_params);
    }
    std::map<double, std::vector<Measurement>> by_ratio; // ascending r
    for (const Measurement& m : at_stage)
        if (m.model_params == size) by_ratio[m.replay_ratio].push_back(m);

    std::size_t total = 0;
    for (auto& [r, rows] : by_ratio) {
        std::sort(rows.begin(), rows.end(), [](const Measurement& a, const Measurement& b) {
            return a.adapt_tokens < b.adapt_tokens;
        });
        total += rows.size();
    }
    if (total < static_cast<std::size_t>(policy.n_anchors))
        throw DataError("select_anchors: requested " + std::to_string(policy.n_anchors) +
                        " anchors but only " + std::to_string(total) + " candidates at size " +
                        detail::format_double(size));

    // Round-robin quota over ratios.
    std::map<double, std::size_t> quota;
    std::size_t assigned = 0;
    while (assigned < static_cast<std::size_t>(policy.n_anchors)) {
        for (const auto& [r, rows] : by_ratio) {
            if (assigned == static_cast<std::size_t>(policy.n_anchors)) break;
            if (quota[r] < rows.size()) {
                ++quota[r];
                ++assigned;
            }
        }
    }

    std::vector<Measurement> anchors;
    for (const auto& [r, rows] : by_ratio) {
        const std::size_t k = quota[r];
        if (k == 0) continue;
        const std::size_t m = rows.size();
        if (k == 1) {
            anchors.push_back(rows[(m - 1) / 2]);
            continue;
        }
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t idx = static_cast<std::size_t>(
                std::llround(static_cast<double>(j) * static_cast<double>(m - 1) /
                             static_cast<double>(k - 1)));
            anchors.push_back(rows[idx]);
        }
    }
    return anchors;
}

struct ExperimentSpec {
    std::vector<double> train_stages;
    std::vector<double> eval_stages;
    std::vector<LawForm> forms;
    Domain domain = Domain::target;
    AnchorPolicy anchors;
    FitConfig fit_config;

    void validate() const {
        if (forms.empty()) throw ConfigError("experiment: no law forms requested");
        if (train_stages.empty() || eval_stages.empty())
            throw ConfigError("experiment: stage sets must be non-empty");
        for (double t : train_stages)
            for (double e : eval_stages)
                if (t == e)
                    throw ConfigError("experiment: stage " + detail::format_double(t) +
                                      " is in both train and eval sets");
        fit_config.validate();
    }
};

// Bookkeeping proving protocol hygiene: which rows were fitted, evaluated,
// used as anchors, or dropped.
struct ExperimentAudit {
    std::size_t n_domain_rows = 0;
    std::size_t n_train = 0;
    std::size_t n_eval = 0;
    std::size_t n_anchors = 0;
    std::size_t n_dropped_other_stage = 0;
    std::size_t n_dropped_zero_tokens = 0;
};

enum TableColumn : int {
    kColHuber = 0,
    kColRmse,
    kColMae,
    kColMape,
    kColIntercept,
    kColSlope,
    kNumColumns,
};

struct TableRow {
    LawForm form;
    MetricsReport metrics;
    std::optional<MetricsReport> metrics_anchored;
};

struct ComparisonTable {
    std::string mode = "transfer"; // transfer | oracle
    Domain domain = Domain::target;
    std::vector<double> train_stages;
    std::vector<double> eval_stages;
    std::vector<TableRow> rows;
    std::array<int, kNumColumns> best{};          // row index of the best cell per column
    std::array<int, kNumColumns> best_anchored{}; // only meaningful when has_anchored
    bool has_anchored = false;
    ExperimentAudit audit;
};

namespace detail {

inline double column_badness(const MetricsReport& m, int col) {
    switch (col) {
        case kColHuber: return m.huber_log;
        case kColRmse: return m.rmse_log;
        case kColMae: return m.mae_rel;
        case kColMape: return m.mape_clip;
        case kColIntercept: return std::abs(m.intercept);
        case kColSlope: return std::abs(m.slope - 1.0);
    }
    return 0.0;
}

template <class Get>
inline std::array<int, kNumColumns> best_flags(const std::vector<TableRow>& rows, Get&& get) {
    std::array<int, kNumColumns> best;
    best.fill(-1);
    for (int col = 0; col < kNumColumns; ++col) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const MetricsReport* m = get(rows[i]);
            if (!m) continue;
            if (best[col] < 0 ||
                column_badness(*m, col) < column_badness(*get(rows[best[col]]), col))
                best[col] = static_cast<int>(i);
        }
    }
    return best;
}

} // namespace detail

struct FormOutcome {
    LawForm form;
    FitResult fit;
    std::optional<FitResult> fit_anchored;
    std::vector<double> predictions; // aligned with eval rows, plain fit
    std::vector<double> predictions_anchored;
};

struct ExperimentResult {
    ComparisonTable table;
    std::vector<FormOutcome> outcomes;
    std::vector<Measurement> eval_rows; // anchors removed
    std::vector<Measurement> anchor_rows;
};

// The transfer protocol: fit each form on the train stages (optionally with
// anchors from the evaluation stage), forecast every remaining eval-stage
// measurement, and tabulate the metric suite. Anchor rows never appear among
// the evaluation residuals.
inline ExperimentResult run_experiment(const Dataset& ds, const ExperimentSpec& spec) {
    spec.validate();

    ExperimentResult result;
    ExperimentAudit& audit = result.table.audit;

    const std::vector<Measurement> domain_rows = filter_domain(ds, spec.domain);
    audit.n_domain_rows = domain_rows.size();

    const std::set<double> train_set(spec.train_stages.begin(), spec.train_stages.end());
    const std::set<double> eval_set(spec.eval_stages.begin(), spec.eval_stages.end());

    std::vector<Measurement> train, eval_all;
    for (const Measurement& m : domain_rows) {
        if (!(m.adapt_tokens > 0.0)) {
            ++audit.n_dropped_zero_tokens;
            continue;
        }
        if (train_set.count(m.ptpp))
            train.push_back(m);
        else if (eval_set.count(m.ptpp))
            eval_all.push_back(m);
        else
            ++audit.n_dropped_other_stage;
    }
    if (train.empty()) throw DataError("experiment: train slice is empty");
    if (eval_all.empty()) throw DataError("experiment: eval slice is empty");

    std::vector<Measurement> anchors;
    if (spec.anchors.kind != AnchorPolicyKind::none) {
        if (spec.eval_stages.size() != 1)
            throw ConfigError("anchor policies need exactly one evaluation stage");
        anchors = select_anchors(ds, spec.eval_stages.front(), spec.domain, spec.anchors);
    }
    audit.n_anchors = anchors.size();

    // Remove anchors from the evaluation set by key.
    std::set<detail::RowKey> anchor_keys;
    for (const Measurement& a : anchors) anchor_keys.insert(detail::row_key(a));
    std::vector<Measurement> eval_rows;
    for (const Measurement& m : eval_all)
        if (!anchor_keys.count(detail::row_key(m))) eval_rows.push_back(m);
    if (eval_rows.empty()) throw DataError("experiment: every eval row was claimed as an anchor");

    audit.n_train = train.size();
    audit.n_eval = eval_rows.size();

    std::vector<double> obs;
    obs.reserve(eval_rows.size());
    for (const Measurement& m : eval_rows) obs.push_back(m.loss);

    result.table.mode = "transfer";
    result.table.domain = spec.domain;
    result.table.train_stages = spec.train_stages;
    result.table.eval_stages = spec.eval_stages;
    result.table.has_anchored = !anchors.empty();
    result.eval_rows = eval_rows;
    result.anchor_rows = anchors;

    for (LawForm form : spec.forms) {
        FormOutcome out;
        out.form = form;
        out.fit = fit(train, form, spec.fit_config);
        out.predictions.reserve(eval_rows.size());
        for (const Measurement& m : eval_rows)
            out.predictions.push_back(eval_law(form, out.fit.params, m.point()));

        TableRow row;
        row.form = form;
        row.metrics = metrics_report(out.predictions, obs, spec.fit_config.huber_delta);

        if (!anchors.empty()) {
            out.fit_anchored = fit_with_anchors(train, anchors, form, spec.fit_config);
            out.predictions_anchored.reserve(eval_rows.size());
            for (const Measurement& m : eval_rows)
                out.predictions_anchored.push_back(
                    eval_law(form, out.fit_anchored->params, m.point()));
            row.metrics_anchored =
                metrics_report(out.predictions_anchored, obs, spec.fit_config.huber_delta);
        }

        result.table.rows.push_back(std::move(row));
        result.outcomes.push_back(std::move(out));
    }

    result.table.best = detail::best_flags(result.table.rows,
                                           [](const TableRow& r) { return &r.metrics; });
    if (result.table.has_anchored)
        result.table.best_anchored =
            detail::best_flags(result.table.rows, [](const TableRow& r) {
                return r.metrics_anchored ? &*r.metrics_anchored : nullptr;
            });
    return result;
}

struct OracleResult {
    FitResult fit;
    MetricsReport metrics;
    std::vector<Measurement> rows;
    std::vector<double> predictions;
};

// Fits and evaluates on the same stage. In-sample by construction; serves
// only as an upper bound on what transfer fits could achieve there.
inline OracleResult run_oracle(const Dataset& ds, double stage, Domain domain, LawForm form,
                               const FitConfig& cfg = {}) {
    std::vector<Measurement> slice;
    for (const Measurement& m : filter_domain(ds, domain))
        if (m.ptpp == stage && m.adapt_tokens > 0.0) slice.push_back(m);
    if (slice.empty())
        throw DataError("oracle: no usable rows at stage " + detail::format_double(stage));

    OracleResult result;
    result.fit = fit(slice, form, cfg);
    std::vector<double> obs;
    for (const Measurement& m : slice) {
        result.predictions.push_back(eval_law(form, result.fit.params, m.point()));
        obs.push_back(m.loss);
    }
    result.metrics = metrics_report(result.predictions, obs, cfg.huber_delta);
    result.rows = std::move(slice);
    return result;
}

struct GridPrediction {
    EvalPoint point;
    double predicted_loss;
};

// Dense predictions across (N, r, D) at one stage, for plotting.
inline std::vector<GridPrediction> predict_grid(const FitResult& fit, const GridSpec& grid,
                                                double stage) {
    grid.validate();
    if (!(stage > 0.0)) throw ConfigError("predict_grid: stage must be > 0");
    std::vector<GridPrediction> out;
    out.reserve(grid.model_sizes.size() * grid.replay_ratios.size() * grid.token_points.size());
    for (double n : grid.model_sizes)
        for (double r : grid.replay_ratios)
            for (double d : grid.token_points) {
                GridPrediction gp;
                gp.point = EvalPoint{n, d, clip_replay(r), stage};
                gp.predicted_loss = eval_law(fit.form, fit.params, gp.point);
                out.push_back(gp);
            }
    return out;
}

// Aligned plain-text rendering in the usual comparison-table style
// (scientific notation with a two-digit mantissa for error columns).
inline std::string render_table_text(const ComparisonTable& table) {
    auto sci = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2e", v);
        return std::string(buf);
    };
    auto fixed = [](double v, int digits) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
        return std::string(buf);
    };

    std::vector<std::vector<std::string>> grids; // one per variant
    std::vector<std::string> titles;
    const int variants = table.has_anchored ? 2 : 1;
    for (int v = 0; v < variants; ++v) {
        titles.push_back(std::string(table.mode) + (v == 1 ? " (anchored)" : "") + ", domain " +
                         std::string(domain_name(table.domain)));
    }

    std::string out;
    for (int v = 0; v < variants; ++v) {
        const auto& best = (v == 0) ? table.best : table.best_anchored;
        out += titles[v] + "\n";
        std::vector<std::array<std::string, 8>> cells;
        cells.push_back({"form", "huber_log", "rmse_log", "mae_rel", "mape_clip", "intercept",
                         "slope", "n"});
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
            const MetricsReport* m =
                (v == 0) ? &table.rows[i].metrics
                         : (table.rows[i].metrics_anchored ? &*table.rows[i].metrics_anchored
                                                           : nullptr);
            if (!m) continue;
            auto mark = [&](int col, std::string s) {
                return best[col] == static_cast<int>(i) ? s + "*" : s;
            };
            cells.push_back({std::string(form_name(table.rows[i].form)),
                             mark(kColHuber, sci(m->huber_log)), mark(kColRmse, sci(m->rmse_log)),
                             mark(kColMae, sci(m->mae_rel)), mark(kColMape, sci(m->mape_clip)),
                             mark(kColIntercept, fixed(m->intercept, 2)),
                             mark(kColSlope, fixed(m->slope, 3)), std::to_string(m->n_points)});
        }
        std::array<std::size_t, 8> width{};
        for (const auto& row : cells)
            for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
        for (const auto& row : cells) {
            for (std::size_t c = 0; c < row.size(); ++c) {
                out += row[c];
                if (c + 1 < row.size()) out += std::string(width[c] - row[c].size() + 2, ' ');
            }
            out += '\n';
        }
        if (v + 1 < variants) out += '\n';
    }
    out += "(* best per column; n_train=" + std::to_string(table.audit.n_train) +
           ", n_eval=" + std::to_string(table.audit.n_eval) +
           ", n_anchors=" + std::to_string(table.audit.n_anchors) + ")\n";
    return out;
}

} // namespace cptlaw
