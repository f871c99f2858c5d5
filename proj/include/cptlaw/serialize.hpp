#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cptlaw/experiment.hpp"
#include "cptlaw/fit.hpp"
#include "cptlaw/laws.hpp"
#include "cptlaw/metrics.hpp"
#include "cptlaw/planner.hpp"

namespace cptlaw {

using ordered_json = nlohmann::ordered_json;

inline ordered_json params_to_json(LawForm form, const LawParams& p) {
    validate_params(form, p);
    ordered_json j;
    j["form"] = std::string(form_name(form));
    for (int id = 0; id < kNumParams; ++id)
        if (param_active(form, id)) j[std::string(kParamNames[id])] = p[id];
    return j;
}

// Accepts a flat symbol-keyed object; `form` may come from the object itself
// or from the caller. Inactive keys must be absent.
inline LawParams params_from_json(const ordered_json& j, LawForm form) {
    LawParams p;
    for (const auto& [key, value] : j.items()) {
        if (key == "form") continue;
        bool known = false;
        for (int id = 0; id < kNumParams; ++id) {
            if (key == kParamNames[id]) {
                if (!param_active(form, id))
                    throw ConfigError("parameter '" + key + "' is inactive for form '" +
                                      std::string(form_name(form)) + "' and must be absent");
                p[id] = value.get<double>();
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError("unknown parameter key '" + key + "'");
    }
    validate_params(form, p);
    return p;
}

inline ordered_json fit_result_to_json(const FitResult& r) {
    ordered_json j;
    j["form"] = std::string(form_name(r.form));
    ordered_json params;
    for (int id = 0; id < kNumParams; ++id)
        if (param_active(r.form, id)) params[std::string(kParamNames[id])] = r.params[id];
    j["params"] = params;
    j["objective"] = r.objective;
    j["converged"] = r.converged;
    j["n_iters"] = r.n_iters;
    j["best_start_index"] = r.best_start_index;
    j["seed"] = r.seed;
    return j;
}

inline FitResult fit_result_from_json(const ordered_json& j) {
    FitResult r;
    r.form = form_from_name(j.at("form").get<std::string>());
    r.params = params_from_json(j.at("params"), r.form);
    r.objective = j.at("objective").get<double>();
    r.converged = j.at("converged").get<bool>();
    r.n_iters = j.value("n_iters", 0);
    r.best_start_index = j.value("best_start_index", -1);
    r.seed = j.value("seed", std::uint64_t{0});
    return r;
}

inline ordered_json metrics_to_json(const MetricsReport& m) {
    ordered_json j;
    j["huber_log"] = m.huber_log;
    j["rmse_log"] = m.rmse_log;
    j["mae_rel"] = m.mae_rel;
    j["mape_clip"] = m.mape_clip;
    j["intercept"] = m.intercept;
    j["slope"] = m.slope;
    j["n"] = m.n_points;
    return j;
}

inline MetricsReport metrics_from_json(const ordered_json& j) {
    MetricsReport m;
    m.huber_log = j.at("huber_log").get<double>();
    m.rmse_log = j.at("rmse_log").get<double>();
    m.mae_rel = j.at("mae_rel").get<double>();
    m.mape_clip = j.at("mape_clip").get<double>();
    m.intercept = j.at("intercept").get<double>();
    m.slope = j.at("slope").get<double>();
    m.n_points = j.at("n").get<std::size_t>();
    return m;
}

inline ordered_json table_to_json(const ComparisonTable& t) {
    static constexpr std::array<std::string_view, kNumColumns> kColNames = {
        "huber_log", "rmse_log", "mae_rel", "mape_clip", "intercept", "slope"};
    ordered_json j;
    j["mode"] = t.mode;
    j["domain"] = std::string(domain_name(t.domain));
    j["train_stages"] = t.train_stages;
    j["eval_stages"] = t.eval_stages;
    ordered_json rows = ordered_json::array();
    for (const TableRow& r : t.rows) {
        ordered_json row;
        row["form"] = std::string(form_name(r.form));
        row["metrics"] = metrics_to_json(r.metrics);
        if (r.metrics_anchored) row["metrics_anchored"] = metrics_to_json(*r.metrics_anchored);
        rows.push_back(row);
    }
    j["rows"] = rows;
    auto flags = [&](const std::array<int, kNumColumns>& best) {
        ordered_json f;
        for (int col = 0; col < kNumColumns; ++col)
            f[std::string(kColNames[col])] =
                best[col] >= 0 ? std::string(form_name(t.rows[best[col]].form)) : "";
        return f;
    };
    j["best"] = flags(t.best);
    if (t.has_anchored) j["best_anchored"] = flags(t.best_anchored);
    ordered_json audit;
    audit["n_domain_rows"] = t.audit.n_domain_rows;
    audit["n_train"] = t.audit.n_train;
    audit["n_eval"] = t.audit.n_eval;
    audit["n_anchors"] = t.audit.n_anchors;
    audit["n_dropped_other_stage"] = t.audit.n_dropped_other_stage;
    audit["n_dropped_zero_tokens"] = t.audit.n_dropped_zero_tokens;
    j["audit"] = audit;
    return j;
}

inline ordered_json plan_to_json(const PlanResult& p) {
    ordered_json j;
    j["feasible"] = p.feasible;
    if (p.feasible) {
        j["atpp_star"] = p.atpp_star;
        j["r_star"] = p.r_star;
        j["d_star"] = p.d_star;
        j["flops"] = p.flops;
    } else {
        j["atpp_star"] = nullptr;
        j["r_star"] = nullptr;
        j["d_star"] = nullptr;
        j["flops"] = nullptr;
    }
    j["binding_constraint"] = std::string(binding_name(p.binding));
    j["src_slack"] = p.src_slack;
    j["tgt_slack"] = p.tgt_slack;
    j["baseline_loss"] = p.baseline_loss;
    j["delta_limit"] = p.delta_limit;
    ordered_json per_ratio = ordered_json::array();
    for (const RatioFeasibility& r : p.per_ratio) {
        ordered_json row;
        row["r"] = r.replay_ratio;
        row["feasible"] = r.feasible;
        if (r.feasible)
            row["atpp"] = r.atpp;
        else
            row["atpp"] = nullptr;
        row["src_slack"] = r.src_slack;
        row["tgt_slack"] = r.tgt_slack;
        per_ratio.push_back(row);
    }
    j["per_ratio"] = per_ratio;
    return j;
}

inline std::string feasibility_csv(const PlanResult& p) {
    std::string out = "r,atpp,src_slack,tgt_slack,feasible\n";
    for (const LandscapeCell& c : p.landscape) {
        out += detail::format_double(c.replay_ratio);
        out += ',';
        out += detail::format_double(c.atpp);
        out += ',';
        out += detail::format_double(c.src_slack);
        out += ',';
        out += detail::format_double(c.tgt_slack);
        out += ',';
        out += c.feasible ? '1' : '0';
        out += '\n';
    }
    return out;
}

inline std::string forgetting_landscape_csv(const PlanResult& p) {
    std::string out = "r,atpp,delta_l_src\n";
    for (const LandscapeCell& c : p.landscape) {
        out += detail::format_double(c.replay_ratio);
        out += ',';
        out += detail::format_double(c.atpp);
        out += ',';
        out += detail::format_double(c.delta_src);
        out += '\n';
    }
    return out;
}

inline std::string target_landscape_csv(const PlanResult& p) {
    std::string out = "r,atpp,target_loss\n";
    for (const LandscapeCell& c : p.landscape) {
        out += detail::format_double(c.replay_ratio);
        out += ',';
        out += detail::format_double(c.atpp);
        out += ',';
        out += detail::format_double(c.target_loss);
        out += '\n';
    }
    return out;
}

inline std::string predictions_csv(const std::vector<GridPrediction>& preds) {
    std::string out = "model_params,adapt_tokens,replay_ratio,ptpp,pred_loss\n";
    for (const GridPrediction& g : preds) {
        out += detail::format_double(g.point.model_params);
        out += ',';
        out += detail::format_double(g.point.adapt_tokens);
        out += ',';
        out += detail::format_double(g.point.replay_ratio);
        out += ',';
        out += detail::format_double(g.point.ptpp);
        out += ',';
        out += detail::format_double(g.predicted_loss);
        out += '\n';
    }
    return out;
}

namespace detail {

inline void color_ramp(double t, int& red, int& green, int& blue) {
    t = std::clamp(t, 0.0, 1.0);
    // dark blue -> light yellow
    red = static_cast<int>(30 + 225 * t);
    green = static_cast<int>(40 + 200 * t);
    blue = static_cast<int>(120 + 60 * (1.0 - t) - 60 * t);
}

} // namespace detail

// Static heatmap of one landscape field over (atpp, r), infeasible cells
// dimmed, the plan solution marked with a star.
inline std::string plan_svg(const PlanResult& p, const std::string& field) {
    if (p.landscape.empty()) throw ConfigError("plan_svg: empty landscape");
    const bool use_target = field == "target_loss";
    if (!use_target && field != "delta_src")
        throw ConfigError("plan_svg: field must be delta_src or target_loss");

    std::vector<double> a_axis;
    for (const LandscapeCell& c : p.landscape) {
        if (!a_axis.empty() && c.atpp <= a_axis.back()) break;
        a_axis.push_back(c.atpp);
    }
    const std::size_t na = a_axis.size();
    const std::size_t nr = p.landscape.size() / na;
    // keep the raster readable; the CSV carries the full resolution
    const std::size_t stride = std::max<std::size_t>(1, nr / 128);
    const std::size_t nrows = (nr + stride - 1) / stride;

    double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
    for (const LandscapeCell& c : p.landscape) {
        const double v = use_target ? c.target_loss : c.delta_src;
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    if (!(vmax > vmin)) vmax = vmin + 1.0;

    const int cell = 6, margin = 40;
    const int w = margin * 2 + static_cast<int>(na) * cell;
    const int h = margin * 2 + static_cast<int>(nrows) * cell;
    char buf[256];
    std::string svg;
    std::snprintf(buf, sizeof(buf),
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\">\n", w, h);
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"20\" font-size=\"13\">%s over (atpp, replay); star = plan</text>\n",
                  margin, use_target ? "target loss" : "source forgetting");
    svg += buf;

    for (std::size_t ri = 0; ri < nr; ri += stride) {
        const std::size_t row = ri / stride;
        for (std::size_t ai = 0; ai < na; ++ai) {
            const LandscapeCell& c = p.landscape[ri * na + ai];
            const double v = use_target ? c.target_loss : c.delta_src;
            const double t = (v - vmin) / (vmax - vmin);
            int red, green, blue;
            detail::color_ramp(1.0 - t, red, green, blue);
            if (!c.feasible) {
                red /= 3;
                green /= 3;
                blue /= 3;
            }
            std::snprintf(
                buf, sizeof(buf),
                "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"rgb(%d,%d,%d)\"/>\n",
                margin + static_cast<int>(ai) * cell,
                margin + static_cast<int>(nrows - 1 - row) * cell, cell, cell, red, green, blue);
            svg += buf;
        }
    }

    if (p.feasible) {
        // nearest cell to the solution
        std::size_t best_a = 0, best_r = 0;
        double da = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < na; ++i) {
            const double d = std::abs(std::log(a_axis[i]) - std::log(p.atpp_star));
            if (d < da) {
                da = d;
                best_a = i;
            }
        }
        double dr = std::numeric_limits<double>::infinity();
        for (std::size_t row = 0; row < nrows; ++row) {
            const double rr = p.landscape[row * stride * na].replay_ratio;
            const double d = std::abs(rr - p.r_star);
            if (d < dr) {
                dr = d;
                best_r = row;
            }
        }
        const double cx = margin + (static_cast<double>(best_a) + 0.5) * cell;
        const double cy = margin + (static_cast<double>(nrows - 1 - best_r) + 0.5) * cell;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%.1f\" y=\"%.1f\" font-size=\"16\" fill=\"white\" "
                      "text-anchor=\"middle\">*</text>\n",
                      cx, cy + 5.0);
        svg += buf;
    }
    svg += "</svg>\n";
    return svg;
}

inline void write_text_file(const std::string& path, const std::string& contents) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out << contents;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline ordered_json parse_json_file(const std::string& path) {
    try {
        return ordered_json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": invalid JSON: " + e.what());
    }
}

} // namespace cptlaw
