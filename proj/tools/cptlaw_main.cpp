// Command-line front end: fit scaling laws to measurement files, compare law
// forms at held-out budgets, generate synthetic surfaces, and solve the
// replay/token planning problem.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cptlaw/cptlaw.hpp"

namespace {

using namespace cptlaw;

struct GlobalOpts {
    std::string out_dir = ".";
    bool quiet = false;
    std::optional<std::uint64_t> seed; // fallback for subcommands without --seed
};

std::string out_path(const GlobalOpts& g, const std::string& name) {
    if (name.find('/') != std::string::npos) return name; // explicit path wins
    return (std::filesystem::path(g.out_dir) / name).string();
}

void say(const GlobalOpts& g, const std::string& line) {
    if (!g.quiet) std::cout << line << "\n";
}

std::vector<LawForm> parse_forms(const std::string& spec) {
    std::vector<LawForm> forms;
    if (spec == "all") {
        forms = {LawForm::AdditiveFloor, LawForm::GatedExponent, LawForm::GatedPlusFloor,
                 LawForm::DcptBaseline};
        return forms;
    }
    std::size_t start = 0;
    while (start <= spec.size()) {
        const std::size_t pos = spec.find(',', start);
        const std::string tok = spec.substr(start, pos == std::string::npos ? pos : pos - start);
        if (!tok.empty()) forms.push_back(form_from_name(tok));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    if (forms.empty()) throw ConfigError("no law forms given");
    return forms;
}

AnchorPolicy parse_anchors(const std::string& spec) {
    AnchorPolicy p;
    if (spec.empty() || spec == "none") return p;
    if (spec == "flags") {
        p.kind = AnchorPolicyKind::from_flags;
        return p;
    }
    if (spec.rfind("auto:", 0) == 0) {
        p.kind = AnchorPolicyKind::auto_rule;
        std::string rest = spec.substr(5);
        const std::size_t at = rest.find('@');
        try {
            if (at == std::string::npos) {
                p.n_anchors = std::stoi(rest);
            } else {
                p.n_anchors = std::stoi(rest.substr(0, at));
                p.model_size = std::stod(rest.substr(at + 1));
            }
        } catch (const std::exception&) {
            throw ConfigError("bad anchor spec '" + spec + "' (expected auto:N or auto:N@SIZE)");
        }
        return p;
    }
    throw ConfigError("bad anchor spec '" + spec + "' (expected none|flags|auto:N[@SIZE])");
}

// "2%" means relative to the baseline source loss; a bare number is nats.
void parse_forgetting(const std::string& spec, PlanConstraints& c) {
    if (spec.empty()) throw ConfigError("--forget must be given");
    try {
        if (spec.back() == '%') {
            c.tolerance_mode = ToleranceMode::relative;
            c.forgetting_tolerance = std::stod(spec.substr(0, spec.size() - 1)) / 100.0;
        } else {
            c.tolerance_mode = ToleranceMode::absolute;
            c.forgetting_tolerance = std::stod(spec);
        }
    } catch (const std::exception&) {
        throw ConfigError("bad forgetting tolerance '" + spec + "'");
    }
}

std::vector<double> parse_range(const std::string& spec) {
    // lo:hi:count
    double lo = 0, hi = 0;
    int count = 0;
    if (std::sscanf(spec.c_str(), "%lf:%lf:%d", &lo, &hi, &count) != 3)
        throw ConfigError("bad range '" + spec + "' (expected lo:hi:count)");
    return log_spaced(lo, hi, count);
}

struct FitCmd {
    GlobalOpts* g = nullptr;
    std::string data, form = "gated-floor", domain = "target", out = "fit.json";
    std::vector<double> train_stages;
    FitConfig cfg;

    void run() const {
        const Dataset ds = load_dataset(data);
        std::vector<Measurement> slice = filter_domain(ds, domain_from_name(domain));
        if (!train_stages.empty()) slice = filter_stages(slice, train_stages);
        std::erase_if(slice, [](const Measurement& m) { return !(m.adapt_tokens > 0.0); });
        if (slice.empty()) throw DataError("fit: selected slice is empty");

        const FitResult res = fit(slice, form_from_name(form), cfg);
        write_text_file(out_path(*g, out), fit_result_to_json(res).dump(2) + "\n");
        char buf[160];
        std::snprintf(buf, sizeof(buf), "fit %s: objective=%.6e converged=%s iters=%d -> %s",
                      form.c_str(), res.objective, res.converged ? "true" : "false", res.n_iters,
                      out_path(*g, out).c_str());
        say(*g, buf);
    }
};

struct CompareCmd {
    GlobalOpts* g = nullptr;
    std::string data, forms = "all", domain = "target", anchors = "none";
    std::vector<double> train_stages, eval_stages;
    bool oracle = false;
    std::string out = "compare.json", text_out, fits_out;
    FitConfig cfg;

    void run() const {
        const Dataset ds = load_dataset(data);
        ComparisonTable table;
        std::vector<FitResult> fits;

        if (oracle) {
            if (anchors != "none") throw ConfigError("--oracle cannot be combined with --anchors");
            if (eval_stages.size() != 1) throw ConfigError("--oracle needs exactly one --eval-ptpp");
            table.mode = "oracle";
            table.domain = domain_from_name(domain);
            table.train_stages = eval_stages;
            table.eval_stages = eval_stages;
            for (LawForm f : parse_forms(forms)) {
                OracleResult o = run_oracle(ds, eval_stages.front(), table.domain, f, cfg);
                TableRow row;
                row.form = f;
                row.metrics = o.metrics;
                table.rows.push_back(row);
                table.audit.n_train = table.audit.n_eval = o.rows.size();
                fits.push_back(o.fit);
            }
            table.best = detail::best_flags(table.rows,
                                            [](const TableRow& r) { return &r.metrics; });
        } else {
            ExperimentSpec spec;
            spec.train_stages = train_stages;
            spec.eval_stages = eval_stages;
            spec.forms = parse_forms(forms);
            spec.domain = domain_from_name(domain);
            spec.anchors = parse_anchors(anchors);
            spec.fit_config = cfg;
            ExperimentResult res = run_experiment(ds, spec);
            table = std::move(res.table);
            for (const FormOutcome& o : res.outcomes) fits.push_back(o.fit);
        }

        write_text_file(out_path(*g, out), table_to_json(table).dump(2) + "\n");
        const std::string text = render_table_text(table);
        if (!text_out.empty()) write_text_file(out_path(*g, text_out), text);
        if (!fits_out.empty()) {
            ordered_json arr = ordered_json::array();
            for (const FitResult& f : fits) arr.push_back(fit_result_to_json(f));
            write_text_file(out_path(*g, fits_out), arr.dump(2) + "\n");
        }
        if (!g->quiet) std::cout << text;
    }
};

struct PlanCmd {
    GlobalOpts* g = nullptr;
    std::string src_fit, tgt_fit, forget = "2%";
    double n = 0.0, ptpp = 0.0, tau = 0.0;
    std::optional<double> baseline_src;
    PlanProblem problem;
    bool svg = false;

    void run() {
        problem.src_fit = fit_result_from_json(parse_json_file(src_fit));
        problem.tgt_fit = fit_result_from_json(parse_json_file(tgt_fit));
        problem.model_params = n;
        problem.ptpp = ptpp;
        problem.constraints.target_threshold = tau;
        parse_forgetting(forget, problem.constraints);
        if (baseline_src) {
            problem.baseline.mode = BaselineMode::measured;
            problem.baseline.measured_value = *baseline_src;
        }

        const PlanResult res = plan(problem);
        write_text_file(out_path(*g, "plan.json"), plan_to_json(res).dump(2) + "\n");
        write_text_file(out_path(*g, "feasibility.csv"), feasibility_csv(res));
        write_text_file(out_path(*g, "forgetting_landscape.csv"), forgetting_landscape_csv(res));
        write_text_file(out_path(*g, "target_landscape.csv"), target_landscape_csv(res));
        if (svg) {
            write_text_file(out_path(*g, "forgetting.svg"), plan_svg(res, "delta_src"));
            write_text_file(out_path(*g, "target_loss.svg"), plan_svg(res, "target_loss"));
        }
        char buf[200];
        if (res.feasible) {
            std::snprintf(buf, sizeof(buf),
                          "plan: atpp*=%.4g r*=%.4g D*=%.4g flops=%.4g binding=%s", res.atpp_star,
                          res.r_star, res.d_star, res.flops,
                          std::string(binding_name(res.binding)).c_str());
        } else {
            std::snprintf(buf, sizeof(buf),
                          "plan: infeasible under the given constraints (see per-ratio "
                          "diagnostics in plan.json)");
        }
        say(*g, buf);
    }
};

struct SynthCmd {
    GlobalOpts* g = nullptr;
    std::string out = "synth.csv", truth_out, truth_in, preset = "target";
    double sigma = 0.0;
    std::uint64_t seed = 0;
    std::string atpp_range = "0.5:50:16", tokens_range;
    std::vector<double> sizes, ratios, stages;

    void run() const {
        SynthSpec spec = default_synth_spec();
        if (preset == "target") {
            // defaults already hold
        } else if (preset == "source") {
            spec.form = LawForm::AdditiveFloor;
            spec.true_params = default_source_truth();
            spec.domain_tag = Domain::source;
        } else {
            throw ConfigError("unknown preset '" + preset + "' (expected target|source)");
        }
        if (!truth_in.empty()) {
            const ordered_json j = parse_json_file(truth_in);
            spec.form = form_from_name(j.at("form").get<std::string>());
            spec.true_params = params_from_json(j, spec.form);
        }
        if (!sizes.empty()) spec.grid.model_sizes = sizes;
        if (!ratios.empty()) spec.grid.replay_ratios = ratios;
        if (!stages.empty()) spec.grid.ptpp_stages = stages;
        if (!tokens_range.empty()) {
            spec.grid.token_points = parse_range(tokens_range);
            spec.tokens_per_param = false;
        } else {
            spec.grid.token_points = parse_range(atpp_range);
            spec.tokens_per_param = true;
        }
        spec.noise_sigma = sigma;
        spec.seed = seed;

        const Dataset ds = generate(spec);
        save_dataset(ds, out_path(*g, out));
        if (!truth_out.empty())
            write_text_file(out_path(*g, truth_out),
                            params_to_json(spec.form, spec.true_params).dump(2) + "\n");
        say(*g, "synth: wrote " + std::to_string(ds.size()) + " rows -> " + out_path(*g, out));
    }
};

struct PredictGridCmd {
    GlobalOpts* g = nullptr;
    std::string fit_path, data, out = "predictions.csv";
    double stage = 0.0;
    std::vector<double> sizes, ratios;
    std::string atpp_range, tokens_range;

    void run() const {
        const FitResult fr = fit_result_from_json(parse_json_file(fit_path));
        std::vector<GridPrediction> preds;
        if (!data.empty()) {
            const GridSpec grid = extract_grid(load_dataset(data));
            preds = predict_grid(fr, grid, stage);
        } else {
            if (sizes.empty() || ratios.empty())
                throw ConfigError("predict-grid needs --data or --sizes/--ratios with a token range");
            GridSpec grid;
            grid.model_sizes = sizes;
            grid.replay_ratios = ratios;
            grid.ptpp_stages = {stage};
            if (!tokens_range.empty()) {
                grid.token_points = parse_range(tokens_range);
                preds = predict_grid(fr, grid, stage);
            } else if (!atpp_range.empty()) {
                const std::vector<double> atpps = parse_range(atpp_range);
                for (double n : sizes) {
                    GridSpec per_size = grid;
                    per_size.model_sizes = {n};
                    per_size.token_points.clear();
                    for (double a : atpps) per_size.token_points.push_back(a * n);
                    auto part = predict_grid(fr, per_size, stage);
                    preds.insert(preds.end(), part.begin(), part.end());
                }
            } else {
                throw ConfigError("predict-grid needs --tokens or --atpp when --data is absent");
            }
        }
        write_text_file(out_path(*g, out), predictions_csv(preds));
        say(*g, "predict-grid: " + std::to_string(preds.size()) + " rows -> " + out_path(*g, out));
    }
};

void add_fit_config_flags(CLI::App* cmd, FitConfig& cfg) {
    cmd->add_option("--seed", cfg.seed, "RNG seed for multistart initialization");
    cmd->add_option("--starts", cfg.n_starts, "number of optimizer starts");
    cmd->add_option("--delta", cfg.huber_delta, "Huber threshold on log residuals");
    cmd->add_option("--max-iters", cfg.max_iters, "max optimizer iterations per start");
    cmd->add_option("--threads", cfg.threads, "worker threads (0 = hardware)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continual-pretraining adaptation scaling laws: fitting, forecasting, planning"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may appear after the subcommand

    GlobalOpts global;
    app.add_option("--out-dir", global.out_dir, "directory for output artifacts");
    app.add_flag("--quiet", global.quiet, "suppress stdout summaries");
    app.add_option("--seed", global.seed,
                   "default RNG seed for subcommands that take one");

    FitCmd fit_cmd;
    fit_cmd.g = &global;
    auto* fit_sub = app.add_subcommand("fit", "fit one law form to a measurement file");
    fit_sub->add_option("--data", fit_cmd.data, "dataset CSV/JSON")->required();
    fit_sub->add_option("--form", fit_cmd.form,
                        "additive-floor|gated-exponent|gated-floor|dcpt-baseline");
    fit_sub->add_option("--domain", fit_cmd.domain, "target|source");
    fit_sub->add_option("--train-ptpp", fit_cmd.train_stages, "stages to fit on")->delimiter(',');
    fit_sub->add_option("--out", fit_cmd.out, "output fit JSON");
    add_fit_config_flags(fit_sub, fit_cmd.cfg);
    fit_sub->callback([&] {
        if (global.seed && !fit_sub->count("--seed")) fit_cmd.cfg.seed = *global.seed;
        fit_cmd.run();
    });

    CompareCmd compare_cmd;
    compare_cmd.g = &global;
    auto* compare_sub =
        app.add_subcommand("compare", "fit several forms and tabulate held-out metrics");
    auto add_compare_opts = [&](CLI::App* sub, CompareCmd& c) {
        sub->add_option("--data", c.data, "dataset CSV/JSON")->required();
        sub->add_option("--domain", c.domain, "target|source");
        sub->add_option("--train-ptpp", c.train_stages, "training stages")->delimiter(',');
        sub->add_option("--eval-ptpp", c.eval_stages, "held-out stages")->delimiter(',');
        sub->add_option("--anchors", c.anchors, "none|flags|auto:N[@SIZE]");
        sub->add_flag("--oracle", c.oracle, "fit and evaluate on the evaluation stage itself");
        sub->add_option("--out", c.out, "output table JSON");
        sub->add_option("--text", c.text_out, "also write the aligned text table here");
        sub->add_option("--fits-out", c.fits_out, "write per-form fit JSON array here");
        add_fit_config_flags(sub, c.cfg);
    };
    compare_sub->add_option("--forms", compare_cmd.forms, "all or comma list");
    add_compare_opts(compare_sub, compare_cmd);
    compare_sub->callback([&] {
        if (global.seed && !compare_sub->count("--seed")) compare_cmd.cfg.seed = *global.seed;
        compare_cmd.run();
    });

    CompareCmd evaluate_cmd;
    evaluate_cmd.g = &global;
    auto* evaluate_sub =
        app.add_subcommand("evaluate", "single-form evaluation (compare with one form)");
    evaluate_sub->add_option("--form", evaluate_cmd.forms, "law form")->required();
    add_compare_opts(evaluate_sub, evaluate_cmd);
    evaluate_sub->callback([&] {
        if (global.seed && !evaluate_sub->count("--seed")) evaluate_cmd.cfg.seed = *global.seed;
        evaluate_cmd.run();
    });

    PlanCmd plan_cmd;
    plan_cmd.g = &global;
    auto* plan_sub = app.add_subcommand(
        "plan", "minimal adaptation budget and replay ratio under loss constraints");
    plan_sub->add_option("--src-fit", plan_cmd.src_fit, "source-domain fit JSON")->required();
    plan_sub->add_option("--tgt-fit", plan_cmd.tgt_fit, "target-domain fit JSON")->required();
    plan_sub->add_option("--n", plan_cmd.n, "model size (parameters)")->required();
    plan_sub->add_option("--ptpp", plan_cmd.ptpp, "pre-training tokens per parameter")->required();
    plan_sub->add_option("--forget", plan_cmd.forget,
                         "forgetting tolerance: '2%' (relative) or nats (absolute)");
    plan_sub->add_option("--tau", plan_cmd.tau, "target-domain loss threshold (nats)")->required();
    plan_sub->add_option("--baseline-src", plan_cmd.baseline_src,
                         "measured pre-adaptation source loss (default: law limit)");
    plan_sub->add_option("--r-points", plan_cmd.problem.r_points, "replay grid resolution");
    plan_sub->add_option("--r-min", plan_cmd.problem.r_min, "smallest replay ratio searched");
    plan_sub->add_option("--atpp-max", plan_cmd.problem.atpp_max, "largest atpp considered");
    plan_sub->add_option("--landscape-atpp", plan_cmd.problem.landscape_atpp_points,
                         "landscape grid resolution in atpp");
    plan_sub->add_option("--threads", plan_cmd.problem.threads, "worker threads (0 = hardware)");
    plan_sub->add_flag("--svg", plan_cmd.svg, "also write SVG heatmaps");
    plan_sub->callback([&] { plan_cmd.run(); });

    SynthCmd synth_cmd;
    synth_cmd.g = &global;
    auto* synth_sub = app.add_subcommand("synth", "generate a synthetic loss surface");
    synth_sub->add_option("--out", synth_cmd.out, "output CSV");
    synth_sub->add_option("--truth-out", synth_cmd.truth_out, "write ground-truth params JSON");
    synth_sub->add_option("--truth", synth_cmd.truth_in, "ground-truth params JSON to use");
    synth_sub->add_option("--preset", synth_cmd.preset, "target|source fixture");
    synth_sub->add_option("--sigma", synth_cmd.sigma, "log-space noise std");
    synth_sub->add_option("--seed", synth_cmd.seed, "noise seed");
    synth_sub->add_option("--sizes", synth_cmd.sizes, "model sizes")->delimiter(',');
    synth_sub->add_option("--ratios", synth_cmd.ratios, "replay ratios")->delimiter(',');
    synth_sub->add_option("--stages", synth_cmd.stages, "ptpp stages")->delimiter(',');
    synth_sub->add_option("--atpp", synth_cmd.atpp_range, "tokens-per-parameter range lo:hi:count");
    synth_sub->add_option("--tokens", synth_cmd.tokens_range, "raw token range lo:hi:count");
    synth_sub->callback([&] {
        if (global.seed && !synth_sub->count("--seed")) synth_cmd.seed = *global.seed;
        synth_cmd.run();
    });

    PredictGridCmd predict_cmd;
    predict_cmd.g = &global;
    auto* predict_sub =
        app.add_subcommand("predict-grid", "dense law predictions over a grid at one stage");
    predict_sub->add_option("--fit", predict_cmd.fit_path, "fit JSON")->required();
    predict_sub->add_option("--ptpp", predict_cmd.stage, "stage to predict at")->required();
    predict_sub->add_option("--data", predict_cmd.data, "dataset whose grid to reuse");
    predict_sub->add_option("--sizes", predict_cmd.sizes, "model sizes")->delimiter(',');
    predict_sub->add_option("--ratios", predict_cmd.ratios, "replay ratios")->delimiter(',');
    predict_sub->add_option("--atpp", predict_cmd.atpp_range, "tokens-per-parameter lo:hi:count");
    predict_sub->add_option("--tokens", predict_cmd.tokens_range, "raw tokens lo:hi:count");
    predict_sub->add_option("--out", predict_cmd.out, "output CSV");
    predict_sub->callback([&] { predict_cmd.run(); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const FitError& e) {
        std::cerr << "fit error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
