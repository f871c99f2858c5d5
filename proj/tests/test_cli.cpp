#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "cptlaw/serialize.hpp"
#include "cptlaw/synth.hpp"

using namespace cptlaw;
namespace fs = std::filesystem;

namespace {

const char* cli_path() { return CPTLAW_CLI_PATH; }

struct RunResult {
    int exit_code;
    std::string output; // stdout + stderr
};

RunResult run_cli(const std::string& args, const fs::path& workdir) {
    const fs::path log = workdir / "run.log";
    const std::string cmd =
        "cd " + workdir.string() + " && " + cli_path() + " " + args + " > run.log 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::ostringstream buf;
    buf << in.rdbuf();
    r.output = buf.str();
    return r;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("cptlaw_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void make_synth(const fs::path& dir, const std::string& extra = "") {
    const RunResult r = run_cli("synth --out data.csv --sigma 0.003 --seed 5 " + extra, dir);
    ASSERT_EQ(r.exit_code, 0) << r.output;
}

} // namespace

TEST(Cli, SynthWritesDefaultGrid) {
    const fs::path dir = fresh_dir("synth");
    make_synth(dir, "--truth-out truth.json");
    const Dataset ds = load_dataset((dir / "data.csv").string());
    EXPECT_EQ(ds.size(), 576u);
    const ordered_json truth = parse_json_file((dir / "truth.json").string());
    EXPECT_EQ(truth.at("form"), "gated-floor");
}

TEST(Cli, FitHappyPath) {
    const fs::path dir = fresh_dir("fit");
    make_synth(dir);
    const RunResult r = run_cli(
        "fit --data data.csv --form gated-floor --domain target --train-ptpp 15,31 "
        "--seed 7 --starts 8 --out fit.json",
        dir);
    EXPECT_EQ(r.exit_code, 0) << r.output;
    const FitResult fit = fit_result_from_json(parse_json_file((dir / "fit.json").string()));
    EXPECT_EQ(fit.form, LawForm::GatedPlusFloor);
    EXPECT_EQ(fit.seed, 7u);
    EXPECT_NE(r.output.find("objective="), std::string::npos);
}

TEST(Cli, UnknownFormIsConfigError) {
    const fs::path dir = fresh_dir("badform");
    make_synth(dir);
    const RunResult r = run_cli("fit --data data.csv --form cubic-spline", dir);
    EXPECT_EQ(r.exit_code, 1);
    EXPECT_NE(r.output.find("valid forms"), std::string::npos);
}

TEST(Cli, EmptyTrainSliceIsDataError) {
    const fs::path dir = fresh_dir("emptyslice");
    make_synth(dir);
    const RunResult r = run_cli("fit --data data.csv --form gated-floor --domain source", dir);
    EXPECT_EQ(r.exit_code, 2);
}

TEST(Cli, MissingDataFileIsDataError) {
    const fs::path dir = fresh_dir("nodata");
    const RunResult r = run_cli("fit --data nope.csv --form gated-floor", dir);
    EXPECT_EQ(r.exit_code, 2);
}

TEST(Cli, CompareEmitsFourRowTable) {
    const fs::path dir = fresh_dir("compare");
    make_synth(dir);
    const RunResult r = run_cli(
        "compare --data data.csv --forms all --train-ptpp 15,31 --eval-ptpp 279 "
        "--seed 3 --starts 6 --out table.json --text table.txt",
        dir);
    EXPECT_EQ(r.exit_code, 0) << r.output;
    const ordered_json table = parse_json_file((dir / "table.json").string());
    EXPECT_EQ(table.at("rows").size(), 4u);
    EXPECT_EQ(table.at("mode"), "transfer");
    EXPECT_FALSE(table.at("best").at("huber_log").get<std::string>().empty());
    EXPECT_TRUE(fs::exists(dir / "table.txt"));
}

TEST(Cli, CompareWithAutoAnchorsAddsAnchoredColumns) {
    const fs::path dir = fresh_dir("anchors");
    make_synth(dir);
    const RunResult r = run_cli(
        "compare --data data.csv --forms gated-floor --train-ptpp 15,31 --eval-ptpp 279 "
        "--anchors auto:20 --seed 3 --starts 6 --out table.json",
        dir);
    EXPECT_EQ(r.exit_code, 0) << r.output;
    const ordered_json table = parse_json_file((dir / "table.json").string());
    EXPECT_TRUE(table.at("rows")[0].contains("metrics_anchored"));
    EXPECT_TRUE(table.contains("best_anchored"));
    EXPECT_EQ(table.at("audit").at("n_anchors"), 20);
}

TEST(Cli, OracleModeLabelsOutput) {
    const fs::path dir = fresh_dir("oracle");
    make_synth(dir);
    const RunResult r = run_cli(
        "compare --data data.csv --forms dcpt-baseline --eval-ptpp 279 --oracle "
        "--seed 3 --starts 8 --out oracle.json",
        dir);
    EXPECT_EQ(r.exit_code, 0) << r.output;
    const ordered_json table = parse_json_file((dir / "oracle.json").string());
    EXPECT_EQ(table.at("mode"), "oracle");
}

TEST(Cli, EvaluateSingleForm) {
    const fs::path dir = fresh_dir("evaluate");
    make_synth(dir);
    const RunResult r = run_cli(
        "evaluate --form gated-exponent --data data.csv --train-ptpp 15,31 --eval-ptpp 279 "
        "--seed 3 --starts 6 --out eval.json",
        dir);
    EXPECT_EQ(r.exit_code, 0) << r.output;
    const ordered_json table = parse_json_file((dir / "eval.json").string());
    EXPECT_EQ(table.at("rows").size(), 1u);
    EXPECT_EQ(table.at("rows")[0].at("form"), "gated-exponent");
}

TEST(Cli, PlanEndToEndOnFixtureFits) {
    const fs::path dir = fresh_dir("plan");
    // fixture fits written directly
    FitResult src;
    src.form = LawForm::AdditiveFloor;
    src.params = default_source_truth();
    src.objective = 0.0;
    src.converged = true;
    FitResult tgt;
    tgt.form = LawForm::GatedPlusFloor;
    tgt.params = default_target_truth();
    tgt.objective = 0.0;
    tgt.converged = true;
    write_text_file((dir / "src.json").string(), fit_result_to_json(src).dump(2));
    write_text_file((dir / "tgt.json").string(), fit_result_to_json(tgt).dump(2));

    const RunResult r = run_cli(
        "plan --src-fit src.json --tgt-fit tgt.json --n 8.1e9 --ptpp 279 --forget 2% "
        "--tau 1.8 --r-points 64 --landscape-atpp 24 --svg",
        dir);
    EXPECT_EQ(r.exit_code, 0) << r.output;
    for (const char* name : {"plan.json", "feasibility.csv", "forgetting_landscape.csv",
                             "target_landscape.csv", "forgetting.svg", "target_loss.svg"})
        EXPECT_TRUE(fs::exists(dir / name)) << name;

    const ordered_json plan = parse_json_file((dir / "plan.json").string());
    ASSERT_TRUE(plan.at("feasible").get<bool>());

    // independent check pass: reload and verify constraints through the laws
    const double atpp = plan.at("atpp_star").get<double>();
    const double rstar = plan.at("r_star").get<double>();
    const EvalPoint x{8.1e9, atpp * 8.1e9, clip_replay(rstar), 279.0};
    const double baseline = plan.at("baseline_loss").get<double>();
    const double delta = eval_law(src.form, src.params, x) - baseline;
    EXPECT_LE(delta, plan.at("delta_limit").get<double>() + 1e-6);
    EXPECT_LE(eval_law(tgt.form, tgt.params, x), 1.8 + 1e-6);
}

TEST(Cli, PlanInfeasibleStillExitsZero) {
    const fs::path dir = fresh_dir("plan_infeasible");
    FitResult src;
    src.form = LawForm::AdditiveFloor;
    src.params = default_source_truth();
    src.objective = 0.0;
    src.converged = true;
    FitResult tgt;
    tgt.form = LawForm::GatedPlusFloor;
    tgt.params = default_target_truth();
    tgt.objective = 0.0;
    tgt.converged = true;
    write_text_file((dir / "src.json").string(), fit_result_to_json(src).dump(2));
    write_text_file((dir / "tgt.json").string(), fit_result_to_json(tgt).dump(2));
    const RunResult r = run_cli(
        "plan --src-fit src.json --tgt-fit tgt.json --n 8.1e9 --ptpp 279 --forget 2% "
        "--tau 0 --r-points 32 --landscape-atpp 8",
        dir);
    EXPECT_EQ(r.exit_code, 0) << r.output;
    const ordered_json plan = parse_json_file((dir / "plan.json").string());
    EXPECT_FALSE(plan.at("feasible").get<bool>());
    EXPECT_NE(r.output.find("infeasible"), std::string::npos);
}

TEST(Cli, PredictGridFromFit) {
    const fs::path dir = fresh_dir("predict");
    FitResult tgt;
    tgt.form = LawForm::GatedPlusFloor;
    tgt.params = default_target_truth();
    tgt.objective = 0.0;
    tgt.converged = true;
    write_text_file((dir / "tgt.json").string(), fit_result_to_json(tgt).dump(2));
    const RunResult r = run_cli(
        "predict-grid --fit tgt.json --ptpp 279 --sizes 2.41e8,8.1e9 --ratios 0.1,0.5 "
        "--atpp 0.5:50:25 --out preds.csv",
        dir);
    EXPECT_EQ(r.exit_code, 0) << r.output;
    std::ifstream in(dir / "preds.csv");
    std::string line;
    int rows = 0;
    std::getline(in, line);
    EXPECT_EQ(line, "model_params,adapt_tokens,replay_ratio,ptpp,pred_loss");
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    EXPECT_EQ(rows, 2 * 2 * 25);
}

TEST(Cli, QuietSuppressesSummaries) {
    const fs::path dir = fresh_dir("quiet");
    const RunResult r = run_cli("--quiet synth --out q.csv --sigma 0 --seed 1", dir);
    EXPECT_EQ(r.exit_code, 0);
    EXPECT_TRUE(r.output.empty()) << r.output;
}
