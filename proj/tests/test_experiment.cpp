#include <gtest/gtest.h>

#include <set>

#include "cptlaw/experiment.hpp"
#include "cptlaw/serialize.hpp"
#include "cptlaw/synth.hpp"
#include "test_util.hpp"

using namespace cptlaw;

namespace {

// Small fast grid with stages 15/31 for training and 279 held out.
SynthSpec small_spec(double sigma, std::uint64_t seed) {
    SynthSpec spec = default_synth_spec();
    spec.grid.model_sizes = {2.41e8, 1.4e9};
    spec.grid.token_points = log_spaced(0.5, 50.0, 6);
    spec.noise_sigma = sigma;
    spec.seed = seed;
    return spec;
}

FitConfig fast_cfg(std::uint64_t seed) {
    FitConfig cfg;
    cfg.n_starts = 12;
    cfg.seed = seed;
    cfg.max_iters = 800;
    return cfg;
}

} // namespace

TEST(SelectAnchors, FromFlagsReturnsFlaggedRows) {
    Dataset ds = generate(small_spec(0.0, 1));
    int flagged = 0;
    for (Measurement& m : ds.rows)
        if (m.ptpp == 279.0 && m.model_params == 2.41e8 && flagged < 5) {
            m.is_anchor = true;
            ++flagged;
        }
    const auto anchors =
        select_anchors(ds, 279.0, Domain::target, {AnchorPolicyKind::from_flags, 0, 0.0});
    EXPECT_EQ(anchors.size(), 5u);
    for (const Measurement& a : anchors) EXPECT_TRUE(a.is_anchor);
}

TEST(SelectAnchors, FromFlagsWithoutFlagsRejected) {
    const Dataset ds = generate(small_spec(0.0, 1));
    EXPECT_THROW(select_anchors(ds, 279.0, Domain::target, {AnchorPolicyKind::from_flags, 0, 0.0}),
                 DataError);
}

TEST(SelectAnchors, AutoRuleOnePerRatio) {
    const Dataset ds = generate(default_synth_spec());
    const auto anchors =
        select_anchors(ds, 279.0, Domain::target, {AnchorPolicyKind::auto_rule, 3, 0.0});
    ASSERT_EQ(anchors.size(), 3u);
    std::set<double> ratios;
    for (const Measurement& a : anchors) {
        EXPECT_DOUBLE_EQ(a.model_params, 2.41e8); // smallest size present
        EXPECT_DOUBLE_EQ(a.ptpp, 279.0);
        ratios.insert(a.replay_ratio);
    }
    EXPECT_EQ(ratios.size(), 3u); // round-robin put one in each ratio
}

TEST(SelectAnchors, AutoRuleDeterministic) {
    const Dataset ds = generate(default_synth_spec());
    const AnchorPolicy policy{AnchorPolicyKind::auto_rule, 20, 0.0};
    const auto a = select_anchors(ds, 279.0, Domain::target, policy);
    const auto b = select_anchors(ds, 279.0, Domain::target, policy);
    ASSERT_EQ(a.size(), 20u);
    for (std::size_t i = 0; i < a.size(); ++i)
        EXPECT_EQ(detail::row_key(a[i]), detail::row_key(b[i]));
}

TEST(SelectAnchors, TooManyRequestedRejected) {
    const Dataset ds = generate(small_spec(0.0, 1)); // 6 D-points * 3 ratios = 18 candidates
    EXPECT_THROW(select_anchors(ds, 279.0, Domain::target, {AnchorPolicyKind::auto_rule, 50, 0.0}),
                 DataError);
}

TEST(RunExperiment, NoiselessSingleFormHasZeroErrorRow) {
    // stage-independent truth (floor and gate inert): the train-stage fit is
    // exact at the held-out stage too, so every error metric is ~0
    SynthSpec spec = small_spec(0.0, 2);
    spec.true_params.F = 0.0;
    spec.true_params.eta = 0.0;
    spec.true_params.lambda = 0.0;
    const Dataset ds = generate(spec);
    ExperimentSpec ex;
    ex.train_stages = {15.0, 31.0};
    ex.eval_stages = {279.0};
    ex.forms = {LawForm::GatedPlusFloor};
    ex.fit_config = fast_cfg(7);
    ex.fit_config.n_starts = 32;
    const ExperimentResult res = run_experiment(ds, ex);
    ASSERT_EQ(res.table.rows.size(), 1u);
    EXPECT_LE(res.table.rows[0].metrics.huber_log, 1e-6);
    EXPECT_LE(res.table.rows[0].metrics.mae_rel, 2e-3);
    EXPECT_NEAR(res.table.rows[0].metrics.slope, 1.0, 0.05);
}

TEST(RunExperiment, AnchorsNeverEvaluated) {
    Dataset ds = generate(default_synth_spec());
    ExperimentSpec ex;
    ex.train_stages = {15.0, 31.0};
    ex.eval_stages = {279.0};
    ex.forms = {LawForm::DcptBaseline};
    ex.anchors = {AnchorPolicyKind::auto_rule, 20, 0.0};
    ex.fit_config = fast_cfg(3);
    ex.fit_config.n_starts = 6;
    const ExperimentResult res = run_experiment(ds, ex);

    // 4 sizes * 3 ratios * 16 tokens at stage 279, minus the 20 anchors
    EXPECT_EQ(res.table.audit.n_anchors, 20u);
    EXPECT_EQ(res.eval_rows.size(), 4u * 3u * 16u - 20u);
    EXPECT_EQ(res.table.audit.n_eval, res.eval_rows.size());
    std::set<detail::RowKey> anchor_keys;
    for (const Measurement& a : res.anchor_rows) anchor_keys.insert(detail::row_key(a));
    for (const Measurement& e : res.eval_rows)
        EXPECT_FALSE(anchor_keys.count(detail::row_key(e)));
    EXPECT_TRUE(res.table.has_anchored);
    ASSERT_TRUE(res.table.rows[0].metrics_anchored.has_value());
}

TEST(RunExperiment, BestFlagsMatchRecomputedArgmin) {
    const Dataset ds = generate(small_spec(0.01, 4));
    ExperimentSpec ex;
    ex.train_stages = {15.0, 31.0};
    ex.eval_stages = {279.0};
    ex.forms = {LawForm::AdditiveFloor, LawForm::GatedExponent, LawForm::GatedPlusFloor,
                LawForm::DcptBaseline};
    ex.fit_config = fast_cfg(5);
    ex.fit_config.n_starts = 8;
    const ExperimentResult res = run_experiment(ds, ex);
    ASSERT_EQ(res.table.rows.size(), 4u);
    for (int col = 0; col < kNumColumns; ++col) {
        int argmin = 0;
        for (std::size_t i = 1; i < res.table.rows.size(); ++i)
            if (detail::column_badness(res.table.rows[i].metrics, col) <
                detail::column_badness(res.table.rows[argmin].metrics, col))
                argmin = static_cast<int>(i);
        EXPECT_EQ(res.table.best[col], argmin);
    }
}

TEST(RunExperiment, DeterministicTableBytes) {
    const Dataset ds = generate(small_spec(0.005, 6));
    ExperimentSpec ex;
    ex.train_stages = {15.0, 31.0};
    ex.eval_stages = {279.0};
    ex.forms = {LawForm::GatedExponent, LawForm::DcptBaseline};
    ex.fit_config = fast_cfg(11);
    ex.fit_config.n_starts = 6;
    const std::string a = table_to_json(run_experiment(ds, ex).table).dump(2);
    const std::string b = table_to_json(run_experiment(ds, ex).table).dump(2);
    EXPECT_EQ(a, b);
}

TEST(RunExperiment, StageLeakGuards) {
    const Dataset ds = generate(small_spec(0.0, 2));
    ExperimentSpec ex;
    ex.train_stages = {15.0};
    ex.eval_stages = {15.0};
    ex.forms = {LawForm::DcptBaseline};
    EXPECT_THROW(run_experiment(ds, ex), ConfigError);
}

TEST(RunOracle, NoiselessInSampleNearZero) {
    const Dataset ds = generate(small_spec(0.0, 8));
    FitConfig cfg = fast_cfg(7);
    cfg.n_starts = 24;
    const OracleResult res = run_oracle(ds, 279.0, Domain::target, LawForm::GatedPlusFloor, cfg);
    EXPECT_LE(res.metrics.huber_log, 1e-8);
    EXPECT_EQ(res.rows.size(), res.predictions.size());
}

TEST(PredictGrid, CardinalityAndMonotoneTokens) {
    FitResult fr;
    fr.form = LawForm::GatedPlusFloor;
    fr.params = default_target_truth();
    fr.converged = true;
    GridSpec grid;
    grid.model_sizes = {2.41e8, 5.17e8, 1.4e9, 8.1e9};
    grid.replay_ratios = {0.10, 0.25, 0.50};
    grid.ptpp_stages = {279.0};
    grid.token_points = log_spaced(1e9, 1e11, 50);
    const auto preds = predict_grid(fr, grid, 279.0);
    EXPECT_EQ(preds.size(), 4u * 3u * 50u);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (i % 50 == 0) continue;
        EXPECT_LT(preds[i].predicted_loss, preds[i - 1].predicted_loss);
    }
}

TEST(PredictGrid, ReproducesLawAtTrainingTokens) {
    FitResult fr;
    fr.form = LawForm::AdditiveFloor;
    fr.params = default_source_truth();
    fr.converged = true;
    GridSpec grid;
    grid.model_sizes = {1e9};
    grid.replay_ratios = {0.25};
    grid.ptpp_stages = {31.0};
    grid.token_points = {1e9, 5e9};
    const auto preds = predict_grid(fr, grid, 31.0);
    ASSERT_EQ(preds.size(), 2u);
    EXPECT_DOUBLE_EQ(preds[0].predicted_loss,
                     eval_law(fr.form, fr.params, EvalPoint{1e9, 1e9, 0.25, 31.0}));
}

TEST(RenderTable, MarksBestAndUsesScientificNotation) {
    const Dataset ds = generate(small_spec(0.01, 9));
    ExperimentSpec ex;
    ex.train_stages = {15.0, 31.0};
    ex.eval_stages = {279.0};
    ex.forms = {LawForm::GatedPlusFloor, LawForm::DcptBaseline};
    ex.fit_config = fast_cfg(13);
    ex.fit_config.n_starts = 6;
    const ExperimentResult res = run_experiment(ds, ex);
    const std::string text = render_table_text(res.table);
    EXPECT_NE(text.find("e-"), std::string::npos);
    EXPECT_NE(text.find('*'), std::string::npos);
    EXPECT_NE(text.find("gated-floor"), std::string::npos);
}
