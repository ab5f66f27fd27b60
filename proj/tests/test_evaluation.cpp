#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "imfnd/evaluation.hpp"
#include "imfnd/report_io.hpp"
#include "support/fixtures.hpp"

using namespace imfnd;
using imfnd::testing::write_fixture_dataset;

namespace {

constexpr VerdictKind R = VerdictKind::REAL;
constexpr VerdictKind F = VerdictKind::FAKE;
constexpr VerdictKind A = VerdictKind::ABSTAIN;
constexpr Label GR = Label::REAL;
constexpr Label GF = Label::FAKE;

ExperimentConfig fixture_config(const imfnd::testing::FixtureDataset& fixture) {
    ExperimentConfig config;
    config.dataset_path = fixture.jsonl.string();
    config.backend.dim = 16;
    config.mode = PromptMode::IMFND;
    config.n_shots = 1;
    config.seeds = {1, 2, 3};
    config.client.kind = ClientSpec::Kind::MOCK_ECHO;
    config.client.initial_backoff_s = 0.0;
    return config;
}

}  // namespace

TEST(ComputeMetrics, PerfectPredictor) {
    const Metrics m = compute_metrics({F, R, F, R}, {GF, GR, GF, GR});
    EXPECT_DOUBLE_EQ(m.accuracy, 1.0);
    EXPECT_DOUBLE_EQ(m.macro_f1, 1.0);
}

TEST(ComputeMetrics, WorkedConfusionMatrix) {
    // golds [F,F,R,R], preds [F,R,R,R]: acc 0.75, macro-F1 (2/3 + 0.8)/2.
    const Metrics m = compute_metrics({F, R, R, R}, {GF, GF, GR, GR});
    EXPECT_NEAR(m.accuracy, 0.75, 1e-15);
    EXPECT_NEAR(m.macro_f1, (2.0 / 3.0 + 0.8) / 2.0, 1e-15);
}

TEST(ComputeMetrics, AllAbstainScoresZero) {
    const Metrics m = compute_metrics({A, A, A}, {GR, GF, GR});
    EXPECT_DOUBLE_EQ(m.accuracy, 0.0);
    EXPECT_DOUBLE_EQ(m.macro_f1, 0.0);
}

TEST(ComputeMetrics, Errors) {
    EXPECT_THROW(compute_metrics({R}, {GR, GF}), LengthMismatch);
    EXPECT_THROW(compute_metrics({}, {}), EmptyInput);
}

TEST(ComputeMetrics, HandComputedBattery) {
    // Each case hand-derived from its confusion counts.
    struct Case {
        std::vector<VerdictKind> preds;
        std::vector<Label> golds;
        double accuracy;
        double macro_f1;
    };
    const std::vector<Case> cases = {
        // All wrong, both classes predicted: P=R=0 for both.
        {{F, R}, {GR, GF}, 0.0, 0.0},
        // One class only in golds, predicted perfectly: F1_real=1, F1_fake=0/0->0.
        {{R, R}, {GR, GR}, 1.0, 0.5},
        // golds [R,R,F], preds [R,F,F]: real P=1,R=.5,F1=2/3; fake P=.5,R=1,F1=2/3.
        {{R, F, F}, {GR, GR, GF}, 2.0 / 3.0, 2.0 / 3.0},
        // Abstain on a fake item: real F1=1 (2 TP), fake recall 0 -> F1 0.
        {{R, R, A}, {GR, GR, GF}, 2.0 / 3.0, 0.5},
        // golds [R,F,R,F,R], preds [R,F,F,F,R]:
        // real: TP2 FP0 FN1 -> P1 R2/3 F1=0.8; fake: TP2 FP1 FN0 -> P2/3 R1 F1=0.8.
        {{R, F, F, F, R}, {GR, GF, GR, GF, GR}, 0.8, 0.8},
        // Everything predicted fake; golds half fake.
        // real F1=0; fake P=.5 R=1 F1=2/3.
        {{F, F, F, F}, {GR, GF, GR, GF}, 0.5, 1.0 / 3.0},
        // Single fake gold, predicted real: fake F1 0, real P0 R(0/0->0) F1 0.
        {{R}, {GF}, 0.0, 0.0},
        // Mixed abstains: golds [R,F,F,R], preds [A,F,A,R]:
        // real TP1 FP0 FN1 -> F1 2/3; fake TP1 FP0 FN1 -> F1 2/3; acc .5.
        {{A, F, A, R}, {GR, GF, GF, GR}, 0.5, 2.0 / 3.0},
        // Larger exact case: golds 6 (4R/2F), preds flip one real.
        // real TP3 FP0 FN1 -> P1 R.75 F1 6/7; fake TP2 FP1 FN0 -> P2/3 R1 F1 .8.
        {{R, R, R, F, F, F}, {GR, GR, GR, GR, GF, GF}, 5.0 / 6.0, (6.0 / 7.0 + 0.8) / 2.0},
        // Perfect on flipped labels.
        {{F, R}, {GF, GR}, 1.0, 1.0},
    };
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const Metrics m = compute_metrics(cases[i].preds, cases[i].golds);
        EXPECT_NEAR(m.accuracy, cases[i].accuracy, 1e-12) << "case " << i;
        EXPECT_NEAR(m.macro_f1, cases[i].macro_f1, 1e-12) << "case " << i;
    }
}

TEST(ComputeMetrics, LabelSymmetryProperty) {
    SplitMix64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<VerdictKind> preds;
        std::vector<Label> golds;
        const std::size_t n = 2 + rng.uniform_below(20);
        for (std::size_t i = 0; i < n; ++i) {
            const auto r = rng.uniform_below(3);
            preds.push_back(r == 0 ? R : r == 1 ? F : A);
            golds.push_back(rng.uniform_below(2) == 0 ? GR : GF);
        }
        const Metrics base = compute_metrics(preds, golds);
        EXPECT_LE(base.accuracy, 1.0);
        EXPECT_LE(base.macro_f1, 1.0);
        EXPECT_GE(base.accuracy, 0.0);
        EXPECT_GE(base.macro_f1, 0.0);

        // Swap every REAL<->FAKE in both golds and preds (abstain fixed):
        // per-class F1 values swap, macro-F1 and accuracy stay put.
        std::vector<VerdictKind> flipped_preds;
        std::vector<Label> flipped_golds;
        for (std::size_t i = 0; i < n; ++i) {
            flipped_preds.push_back(preds[i] == R ? F : preds[i] == F ? R : A);
            flipped_golds.push_back(golds[i] == GR ? GF : GR);
        }
        const Metrics flipped = compute_metrics(flipped_preds, flipped_golds);
        EXPECT_NEAR(base.accuracy, flipped.accuracy, 1e-15);
        EXPECT_NEAR(base.macro_f1, flipped.macro_f1, 1e-15);
    }
}

TEST(AggregateStats, HandComputedMeanAndPopulationStd) {
    const SeedStats s = aggregate_stats({0.6, 0.7, 0.8});
    EXPECT_NEAR(s.mean, 0.7, 1e-12);
    EXPECT_NEAR(s.stddev, std::sqrt(
        ((0.6 - 0.7) * (0.6 - 0.7) + 0.0 + (0.8 - 0.7) * (0.8 - 0.7)) / 3.0), 1e-15);
    EXPECT_NEAR(s.stddev, 0.081649, 1e-6);
}

TEST(RunSingleSeed, EchoIdentityWithSmallModel) {
    const auto fixture = write_fixture_dataset("echo1", 20, 20);
    ExperimentConfig config = fixture_config(fixture);
    const SeedResult result = run_single_seed(config, 1);
    EXPECT_GE(result.small_model_test_accuracy, 0.0);
    EXPECT_DOUBLE_EQ(result.accuracy, result.small_model_test_accuracy);
    EXPECT_EQ(result.abstain_count, 0u);
    EXPECT_EQ(result.records.size(), 8u);  // 20% of 40
    std::filesystem::remove_all(fixture.dir);
}

TEST(RunSingleSeed, EchoMatchesSmallModelPerArticle) {
    const auto fixture = write_fixture_dataset("echo2", 12, 12);
    ExperimentConfig config = fixture_config(fixture);
    config.n_shots = 3;
    for (const std::uint64_t seed : {1ULL, 2ULL}) {
        const SeedResult result = run_single_seed(config, seed);
        for (const ArticleRecord& rec : result.records) {
            ASSERT_TRUE(rec.small_model_label.has_value());
            const VerdictKind expected =
                *rec.small_model_label == Label::REAL ? R : F;
            EXPECT_EQ(rec.verdict, expected) << rec.id;
        }
    }
    std::filesystem::remove_all(fixture.dir);
}

TEST(RunExperiment, PartialSeedFailureIsRecorded) {
    const auto fixture = write_fixture_dataset("partial", 12, 12);
    ExperimentConfig config = fixture_config(fixture);
    config.seeds = {1, 2, 3};
    config.n_shots = 1;
    config.client.kind = ClientSpec::Kind::MOCK_SCRIPTED;
    config.client.max_retries = 0;
    config.client.default_response = "real";

    // Pick a train article that exactly one seed samples into its support:
    // its text appears in every prompt of that seed (examples precede the
    // test block), so a scripted outage fails that seed alone.
    const auto articles = load_dataset(fixture.jsonl).articles;
    const DatasetSplit split = stratified_split(articles, 0.2, config.split_seed);
    std::string needle;
    std::uint64_t failing_seed = 0;
    for (const NewsArticle& candidate : split.train) {
        std::vector<std::uint64_t> users;
        for (const std::uint64_t seed : config.seeds) {
            const SupportSet support = sample_n_shot(split, config.n_shots, seed);
            for (const auto& a : support.articles) {
                if (a.id == candidate.id) users.push_back(seed);
            }
        }
        if (users.size() == 1) {
            needle = candidate.text;
            failing_seed = users.front();
            break;
        }
    }
    ASSERT_FALSE(needle.empty()) << "fixture produced no uniquely-sampled article";
    config.client.script = {{needle, "!transient!scripted outage"}};

    const EvaluationReport report = run_experiment(config);
    ASSERT_EQ(report.failed_seeds.size(), 1u);
    EXPECT_EQ(report.failed_seeds[0].seed, failing_seed);
    EXPECT_EQ(report.seed_results.size(), 2u);
    std::filesystem::remove_all(fixture.dir);
}

TEST(RunSingleSeed, FixedClientMatchesClassPrevalence) {
    const auto fixture = write_fixture_dataset("fixed1", 30, 10);
    ExperimentConfig config = fixture_config(fixture);
    config.client.kind = ClientSpec::Kind::MOCK_FIXED;
    config.client.fixed_label = Label::REAL;
    const SeedResult result = run_single_seed(config, 2);
    // test split: round(.2*30)=6 real, round(.2*10)=2 fake.
    EXPECT_NEAR(result.accuracy, 6.0 / 8.0, 1e-12);
    std::filesystem::remove_all(fixture.dir);
}

TEST(RunSingleSeed, ZeroShotScriptedVerdictsMatchHandMetrics) {
    const auto fixture = write_fixture_dataset("script1", 10, 10);
    ExperimentConfig config = fixture_config(fixture);
    config.mode = PromptMode::ZERO_SHOT;
    config.client.kind = ClientSpec::Kind::MOCK_SCRIPTED;

    // The test split is deterministic: identify its articles, then script
    // responses per article text.
    const auto articles = load_dataset(fixture.jsonl).articles;
    const DatasetSplit split = stratified_split(articles, 0.2, config.split_seed);
    ASSERT_EQ(split.test.size(), 4u);
    std::vector<VerdictKind> planned;
    std::vector<Label> golds;
    for (std::size_t i = 0; i < split.test.size(); ++i) {
        // First two answered correctly, third flipped, fourth refusal.
        std::string response;
        VerdictKind kind;
        if (i < 2) {
            kind = split.test[i].label == Label::REAL ? R : F;
        } else if (i == 2) {
            kind = split.test[i].label == Label::REAL ? F : R;
        } else {
            kind = A;
        }
        response = kind == R ? "this is real" : kind == F ? "this is fake" : kRefusalText;
        config.client.script.emplace_back(split.test[i].text, response);
        planned.push_back(kind);
        golds.push_back(split.test[i].label);
    }
    const Metrics expected = compute_metrics(planned, golds);

    const SeedResult result = run_single_seed(config, 5);
    EXPECT_DOUBLE_EQ(result.accuracy, expected.accuracy);
    EXPECT_DOUBLE_EQ(result.macro_f1, expected.macro_f1);
    EXPECT_EQ(result.abstain_count, 1u);
    EXPECT_TRUE(result.support_digest.empty());
    EXPECT_TRUE(result.params_checksum.empty());
    std::filesystem::remove_all(fixture.dir);
}

TEST(RunExperiment, EchoAcrossSeedsAndSelfConsistency) {
    const auto fixture = write_fixture_dataset("exp1", 15, 15);
    ExperimentConfig config = fixture_config(fixture);
    const EvaluationReport report = run_experiment(config);
    ASSERT_EQ(report.seed_results.size(), 3u);
    EXPECT_TRUE(report.failed_seeds.empty());

    std::vector<double> accs;
    for (const SeedResult& r : report.seed_results) {
        EXPECT_DOUBLE_EQ(r.accuracy, r.small_model_test_accuracy);
        accs.push_back(r.accuracy);
    }
    const SeedStats stats = aggregate_stats(accs);
    EXPECT_NEAR(report.mean_accuracy, stats.mean, 1e-12);
    EXPECT_NEAR(report.std_accuracy, stats.stddev, 1e-12);
    EXPECT_EQ(report.selection_metric, "test_accuracy");
    std::filesystem::remove_all(fixture.dir);
}

TEST(RunExperiment, DuplicateSeedsRejected) {
    const auto fixture = write_fixture_dataset("dup", 5, 5);
    ExperimentConfig config = fixture_config(fixture);
    config.seeds = {1, 1};
    EXPECT_THROW(run_experiment(config), ConfigError);
    config.seeds = {};
    EXPECT_THROW(run_experiment(config), ConfigError);
    std::filesystem::remove_all(fixture.dir);
}

TEST(RunExperiment, AbstainFallbackUsesSmallModel) {
    const auto fixture = write_fixture_dataset("fallback", 15, 15);
    ExperimentConfig config = fixture_config(fixture);
    // ICL prompts carry no classifier sentences, so the echo mock abstains
    // on every article; the fallback substitutes the small model's call.
    config.mode = PromptMode::ICL;
    config.abstain_fallback = true;
    const SeedResult result = run_single_seed(config, 1);
    EXPECT_EQ(result.abstain_count, result.records.size());
    EXPECT_DOUBLE_EQ(result.accuracy, result.small_model_test_accuracy);

    config.abstain_fallback = false;
    const SeedResult no_fallback = run_single_seed(config, 1);
    EXPECT_DOUBLE_EQ(no_fallback.accuracy, 0.0);
    std::filesystem::remove_all(fixture.dir);
}

TEST(AblationGrid, SharesArtifactsAcrossModes) {
    const auto fixture = write_fixture_dataset("grid1", 15, 15);
    ExperimentConfig config = fixture_config(fixture);
    config.seeds = {1, 2};
    const std::vector<PromptMode> modes = {PromptMode::IMFND, PromptMode::IMFND_NO_PROBA,
                                           PromptMode::ICL};
    const auto reports = ablation_grid(config, modes, {1});
    ASSERT_EQ(reports.size(), 3u);

    // Shared-sampling contract: equal seeds have identical support digests
    // and parameter checksums in every cell.
    for (std::size_t seed_idx = 0; seed_idx < 2; ++seed_idx) {
        const std::string& digest0 = reports[0].seed_results[seed_idx].support_digest;
        const std::string& checksum0 = reports[0].seed_results[seed_idx].params_checksum;
        EXPECT_FALSE(digest0.empty());
        for (std::size_t cell = 1; cell < reports.size(); ++cell) {
            EXPECT_EQ(reports[cell].seed_results[seed_idx].support_digest, digest0);
            EXPECT_EQ(reports[cell].seed_results[seed_idx].params_checksum, checksum0);
        }
    }

    // Echo behavior: IMFND and IMFND_NO_PROBA cells identical, ICL abstains.
    EXPECT_DOUBLE_EQ(reports[0].mean_accuracy, reports[1].mean_accuracy);
    EXPECT_DOUBLE_EQ(reports[2].mean_accuracy, 0.0);
    EXPECT_DOUBLE_EQ(reports[2].abstain_rate, 1.0);
    EXPECT_DOUBLE_EQ(reports[0].abstain_rate, 0.0);
    std::filesystem::remove_all(fixture.dir);
}

TEST(AblationGrid, CellCountIsCartesianProduct) {
    const auto fixture = write_fixture_dataset("grid2", 15, 15);
    ExperimentConfig config = fixture_config(fixture);
    config.seeds = {1};
    const auto reports =
        ablation_grid(config, {PromptMode::IMFND, PromptMode::ICL}, {1, 3});
    EXPECT_EQ(reports.size(), 4u);
    // Rows carry their own n.
    EXPECT_EQ(reports[0].n_shots, 1);
    EXPECT_EQ(reports[1].n_shots, 3);
    std::filesystem::remove_all(fixture.dir);
}

TEST(ReportIo, JsonRoundTrip) {
    const auto fixture = write_fixture_dataset("report1", 10, 10);
    ExperimentConfig config = fixture_config(fixture);
    config.seeds = {1, 2};
    const EvaluationReport report = run_experiment(config);

    const auto dir = imfnd::testing::make_temp_dir("reportio");
    const auto path = dir / "report.json";
    write_report(report, path);
    const EvaluationReport back = read_report(path);
    EXPECT_EQ(report_to_json(back).dump(), report_to_json(report).dump());

    // Version bump must be rejected.
    auto doc = report_to_json(report);
    doc["schema_version"] = 999;
    EXPECT_THROW(report_from_json(doc), SchemaVersionMismatch);
    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(fixture.dir);
}

TEST(ReportIo, CsvAndMarkdownShape) {
    EvaluationReport a;
    a.mode = PromptMode::IMFND;
    a.n_shots = 1;
    a.mean_accuracy = 0.8;
    a.mean_macro_f1 = 0.78;
    EvaluationReport b;
    b.mode = PromptMode::ICL;
    b.n_shots = 1;
    b.mean_accuracy = 0.7;
    b.mean_macro_f1 = 0.66;
    EvaluationReport c;
    c.mode = PromptMode::ZERO_SHOT;
    c.n_shots = 0;
    c.mean_accuracy = 0.75;
    c.mean_macro_f1 = 0.7;

    const std::string csv = reports_to_csv({a, b, c});
    EXPECT_NE(csv.find("mode,n_shots,mean_accuracy,mean_macro_f1,std_accuracy,abstain_rate"),
              std::string::npos);
    EXPECT_NE(csv.find("imfnd,1,0.8000"), std::string::npos);

    const std::string md = reports_to_markdown({a, b, c});
    // Best bold, second-best underlined, per column.
    EXPECT_NE(md.find("**0.8000**"), std::string::npos);
    EXPECT_NE(md.find("<u>0.7500</u>"), std::string::npos);

    const std::string single = reports_to_markdown({a});
    EXPECT_EQ(single.find("**"), std::string::npos);  // no flags with one row
}
