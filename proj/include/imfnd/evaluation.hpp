#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "imfnd/classifier.hpp"
#include "imfnd/datasets.hpp"
#include "imfnd/encoders.hpp"
#include "imfnd/errors.hpp"
#include "imfnd/fusion.hpp"
#include "imfnd/lvlm_client.hpp"
#include "imfnd/prompting.hpp"
#include "imfnd/remote_client.hpp"

namespace imfnd {

// Accuracy plus macro-F1 over {REAL, FAKE}. ABSTAIN predictions never match
// either class; every 0/0 ratio (precision, recall, F1) is defined as 0.
struct Metrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
};

inline Metrics compute_metrics(const std::vector<VerdictKind>& preds,
                               const std::vector<Label>& golds) {
    if (preds.size() != golds.size()) {
        throw LengthMismatch("compute_metrics: " + std::to_string(preds.size()) +
                             " predictions vs " + std::to_string(golds.size()) + " golds");
    }
    if (preds.empty()) throw EmptyInput("compute_metrics: no predictions");

    std::size_t correct = 0;
    double f1_sum = 0.0;
    for (const Label cls : {Label::REAL, Label::FAKE}) {
        const VerdictKind match =
            cls == Label::REAL ? VerdictKind::REAL : VerdictKind::FAKE;
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const bool gold_pos = golds[i] == cls;
            const bool pred_pos = preds[i] == match;
            if (gold_pos && pred_pos) ++tp;
            if (!gold_pos && pred_pos) ++fp;
            if (gold_pos && !pred_pos) ++fn;
        }
        const double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
        const double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
        const double f1 =
            precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
        f1_sum += f1;
    }
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const VerdictKind match =
            golds[i] == Label::REAL ? VerdictKind::REAL : VerdictKind::FAKE;
        if (preds[i] == match) ++correct;
    }
    Metrics m;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
    m.macro_f1 = f1_sum / 2.0;
    return m;
}

struct SeedStats {
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation
};

inline SeedStats aggregate_stats(const std::vector<double>& values) {
    if (values.empty()) throw EmptyInput("aggregate_stats: no values");
    SeedStats s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size()));
    return s;
}

struct ClientSpec {
    enum class Kind { MOCK_ECHO, MOCK_FIXED, MOCK_SCRIPTED, REMOTE };

    Kind kind = Kind::MOCK_ECHO;
    Label fixed_label = Label::REAL;                 // MOCK_FIXED
    ScriptedClient::Script script;                   // MOCK_SCRIPTED
    std::string default_response = kRefusalText;     // MOCK_SCRIPTED
    std::string model_id = "gpt-4-vision-preview";   // REMOTE
    std::string base_url = "https://api.openai.com";
    std::string api_key_env = "OPENAI_API_KEY";
    double temperature = 0.2;
    int max_retries = 3;
    double initial_backoff_s = 0.5;
    int timeout_s = 60;
    int max_in_flight = 4;

    std::string describe() const {
        switch (kind) {
            case Kind::MOCK_ECHO: return "mock-echo";
            case Kind::MOCK_FIXED: return "mock-fixed:" + label_word(fixed_label);
            case Kind::MOCK_SCRIPTED: return "mock-scripted";
            case Kind::REMOTE: return "remote:" + model_id;
        }
        return "?";
    }
};

struct ExperimentConfig {
    std::string dataset_path;
    std::string image_root;          // empty: directory of dataset_path
    BackendSpec backend;
    FusionConfig fusion;
    PromptMode mode = PromptMode::IMFND;
    int n_shots = 5;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::uint64_t split_seed = 42;
    double test_fraction = 0.2;
    TrainConfig train;
    ClientSpec client;
    bool abstain_fallback = false;
    std::string cache_dir;           // empty: caching disabled
    std::string artifact_dir;        // when set, trained params are written here

    void validate() const {
        if (seeds.empty()) throw ConfigError("seeds: must not be empty");
        std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
        if (distinct.size() != seeds.size()) {
            throw ConfigError("seeds: values must be distinct");
        }
        if (mode != PromptMode::ZERO_SHOT && n_shots <= 0) {
            throw ConfigError("shots: must be positive for few-shot modes");
        }
        if (test_fraction <= 0.0 || test_fraction >= 1.0) {
            throw ConfigError("split.fraction: must lie in (0, 1)");
        }
        train.validate();
    }
};

// One per-article audit line.
struct ArticleRecord {
    std::string id;
    VerdictKind verdict = VerdictKind::ABSTAIN;   // parsed LVLM answer
    VerdictKind final_pred = VerdictKind::ABSTAIN;  // after optional fallback
    std::optional<Label> small_model_label;
    std::optional<double> small_model_confidence;
    Label gold = Label::REAL;
};

struct SeedResult {
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::size_t abstain_count = 0;
    std::string support_digest;       // empty for zero-shot
    std::string params_checksum;      // empty for zero-shot
    double small_model_test_accuracy = -1.0;  // -1 when no model was trained
    std::vector<ArticleRecord> records;
};

struct FailedSeed {
    std::uint64_t seed = 0;
    std::string error;
};

inline constexpr int kReportSchemaVersion = 1;

struct EvaluationReport {
    PromptMode mode = PromptMode::IMFND;
    int n_shots = 0;
    std::vector<SeedResult> seed_results;
    std::vector<FailedSeed> failed_seeds;
    double mean_accuracy = 0.0;
    double mean_macro_f1 = 0.0;
    double std_accuracy = 0.0;
    double abstain_rate = 0.0;
    QueryStats cache_stats;
    std::string dataset_digest;
    std::string backend_name;
    std::string client_desc;
    std::string selection_metric;
    bool abstain_fallback = false;
    // Fixed protocol notes, recorded so reports are self-describing.
    std::string example_separator = "blank-line";
    std::string prng = "splitmix64";
    std::string std_kind = "population";
};

inline std::unique_ptr<LVLMClient> build_client(const ClientSpec& spec) {
    switch (spec.kind) {
        case ClientSpec::Kind::MOCK_ECHO:
            return make_mock_client(MockPolicy::ECHO_SMALL_MODEL);
        case ClientSpec::Kind::MOCK_FIXED:
            return make_mock_client(spec.fixed_label == Label::REAL ? MockPolicy::FIXED_REAL
                                                                    : MockPolicy::FIXED_FAKE);
        case ClientSpec::Kind::MOCK_SCRIPTED:
            return make_mock_client(spec.script, spec.default_response);
        case ClientSpec::Kind::REMOTE: {
            RemoteClientConfig remote;
            remote.model_id = spec.model_id;
            remote.base_url = spec.base_url;
            remote.api_key_env = spec.api_key_env;
            remote.timeout_s = spec.timeout_s;
            remote.max_in_flight = spec.max_in_flight;
            return std::make_unique<RemoteClient>(remote);
        }
    }
    throw ConfigError("client: unknown kind");
}

namespace detail {

using imfnd::build_client;

inline FeatureBundle bundle_for(const EncoderBackend& backend, const NewsArticle& article,
                                const FusionConfig& fusion) {
    const TokenFeatures text = encode_text(backend, article.text);
    const TokenFeatures image = encode_image(backend, *article.image_bytes);
    return build_feature_bundle(text, image, fusion);
}

inline ImageRef image_ref_for(const NewsArticle& article) {
    return ImageRef{article.id, article.image_bytes};
}

inline VerdictKind label_as_verdict(Label l) {
    return l == Label::REAL ? VerdictKind::REAL : VerdictKind::FAKE;
}

// Everything derived from the dataset once per experiment.
struct PreparedDataset {
    std::vector<NewsArticle> articles;
    std::string digest;
    DatasetSplit split;
    std::shared_ptr<EncoderBackend> backend;
    std::vector<FeatureBundle> test_bundles;   // aligned with split.test
    std::vector<LabeledBundle> test_labeled;
};

inline PreparedDataset prepare_dataset(const ExperimentConfig& config) {
    PreparedDataset prep;
    LoadResult loaded = load_dataset(config.dataset_path,
                                     config.image_root.empty()
                                         ? std::filesystem::path{}
                                         : std::filesystem::path(config.image_root));
    prep.articles = std::move(loaded.articles);
    prep.digest = dataset_digest(prep.articles);
    prep.split = stratified_split(prep.articles, config.test_fraction, config.split_seed);
    prep.backend = make_backend(config.backend);
    prep.test_bundles.reserve(prep.split.test.size());
    for (const NewsArticle& a : prep.split.test) {
        prep.test_bundles.push_back(bundle_for(*prep.backend, a, config.fusion));
        prep.test_labeled.emplace_back(prep.test_bundles.back(), a.label);
    }
    return prep;
}

// Per-(seed, n) artifacts shared across ablation-grid cells.
struct SeedArtifacts {
    SupportSet support;
    std::vector<FeatureBundle> support_bundles;
    std::optional<SmallModelParams> params;
    std::vector<SmallModelPrediction> support_preds;
    std::vector<SmallModelPrediction> test_preds;
    std::string support_digest;
    std::string params_checksum;
    double small_model_test_accuracy = -1.0;
};

inline void persist_params(const ExperimentConfig& config, int n_shots, std::uint64_t seed,
                           const SmallModelParams& params) {
    if (config.artifact_dir.empty()) return;
    std::filesystem::create_directories(config.artifact_dir);
    const std::filesystem::path path =
        std::filesystem::path(config.artifact_dir) /
        ("params-n" + std::to_string(n_shots) + "-seed" + std::to_string(seed) + ".json");
    std::ofstream out(path, std::ios::trunc);
    out << params_to_json(params).dump(2) << "\n";
}

inline SeedArtifacts build_seed_artifacts(const PreparedDataset& prep,
                                          const ExperimentConfig& config, int n_shots,
                                          std::uint64_t seed) {
    SeedArtifacts art;
    art.support = sample_n_shot(prep.split, n_shots, seed);
    art.support_digest = support_digest(art.support);

    std::vector<LabeledBundle> support_labeled;
    for (const NewsArticle& a : art.support.articles) {
        art.support_bundles.push_back(bundle_for(*prep.backend, a, config.fusion));
        support_labeled.emplace_back(art.support_bundles.back(), a.label);
    }

    TrainConfig train = config.train;
    train.seed = seed;
    art.params = train_small_model(support_labeled, prep.test_labeled, train);
    art.params_checksum = params_checksum(*art.params);
    persist_params(config, n_shots, seed, *art.params);

    for (const FeatureBundle& b : art.support_bundles) {
        art.support_preds.push_back(predict_article(*art.params, b));
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < prep.test_bundles.size(); ++i) {
        art.test_preds.push_back(predict_article(*art.params, prep.test_bundles[i]));
        if (art.test_preds.back().label == prep.split.test[i].label) ++correct;
    }
    art.small_model_test_accuracy =
        static_cast<double>(correct) / static_cast<double>(prep.test_bundles.size());
    return art;
}

inline SeedResult run_prepared_seed(const PreparedDataset& prep, const SeedArtifacts* art,
                                    const ExperimentConfig& config, PromptMode mode,
                                    std::uint64_t seed, LVLMClient& client,
                                    ResponseCache* cache, QueryStats* stats) {
    SeedResult result;
    result.seed = seed;

    std::vector<std::vector<Segment>> example_blocks;
    if (mode != PromptMode::ZERO_SHOT) {
        for (std::size_t i = 0; i < art->support.articles.size(); ++i) {
            const NewsArticle& a = art->support.articles[i];
            std::optional<SmallModelPrediction> pred;
            if (mode == PromptMode::IMFND || mode == PromptMode::IMFND_NO_PROBA) {
                pred = art->support_preds[i];
            }
            example_blocks.push_back(
                render_example(a.text, image_ref_for(a), a.label, pred, mode));
        }
        result.support_digest = art->support_digest;
        result.params_checksum = art->params_checksum;
        result.small_model_test_accuracy = art->small_model_test_accuracy;
    }

    QueryOptions options;
    options.max_retries = config.client.max_retries;
    options.initial_backoff_s = config.client.initial_backoff_s;
    options.cache = cache;
    options.stats = stats;

    std::vector<VerdictKind> finals;
    std::vector<Label> golds;
    for (std::size_t i = 0; i < prep.split.test.size(); ++i) {
        const NewsArticle& a = prep.split.test[i];
        std::optional<SmallModelPrediction> pred;
        if (mode != PromptMode::ZERO_SHOT) pred = art->test_preds[i];

        std::optional<SmallModelPrediction> prompt_pred;
        if (mode == PromptMode::IMFND || mode == PromptMode::IMFND_NO_PROBA) prompt_pred = pred;
        const std::vector<Segment> test_block =
            render_test_input(a.text, image_ref_for(a), prompt_pred, mode);
        const MultimodalPrompt prompt =
            assemble_prompt(example_blocks, test_block, config.client.temperature);

        const Verdict verdict = parse_verdict(query(client, prompt, options));

        ArticleRecord record;
        record.id = a.id;
        record.gold = a.label;
        record.verdict = verdict.kind;
        record.final_pred = verdict.kind;
        if (pred) {
            record.small_model_label = pred->label;
            record.small_model_confidence = pred->meta.confidence;
        }
        if (verdict.kind == VerdictKind::ABSTAIN) {
            ++result.abstain_count;
            if (config.abstain_fallback && pred) {
                record.final_pred = label_as_verdict(pred->label);
            }
        }
        finals.push_back(record.final_pred);
        golds.push_back(a.label);
        result.records.push_back(std::move(record));
    }

    const Metrics metrics = compute_metrics(finals, golds);
    result.accuracy = metrics.accuracy;
    result.macro_f1 = metrics.macro_f1;
    return result;
}

inline EvaluationReport summarize(const ExperimentConfig& config, PromptMode mode, int n_shots,
                                  const PreparedDataset& prep, std::vector<SeedResult> seeds,
                                  std::vector<FailedSeed> failures, const QueryStats& stats) {
    if (seeds.empty()) {
        throw Error("run_experiment: every seed failed (first error: " +
                    (failures.empty() ? std::string("?") : failures.front().error) + ")");
    }
    EvaluationReport report;
    report.mode = mode;
    report.n_shots = mode == PromptMode::ZERO_SHOT ? 0 : n_shots;
    report.seed_results = std::move(seeds);
    report.failed_seeds = std::move(failures);
    std::vector<double> accs, f1s;
    std::size_t abstains = 0;
    std::size_t total = 0;
    for (const SeedResult& r : report.seed_results) {
        accs.push_back(r.accuracy);
        f1s.push_back(r.macro_f1);
        abstains += r.abstain_count;
        total += r.records.size();
    }
    const SeedStats acc_stats = aggregate_stats(accs);
    report.mean_accuracy = acc_stats.mean;
    report.std_accuracy = acc_stats.stddev;
    report.mean_macro_f1 = aggregate_stats(f1s).mean;
    report.abstain_rate = total == 0 ? 0.0 : static_cast<double>(abstains) / total;
    report.cache_stats = stats;
    report.dataset_digest = prep.digest;
    report.backend_name = config.backend.name;
    report.client_desc = config.client.describe();
    report.selection_metric = config.train.selection_metric == SelectionMetric::TEST_ACCURACY
                                  ? "test_accuracy"
                                  : "train_loss";
    report.abstain_fallback = config.abstain_fallback;
    return report;
}

}  // namespace detail

// Executes one seed end to end: sample support, train C', reconstruct the
// in-context examples, prompt the client on every test article, score.
inline SeedResult run_single_seed(const ExperimentConfig& config, std::uint64_t seed) {
    config.validate();
    const detail::PreparedDataset prep = detail::prepare_dataset(config);
    std::unique_ptr<LVLMClient> client = detail::build_client(config.client);
    std::optional<ResponseCache> cache;
    if (!config.cache_dir.empty()) cache.emplace(config.cache_dir);

    std::optional<detail::SeedArtifacts> art;
    if (config.mode != PromptMode::ZERO_SHOT) {
        art = detail::build_seed_artifacts(prep, config, config.n_shots, seed);
    }
    QueryStats stats;
    return detail::run_prepared_seed(prep, art ? &*art : nullptr, config, config.mode, seed,
                                     *client, cache ? &*cache : nullptr, &stats);
}

// Runs every configured seed and aggregates mean/std (population) metrics.
// Individual seed failures are recorded; the report is emitted as long as at
// least one seed succeeds.
inline EvaluationReport run_experiment(const ExperimentConfig& config) {
    config.validate();
    const detail::PreparedDataset prep = detail::prepare_dataset(config);
    std::unique_ptr<LVLMClient> client = detail::build_client(config.client);
    std::optional<ResponseCache> cache;
    if (!config.cache_dir.empty()) cache.emplace(config.cache_dir);

    QueryStats stats;
    std::vector<SeedResult> results;
    std::vector<FailedSeed> failures;
    for (const std::uint64_t seed : config.seeds) {
        try {
            std::optional<detail::SeedArtifacts> art;
            if (config.mode != PromptMode::ZERO_SHOT) {
                art = detail::build_seed_artifacts(prep, config, config.n_shots, seed);
            }
            results.push_back(detail::run_prepared_seed(prep, art ? &*art : nullptr, config,
                                                        config.mode, seed, *client,
                                                        cache ? &*cache : nullptr, &stats));
        } catch (const std::exception& e) {
            failures.push_back({seed, e.what()});
        }
    }
    return detail::summarize(config, config.mode, config.n_shots, prep, std::move(results),
                             std::move(failures), stats);
}

// The Table-3-shaped grid: every (mode, n) cell, with splits, support sets
// and trained small models shared per seed so cells differ only in the
// prompt construction.
inline std::vector<EvaluationReport> ablation_grid(const ExperimentConfig& base,
                                                   const std::vector<PromptMode>& modes,
                                                   const std::vector<int>& shot_counts) {
    if (modes.empty() || shot_counts.empty()) {
        throw ConfigError("ablation_grid: modes and shot counts must not be empty");
    }
    base.validate();
    const detail::PreparedDataset prep = detail::prepare_dataset(base);
    std::unique_ptr<LVLMClient> client = detail::build_client(base.client);
    std::optional<ResponseCache> cache;
    if (!base.cache_dir.empty()) cache.emplace(base.cache_dir);

    const bool any_few_shot = std::any_of(modes.begin(), modes.end(), [](PromptMode m) {
        return m != PromptMode::ZERO_SHOT;
    });

    // (n, seed) -> shared artifacts.
    std::map<std::pair<int, std::uint64_t>, detail::SeedArtifacts> shared;
    if (any_few_shot) {
        for (const int n : shot_counts) {
            for (const std::uint64_t seed : base.seeds) {
                shared.emplace(std::make_pair(n, seed),
                               detail::build_seed_artifacts(prep, base, n, seed));
            }
        }
    }

    QueryStats stats;
    std::vector<EvaluationReport> reports;
    for (const PromptMode mode : modes) {
        for (const int n : shot_counts) {
            std::vector<SeedResult> results;
            std::vector<FailedSeed> failures;
            for (const std::uint64_t seed : base.seeds) {
                try {
                    const detail::SeedArtifacts* art =
                        mode == PromptMode::ZERO_SHOT ? nullptr : &shared.at({n, seed});
                    results.push_back(detail::run_prepared_seed(prep, art, base, mode, seed,
                                                                *client,
                                                                cache ? &*cache : nullptr,
                                                                &stats));
                } catch (const std::exception& e) {
                    failures.push_back({seed, e.what()});
                }
            }
            reports.push_back(detail::summarize(base, mode, n, prep, std::move(results),
                                                std::move(failures), stats));
        }
    }
    return reports;
}

}  // namespace imfnd
