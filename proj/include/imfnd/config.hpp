#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "imfnd/errors.hpp"
#include "imfnd/evaluation.hpp"

namespace imfnd {

// A full run description: one experiment, or a (modes x shots) grid.
struct RunSpec {
    ExperimentConfig experiment;
    std::optional<std::vector<PromptMode>> grid_modes;
    std::optional<std::vector<int>> grid_shots;
    std::string out_dir = "imfnd-run";

    bool is_grid() const { return grid_modes.has_value(); }
};

inline ClientSpec parse_client_string(const std::string& s) {
    ClientSpec spec;
    if (s == "mock-echo") {
        spec.kind = ClientSpec::Kind::MOCK_ECHO;
    } else if (s.rfind("mock-fixed:", 0) == 0) {
        spec.kind = ClientSpec::Kind::MOCK_FIXED;
        const std::string label = s.substr(11);
        if (label == "real") {
            spec.fixed_label = Label::REAL;
        } else if (label == "fake") {
            spec.fixed_label = Label::FAKE;
        } else {
            throw ConfigError("client: mock-fixed label must be 'real' or 'fake', got '" +
                              label + "'");
        }
    } else if (s.rfind("remote:", 0) == 0) {
        spec.kind = ClientSpec::Kind::REMOTE;
        spec.model_id = s.substr(7);
        if (spec.model_id.empty()) throw ConfigError("client: remote: needs a model id");
    } else {
        throw ConfigError("client: unknown spec '" + s +
                          "' (expected mock-echo, mock-fixed:<label> or remote:<model_id>)");
    }
    return spec;
}

namespace detail {

template <typename T>
T get_field(const nlohmann::json& doc, const std::string& key, const T& fallback) {
    if (!doc.contains(key)) return fallback;
    try {
        return doc.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config field '" + key + "' has the wrong type");
    }
}

inline ClientSpec parse_client_object(const nlohmann::json& doc) {
    if (doc.is_string()) return parse_client_string(doc.get<std::string>());
    if (!doc.is_object()) throw ConfigError("config field 'client' must be string or object");
    ClientSpec spec;
    const std::string kind = get_field<std::string>(doc, "kind", "mock-echo");
    if (kind == "mock-echo") {
        spec.kind = ClientSpec::Kind::MOCK_ECHO;
    } else if (kind == "mock-fixed") {
        spec = parse_client_string("mock-fixed:" + get_field<std::string>(doc, "label", "real"));
    } else if (kind == "mock-scripted") {
        spec.kind = ClientSpec::Kind::MOCK_SCRIPTED;
        for (const auto& rule : doc.value("script", nlohmann::json::array())) {
            spec.script.emplace_back(rule.at("contains").get<std::string>(),
                                     rule.at("response").get<std::string>());
        }
        spec.default_response = get_field<std::string>(doc, "default_response", kRefusalText);
    } else if (kind == "remote") {
        spec.kind = ClientSpec::Kind::REMOTE;
        spec.model_id = get_field<std::string>(doc, "model_id", spec.model_id);
        spec.base_url = get_field<std::string>(doc, "base_url", spec.base_url);
        spec.api_key_env = get_field<std::string>(doc, "api_key_env", spec.api_key_env);
    } else {
        throw ConfigError("client.kind '" + kind + "' unknown");
    }
    spec.temperature = get_field<double>(doc, "temperature", spec.temperature);
    if (spec.temperature < 0.0 || spec.temperature > 2.0) {
        throw ConfigError("client.temperature must lie in [0, 2]");
    }
    spec.max_retries = get_field<int>(doc, "max_retries", spec.max_retries);
    spec.initial_backoff_s = get_field<double>(doc, "initial_backoff_s", spec.initial_backoff_s);
    spec.timeout_s = get_field<int>(doc, "timeout_s", spec.timeout_s);
    spec.max_in_flight = get_field<int>(doc, "max_in_flight", spec.max_in_flight);
    return spec;
}

}  // namespace detail

inline RunSpec parse_run_spec(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
    RunSpec run;
    ExperimentConfig& cfg = run.experiment;

    if (!doc.contains("dataset") || !doc["dataset"].is_object() ||
        !doc["dataset"].contains("path")) {
        throw ConfigError("config field 'dataset.path' is required");
    }
    cfg.dataset_path = doc["dataset"]["path"].get<std::string>();
    cfg.image_root = detail::get_field<std::string>(doc["dataset"], "image_root", "");

    if (doc.contains("backend")) {
        const auto& b = doc["backend"];
        cfg.backend.name = detail::get_field<std::string>(b, "name", cfg.backend.name);
        cfg.backend.dim = detail::get_field<std::size_t>(b, "dim", cfg.backend.dim);
        cfg.backend.key = detail::get_field<std::uint64_t>(b, "key", cfg.backend.key);
        cfg.backend.max_text_tokens =
            detail::get_field<std::size_t>(b, "max_text_tokens", cfg.backend.max_text_tokens);
        cfg.backend.weights = detail::get_field<std::string>(b, "weights", "");
    }
    if (doc.contains("fusion")) {
        cfg.fusion.normalize_parts_before_concat = detail::get_field<bool>(
            doc["fusion"], "normalize_parts_before_concat", false);
    }
    cfg.mode = prompt_mode_from_name(detail::get_field<std::string>(doc, "mode", "imfnd"));
    cfg.n_shots = detail::get_field<int>(doc, "shots", cfg.n_shots);
    cfg.seeds = detail::get_field<std::vector<std::uint64_t>>(doc, "seeds", cfg.seeds);
    if (doc.contains("split")) {
        cfg.split_seed =
            detail::get_field<std::uint64_t>(doc["split"], "seed", cfg.split_seed);
        cfg.test_fraction =
            detail::get_field<double>(doc["split"], "fraction", cfg.test_fraction);
    }
    if (doc.contains("train")) {
        const auto& t = doc["train"];
        cfg.train.learning_rate =
            detail::get_field<double>(t, "learning_rate", cfg.train.learning_rate);
        cfg.train.weight_decay =
            detail::get_field<double>(t, "weight_decay", cfg.train.weight_decay);
        cfg.train.max_epochs = detail::get_field<int>(t, "max_epochs", cfg.train.max_epochs);
        cfg.train.early_stop_patience =
            detail::get_field<int>(t, "patience", cfg.train.early_stop_patience);
        cfg.train.joint_head_loss =
            detail::get_field<bool>(t, "joint_head_loss", cfg.train.joint_head_loss);
        cfg.train.init_scale = detail::get_field<double>(t, "init_scale", cfg.train.init_scale);
        const std::string metric =
            detail::get_field<std::string>(t, "selection_metric", "test_accuracy");
        if (metric == "test_accuracy") {
            cfg.train.selection_metric = SelectionMetric::TEST_ACCURACY;
        } else if (metric == "train_loss") {
            cfg.train.selection_metric = SelectionMetric::TRAIN_LOSS;
        } else {
            throw ConfigError("train.selection_metric must be test_accuracy or train_loss");
        }
    }
    if (doc.contains("client")) cfg.client = detail::parse_client_object(doc["client"]);
    cfg.abstain_fallback = detail::get_field<bool>(doc, "abstain_fallback", false);
    cfg.cache_dir = detail::get_field<std::string>(doc, "cache_dir", "");
    cfg.artifact_dir = detail::get_field<std::string>(doc, "artifact_dir", "");
    run.out_dir = detail::get_field<std::string>(doc, "out_dir", run.out_dir);

    if (doc.contains("grid")) {
        const auto& g = doc["grid"];
        std::vector<PromptMode> modes;
        for (const auto& m : g.value("modes", nlohmann::json::array())) {
            modes.push_back(prompt_mode_from_name(m.get<std::string>()));
        }
        std::vector<int> shots = detail::get_field<std::vector<int>>(g, "shots", {cfg.n_shots});
        if (modes.empty()) throw ConfigError("grid.modes must not be empty");
        run.grid_modes = std::move(modes);
        run.grid_shots = std::move(shots);
    }

    cfg.validate();
    return run;
}

inline RunSpec load_run_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return parse_run_spec(doc);
}

}  // namespace imfnd
