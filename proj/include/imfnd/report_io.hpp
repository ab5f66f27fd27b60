#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "imfnd/errors.hpp"
#include "imfnd/evaluation.hpp"

namespace imfnd {

inline nlohmann::ordered_json report_to_json(const EvaluationReport& report) {
    nlohmann::ordered_json doc;
    doc["format"] = "imfnd.report";
    doc["schema_version"] = kReportSchemaVersion;
    doc["mode"] = prompt_mode_name(report.mode);
    doc["n_shots"] = report.n_shots;
    doc["mean_accuracy"] = report.mean_accuracy;
    doc["mean_macro_f1"] = report.mean_macro_f1;
    doc["std_accuracy"] = report.std_accuracy;
    doc["abstain_rate"] = report.abstain_rate;
    doc["dataset_digest"] = report.dataset_digest;
    doc["backend"] = report.backend_name;
    doc["client"] = report.client_desc;
    doc["selection_metric"] = report.selection_metric;
    doc["abstain_fallback"] = report.abstain_fallback;
    doc["protocol"] = {{"example_separator", report.example_separator},
                       {"prng", report.prng},
                       {"std_kind", report.std_kind}};
    doc["cache_stats"] = {{"lookups", report.cache_stats.lookups},
                          {"hits", report.cache_stats.hits},
                          {"misses", report.cache_stats.misses},
                          {"network_calls", report.cache_stats.network_calls}};
    doc["seeds"] = nlohmann::ordered_json::array();
    for (const SeedResult& r : report.seed_results) {
        nlohmann::ordered_json seed;
        seed["seed"] = r.seed;
        seed["accuracy"] = r.accuracy;
        seed["macro_f1"] = r.macro_f1;
        seed["abstain_count"] = r.abstain_count;
        seed["support_digest"] = r.support_digest;
        seed["params_checksum"] = r.params_checksum;
        seed["small_model_test_accuracy"] = r.small_model_test_accuracy;
        seed["records"] = nlohmann::ordered_json::array();
        for (const ArticleRecord& rec : r.records) {
            nlohmann::ordered_json line;
            line["id"] = rec.id;
            line["verdict"] = verdict_name(rec.verdict);
            line["final"] = verdict_name(rec.final_pred);
            line["gold"] = static_cast<int>(rec.gold);
            if (rec.small_model_label) {
                line["small_model"] = {
                    {"label", static_cast<int>(*rec.small_model_label)},
                    {"confidence", rec.small_model_confidence.value_or(0.0)}};
            }
            seed["records"].push_back(std::move(line));
        }
        doc["seeds"].push_back(std::move(seed));
    }
    doc["failed_seeds"] = nlohmann::ordered_json::array();
    for (const FailedSeed& f : report.failed_seeds) {
        doc["failed_seeds"].push_back({{"seed", f.seed}, {"error", f.error}});
    }
    return doc;
}

inline EvaluationReport report_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || doc.value("format", "") != "imfnd.report") {
        throw SchemaError("report: unrecognized document");
    }
    if (doc.value("schema_version", -1) != kReportSchemaVersion) {
        throw SchemaVersionMismatch("report: schema version " +
                                    doc.value("schema_version", nlohmann::json{}).dump() +
                                    " unsupported (expected " +
                                    std::to_string(kReportSchemaVersion) + ")");
    }
    EvaluationReport report;
    report.mode = prompt_mode_from_name(doc.at("mode").get<std::string>());
    report.n_shots = doc.at("n_shots").get<int>();
    report.mean_accuracy = doc.at("mean_accuracy").get<double>();
    report.mean_macro_f1 = doc.at("mean_macro_f1").get<double>();
    report.std_accuracy = doc.at("std_accuracy").get<double>();
    report.abstain_rate = doc.at("abstain_rate").get<double>();
    report.dataset_digest = doc.value("dataset_digest", "");
    report.backend_name = doc.value("backend", "");
    report.client_desc = doc.value("client", "");
    report.selection_metric = doc.value("selection_metric", "");
    report.abstain_fallback = doc.value("abstain_fallback", false);
    if (doc.contains("cache_stats")) {
        const auto& cs = doc["cache_stats"];
        report.cache_stats.lookups = cs.value("lookups", 0L);
        report.cache_stats.hits = cs.value("hits", 0L);
        report.cache_stats.misses = cs.value("misses", 0L);
        report.cache_stats.network_calls = cs.value("network_calls", 0L);
    }
    for (const auto& seed : doc.value("seeds", nlohmann::json::array())) {
        SeedResult r;
        r.seed = seed.at("seed").get<std::uint64_t>();
        r.accuracy = seed.at("accuracy").get<double>();
        r.macro_f1 = seed.at("macro_f1").get<double>();
        r.abstain_count = seed.value("abstain_count", 0UL);
        r.support_digest = seed.value("support_digest", "");
        r.params_checksum = seed.value("params_checksum", "");
        r.small_model_test_accuracy = seed.value("small_model_test_accuracy", -1.0);
        for (const auto& line : seed.value("records", nlohmann::json::array())) {
            ArticleRecord rec;
            rec.id = line.at("id").get<std::string>();
            const auto parse_kind = [](const std::string& s) {
                if (s == "real") return VerdictKind::REAL;
                if (s == "fake") return VerdictKind::FAKE;
                return VerdictKind::ABSTAIN;
            };
            rec.verdict = parse_kind(line.at("verdict").get<std::string>());
            rec.final_pred = parse_kind(line.value("final", line.at("verdict").get<std::string>()));
            rec.gold = line.at("gold").get<int>() == 0 ? Label::REAL : Label::FAKE;
            if (line.contains("small_model")) {
                rec.small_model_label =
                    line["small_model"].at("label").get<int>() == 0 ? Label::REAL : Label::FAKE;
                rec.small_model_confidence = line["small_model"].value("confidence", 0.0);
            }
            r.records.push_back(std::move(rec));
        }
        report.seed_results.push_back(std::move(r));
    }
    for (const auto& f : doc.value("failed_seeds", nlohmann::json::array())) {
        report.failed_seeds.push_back(
            {f.at("seed").get<std::uint64_t>(), f.at("error").get<std::string>()});
    }
    return report;
}

inline void write_report(const EvaluationReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write report " + path.string());
    out << report_to_json(report).dump(2) << "\n";
}

inline EvaluationReport read_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read report " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("report " + path.string() + ": " + e.what());
    }
    return report_from_json(doc);
}

namespace detail {

inline std::string fmt4(double x) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << x;
    return os.str();
}

}  // namespace detail

// Table-3-shaped summary: one row per (mode, n) cell.
inline std::string reports_to_csv(const std::vector<EvaluationReport>& reports) {
    std::string csv = "mode,n_shots,mean_accuracy,mean_macro_f1,std_accuracy,abstain_rate\n";
    for (const EvaluationReport& r : reports) {
        csv += prompt_mode_name(r.mode) + "," + std::to_string(r.n_shots) + "," +
               detail::fmt4(r.mean_accuracy) + "," + detail::fmt4(r.mean_macro_f1) + "," +
               detail::fmt4(r.std_accuracy) + "," + detail::fmt4(r.abstain_rate) + "\n";
    }
    return csv;
}

// Markdown comparison across reports; the best value per metric column is
// bold, the second-best underlined.
inline std::string reports_to_markdown(const std::vector<EvaluationReport>& reports) {
    struct Column {
        const char* header;
        std::function<double(const EvaluationReport&)> get;
    };
    const std::vector<Column> columns = {
        {"mean acc", [](const EvaluationReport& r) { return r.mean_accuracy; }},
        {"mean macro-F1", [](const EvaluationReport& r) { return r.mean_macro_f1; }},
    };

    std::string md = "| mode | n | mean acc | mean macro-F1 | std acc | abstain |\n";
    md += "|---|---|---|---|---|---|\n";
    for (const EvaluationReport& r : reports) {
        md += "| " + prompt_mode_name(r.mode) + " | " + std::to_string(r.n_shots) + " |";
        for (const Column& col : columns) {
            // Rank this cell within its column.
            std::vector<double> values;
            for (const EvaluationReport& other : reports) values.push_back(col.get(other));
            std::vector<double> sorted = values;
            std::sort(sorted.begin(), sorted.end(), std::greater<>());
            const double v = col.get(r);
            std::string cell = detail::fmt4(v);
            if (reports.size() > 1) {
                if (v == sorted[0]) {
                    cell = "**" + cell + "**";
                } else if (v == sorted[1]) {
                    cell = "<u>" + cell + "</u>";
                }
            }
            md += " " + cell + " |";
        }
        md += " " + detail::fmt4(r.std_accuracy) + " | " + detail::fmt4(r.abstain_rate) + " |\n";
    }
    return md;
}

}  // namespace imfnd
