// imfnd command line: preprocess datasets, run experiments, render report
// tables and manage the response cache.

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "imfnd/imfnd.hpp"

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return stamp;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw imfnd::ConfigError("cannot open " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct RunFlags {
    std::string config_path;
    std::string mode;
    int shots = -1;
    std::vector<std::uint64_t> seeds;
    std::string client;
    std::string cache_dir;
    std::string out_dir;
};

// File values first, then command-line overrides.
imfnd::RunSpec resolve_run_spec(const RunFlags& flags) {
    imfnd::RunSpec run = imfnd::load_run_spec(flags.config_path);
    if (!flags.mode.empty()) run.experiment.mode = imfnd::prompt_mode_from_name(flags.mode);
    if (flags.shots > 0) run.experiment.n_shots = flags.shots;
    if (!flags.seeds.empty()) run.experiment.seeds = flags.seeds;
    if (!flags.client.empty()) {
        const double temperature = run.experiment.client.temperature;
        run.experiment.client = imfnd::parse_client_string(flags.client);
        run.experiment.client.temperature = temperature;
    }
    if (!flags.cache_dir.empty()) run.experiment.cache_dir = flags.cache_dir;
    if (!flags.out_dir.empty()) run.out_dir = flags.out_dir;
    run.experiment.validate();
    return run;
}

int cmd_run(const RunFlags& flags) {
    imfnd::RunSpec run = resolve_run_spec(flags);
    imfnd::ExperimentConfig& cfg = run.experiment;

    fs::create_directories(run.out_dir);
    if (cfg.artifact_dir.empty()) {
        cfg.artifact_dir = (fs::path(run.out_dir) / "params").string();
    }
    const std::string started = utc_now();

    std::vector<imfnd::EvaluationReport> reports;
    if (run.is_grid()) {
        reports = imfnd::ablation_grid(cfg, *run.grid_modes, *run.grid_shots);
    } else {
        reports.push_back(imfnd::run_experiment(cfg));
    }

    std::vector<std::string> outputs;
    std::set<std::string> written;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const imfnd::EvaluationReport& report = reports[i];
        const std::string name = "report-" + imfnd::prompt_mode_name(report.mode) + "-n" +
                                 std::to_string(report.n_shots) + ".json";
        // Zero-shot grid cells repeat per shot count and are identical;
        // write each distinct report once.
        if (!written.insert(name).second) continue;
        const fs::path path = fs::path(run.out_dir) / name;
        imfnd::write_report(report, path);
        outputs.push_back(path.string());
    }
    const fs::path csv_path = fs::path(run.out_dir) / "summary.csv";
    {
        std::ofstream csv(csv_path, std::ios::trunc);
        csv << imfnd::reports_to_csv(reports);
    }
    outputs.push_back(csv_path.string());
    if (fs::exists(cfg.artifact_dir)) {
        std::vector<std::string> param_files;
        for (const auto& file : fs::directory_iterator(cfg.artifact_dir)) {
            if (file.is_regular_file()) param_files.push_back(file.path().string());
        }
        std::sort(param_files.begin(), param_files.end());
        outputs.insert(outputs.end(), param_files.begin(), param_files.end());
    }

    nlohmann::ordered_json manifest;
    manifest["format"] = "imfnd.manifest";
    manifest["version"] = imfnd::kVersion;
    manifest["config_digest"] = imfnd::sha256_hex(read_file(flags.config_path));
    manifest["dataset_digest"] = reports.front().dataset_digest;
    manifest["started_at"] = started;
    manifest["finished_at"] = utc_now();
    manifest["outputs"] = outputs;
    {
        std::ofstream out(fs::path(run.out_dir) / "manifest.json", std::ios::trunc);
        out << manifest.dump(2) << "\n";
    }

    bool partial = false;
    for (const imfnd::EvaluationReport& report : reports) {
        std::cout << imfnd::prompt_mode_name(report.mode) << " n=" << report.n_shots
                  << ": mean acc " << report.mean_accuracy << ", mean macro-F1 "
                  << report.mean_macro_f1 << ", std acc " << report.std_accuracy
                  << ", abstain rate " << report.abstain_rate << "\n";
        if (!report.failed_seeds.empty()) {
            partial = true;
            for (const imfnd::FailedSeed& f : report.failed_seeds) {
                std::cerr << "seed " << f.seed << " failed: " << f.error << "\n";
            }
        }
    }
    std::cout << "report(s) written to " << run.out_dir << "\n";
    return partial ? 2 : 0;
}

int cmd_preprocess(const std::string& input, const std::string& image_root,
                   const std::string& output, const std::string& backend_name,
                   std::size_t backend_dim) {
    imfnd::BackendSpec spec;
    spec.name = backend_name;
    spec.dim = backend_dim;
    const auto backend = imfnd::make_backend(spec);
    const auto records = imfnd::load_raw_records(input);
    const fs::path root = image_root.empty() ? fs::path(input).parent_path() : fs::path(image_root);
    const auto articles = imfnd::preprocess_multi_image(records, *backend, root);
    imfnd::save_dataset(articles, output);
    std::size_t real = 0, fake = 0;
    for (const auto& a : articles) (a.label == imfnd::Label::REAL ? real : fake)++;
    std::cout << "wrote " << articles.size() << " articles (" << real << " real, " << fake
              << " fake) to " << output << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& paths, const std::string& format) {
    std::vector<imfnd::EvaluationReport> reports;
    for (const std::string& p : paths) reports.push_back(imfnd::read_report(p));
    if (format == "csv") {
        std::cout << imfnd::reports_to_csv(reports);
    } else {
        std::cout << imfnd::reports_to_markdown(reports);
    }
    return 0;
}

int cmd_cache(const std::string& dir, bool clear) {
    imfnd::ResponseCache cache(dir);
    if (clear) {
        std::cout << "removed " << cache.clear() << " cache entries from " << dir << "\n";
        return 0;
    }
    const auto entries = cache.list();
    for (const auto& e : entries) {
        std::cout << e.key << "  " << e.model_id << "  " << e.size << " bytes\n";
    }
    std::cout << entries.size() << " entries\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"IMFND: in-context multimodal fake news detection experiments"};
    app.require_subcommand(1);

    // run
    RunFlags flags;
    auto* run = app.add_subcommand("run", "Run an experiment or ablation grid from a config file");
    run->add_option("--config", flags.config_path, "JSON config file")->required();
    run->add_option("--mode", flags.mode, "Override prompt mode (zero-shot|icl|imfnd|imfnd-no-proba)");
    run->add_option("--shots", flags.shots, "Override n-shot count");
    run->add_option("--seeds", flags.seeds, "Override seed list")->delimiter(',');
    run->add_option("--client", flags.client,
                    "Override client (mock-echo|mock-fixed:<label>|remote:<model_id>)");
    run->add_option("--cache-dir", flags.cache_dir, "Override response cache directory");
    run->add_option("--out", flags.out_dir, "Override output directory");

    // preprocess
    std::string pp_input, pp_root, pp_output, pp_backend = "test";
    std::size_t pp_dim = 512;
    auto* pre = app.add_subcommand("preprocess",
                                   "Select the best image per record and write single-image JSONL");
    pre->add_option("--input", pp_input, "Raw JSONL with image_paths lists")->required();
    pre->add_option("--image-root", pp_root, "Directory image paths are relative to");
    pre->add_option("--output", pp_output, "Output JSONL path")->required();
    pre->add_option("--backend", pp_backend, "Encoder backend name");
    pre->add_option("--dim", pp_dim, "Encoder dimension");

    // report
    std::vector<std::string> report_paths;
    std::string report_format = "md";
    auto* rep = app.add_subcommand("report", "Render a comparison table from report JSON files");
    rep->add_option("paths", report_paths, "Report JSON files")->required();
    rep->add_option("--format", report_format, "md or csv")
        ->check(CLI::IsMember({"md", "csv"}));

    // cache
    std::string cache_dir_arg;
    bool cache_clear = false;
    auto* cache = app.add_subcommand("cache", "Inspect or clear the response cache");
    cache->add_option("--dir", cache_dir_arg, "Cache directory")->required();
    cache->add_flag("--clear", cache_clear, "Remove all entries");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(flags);
        if (pre->parsed()) return cmd_preprocess(pp_input, pp_root, pp_output, pp_backend, pp_dim);
        if (rep->parsed()) return cmd_report(report_paths, report_format);
        if (cache->parsed()) return cmd_cache(cache_dir_arg, cache_clear);
    } catch (const imfnd::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
