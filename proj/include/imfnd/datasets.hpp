#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "imfnd/classifier.hpp"
#include "imfnd/digest.hpp"
#include "imfnd/encoders.hpp"
#include "imfnd/errors.hpp"
#include "imfnd/rng.hpp"

namespace imfnd {

enum class Language { EN, ZH };

inline std::string language_code(Language l) { return l == Language::EN ? "en" : "zh"; }

// One labeled text+image news item after preprocessing (exactly one image).
struct NewsArticle {
    std::string id;
    std::string text;
    std::string image_path;  // relative to the dataset image root
    std::shared_ptr<const std::vector<unsigned char>> image_bytes;
    Label label = Label::REAL;
    Language language = Language::EN;
};

// Pre-preprocessing record: may carry several candidate images.
struct RawRecord {
    std::string id;
    std::string text;
    std::vector<std::string> image_paths;
    Label label = Label::REAL;
    Language language = Language::EN;
};

struct LoadStats {
    std::size_t total_records = 0;
    std::size_t loaded = 0;
    std::size_t skipped = 0;
    std::size_t real_count = 0;
    std::size_t fake_count = 0;
    std::vector<std::string> record_errors;
};

struct LoadResult {
    std::vector<NewsArticle> articles;
    LoadStats stats;
};

namespace detail {

inline RawRecord parse_record(const nlohmann::json& doc) {
    if (!doc.is_object()) throw SchemaError("record is not a JSON object");
    RawRecord rec;
    if (!doc.contains("id") || !doc["id"].is_string() || doc["id"].get<std::string>().empty()) {
        throw SchemaError("missing or invalid 'id'");
    }
    rec.id = doc["id"].get<std::string>();
    if (!doc.contains("text") || !doc["text"].is_string()) {
        throw SchemaError("missing or invalid 'text'");
    }
    rec.text = doc["text"].get<std::string>();
    if (!doc.contains("image_paths") || !doc["image_paths"].is_array()) {
        throw SchemaError("missing or invalid 'image_paths'");
    }
    for (const auto& p : doc["image_paths"]) {
        if (!p.is_string()) throw SchemaError("'image_paths' entries must be strings");
        rec.image_paths.push_back(p.get<std::string>());
    }
    if (!doc.contains("label") || !doc["label"].is_number_integer()) {
        throw SchemaError("missing or invalid 'label'");
    }
    const int label = doc["label"].get<int>();
    if (label != 0 && label != 1) {
        throw SchemaError("'label' must be 0 (real) or 1 (fake), got " + std::to_string(label));
    }
    rec.label = label == 0 ? Label::REAL : Label::FAKE;
    const std::string lang = doc.value("language", "en");
    if (lang == "en") {
        rec.language = Language::EN;
    } else if (lang == "zh") {
        rec.language = Language::ZH;
    } else {
        throw SchemaError("'language' must be \"en\" or \"zh\", got \"" + lang + "\"");
    }
    return rec;
}

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingImage("cannot read image file " + path.string());
    return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                      std::istreambuf_iterator<char>());
}

template <typename RecordHandler>
LoadStats scan_jsonl(const std::filesystem::path& path, RecordHandler&& handle) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open dataset file " + path.string());
    LoadStats stats;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        ++stats.total_records;
        try {
            const nlohmann::json doc = nlohmann::json::parse(line);
            handle(parse_record(doc));
            ++stats.loaded;
        } catch (const nlohmann::json::exception& e) {
            ++stats.skipped;
            stats.record_errors.push_back(path.filename().string() + ":" +
                                          std::to_string(line_no) + ": invalid JSON: " + e.what());
        } catch (const Error& e) {
            ++stats.skipped;
            stats.record_errors.push_back(path.filename().string() + ":" +
                                          std::to_string(line_no) + ": " + e.what());
        }
    }
    return stats;
}

inline void enforce_malformed_budget(const LoadStats& stats) {
    if (stats.total_records == 0) throw SchemaError("dataset contains no records");
    // Malformed records are skipped and logged; past 1% the whole run fails.
    if (static_cast<double>(stats.skipped) > 0.01 * static_cast<double>(stats.total_records)) {
        std::string detail;
        for (std::size_t i = 0; i < stats.record_errors.size() && i < 5; ++i) {
            detail += "\n  " + stats.record_errors[i];
        }
        throw SchemaError(std::to_string(stats.skipped) + " of " +
                          std::to_string(stats.total_records) +
                          " records malformed (over the 1% budget):" + detail);
    }
}

}  // namespace detail

// Loads raw records (multi-image allowed); used by the preprocess step.
inline std::vector<RawRecord> load_raw_records(const std::filesystem::path& path) {
    std::vector<RawRecord> records;
    LoadStats stats = detail::scan_jsonl(path, [&](RawRecord rec) {
        if (rec.image_paths.empty()) {
            throw MissingImage("record '" + rec.id + "' lists no images");
        }
        records.push_back(std::move(rec));
    });
    detail::enforce_malformed_budget(stats);
    return records;
}

// Loads a preprocessed dataset: one JSON object per line with exactly one
// image path, resolved against image_root (defaults to the file's directory).
inline LoadResult load_dataset(const std::filesystem::path& path,
                               std::filesystem::path image_root = {}) {
    if (image_root.empty()) image_root = path.parent_path();
    LoadResult result;
    std::size_t real_count = 0;
    std::size_t fake_count = 0;
    result.stats = detail::scan_jsonl(path, [&](RawRecord rec) {
        if (rec.image_paths.empty()) {
            throw MissingImage("record '" + rec.id + "' lists no images");
        }
        if (rec.image_paths.size() != 1) {
            throw SchemaError("record '" + rec.id + "' has " +
                              std::to_string(rec.image_paths.size()) +
                              " images; run preprocess first");
        }
        NewsArticle article;
        article.id = std::move(rec.id);
        article.text = std::move(rec.text);
        article.image_path = rec.image_paths.front();
        article.image_bytes = std::make_shared<const std::vector<unsigned char>>(
            detail::read_file_bytes(image_root / article.image_path));
        article.label = rec.label;
        article.language = rec.language;
        (article.label == Label::REAL ? real_count : fake_count)++;
        result.articles.push_back(std::move(article));
    });
    result.stats.real_count = real_count;
    result.stats.fake_count = fake_count;
    detail::enforce_malformed_budget(result.stats);
    return result;
}

// Keeps the candidate image most cosine-similar to the text of each record.
inline std::vector<NewsArticle> preprocess_multi_image(const std::vector<RawRecord>& records,
                                                       const EncoderBackend& backend,
                                                       const std::filesystem::path& image_root) {
    std::vector<NewsArticle> articles;
    articles.reserve(records.size());
    for (const RawRecord& rec : records) {
        if (rec.image_paths.empty()) {
            throw MissingImage("record '" + rec.id + "' lists no images");
        }
        std::vector<std::vector<unsigned char>> candidates;
        candidates.reserve(rec.image_paths.size());
        for (const std::string& p : rec.image_paths) {
            candidates.push_back(detail::read_file_bytes(image_root / p));
        }
        const std::size_t best = select_best_image(backend, rec.text, candidates);
        NewsArticle article;
        article.id = rec.id;
        article.text = rec.text;
        article.image_path = rec.image_paths[best];
        article.image_bytes = std::make_shared<const std::vector<unsigned char>>(
            std::move(candidates[best]));
        article.label = rec.label;
        article.language = rec.language;
        articles.push_back(std::move(article));
    }
    return articles;
}

// Writes articles back out in the single-image JSONL schema.
inline void save_dataset(const std::vector<NewsArticle>& articles,
                         const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write dataset file " + path.string());
    for (const NewsArticle& a : articles) {
        nlohmann::ordered_json doc;
        doc["id"] = a.id;
        doc["text"] = a.text;
        doc["image_paths"] = {a.image_path};
        doc["label"] = static_cast<int>(a.label);
        doc["language"] = language_code(a.language);
        out << doc.dump() << "\n";
    }
}

// Content hash over sorted record ids + labels; the identity every sampling
// decision is keyed on.
inline std::string dataset_digest(const std::vector<NewsArticle>& articles) {
    std::vector<std::string> lines;
    lines.reserve(articles.size());
    for (const NewsArticle& a : articles) {
        lines.push_back(a.id + "\x1f" + std::to_string(static_cast<int>(a.label)));
    }
    std::sort(lines.begin(), lines.end());
    std::string material;
    for (const std::string& l : lines) {
        material += l;
        material += '\n';
    }
    return sha256_hex(material);
}

struct DatasetSplit {
    std::vector<NewsArticle> train;
    std::vector<NewsArticle> test;
    std::uint64_t seed = 0;
    double fraction = 0.2;
};

struct SupportSet {
    std::vector<NewsArticle> articles;  // interleaved REAL, FAKE, REAL, ...
    int n_per_class = 0;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<NewsArticle> class_members_sorted(const std::vector<NewsArticle>& articles,
                                                     Label label) {
    std::vector<NewsArticle> members;
    for (const NewsArticle& a : articles) {
        if (a.label == label) members.push_back(a);
    }
    std::sort(members.begin(), members.end(),
              [](const NewsArticle& a, const NewsArticle& b) { return a.id < b.id; });
    return members;
}

inline std::size_t round_half_up(double x) {
    return static_cast<std::size_t>(std::floor(x + 0.5));
}

inline void sort_by_id(std::vector<NewsArticle>& articles) {
    std::sort(articles.begin(), articles.end(),
              [](const NewsArticle& a, const NewsArticle& b) { return a.id < b.id; });
}

}  // namespace detail

// Per-class shuffle + cut: round-half-up(fraction * class size) articles of
// each class go to the test side. Operates on id-sorted members, so the
// result depends only on (dataset content, seed), not on input order.
inline DatasetSplit stratified_split(const std::vector<NewsArticle>& articles,
                                     double fraction, std::uint64_t seed) {
    if (fraction <= 0.0 || fraction >= 1.0) {
        throw ConfigError("stratified_split: fraction must lie in (0, 1)");
    }
    DatasetSplit split;
    split.seed = seed;
    split.fraction = fraction;
    for (const Label label : {Label::REAL, Label::FAKE}) {
        std::vector<NewsArticle> members = detail::class_members_sorted(articles, label);
        if (members.size() < 2) {
            throw DegenerateDataset("stratified_split: class " + label_word(label) + " has " +
                                    std::to_string(members.size()) + " member(s); need >= 2");
        }
        SplitMix64 rng(seed, label == Label::REAL ? rng_stream::kSplitReal
                                                  : rng_stream::kSplitFake);
        fisher_yates_shuffle(members, rng);
        const std::size_t k =
            detail::round_half_up(fraction * static_cast<double>(members.size()));
        for (std::size_t i = 0; i < members.size(); ++i) {
            (i < k ? split.test : split.train).push_back(std::move(members[i]));
        }
    }
    detail::sort_by_id(split.train);
    detail::sort_by_id(split.test);
    return split;
}

// Uniform without-replacement draw of n articles per class from the train
// side, interleaved REAL, FAKE, REAL, FAKE, ...
inline SupportSet sample_n_shot(const DatasetSplit& split, int n, std::uint64_t seed) {
    if (n <= 0) throw ConfigError("sample_n_shot: n must be positive");
    SupportSet support;
    support.n_per_class = n;
    support.seed = seed;
    std::vector<NewsArticle> per_class[2];
    for (const Label label : {Label::REAL, Label::FAKE}) {
        std::vector<NewsArticle> members = detail::class_members_sorted(split.train, label);
        if (members.size() < static_cast<std::size_t>(n)) {
            throw InsufficientData("sample_n_shot: class " + label_word(label) + " has " +
                                   std::to_string(members.size()) + " train member(s), need " +
                                   std::to_string(n));
        }
        SplitMix64 rng(seed, label == Label::REAL ? rng_stream::kSupportReal
                                                  : rng_stream::kSupportFake);
        // Partial Fisher-Yates: the first n slots are the draw, in draw order.
        for (int i = 0; i < n; ++i) {
            const std::size_t j = static_cast<std::size_t>(i) +
                static_cast<std::size_t>(rng.uniform_below(members.size() - i));
            std::swap(members[i], members[j]);
        }
        per_class[label == Label::REAL ? 0 : 1]
            .assign(members.begin(), members.begin() + n);
    }
    for (int i = 0; i < n; ++i) {
        support.articles.push_back(per_class[0][i]);
        support.articles.push_back(per_class[1][i]);
    }
    return support;
}

inline std::string support_digest(const SupportSet& support) {
    std::string material;
    for (const NewsArticle& a : support.articles) {
        material += a.id;
        material += '\n';
    }
    return sha256_hex(material);
}

}  // namespace imfnd
