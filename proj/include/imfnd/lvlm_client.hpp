#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <unistd.h>

#include "imfnd/digest.hpp"
#include "imfnd/errors.hpp"
#include "imfnd/prompting.hpp"

namespace imfnd {

enum class VerdictKind { REAL, FAKE, ABSTAIN };

// Parsed model answer; the raw response is retained for audit.
struct Verdict {
    VerdictKind kind = VerdictKind::ABSTAIN;
    std::string raw_response;
};

inline std::string verdict_name(VerdictKind kind) {
    switch (kind) {
        case VerdictKind::REAL: return "real";
        case VerdictKind::FAKE: return "fake";
        case VerdictKind::ABSTAIN: return "abstain";
    }
    return "?";
}

namespace detail {

// ASCII word characters; bytes >= 0x80 act as boundaries so a label next to
// CJK text still counts as a standalone word.
inline bool is_word_char(unsigned char c) {
    return c < 0x80 && (std::isalnum(c) || c == '_');
}

inline std::size_t find_word_ci(const std::string& haystack, const std::string& needle) {
    if (needle.empty() || haystack.size() < needle.size()) return std::string::npos;
    for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
        bool match = true;
        for (std::size_t j = 0; j < needle.size(); ++j) {
            if (std::tolower(static_cast<unsigned char>(haystack[i + j])) !=
                std::tolower(static_cast<unsigned char>(needle[j]))) {
                match = false;
                break;
            }
        }
        if (!match) continue;
        const bool left_ok = i == 0 || !is_word_char(static_cast<unsigned char>(haystack[i - 1]));
        const std::size_t end = i + needle.size();
        const bool right_ok =
            end == haystack.size() || !is_word_char(static_cast<unsigned char>(haystack[end]));
        if (left_ok && right_ok) return i;
    }
    return std::string::npos;
}

}  // namespace detail

// Case-insensitive whole-word scan for "real"/"fake"; when both occur the
// earlier one wins, when neither occurs the verdict is ABSTAIN.
inline Verdict parse_verdict(const std::string& response) {
    const std::size_t real_pos = detail::find_word_ci(response, "real");
    const std::size_t fake_pos = detail::find_word_ci(response, "fake");
    Verdict v;
    v.raw_response = response;
    if (real_pos == std::string::npos && fake_pos == std::string::npos) {
        v.kind = VerdictKind::ABSTAIN;
    } else if (fake_pos < real_pos) {
        v.kind = VerdictKind::FAKE;
    } else {
        v.kind = VerdictKind::REAL;
    }
    return v;
}

// One LVLM backend. complete() performs a single attempt and throws
// TransientBackendError (retryable) or AuthError (not retryable) on failure.
// Implementations must tolerate concurrent calls.
class LVLMClient {
public:
    virtual ~LVLMClient() = default;

    virtual std::string model_id() const = 0;

    std::string complete(const MultimodalPrompt& prompt) {
        calls_.fetch_add(1, std::memory_order_relaxed);
        return do_complete(prompt);
    }

    // Number of complete() attempts made; the network-call counter for mocks.
    long network_calls() const { return calls_.load(std::memory_order_relaxed); }

protected:
    virtual std::string do_complete(const MultimodalPrompt& prompt) = 0;

private:
    std::atomic<long> calls_{0};
};

// Stock answer used when a mock has nothing to echo; parses as ABSTAIN.
inline constexpr const char* kRefusalText =
    "I'm sorry, I can't assist with verifying the authenticity of news articles";

// Answers with the multimodal-classifier label found in the prompt (the last
// occurrence, i.e. the test input's), or a refusal when there is none.
class EchoSmallModelClient final : public LVLMClient {
public:
    std::string model_id() const override { return "mock-echo"; }

protected:
    std::string do_complete(const MultimodalPrompt& prompt) override {
        static const std::string kNeedle = "Multimodal classifier prediction: ";
        const std::string text = prompt_to_text(prompt);
        const std::size_t pos = text.rfind(kNeedle);
        if (pos == std::string::npos) return kRefusalText;
        std::string word;
        for (std::size_t i = pos + kNeedle.size();
             i < text.size() && std::isalpha(static_cast<unsigned char>(text[i])); ++i) {
            word.push_back(text[i]);
        }
        return word.empty() ? kRefusalText : word;
    }
};

class FixedClient final : public LVLMClient {
public:
    explicit FixedClient(Label label) : label_(label) {}

    std::string model_id() const override { return "mock-fixed-" + label_word(label_); }

protected:
    std::string do_complete(const MultimodalPrompt&) override { return label_word(label_); }

private:
    Label label_;
};

// Replies with the response of the first rule whose needle occurs in the
// prompt text; otherwise with the default response. A scripted response
// starting with "!transient!" raises TransientBackendError instead, so
// outage behavior can be scripted per article.
class ScriptedClient final : public LVLMClient {
public:
    using Script = std::vector<std::pair<std::string, std::string>>;

    static constexpr const char* kTransientSentinel = "!transient!";

    explicit ScriptedClient(Script script, std::string default_response = kRefusalText)
        : script_(std::move(script)), default_response_(std::move(default_response)) {}

    std::string model_id() const override { return "mock-scripted"; }

protected:
    std::string do_complete(const MultimodalPrompt& prompt) override {
        const std::string text = prompt_to_text(prompt);
        for (const auto& [needle, response] : script_) {
            if (text.find(needle) != std::string::npos) return resolve(response);
        }
        return resolve(default_response_);
    }

private:
    static std::string resolve(const std::string& response) {
        if (response.rfind(kTransientSentinel, 0) == 0) {
            throw TransientBackendError("scripted outage: " +
                                        response.substr(std::string(kTransientSentinel).size()));
        }
        return response;
    }

    Script script_;
    std::string default_response_;
};

enum class MockPolicy { ECHO_SMALL_MODEL, FIXED_REAL, FIXED_FAKE };

inline std::unique_ptr<LVLMClient> make_mock_client(MockPolicy policy) {
    switch (policy) {
        case MockPolicy::ECHO_SMALL_MODEL: return std::make_unique<EchoSmallModelClient>();
        case MockPolicy::FIXED_REAL: return std::make_unique<FixedClient>(Label::REAL);
        case MockPolicy::FIXED_FAKE: return std::make_unique<FixedClient>(Label::FAKE);
    }
    throw ConfigError("make_mock_client: unknown policy");
}

inline std::unique_ptr<LVLMClient> make_mock_client(ScriptedClient::Script script,
                                                    std::string default_response = kRefusalText) {
    return std::make_unique<ScriptedClient>(std::move(script), std::move(default_response));
}

// --- response cache ------------------------------------------------------

// One file per entry under the cache directory; the filename is the SHA-256
// of (model_id, serialized prompt incl. image digests, temperature). Writes
// go through a temp file + rename so concurrent writers stay consistent.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    const std::filesystem::path& dir() const { return dir_; }

    static std::string key_for(const std::string& model_id, const MultimodalPrompt& prompt) {
        return sha256_hex(prompt_cache_material(model_id, prompt));
    }

    std::optional<std::string> load(const std::string& key) const {
        std::ifstream in(dir_ / key, std::ios::binary);
        if (!in) return std::nullopt;
        std::string content((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
        // Header lines up to the first blank line, response afterwards.
        const std::string marker = "\n\n";
        const std::size_t sep = content.find(marker);
        if (content.rfind("imfnd-cache 1\n", 0) != 0 || sep == std::string::npos) {
            return std::nullopt;  // unreadable entry: treat as a miss
        }
        return content.substr(sep + marker.size());
    }

    void store(const std::string& key, const std::string& model_id,
               const std::string& response) const {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char stamp[32];
        std::tm tm_utc{};
        gmtime_r(&now, &tm_utc);
        std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);

        const std::filesystem::path final_path = dir_ / key;
        const std::filesystem::path tmp_path =
            dir_ / (key + ".tmp-" + std::to_string(::getpid()));
        {
            std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
            out << "imfnd-cache 1\n"
                << "model: " << model_id << "\n"
                << "written: " << stamp << "\n\n"
                << response;
        }
        std::filesystem::rename(tmp_path, final_path);
    }

    struct EntryInfo {
        std::string key;
        std::string model_id;
        std::uintmax_t size = 0;
    };

    std::vector<EntryInfo> list() const {
        std::vector<EntryInfo> entries;
        if (!std::filesystem::exists(dir_)) return entries;
        for (const auto& file : std::filesystem::directory_iterator(dir_)) {
            if (!file.is_regular_file()) continue;
            EntryInfo info;
            info.key = file.path().filename().string();
            info.size = file.file_size();
            std::ifstream in(file.path());
            std::string line;
            std::getline(in, line);  // magic
            if (std::getline(in, line) && line.rfind("model: ", 0) == 0) {
                info.model_id = line.substr(7);
            }
            entries.push_back(std::move(info));
        }
        std::sort(entries.begin(), entries.end(),
                  [](const EntryInfo& a, const EntryInfo& b) { return a.key < b.key; });
        return entries;
    }

    std::size_t clear() const {
        std::size_t removed = 0;
        if (!std::filesystem::exists(dir_)) return removed;
        for (const auto& file : std::filesystem::directory_iterator(dir_)) {
            if (file.is_regular_file()) {
                std::filesystem::remove(file.path());
                ++removed;
            }
        }
        return removed;
    }

private:
    std::filesystem::path dir_;
};

struct QueryStats {
    long lookups = 0;
    long hits = 0;
    long misses = 0;
    long network_calls = 0;
};

struct QueryOptions {
    int max_retries = 3;                 // additional attempts after the first
    double initial_backoff_s = 0.5;      // doubles per retry
    ResponseCache* cache = nullptr;      // optional
    QueryStats* stats = nullptr;         // optional
};

// Sends the prompt: cache lookup first, then up to 1 + max_retries attempts
// with exponential backoff on transient faults. AuthError is never retried.
inline std::string query(LVLMClient& client, const MultimodalPrompt& prompt,
                         const QueryOptions& options = {}) {
    if (prompt.segments.empty()) throw EmptyInput("query: empty prompt");

    std::string key;
    if (options.cache != nullptr) {
        key = ResponseCache::key_for(client.model_id(), prompt);
        if (options.stats != nullptr) ++options.stats->lookups;
        if (auto cached = options.cache->load(key)) {
            if (options.stats != nullptr) ++options.stats->hits;
            return *cached;
        }
        if (options.stats != nullptr) ++options.stats->misses;
    }

    std::string last_error;
    for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
        if (attempt > 0 && options.initial_backoff_s > 0) {
            const double delay = options.initial_backoff_s * std::pow(2.0, attempt - 1);
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }
        try {
            const std::string response = client.complete(prompt);
            if (options.stats != nullptr) options.stats->network_calls = client.network_calls();
            if (options.cache != nullptr) {
                options.cache->store(key, client.model_id(), response);
            }
            return response;
        } catch (const TransientBackendError& e) {
            last_error = e.what();
        }
    }
    if (options.stats != nullptr) options.stats->network_calls = client.network_calls();
    throw BackendUnavailable("query: retries exhausted after " +
                             std::to_string(options.max_retries + 1) + " attempts: " +
                             last_error);
}

}  // namespace imfnd
