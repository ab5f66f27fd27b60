#pragma once

#include <algorithm>
#include <cstdlib>
#include <memory>
#include <semaphore>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "imfnd/errors.hpp"
#include "imfnd/lvlm_client.hpp"
#include "imfnd/prompting.hpp"

namespace imfnd {

inline std::string base64_encode(const std::vector<unsigned char>& bytes) {
    static const char* alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back(alphabet[v & 63]);
    }
    if (i + 1 == bytes.size()) {
        const unsigned v = bytes[i] << 16;
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out += "==";
    } else if (i + 2 == bytes.size()) {
        const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

namespace detail {

inline std::string sniff_mime(const std::vector<unsigned char>& bytes) {
    if (bytes.size() >= 2 && bytes[0] == 0x89 && bytes[1] == 'P') return "image/png";
    if (bytes.size() >= 2 && bytes[0] == 0xFF && bytes[1] == 0xD8) return "image/jpeg";
    return "application/octet-stream";
}

}  // namespace detail

struct RemoteClientConfig {
    std::string model_id = "gpt-4-vision-preview";
    std::string base_url = "https://api.openai.com";
    std::string path = "/v1/chat/completions";
    std::string api_key_env = "OPENAI_API_KEY";
    int timeout_s = 60;
    int max_output_tokens = 256;
    int max_in_flight = 4;
};

// Chat-completions style client: one user message whose content interleaves
// text parts and base64 data-URL image parts in segment order. The prompt's
// temperature is forwarded verbatim on every call.
class RemoteClient final : public LVLMClient {
public:
    explicit RemoteClient(RemoteClientConfig config)
        : config_(std::move(config)),
          in_flight_(std::max(1, config_.max_in_flight)) {}

    std::string model_id() const override { return config_.model_id; }

protected:
    std::string do_complete(const MultimodalPrompt& prompt) override {
        // Bounded concurrency toward the backend.
        in_flight_.acquire();
        struct Release {
            std::counting_semaphore<>& s;
            ~Release() { s.release(); }
        } release{in_flight_};

        const char* key = std::getenv(config_.api_key_env.c_str());
        if (key == nullptr || *key == '\0') {
            throw AuthError("remote client: environment variable " + config_.api_key_env +
                            " is not set");
        }

        nlohmann::json content = nlohmann::json::array();
        for (const Segment& seg : prompt.segments) {
            if (const auto* text = std::get_if<TextSegment>(&seg)) {
                content.push_back({{"type", "text"}, {"text", text->text}});
            } else {
                const auto& image = std::get<ImageRef>(seg);
                if (!image.bytes) {
                    throw Error("remote client: image segment '" + image.id +
                                "' carries no bytes");
                }
                const std::string url = "data:" + detail::sniff_mime(*image.bytes) +
                                        ";base64," + base64_encode(*image.bytes);
                content.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
            }
        }
        nlohmann::json body = {
            {"model", config_.model_id},
            {"temperature", prompt.temperature},
            {"max_tokens", config_.max_output_tokens},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})},
        };

        httplib::Client http(config_.base_url);
        http.set_connection_timeout(config_.timeout_s, 0);
        http.set_read_timeout(config_.timeout_s, 0);
        http.set_bearer_token_auth(key);
        auto res = http.Post(config_.path, body.dump(), "application/json");
        if (!res) {
            throw TransientBackendError("remote client: transport error " +
                                        httplib::to_string(res.error()));
        }
        if (res->status == 401 || res->status == 403) {
            throw AuthError("remote client: HTTP " + std::to_string(res->status));
        }
        if (res->status == 408 || res->status == 429 || res->status >= 500) {
            throw TransientBackendError("remote client: HTTP " + std::to_string(res->status));
        }
        if (res->status != 200) {
            throw BackendFailure("remote client: HTTP " + std::to_string(res->status) + ": " +
                                 res->body);
        }
        try {
            const nlohmann::json doc = nlohmann::json::parse(res->body);
            return doc.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw BackendFailure(std::string("remote client: malformed response: ") + e.what());
        }
    }

private:
    RemoteClientConfig config_;
    std::counting_semaphore<> in_flight_;
};

}  // namespace imfnd
