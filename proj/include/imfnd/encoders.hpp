#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "imfnd/digest.hpp"
#include "imfnd/errors.hpp"
#include "imfnd/image_meta.hpp"
#include "imfnd/rng.hpp"
#include "imfnd/tensor.hpp"

namespace imfnd {

enum class Modality { TEXT, IMAGE };

// Token-level embeddings plus a pooled summary vector from one encoder call.
struct TokenFeatures {
    Mat tokens;    // N x d, N >= 1
    Vec pooled;    // dimension d
    Modality modality = Modality::TEXT;
};

// Frozen text/image encoder. Implementations must be deterministic and safe
// for concurrent read-only use after construction.
class EncoderBackend {
public:
    virtual ~EncoderBackend() = default;

    virtual std::string name() const = 0;
    virtual std::size_t dim() const = 0;
    virtual std::size_t max_text_tokens() const = 0;

    // Tokenization rule exposed so callers can reason about truncation.
    virtual std::vector<std::string> tokenize(const std::string& text) const = 0;

    virtual TokenFeatures encode_text_raw(const std::string& text) const = 0;
    virtual TokenFeatures encode_image_raw(const std::vector<unsigned char>& image) const = 0;
};

// Deterministic stand-in for a CLIP-style encoder: every embedding is derived
// from a keyed hash of the input, so the whole pipeline runs without model
// weights and reproduces bit-identically everywhere.
class HashBackend final : public EncoderBackend {
public:
    explicit HashBackend(std::size_t dim = 512, std::uint64_t key = 0x1,
                         std::size_t max_text_tokens = 77)
        : dim_(dim), key_(key), max_text_tokens_(max_text_tokens) {
        if (dim_ == 0) throw ConfigError("HashBackend: dim must be positive");
        if (max_text_tokens_ == 0) throw ConfigError("HashBackend: max_text_tokens must be positive");
    }

    std::string name() const override { return "test"; }
    std::size_t dim() const override { return dim_; }
    std::size_t max_text_tokens() const override { return max_text_tokens_; }

    // Whitespace tokenizer; truncation to max_text_tokens happens here.
    std::vector<std::string> tokenize(const std::string& text) const override {
        std::vector<std::string> tokens;
        std::size_t i = 0;
        while (i < text.size() && tokens.size() < max_text_tokens_) {
            while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            std::size_t start = i;
            while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            if (i > start) tokens.emplace_back(text.substr(start, i - start));
        }
        return tokens;
    }

    TokenFeatures encode_text_raw(const std::string& text) const override {
        const std::vector<std::string> tokens = tokenize(text);
        if (tokens.empty()) throw EmptyInput("encode_text: no tokens");
        Mat m(tokens.size(), dim_);
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            fill_row(m, t, token_seed(tokens[t]));
        }
        return finish(std::move(m), Modality::TEXT);
    }

    TokenFeatures encode_image_raw(const std::vector<unsigned char>& image) const override {
        decode_image_meta(image);  // throws DecodeError on malformed bytes
        const std::string digest = sha256_hex(image);
        // A small fixed patch grid stands in for the vision transformer tokens.
        constexpr std::size_t kPatches = 4;
        Mat m(kPatches, dim_);
        for (std::size_t p = 0; p < kPatches; ++p) {
            fill_row(m, p, token_seed(digest + "#" + std::to_string(p)));
        }
        return finish(std::move(m), Modality::IMAGE);
    }

private:
    std::uint64_t token_seed(const std::string& token) const {
        // FNV-1a over the token, mixed with the backend key.
        std::uint64_t h = 0xCBF29CE484222325ULL ^ key_;
        for (unsigned char c : token) {
            h ^= c;
            h *= 0x100000001B3ULL;
        }
        return h;
    }

    void fill_row(Mat& m, std::size_t row, std::uint64_t seed) const {
        SplitMix64 rng(seed);
        for (std::size_t c = 0; c < dim_; ++c) {
            m.at(row, c) = rng.uniform_symmetric();
        }
    }

    // Pooled vector is the plain row mean, so a single-token encoding pools
    // to exactly that token.
    TokenFeatures finish(Mat tokens, Modality modality) const {
        Vec pooled(dim_, 0.0);
        for (std::size_t r = 0; r < tokens.rows; ++r) {
            for (std::size_t c = 0; c < dim_; ++c) pooled[c] += tokens.at(r, c);
        }
        for (double& x : pooled) x /= static_cast<double>(tokens.rows);
        TokenFeatures out;
        out.tokens = std::move(tokens);
        out.pooled = std::move(pooled);
        out.modality = modality;
        return out;
    }

    std::size_t dim_;
    std::uint64_t key_;
    std::size_t max_text_tokens_;
};

struct BackendSpec {
    std::string name = "test";
    std::size_t dim = 512;
    std::uint64_t key = 0x1;
    std::size_t max_text_tokens = 77;
    std::string weights;  // path/identifier for backends with real weights
};

// Backend registry. "test" (alias "hash") is the only backend that ships with
// the library; real encoder integrations register by name in the same way.
inline std::shared_ptr<EncoderBackend> make_backend(const BackendSpec& spec) {
    if (spec.name == "test" || spec.name == "hash") {
        return std::make_shared<HashBackend>(spec.dim, spec.key, spec.max_text_tokens);
    }
    throw ConfigError("unknown encoder backend '" + spec.name + "' (known: test)");
}

namespace detail {
inline bool is_blank(const std::string& s) {
    for (unsigned char c : s) {
        if (!std::isspace(c)) return false;
    }
    return true;
}
}  // namespace detail

// Contract wrapper around EncoderBackend::encode_text_raw.
inline TokenFeatures encode_text(const EncoderBackend& backend, const std::string& text) {
    if (detail::is_blank(text)) throw EmptyInput("encode_text: empty text");
    TokenFeatures out;
    try {
        out = backend.encode_text_raw(text);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw BackendFailure(std::string("encode_text: backend error: ") + e.what());
    }
    if (out.tokens.rows < 1 || out.tokens.rows > backend.max_text_tokens() ||
        out.tokens.cols != backend.dim() || out.pooled.size() != backend.dim() ||
        !all_finite(out.tokens) || !all_finite(out.pooled) ||
        out.modality != Modality::TEXT) {
        throw BackendFailure("encode_text: backend violated the TokenFeatures contract");
    }
    return out;
}

inline TokenFeatures encode_image(const EncoderBackend& backend,
                                  const std::vector<unsigned char>& image) {
    TokenFeatures out;
    try {
        out = backend.encode_image_raw(image);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw BackendFailure(std::string("encode_image: backend error: ") + e.what());
    }
    if (out.tokens.rows < 1 || out.tokens.cols != backend.dim() ||
        out.pooled.size() != backend.dim() || !all_finite(out.tokens) ||
        !all_finite(out.pooled) || out.modality != Modality::IMAGE) {
        throw BackendFailure("encode_image: backend violated the TokenFeatures contract");
    }
    return out;
}

// Index of the image whose pooled embedding is most cosine-similar to the
// text; ties break toward the lowest index.
inline std::size_t select_best_image(const EncoderBackend& backend, const std::string& text,
                                     const std::vector<std::vector<unsigned char>>& images) {
    if (images.empty()) throw EmptyInput("select_best_image: no candidate images");
    const Vec text_pooled = l2_normalize(encode_text(backend, text).pooled);
    std::size_t best = 0;
    double best_score = -2.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Vec img_pooled = l2_normalize(encode_image(backend, images[i]).pooled);
        const double score = cosine_similarity(text_pooled, img_pooled);
        if (score > best_score) {
            best_score = score;
            best = i;
        }
    }
    return best;
}

}  // namespace imfnd
