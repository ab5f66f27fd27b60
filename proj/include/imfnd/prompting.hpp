#pragma once

#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "imfnd/classifier.hpp"
#include "imfnd/digest.hpp"
#include "imfnd/errors.hpp"

namespace imfnd {

// ZERO_SHOT: bare question. ICL: labeled examples, no classifier hints
// ("w/o proba & pred"). IMFND: predictions and probabilities from the small
// model. IMFND_NO_PROBA: predictions only ("w/o proba").
enum class PromptMode { ZERO_SHOT, ICL, IMFND, IMFND_NO_PROBA };

inline std::string prompt_mode_name(PromptMode mode) {
    switch (mode) {
        case PromptMode::ZERO_SHOT: return "zero-shot";
        case PromptMode::ICL: return "icl";
        case PromptMode::IMFND: return "imfnd";
        case PromptMode::IMFND_NO_PROBA: return "imfnd-no-proba";
    }
    return "?";
}

inline PromptMode prompt_mode_from_name(const std::string& name) {
    if (name == "zero-shot") return PromptMode::ZERO_SHOT;
    if (name == "icl") return PromptMode::ICL;
    if (name == "imfnd") return PromptMode::IMFND;
    if (name == "imfnd-no-proba") return PromptMode::IMFND_NO_PROBA;
    throw ConfigError("unknown prompt mode '" + name +
                      "' (known: zero-shot, icl, imfnd, imfnd-no-proba)");
}

struct TextSegment {
    std::string text;

    bool operator==(const TextSegment&) const = default;
};

// Placeholder for one article image inside the prompt. Carries the bytes so
// remote clients can transmit them and cache keys can include their digest.
struct ImageRef {
    std::string id;
    std::shared_ptr<const std::vector<unsigned char>> bytes;

    std::string content_digest() const {
        return bytes ? sha256_hex(*bytes) : sha256_hex("ref:" + id);
    }

    bool operator==(const ImageRef& other) const {
        return id == other.id && content_digest() == other.content_digest();
    }
};

using Segment = std::variant<TextSegment, ImageRef>;

struct MultimodalPrompt {
    std::vector<Segment> segments;
    double temperature = 0.2;
};

namespace prompt_text {
// Table-layout templates. Segment text carries its surrounding spaces so the
// serialized prompt is the plain concatenation of its segments.
inline constexpr const char* kInstruction =
    "Read this news and its image, do you think this is real or fake news? "
    "Just answer if it's real or fake.";
inline constexpr const char* kImageSentinel = "[IMAGE]";
}  // namespace prompt_text

namespace detail {

inline int percent(double confidence) {
    return static_cast<int>(std::lround(confidence * 100.0));
}

inline std::string classifier_sentence(const std::string& head, const HeadCall& call,
                                       bool with_probability) {
    std::string s = " " + head + " classifier prediction: " + label_word(call.label);
    if (with_probability) {
        s += " with " + std::to_string(percent(call.confidence)) + "% confidence.";
    } else {
        s += ".";
    }
    return s;
}

inline std::string classifier_sentences(const SmallModelPrediction& pred,
                                        bool with_probability) {
    return classifier_sentence("Text", pred.text_head, with_probability) +
           classifier_sentence("Image", pred.image_head, with_probability) +
           classifier_sentence("Multimodal", pred.meta, with_probability);
}

inline std::vector<Segment> render_block(const std::string& article_text, ImageRef image,
                                         const std::optional<Label>& gold_label,
                                         const std::optional<SmallModelPrediction>& pred,
                                         PromptMode mode) {
    std::string header = prompt_text::kInstruction;
    if (gold_label) {
        header += " This is a " + label_word(*gold_label) + " news.";
    }
    if (mode == PromptMode::IMFND || mode == PromptMode::IMFND_NO_PROBA) {
        if (!pred) {
            throw MissingPrediction("prompting: mode " + prompt_mode_name(mode) +
                                    " needs a small-model prediction");
        }
        header += classifier_sentences(*pred, mode == PromptMode::IMFND);
    }
    header += " ";
    return {TextSegment{std::move(header)}, std::move(image),
            TextSegment{" News: " + article_text + "."}};
}

}  // namespace detail

// One in-context example: the instruction, the ground-truth label sentence,
// the classifier sentences (IMFND modes), then the image and the news text.
inline std::vector<Segment> render_example(const std::string& article_text, ImageRef image,
                                           Label gold_label,
                                           const std::optional<SmallModelPrediction>& pred,
                                           PromptMode mode) {
    if (mode == PromptMode::ZERO_SHOT) {
        throw ConfigError("render_example: zero-shot prompts have no examples");
    }
    return detail::render_block(article_text, std::move(image), gold_label, pred, mode);
}

// The test block: identical to an example minus the ground-truth sentence.
// ZERO_SHOT and ICL test inputs are textually identical.
inline std::vector<Segment> render_test_input(const std::string& article_text, ImageRef image,
                                              const std::optional<SmallModelPrediction>& pred,
                                              PromptMode mode) {
    return detail::render_block(article_text, std::move(image), std::nullopt, pred, mode);
}

// Concatenates example blocks and the test block in order. Blocks after the
// first get a blank-line separator folded into their leading text segment,
// so the segment count stays the sum of its parts.
inline MultimodalPrompt assemble_prompt(const std::vector<std::vector<Segment>>& examples,
                                        const std::vector<Segment>& test, double temperature) {
    MultimodalPrompt prompt;
    prompt.temperature = temperature;
    bool first = true;
    auto append_block = [&](const std::vector<Segment>& block) {
        for (std::size_t i = 0; i < block.size(); ++i) {
            // Separator folds into the block's leading text segment; a block
            // that starts with an image gets none.
            if (i == 0 && !first) {
                if (const auto* text = std::get_if<TextSegment>(&block[0])) {
                    prompt.segments.push_back(TextSegment{"\n\n" + text->text});
                    continue;
                }
            }
            prompt.segments.push_back(block[i]);
        }
        first = false;
    };
    for (const auto& example : examples) append_block(example);
    append_block(test);
    return prompt;
}

// UTF-8 rendering with "[IMAGE]" marking each image position; this is the
// golden-fixture format and the text the mock clients see.
inline std::string prompt_to_text(const MultimodalPrompt& prompt) {
    std::string out;
    for (const Segment& seg : prompt.segments) {
        if (const auto* text = std::get_if<TextSegment>(&seg)) {
            out += text->text;
        } else {
            out += prompt_text::kImageSentinel;
        }
    }
    return out;
}

inline std::string segments_to_text(const std::vector<Segment>& segments) {
    MultimodalPrompt p;
    p.segments = segments;
    return prompt_to_text(p);
}

// Canonical serialization used for cache keys: interleaves text bytes and
// image content digests, so identical text with different images never
// collides.
inline std::string prompt_cache_material(const std::string& model_id,
                                         const MultimodalPrompt& prompt) {
    std::string material = "model=" + model_id + "\x1f";
    char temp_buf[64];
    std::snprintf(temp_buf, sizeof(temp_buf), "temp=%.17g", prompt.temperature);
    material += temp_buf;
    for (const Segment& seg : prompt.segments) {
        material += '\x1f';
        if (const auto* text = std::get_if<TextSegment>(&seg)) {
            material += "T:" + text->text;
        } else {
            material += "I:" + std::get<ImageRef>(seg).content_digest();
        }
    }
    return material;
}

}  // namespace imfnd
