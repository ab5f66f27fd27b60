#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>

#include "imfnd/encoders.hpp"
#include "imfnd/errors.hpp"
#include "imfnd/tensor.hpp"

namespace imfnd {

// The five fused representations built from one text/image pair:
// pooled text, pooled image, normalized concatenation, and the two
// cross-attended directions (image->text and text->image).
struct FeatureBundle {
    Vec f_t;   // dim d
    Vec f_m;   // dim d
    Vec f_c;   // dim 2d, unit L2 norm
    Vec f_mt;  // dim d
    Vec f_tm;  // dim d

    std::size_t dim() const { return f_t.size(); }
};

struct FusionConfig {
    // When set, f_t and f_m are L2-normalized individually before the
    // concatenation is normalized again.
    bool normalize_parts_before_concat = false;
};

// Row-wise softmax attention weights for query rows over context rows:
// softmax(Q C^T / sqrt(d)). Exposed separately so tests can check the
// convexity of each row directly.
inline Mat cross_attention_weights(const Mat& query, const Mat& context) {
    if (query.cols != context.cols) {
        throw DimensionMismatch("cross_attend: query dim " + std::to_string(query.cols) +
                                " vs context dim " + std::to_string(context.cols));
    }
    if (query.rows == 0 || context.rows == 0) {
        throw EmptyMatrix("cross_attend: empty operand");
    }
    if (!all_finite(query) || !all_finite(context)) {
        throw Error("cross_attend: non-finite input");
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(query.cols));
    Mat weights(query.rows, context.rows);
    for (std::size_t q = 0; q < query.rows; ++q) {
        double max_logit = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < context.rows; ++k) {
            double logit = 0.0;
            for (std::size_t c = 0; c < query.cols; ++c) {
                logit += query.at(q, c) * context.at(k, c);
            }
            logit *= scale;
            weights.at(q, k) = logit;
            if (logit > max_logit) max_logit = logit;
        }
        double denom = 0.0;
        for (std::size_t k = 0; k < context.rows; ++k) {
            weights.at(q, k) = std::exp(weights.at(q, k) - max_logit);
            denom += weights.at(q, k);
        }
        for (std::size_t k = 0; k < context.rows; ++k) {
            weights.at(q, k) /= denom;
        }
    }
    return weights;
}

// softmax(Q C^T / sqrt(d)) C with keys = values = context. No learned
// projections; the raw features act as Q/K/V directly.
inline Mat cross_attend(const Mat& query, const Mat& context) {
    const Mat weights = cross_attention_weights(query, context);
    Mat out(query.rows, context.cols);
    for (std::size_t q = 0; q < query.rows; ++q) {
        for (std::size_t k = 0; k < context.rows; ++k) {
            const double w = weights.at(q, k);
            for (std::size_t c = 0; c < context.cols; ++c) {
                out.at(q, c) += w * context.at(k, c);
            }
        }
    }
    return out;
}

// Arithmetic mean over rows.
inline Vec pool(const Mat& m) {
    if (m.rows == 0 || m.cols == 0) throw EmptyMatrix("pool: empty matrix");
    Vec out(m.cols, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) out[c] += m.at(r, c);
    }
    for (double& x : out) x /= static_cast<double>(m.rows);
    return out;
}

inline FeatureBundle build_feature_bundle(const TokenFeatures& text, const TokenFeatures& image,
                                          const FusionConfig& config = {}) {
    if (text.modality != Modality::TEXT || image.modality != Modality::IMAGE) {
        throw DimensionMismatch("build_feature_bundle: wrong modalities");
    }
    if (text.tokens.cols != image.tokens.cols) {
        throw DimensionMismatch("build_feature_bundle: text dim " +
                                std::to_string(text.tokens.cols) + " vs image dim " +
                                std::to_string(image.tokens.cols));
    }
    FeatureBundle bundle;
    bundle.f_t = text.pooled;
    bundle.f_m = image.pooled;
    if (config.normalize_parts_before_concat) {
        bundle.f_c = l2_normalize(concat(l2_normalize(bundle.f_t), l2_normalize(bundle.f_m)));
    } else {
        bundle.f_c = l2_normalize(concat(bundle.f_t, bundle.f_m));
    }
    bundle.f_mt = pool(cross_attend(image.tokens, text.tokens));
    bundle.f_tm = pool(cross_attend(text.tokens, image.tokens));
    return bundle;
}

}  // namespace imfnd
