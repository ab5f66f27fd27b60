#pragma once

// Linearly separable synthetic feature bundles: single-token text/image
// features at +/- mu per coordinate (class sign) with small noise, run
// through build_feature_bundle so every bundle invariant holds.

#include <cstdint>
#include <vector>

#include "imfnd/classifier.hpp"
#include "imfnd/fusion.hpp"
#include "imfnd/rng.hpp"

namespace imfnd::testing {

inline std::vector<LabeledBundle> make_separable_set(std::size_t dim, int n_per_class,
                                                     double mu, double sigma,
                                                     std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<LabeledBundle> out;
    for (int i = 0; i < 2 * n_per_class; ++i) {
        const Label label = i % 2 == 0 ? Label::REAL : Label::FAKE;
        const double sign = label == Label::REAL ? 1.0 : -1.0;
        Mat text(1, dim);
        Mat image(1, dim);
        for (std::size_t c = 0; c < dim; ++c) {
            text.at(0, c) = sign * mu + sigma * rng.uniform_symmetric();
            image.at(0, c) = sign * mu + sigma * rng.uniform_symmetric();
        }
        TokenFeatures text_features{text, text.row(0), Modality::TEXT};
        TokenFeatures image_features{image, image.row(0), Modality::IMAGE};
        out.emplace_back(build_feature_bundle(text_features, image_features), label);
    }
    return out;
}

}  // namespace imfnd::testing
