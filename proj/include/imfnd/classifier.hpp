#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "imfnd/digest.hpp"
#include "imfnd/errors.hpp"
#include "imfnd/fusion.hpp"
#include "imfnd/rng.hpp"
#include "imfnd/tensor.hpp"

namespace imfnd {

enum class Label : int { REAL = 0, FAKE = 1 };

inline std::string label_word(Label l) { return l == Label::REAL ? "real" : "fake"; }

struct ProbPair {
    double real = 0.5;
    double fake = 0.5;
};

// Per-feature probability pairs plus the meta pair they feed.
struct HeadProbabilities {
    ProbPair text, image, concat, mt, tm;
    ProbPair meta;
};

struct LinearHead {
    Mat w;  // 2 x fan_in
    Vec b;  // 2

    explicit LinearHead(std::size_t fan_in = 0) : w(2, fan_in), b(2, 0.0) {}
};

// The small model C': five linear heads over the feature bundle and a
// meta head over the concatenated head probabilities (10 inputs).
struct SmallModelParams {
    std::size_t dim = 0;
    LinearHead text, image, concat, mt, tm;
    LinearHead meta;

    explicit SmallModelParams(std::size_t d = 0)
        : dim(d), text(d), image(d), concat(2 * d), mt(d), tm(d), meta(10) {}

    std::vector<LinearHead*> heads() { return {&text, &image, &concat, &mt, &tm, &meta}; }
    std::vector<const LinearHead*> heads() const {
        return {&text, &image, &concat, &mt, &tm, &meta};
    }
};

struct HeadCall {
    Label label = Label::REAL;
    double confidence = 0.5;  // max of the pair, in [0.5, 1]
};

struct SmallModelPrediction {
    Label label = Label::REAL;  // argmax of the meta pair; ties go to REAL
    HeadCall text_head;
    HeadCall image_head;
    HeadCall meta;
};

enum class SelectionMetric { TEST_ACCURACY, TRAIN_LOSS };

struct TrainConfig {
    double learning_rate = 1e-3;
    double weight_decay = 1e-2;
    int max_epochs = 20;
    int early_stop_patience = 3;
    SelectionMetric selection_metric = SelectionMetric::TEST_ACCURACY;
    std::uint64_t seed = 0;
    // Adds each head's own cross-entropy (weight 1.0) to the meta loss, so
    // the probability inputs of the meta layer are supervised too.
    bool joint_head_loss = true;
    // Multiplier on the 1/sqrt(fan_in) weight init. Kept near zero: twenty
    // full-batch AdamW steps at lr 1e-3 move each weight by at most ~0.02,
    // so a unit-scale init would pin the decision boundary to its random
    // starting point instead of letting the data place it.
    double init_scale = 1e-3;

    void validate() const {
        if (learning_rate <= 0) throw ConfigError("train.learning_rate must be positive");
        if (weight_decay < 0) throw ConfigError("train.weight_decay must be non-negative");
        if (max_epochs <= 0) throw ConfigError("train.max_epochs must be positive");
        if (early_stop_patience <= 0) throw ConfigError("train.patience must be positive");
        if (early_stop_patience > max_epochs) {
            throw ConfigError("train.patience must not exceed train.max_epochs");
        }
        if (init_scale < 0) throw ConfigError("train.init_scale must be non-negative");
    }
};

using LabeledBundle = std::pair<FeatureBundle, Label>;

namespace detail {

inline ProbPair softmax2(double logit_real, double logit_fake) {
    const double m = std::max(logit_real, logit_fake);
    const double er = std::exp(logit_real - m);
    const double ef = std::exp(logit_fake - m);
    const double s = er + ef;
    return {er / s, ef / s};
}

inline ProbPair head_forward(const LinearHead& head, const Vec& f) {
    if (head.w.cols != f.size()) {
        throw DimensionMismatch("classifier head: fan_in " + std::to_string(head.w.cols) +
                                " vs input " + std::to_string(f.size()));
    }
    double u0 = head.b[0];
    double u1 = head.b[1];
    for (std::size_t c = 0; c < f.size(); ++c) {
        u0 += head.w.at(0, c) * f[c];
        u1 += head.w.at(1, c) * f[c];
    }
    return softmax2(u0, u1);
}

inline Vec meta_input(const HeadProbabilities& p) {
    return {p.text.real, p.text.fake, p.image.real, p.image.fake, p.concat.real,
            p.concat.fake, p.mt.real, p.mt.fake, p.tm.real, p.tm.fake};
}

inline double clamped_log(double p) {
    constexpr double kEps = 1e-12;
    return std::log(std::max(p, kEps));
}

inline double pair_cross_entropy(const ProbPair& p, Label y) {
    const double target_fake = (y == Label::FAKE) ? 1.0 : 0.0;
    return -(target_fake * clamped_log(p.fake) + (1.0 - target_fake) * clamped_log(p.real));
}

}  // namespace detail

inline HeadProbabilities forward(const SmallModelParams& params, const FeatureBundle& bundle) {
    if (bundle.dim() != params.dim) {
        throw DimensionMismatch("forward: bundle dim " + std::to_string(bundle.dim()) +
                                " vs model dim " + std::to_string(params.dim));
    }
    HeadProbabilities p;
    p.text = detail::head_forward(params.text, bundle.f_t);
    p.image = detail::head_forward(params.image, bundle.f_m);
    p.concat = detail::head_forward(params.concat, bundle.f_c);
    p.mt = detail::head_forward(params.mt, bundle.f_mt);
    p.tm = detail::head_forward(params.tm, bundle.f_tm);
    p.meta = detail::head_forward(params.meta, detail::meta_input(p));
    return p;
}

// Cross-entropy of the meta pair against the label, log-clamped at 1e-12.
inline double loss(const HeadProbabilities& probs, Label label) {
    return detail::pair_cross_entropy(probs.meta, label);
}

// The trained objective: meta cross-entropy, plus each head's own
// cross-entropy when joint_head_loss is on.
inline double training_loss(const SmallModelParams& params, const FeatureBundle& bundle,
                            Label label, bool joint_head_loss = true) {
    const HeadProbabilities p = forward(params, bundle);
    double total = detail::pair_cross_entropy(p.meta, label);
    if (joint_head_loss) {
        total += detail::pair_cross_entropy(p.text, label);
        total += detail::pair_cross_entropy(p.image, label);
        total += detail::pair_cross_entropy(p.concat, label);
        total += detail::pair_cross_entropy(p.mt, label);
        total += detail::pair_cross_entropy(p.tm, label);
    }
    return total;
}

// Gradients of training_loss with the same shapes as SmallModelParams.
struct ParamGrads : SmallModelParams {
    explicit ParamGrads(std::size_t d = 0) : SmallModelParams(d) {}
};

namespace detail {

struct HeadSlot {
    const LinearHead* param;
    LinearHead* grad;
    const Vec* input;
    ProbPair prob;
    std::size_t meta_offset;  // index of this head's pair inside the meta input
};

inline void accumulate_head_grad(LinearHead& grad, const Vec& input, double g_real,
                                 double g_fake) {
    for (std::size_t c = 0; c < input.size(); ++c) {
        grad.w.at(0, c) += g_real * input[c];
        grad.w.at(1, c) += g_fake * input[c];
    }
    grad.b[0] += g_real;
    grad.b[1] += g_fake;
}

}  // namespace detail

// Analytic gradient of training_loss, averaged over the batch.
inline ParamGrads loss_gradients(const SmallModelParams& params,
                                 const std::vector<LabeledBundle>& batch,
                                 bool joint_head_loss = true) {
    ParamGrads grads(params.dim);
    if (batch.empty()) return grads;

    for (const auto& [bundle, label] : batch) {
        const HeadProbabilities p = forward(params, bundle);
        const Vec z = detail::meta_input(p);
        const double t_fake = (label == Label::FAKE) ? 1.0 : 0.0;
        const double t_real = 1.0 - t_fake;

        // Meta head: d(meta CE)/d(meta logits) = q - t.
        const double gm_real = p.meta.real - t_real;
        const double gm_fake = p.meta.fake - t_fake;
        detail::accumulate_head_grad(grads.meta, z, gm_real, gm_fake);

        // Backpropagate into the meta input z.
        Vec g_z(10, 0.0);
        for (std::size_t c = 0; c < 10; ++c) {
            g_z[c] = params.meta.w.at(0, c) * gm_real + params.meta.w.at(1, c) * gm_fake;
        }

        const std::array<std::pair<const LinearHead*, LinearHead*>, 5> heads = {{
            {&params.text, &grads.text},
            {&params.image, &grads.image},
            {&params.concat, &grads.concat},
            {&params.mt, &grads.mt},
            {&params.tm, &grads.tm},
        }};
        const std::array<const Vec*, 5> inputs = {&bundle.f_t, &bundle.f_m, &bundle.f_c,
                                                  &bundle.f_mt, &bundle.f_tm};
        const std::array<ProbPair, 5> probs = {p.text, p.image, p.concat, p.mt, p.tm};

        for (std::size_t h = 0; h < 5; ++h) {
            const ProbPair& ph = probs[h];
            const double gp_real = g_z[2 * h];
            const double gp_fake = g_z[2 * h + 1];
            // Softmax Jacobian: g_u_i = p_i * (g_p_i - sum_j g_p_j p_j).
            const double mix = gp_real * ph.real + gp_fake * ph.fake;
            double gu_real = ph.real * (gp_real - mix);
            double gu_fake = ph.fake * (gp_fake - mix);
            if (joint_head_loss) {
                gu_real += ph.real - t_real;
                gu_fake += ph.fake - t_fake;
            }
            detail::accumulate_head_grad(*heads[h].second, *inputs[h], gu_real, gu_fake);
        }
    }

    const double inv = 1.0 / static_cast<double>(batch.size());
    for (LinearHead* head : grads.heads()) {
        for (double& x : head->w.data) x *= inv;
        for (double& x : head->b) x *= inv;
    }
    return grads;
}

namespace detail {

// AdamW with decoupled weight decay applied to every parameter.
struct AdamWState {
    SmallModelParams m;
    SmallModelParams v;
    int step = 0;

    explicit AdamWState(std::size_t d) : m(d), v(d) {}

    void apply(SmallModelParams& params, const ParamGrads& grads, double lr, double wd) {
        constexpr double kBeta1 = 0.9;
        constexpr double kBeta2 = 0.999;
        constexpr double kEps = 1e-8;
        ++step;
        const double bc1 = 1.0 - std::pow(kBeta1, step);
        const double bc2 = 1.0 - std::pow(kBeta2, step);

        auto ps = params.heads();
        auto gs = grads.heads();
        auto ms = m.heads();
        auto vs = v.heads();
        for (std::size_t h = 0; h < ps.size(); ++h) {
            auto update = [&](std::vector<double>& theta, const std::vector<double>& g,
                              std::vector<double>& m1, std::vector<double>& m2) {
                for (std::size_t i = 0; i < theta.size(); ++i) {
                    m1[i] = kBeta1 * m1[i] + (1.0 - kBeta1) * g[i];
                    m2[i] = kBeta2 * m2[i] + (1.0 - kBeta2) * g[i] * g[i];
                    const double mhat = m1[i] / bc1;
                    const double vhat = m2[i] / bc2;
                    theta[i] -= lr * (mhat / (std::sqrt(vhat) + kEps) + wd * theta[i]);
                }
            };
            update(ps[h]->w.data, gs[h]->w.data, ms[h]->w.data, vs[h]->w.data);
            update(ps[h]->b, gs[h]->b, ms[h]->b, vs[h]->b);
        }
    }
};

inline bool params_finite(const SmallModelParams& params) {
    for (const LinearHead* head : params.heads()) {
        if (!all_finite(head->w) || !all_finite(head->b)) return false;
    }
    return true;
}

}  // namespace detail

inline SmallModelPrediction predict_article(const SmallModelParams& params,
                                            const FeatureBundle& bundle) {
    const HeadProbabilities p = forward(params, bundle);
    auto call = [](const ProbPair& pair) {
        HeadCall c;
        // Strict inequality: a tied pair goes to REAL.
        c.label = pair.fake > pair.real ? Label::FAKE : Label::REAL;
        c.confidence = std::max(pair.real, pair.fake);
        return c;
    };
    SmallModelPrediction pred;
    pred.text_head = call(p.text);
    pred.image_head = call(p.image);
    pred.meta = call(p.meta);
    pred.label = pred.meta.label;
    return pred;
}

// Zero biases; weights uniform in +/- init_scale/sqrt(fan_in) drawn from
// the seeded stream so identical seeds give identical parameters.
inline SmallModelParams init_params(std::size_t dim, std::uint64_t seed,
                                    double init_scale = 1e-3) {
    SmallModelParams params(dim);
    SplitMix64 rng(seed, rng_stream::kClassifierInit);
    for (LinearHead* head : params.heads()) {
        const double scale = init_scale / std::sqrt(static_cast<double>(head->w.cols));
        for (double& x : head->w.data) x = rng.uniform_symmetric() * scale;
    }
    return params;
}

// Trains C' with full-batch AdamW and returns the checkpoint that scored
// best under the configured selection metric (the untrained parameters count
// as the epoch-0 candidate). Early stopping uses the configured patience.
inline SmallModelParams train_small_model(const std::vector<LabeledBundle>& support,
                                          const std::vector<LabeledBundle>& eval_set,
                                          const TrainConfig& config) {
    config.validate();
    if (support.empty()) throw DegenerateSupport("train_small_model: empty support set");
    bool has_real = false;
    bool has_fake = false;
    for (const auto& [bundle, label] : support) {
        (label == Label::REAL ? has_real : has_fake) = true;
    }
    if (!has_real || !has_fake) {
        throw DegenerateSupport("train_small_model: support set contains a single class");
    }
    if (config.selection_metric == SelectionMetric::TEST_ACCURACY && eval_set.empty()) {
        throw ConfigError("train_small_model: TEST_ACCURACY selection needs an eval set");
    }

    const std::size_t dim = support.front().first.dim();
    SmallModelParams params = init_params(dim, config.seed, config.init_scale);

    auto mean_train_loss = [&](const SmallModelParams& p) {
        double total = 0.0;
        for (const auto& [bundle, label] : support) {
            total += training_loss(p, bundle, label, config.joint_head_loss);
        }
        return total / static_cast<double>(support.size());
    };
    auto eval_accuracy = [&](const SmallModelParams& p) {
        std::size_t correct = 0;
        for (const auto& [bundle, label] : eval_set) {
            if (predict_article(p, bundle).label == label) ++correct;
        }
        return static_cast<double>(correct) / static_cast<double>(eval_set.size());
    };
    // Higher is better for both (loss is negated).
    auto score = [&](const SmallModelParams& p) {
        return config.selection_metric == SelectionMetric::TEST_ACCURACY
                   ? eval_accuracy(p)
                   : -mean_train_loss(p);
    };

    SmallModelParams best = params;
    double best_score = score(params);
    int epochs_since_improvement = 0;

    detail::AdamWState opt(dim);
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const ParamGrads grads = loss_gradients(params, support, config.joint_head_loss);
        opt.apply(params, grads, config.learning_rate, config.weight_decay);
        if (!detail::params_finite(params)) {
            throw NonFiniteLoss("train_small_model: parameters diverged at epoch " +
                                std::to_string(epoch));
        }
        const double l = mean_train_loss(params);
        if (!std::isfinite(l)) {
            throw NonFiniteLoss("train_small_model: loss diverged at epoch " +
                                std::to_string(epoch));
        }
        const double s = score(params);
        if (s > best_score) {
            best_score = s;
            best = params;
            epochs_since_improvement = 0;
        } else {
            ++epochs_since_improvement;
        }
        if (epochs_since_improvement >= config.early_stop_patience) break;
    }
    return best;
}

// --- serialization -------------------------------------------------------

inline constexpr int kParamsSchemaVersion = 1;

inline nlohmann::ordered_json params_to_json(const SmallModelParams& params) {
    nlohmann::ordered_json doc;
    doc["format"] = "imfnd.small-model";
    doc["version"] = kParamsSchemaVersion;
    doc["dim"] = params.dim;
    const std::array<std::pair<const char*, const LinearHead*>, 6> named = {{
        {"text", &params.text},
        {"image", &params.image},
        {"concat", &params.concat},
        {"mt", &params.mt},
        {"tm", &params.tm},
        {"meta", &params.meta},
    }};
    for (const auto& [name, head] : named) {
        nlohmann::ordered_json h;
        h["rows"] = head->w.rows;
        h["cols"] = head->w.cols;
        h["w"] = head->w.data;
        h["b"] = head->b;
        doc["heads"][name] = std::move(h);
    }
    return doc;
}

inline SmallModelParams params_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || doc.value("format", "") != "imfnd.small-model") {
        throw SchemaError("small-model params: unrecognized document");
    }
    if (doc.value("version", -1) != kParamsSchemaVersion) {
        throw SchemaVersionMismatch("small-model params: unsupported version");
    }
    SmallModelParams params(doc.at("dim").get<std::size_t>());
    const std::array<std::pair<const char*, LinearHead*>, 6> named = {{
        {"text", &params.text},
        {"image", &params.image},
        {"concat", &params.concat},
        {"mt", &params.mt},
        {"tm", &params.tm},
        {"meta", &params.meta},
    }};
    for (const auto& [name, head] : named) {
        const auto& h = doc.at("heads").at(name);
        const auto rows = h.at("rows").get<std::size_t>();
        const auto cols = h.at("cols").get<std::size_t>();
        if (rows != 2 || cols != head->w.cols) {
            throw SchemaError(std::string("small-model params: bad shape for head ") + name);
        }
        head->w.data = h.at("w").get<std::vector<double>>();
        head->b = h.at("b").get<std::vector<double>>();
        if (head->w.data.size() != rows * cols || head->b.size() != 2) {
            throw SchemaError(std::string("small-model params: bad payload for head ") + name);
        }
    }
    return params;
}

inline std::string params_checksum(const SmallModelParams& params) {
    return sha256_hex(params_to_json(params).dump());
}

}  // namespace imfnd
