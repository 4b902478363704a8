#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "iaunet/data.hpp"
#include "iaunet/model.hpp"

namespace iaunet::eval {

using Mask = nn::Tensor<std::uint8_t>;

// Set-overlap metrics on binary masks; both-empty scores 1.0 by convention.
double dice_score(const Mask& pred, const Mask& gt);
double iou_score(const Mask& pred, const Mask& gt);

struct ImageMetrics {
    std::string id;
    double dice = 0.0;
    double iou = 0.0;
};

struct MetricReport {
    std::vector<ImageMetrics> per_image;  // sorted by id
    double dice_mean = 0.0, dice_std = 0.0;
    double iou_mean = 0.0, iou_std = 0.0;
    std::optional<int> fold_id;

    nlohmann::json to_json() const;
};

// Aggregates (population std; a single image reports std 0).
MetricReport make_report(std::vector<ImageMetrics> per_image, std::optional<int> fold_id = std::nullopt);

// Thresholded inference. Binary heads apply sigmoid >= threshold; multiclass
// heads take the channel argmax. Runs the model in eval mode.
template <typename T>
Mask predict_mask(IAUNet<T>& model, const nn::Tensor<float>& image_chw, double threshold = 0.5) {
    const bool was_training = model.training();
    model.set_training(false);
    nn::Tensor<T> input = image_chw.template cast<T>();
    nn::Tensor<T> batched = nn::Tensor<T>::from({1, input.dim(0), input.dim(1), input.dim(2)},
                                                std::vector<T>(input.data(), input.data() + input.numel()));
    nn::Tape<T> tp;
    const nn::Tensor<T>& logits = tp.value(model.forward_segment(tp, batched));
    model.set_training(was_training);
    const int K = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
    Mask out({1, H, W});
    if (K == 1) {
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(H) * W; ++i) {
            const double z = static_cast<double>(logits[i]);
            const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
            out[i] = p >= threshold ? 1 : 0;
        }
    } else {
        const std::int64_t HW = static_cast<std::int64_t>(H) * W;
        for (std::int64_t p = 0; p < HW; ++p) {
            int best = 0;
            T bv = logits[p];
            for (int k = 1; k < K; ++k) {
                if (logits[k * HW + p] > bv) {
                    bv = logits[k * HW + p];
                    best = k;
                }
            }
            out[p] = static_cast<std::uint8_t>(best);
        }
    }
    return out;
}

inline Mask mask_from_float(const nn::Tensor<float>& m) {
    Mask out({1, m.dim(1), m.dim(2)});
    for (std::int64_t i = 0; i < m.numel(); ++i) out[i] = m[i] >= 0.5f ? 1 : 0;
    return out;
}

// Per-image metrics over validated records, ordered by record id (image
// path); aggregates are a deterministic reduce over that order.
template <typename T>
MetricReport evaluate(IAUNet<T>& model, const std::vector<data::SampleRecord>& records, double threshold = 0.5,
                      std::optional<int> fold_id = std::nullopt) {
    std::vector<ImageMetrics> per;
    for (const auto& r : records) {
        const nn::Tensor<float> image = data::read_image(r.image_path);
        const Mask gt = mask_from_float(data::read_mask(r.mask_path));
        const Mask pred = predict_mask(model, image, threshold);
        ImageMetrics m;
        m.id = r.image_path;
        m.dice = dice_score(pred, gt);
        m.iou = iou_score(pred, gt);
        per.push_back(std::move(m));
    }
    return make_report(std::move(per), fold_id);
}

// Table 1-style comparison: one column per method, rows Dice/IoU, fixed four
// decimals, best value starred (ties all starred).
using NamedScores = std::vector<std::pair<std::string, std::pair<double, double>>>;  // name -> (dice, iou)

std::string format_comparison_text(const NamedScores& methods);
std::string format_comparison_csv(const NamedScores& methods);
void write_comparison_table(const NamedScores& methods, const std::string& text_path, const std::string& csv_path);

// RGB overlay: true positives green, false positives red, false negatives
// blue, blended over the image at the given alpha.
void write_overlay(const nn::Tensor<float>& image_chw, const Mask& pred, const Mask& gt, const std::string& path,
                   double alpha = 0.4);

}  // namespace iaunet::eval
