#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "iaunet/checkpoint.hpp"
#include "iaunet/data.hpp"
#include "iaunet/evaluation.hpp"
#include "iaunet/losses.hpp"
#include "iaunet/model.hpp"

namespace iaunet::train {

struct TrainConfig {
    int epochs = 10;
    int batch_size = 4;
    double lr = 1e-4;
    double rmsprop_alpha = 0.99;
    double rmsprop_momentum = 0.9;
    double weight_decay = 1e-8;
    double grad_clip_norm = 1.0;
    losses::LossConfig loss;
    data::AugmentationConfig aug;
    bool augment_enabled = true;
    double hard_negative_prob = 0.5;
    std::uint64_t seed = 1;
    std::string checkpoint_dir;
    int log_every = 1;

    void validate() const {
        if (epochs < 1 || batch_size < 1) throw ValidationError("TrainConfig: epochs and batch_size must be >= 1");
        if (lr <= 0 || rmsprop_alpha <= 0 || rmsprop_alpha >= 1)
            throw ValidationError("TrainConfig: lr must be positive and alpha in (0,1)");
        if (rmsprop_momentum < 0 || weight_decay < 0) throw ValidationError("TrainConfig: negative rate");
        if (grad_clip_norm <= 0) throw ValidationError("TrainConfig: grad_clip_norm must be > 0");
        if (hard_negative_prob < 0 || hard_negative_prob > 1)
            throw ValidationError("TrainConfig: hard_negative_prob must be in [0,1]");
        if (log_every < 1) throw ValidationError("TrainConfig: log_every must be >= 1");
        if (loss.margin < 0 || loss.lambda < 0) throw ValidationError("TrainConfig: margin and lambda must be >= 0");
    }
};

inline constexpr double kRmsPropEps = 1e-8;

template <typename T>
struct RmsPropState {
    std::vector<nn::Tensor<T>> v;  // running mean of squared gradients
    std::vector<nn::Tensor<T>> m;  // heavy-ball momentum buffer

    void init(const std::vector<nn::Parameter<T>*>& params) {
        v.clear();
        m.clear();
        for (const auto* p : params) {
            v.emplace_back(p->value.shape());
            m.emplace_back(p->value.shape());
        }
    }
};

// Plain RMSProp with heavy-ball momentum and decoupled weight decay:
//   g <- grad + wd * p
//   v <- alpha * v + (1 - alpha) * g^2
//   m <- mu * m + g / sqrt(v + eps)
//   p <- p - lr * m
// The stored gradient is left untouched.
template <typename T>
void rmsprop_step(const std::vector<nn::Parameter<T>*>& params, RmsPropState<T>& state, const TrainConfig& cfg) {
    if (state.v.size() != params.size()) throw UsageError("rmsprop_step: state does not match parameter list");
    const T alpha = static_cast<T>(cfg.rmsprop_alpha);
    const T mu = static_cast<T>(cfg.rmsprop_momentum);
    const T lr = static_cast<T>(cfg.lr);
    const T wd = static_cast<T>(cfg.weight_decay);
    const T eps = static_cast<T>(kRmsPropEps);
    for (std::size_t i = 0; i < params.size(); ++i) {
        nn::Parameter<T>& p = *params[i];
        if (p.grad.numel() != state.v[i].numel())
            throw UsageError("rmsprop_step: gradient shape drifted for " + p.name);
        if (!p.grad.all_finite()) throw NumericError("non-finite gradient in parameter " + p.name);
        T* v = state.v[i].data();
        T* mbuf = state.m[i].data();
        T* val = p.value.data();
        const T* grad = p.grad.data();
        const std::int64_t n = p.grad.numel();
        for (std::int64_t j = 0; j < n; ++j) {
            const T g = grad[j] + wd * val[j];
            v[j] = alpha * v[j] + (T(1) - alpha) * g * g;
            mbuf[j] = mu * mbuf[j] + g / std::sqrt(v[j] + eps);
            val[j] -= lr * mbuf[j];
        }
    }
}

// Global-norm clipping across all gradients; returns the pre-clip norm.
template <typename T>
double clip_grad_norm(const std::vector<nn::Parameter<T>*>& params, double max_norm) {
    if (max_norm <= 0) throw UsageError("clip_grad_norm: max_norm must be positive");
    double sq = 0.0;
    const auto& kt = nn::kernels::table<T>();
    for (const auto* p : params) sq += static_cast<double>(kt.sumsq(p->grad.data(), p->grad.numel()));
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const T s = static_cast<T>(max_norm / norm);
        for (auto* p : params) kt.scale(s, p->grad.data(), p->grad.data(), p->grad.numel());
    }
    return norm;
}

struct StepMetrics {
    double total = 0.0;
    double seg = 0.0;
    double tri = 0.0;
    double grad_norm = 0.0;
};

struct FoldPlan {
    int k = 0;
    std::uint64_t seed = 0;
    std::vector<std::vector<int>> folds;  // disjoint record indices, |size_i - size_j| <= 1
};

// Seeded shuffle then contiguous split; the first (n mod k) folds take the
// extra record.
inline FoldPlan make_folds(int num_records, int k, std::uint64_t seed) {
    if (k < 2) throw UsageError("make_folds: k must be >= 2");
    if (num_records < k)
        throw ValidationError("make_folds: need at least k=" + std::to_string(k) + " records, got " +
                              std::to_string(num_records));
    std::vector<int> order(static_cast<std::size_t>(num_records));
    for (int i = 0; i < num_records; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(derive_seed(seed, {hash_str("folds")}));
    for (int i = num_records - 1; i > 0; --i) {
        const std::int64_t j = rng.uniform_int(i + 1);
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    const int base = num_records / k;
    const int extra = num_records % k;
    int at = 0;
    for (int f = 0; f < k; ++f) {
        const int size = base + (f < extra ? 1 : 0);
        plan.folds.emplace_back(order.begin() + at, order.begin() + at + size);
        at += size;
    }
    return plan;
}

// Training driver. All stochastic choices (epoch order, triplet sampling,
// augmentation) are drawn from seeds derived positionally from the global
// step, so restoring a checkpoint reproduces the uninterrupted run bit for
// bit without serializing RNG cursors. With lambda = 0 the embedding path is
// skipped entirely and the run degenerates to plain U-Net training.
template <typename T>
class Trainer {
  public:
    Trainer(IAUNet<T>& model, TrainConfig cfg, std::vector<data::SampleRecord> records,
            std::vector<data::SampleRecord> pool)
        : model_(model),
          cfg_(std::move(cfg)),
          records_(std::move(records)),
          pool_(std::move(pool)),
          params_(model.parameters()) {
        cfg_.validate();
        if (records_.empty()) throw ValidationError("training needs at least one record");
        if (cfg_.loss.lambda > 0) {
            tindex_.emplace(records_, pool_, cfg_.hard_negative_prob);
        }
        opt_.init(params_);
        cache_records(records_, record_images_, record_masks_);
        cache_records(pool_, pool_images_, pool_masks_);
        for (int i = 0; i < static_cast<int>(records_.size()); ++i)
            lookup_[records_[static_cast<std::size_t>(i)].image_path] = {false, i};
        for (int i = 0; i < static_cast<int>(pool_.size()); ++i)
            lookup_[pool_[static_cast<std::size_t>(i)].image_path] = {true, i};
        const auto& shape0 = record_images_.front().shape();
        for (const auto& img : record_images_) {
            if (img.shape() != shape0 && cfg_.batch_size > 1)
                throw ValidationError("batched training requires uniform image extents (or batch_size 1)");
        }
    }

    int steps_per_epoch() const {
        return (static_cast<int>(records_.size()) + cfg_.batch_size - 1) / cfg_.batch_size;
    }

    std::int64_t total_steps() const { return static_cast<std::int64_t>(cfg_.epochs) * steps_per_epoch(); }
    std::int64_t step_index() const { return step_; }

    StepMetrics step() {
        try {
            return step_impl();
        } catch (const NumericError& e) {
            throw NumericError("training aborted at step " + std::to_string(step_) + ": " + e.what());
        }
    }

    void run(const std::function<void(std::int64_t, const StepMetrics&)>& on_step = nullptr) {
        const std::int64_t end = total_steps();
        while (step_ < end) {
            StepMetrics m = step();
            if (on_step) on_step(step_ - 1, m);
        }
    }

    void save_checkpoint(const std::string& path) {
        nlohmann::json extra;
        extra["trainer"] = {{"step", step_}};
        ckpt::save_model(model_, path, extra, [&](ckpt::Writer& w) {
            for (std::size_t i = 0; i < params_.size(); ++i) {
                w.add("opt.v." + params_[i]->name, opt_.v[i]);
                w.add("opt.m." + params_[i]->name, opt_.m[i]);
            }
        });
    }

    void restore(const std::string& path) {
        ckpt::Reader r(path);
        ckpt::load_model_into(model_, r);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            opt_.v[i] = r.read<T>("opt.v." + params_[i]->name);
            opt_.m[i] = r.read<T>("opt.m." + params_[i]->name);
        }
        step_ = r.meta().at("extra").at("trainer").at("step").get<std::int64_t>();
    }

    const TrainConfig& config() const { return cfg_; }
    const std::vector<data::SampleRecord>& records() const { return records_; }

  private:
    static void cache_records(const std::vector<data::SampleRecord>& records, std::vector<nn::Tensor<float>>& images,
                              std::vector<nn::Tensor<float>>& masks) {
        for (const auto& r : records) {
            images.push_back(data::read_image(r.image_path));
            if (!r.mask_path.empty()) {
                masks.push_back(data::read_mask(r.mask_path));
            } else {
                masks.push_back(nn::Tensor<float>({1, images.back().dim(1), images.back().dim(2)}));
            }
        }
    }

    std::vector<int> epoch_order(std::int64_t epoch) const {
        std::vector<int> order(records_.size());
        for (int i = 0; i < static_cast<int>(records_.size()); ++i) order[static_cast<std::size_t>(i)] = i;
        Rng rng(derive_seed(cfg_.seed, {hash_str("epoch-order"), static_cast<std::uint64_t>(epoch)}));
        for (int i = static_cast<int>(records_.size()) - 1; i > 0; --i) {
            const std::int64_t j = rng.uniform_int(i + 1);
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }
        return order;
    }

    nn::Tensor<float> view(const data::SampleRecord& rec, nn::Tensor<float>* mask_out, Rng& rng) const {
        const auto it = lookup_.find(rec.image_path);
        if (it == lookup_.end()) throw UsageError("triplet record not found in cache: " + rec.image_path);
        const auto [from_pool, idx] = it->second;
        nn::Tensor<float> img =
            from_pool ? pool_images_[static_cast<std::size_t>(idx)] : record_images_[static_cast<std::size_t>(idx)];
        nn::Tensor<float> mask =
            from_pool ? pool_masks_[static_cast<std::size_t>(idx)] : record_masks_[static_cast<std::size_t>(idx)];
        if (cfg_.augment_enabled) data::augment(img, mask, cfg_.aug, rng);
        if (mask_out) *mask_out = std::move(mask);
        return img;
    }

    template <typename Src>
    static nn::Tensor<T> stack(const std::vector<Src>& parts) {
        const auto& s0 = parts.front().shape();
        nn::Tensor<T> out({static_cast<int>(parts.size()), s0[0], s0[1], s0[2]});
        std::int64_t at = 0;
        for (const auto& p : parts) {
            for (std::int64_t i = 0; i < p.numel(); ++i) out[at++] = static_cast<T>(p[i]);
        }
        return out;
    }

    StepMetrics step_impl() {
        model_.set_training(true);
        const int spe = steps_per_epoch();
        const std::int64_t epoch = step_ / spe;
        const int batch_pos = static_cast<int>(step_ % spe);
        const std::vector<int> order = epoch_order(epoch);
        const int begin = batch_pos * cfg_.batch_size;
        const int end = std::min<int>(static_cast<int>(records_.size()), begin + cfg_.batch_size);

        Rng rng(derive_seed(cfg_.seed, {hash_str("step"), static_cast<std::uint64_t>(step_)}));
        const bool with_triplets = cfg_.loss.lambda > 0;

        std::vector<nn::Tensor<float>> a_imgs, a_masks, p_imgs, n_imgs;
        for (int bi = begin; bi < end; ++bi) {
            const int anchor_idx = order[static_cast<std::size_t>(bi)];
            if (with_triplets) {
                const data::Triplet trip = tindex_->sample(anchor_idx, rng);
                nn::Tensor<float> mask;
                a_imgs.push_back(view(trip.anchor, &mask, rng));
                a_masks.push_back(std::move(mask));
                p_imgs.push_back(view(trip.positive, nullptr, rng));
                n_imgs.push_back(view(trip.negative, nullptr, rng));
            } else {
                nn::Tensor<float> mask;
                a_imgs.push_back(view(records_[static_cast<std::size_t>(anchor_idx)], &mask, rng));
                a_masks.push_back(std::move(mask));
            }
        }

        nn::Tensor<T> anchor_batch = stack(a_imgs);
        nn::Tensor<T> mask_batch = stack(a_masks);
        for (std::int64_t i = 0; i < mask_batch.numel(); ++i)
            mask_batch[i] = mask_batch[i] >= T(0.5) ? T(1) : T(0);

        nn::Tape<T> tape;
        StepMetrics metrics;
        model_.zero_grad();
        if (with_triplets) {
            auto anchor = model_.forward_anchor(tape, anchor_batch, mask_batch);
            nn::Var<T> e_p = model_.forward_embed_reference(tape, stack(p_imgs));
            nn::Var<T> e_n = model_.forward_embed_reference(tape, stack(n_imgs));
            auto loss = losses::total_loss(tape, anchor.logits, mask_batch, anchor.embedding, e_p, e_n, cfg_.loss);
            metrics.total = static_cast<double>(tape.value(loss.total)[0]);
            metrics.seg = static_cast<double>(tape.value(loss.seg)[0]);
            metrics.tri = static_cast<double>(tape.value(loss.tri)[0]);
            tape.backward(loss.total);
        } else {
            nn::Var<T> logits = model_.forward_segment(tape, anchor_batch);
            nn::Var<T> seg = losses::seg_loss(tape, logits, mask_batch, cfg_.loss);
            metrics.total = metrics.seg = static_cast<double>(tape.value(seg)[0]);
            metrics.tri = 0.0;
            tape.backward(seg);
        }
        metrics.grad_norm = clip_grad_norm(params_, cfg_.grad_clip_norm);
        rmsprop_step(params_, opt_, cfg_);
        ++step_;
        return metrics;
    }

    IAUNet<T>& model_;
    TrainConfig cfg_;
    std::vector<data::SampleRecord> records_;
    std::vector<data::SampleRecord> pool_;
    std::vector<nn::Parameter<T>*> params_;
    std::optional<data::TripletIndex> tindex_;
    RmsPropState<T> opt_;
    std::vector<nn::Tensor<float>> record_images_, record_masks_;
    std::vector<nn::Tensor<float>> pool_images_, pool_masks_;
    std::unordered_map<std::string, std::pair<bool, int>> lookup_;
    std::int64_t step_ = 0;
};

struct CvAggregate {
    double dice_mean = 0.0, dice_std = 0.0;
    double iou_mean = 0.0, iou_std = 0.0;
};

struct CvResult {
    std::vector<eval::MetricReport> fold_reports;
    CvAggregate aggregate;
};

inline CvAggregate aggregate_folds(const std::vector<eval::MetricReport>& reports) {
    if (reports.empty()) throw UsageError("aggregate_folds: no fold reports");
    CvAggregate a;
    const double n = static_cast<double>(reports.size());
    for (const auto& r : reports) {
        a.dice_mean += r.dice_mean;
        a.iou_mean += r.iou_mean;
    }
    a.dice_mean /= n;
    a.iou_mean /= n;
    for (const auto& r : reports) {
        a.dice_std += (r.dice_mean - a.dice_mean) * (r.dice_mean - a.dice_mean);
        a.iou_std += (r.iou_mean - a.iou_mean) * (r.iou_mean - a.iou_mean);
    }
    a.dice_std = std::sqrt(a.dice_std / n);
    a.iou_std = std::sqrt(a.iou_std / n);
    return a;
}

// Image-level k-fold protocol: train a fresh model on k-1 folds, test on the
// held-out fold, report per-fold metrics plus the mean/std across folds.
template <typename T>
CvResult run_cross_validation(const std::vector<data::SampleRecord>& records,
                              const std::vector<data::SampleRecord>& pool, const ModelConfig& model_cfg,
                              const TrainConfig& train_cfg, int k, double threshold = 0.5,
                              const std::function<void(int, const eval::MetricReport&)>& on_fold = nullptr) {
    const FoldPlan plan = make_folds(static_cast<int>(records.size()), k, train_cfg.seed);
    CvResult result;
    for (int f = 0; f < k; ++f) {
        std::vector<data::SampleRecord> train_set, test_set;
        std::vector<bool> held(records.size(), false);
        for (int idx : plan.folds[static_cast<std::size_t>(f)]) held[static_cast<std::size_t>(idx)] = true;
        for (std::size_t i = 0; i < records.size(); ++i) {
            (held[i] ? test_set : train_set).push_back(records[i]);
        }
        try {
            IAUNet<T> model(model_cfg,
                            derive_seed(train_cfg.seed, {hash_str("cv-model"), static_cast<std::uint64_t>(f)}));
            TrainConfig fold_cfg = train_cfg;
            fold_cfg.seed = derive_seed(train_cfg.seed, {hash_str("cv-train"), static_cast<std::uint64_t>(f)});
            Trainer<T> trainer(model, fold_cfg, train_set, pool);
            trainer.run();
            eval::MetricReport report = eval::evaluate(model, test_set, threshold, f);
            if (on_fold) on_fold(f, report);
            result.fold_reports.push_back(std::move(report));
        } catch (const Error& e) {
            throw Error("cross-validation failed in fold " + std::to_string(f) + ": " + e.what());
        }
    }
    result.aggregate = aggregate_folds(result.fold_reports);
    return result;
}

}  // namespace iaunet::train
