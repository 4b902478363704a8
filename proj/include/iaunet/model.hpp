#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "iaunet/ops.hpp"

namespace iaunet {

using nn::Parameter;
using nn::Tape;
using nn::Tensor;
using nn::Var;

enum class Upsampler { bilinear, transposed };

struct ModelConfig {
    int in_channels = 3;
    int num_classes = 1;
    int base_channels = 64;  // encoder widths: base * {1,2,4,8,16}
    Upsampler upsampler = Upsampler::bilinear;
    int embed_dim = 128;
    int embed_conv_layers = 2;

    static constexpr int depth = 4;           // fixed downsampling stages
    static constexpr int spatial_factor = 16; // input extent must divide this

    void validate() const {
        if (in_channels < 1 || num_classes < 1) throw ValidationError("ModelConfig: channels must be positive");
        if (base_channels < 1) throw ValidationError("ModelConfig: base_channels must be >= 1");
        if (embed_dim < 2) throw ValidationError("ModelConfig: embed_dim must be >= 2");
        if (embed_conv_layers < 1) throw ValidationError("ModelConfig: embed_conv_layers must be >= 1");
    }
};

namespace detail {

constexpr double kBnMomentum = 0.1;
constexpr double kBnEps = 1e-5;

// Kaiming-uniform bound for ReLU fan-in.
inline double kaiming_bound(int fan_in) {
    return std::sqrt(6.0 / static_cast<double>(fan_in));
}

template <typename T>
struct Conv2dLayer {
    Parameter<T> weight;
    Parameter<T> bias;
    int padding;

    Conv2dLayer(const std::string& prefix, int cin, int cout, int k, int pad, Rng& rng)
        : weight(prefix + ".weight", Tensor<T>({cout, cin, k, k})),
          bias(prefix + ".bias", Tensor<T>({cout})),
          padding(pad) {
        const double b = kaiming_bound(cin * k * k);
        nn::fill_uniform(weight.value, rng, -b, b);
    }

    Var<T> forward(Tape<T>& tp, Var<T> x) {
        return nn::ops::conv2d(tp, x, tp.param(weight), tp.param(bias), 1, padding);
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }
};

template <typename T>
struct BatchNorm2dLayer {
    Parameter<T> gamma;
    Parameter<T> beta;
    nn::ops::BatchNormState<T> state;
    std::string name;

    BatchNorm2dLayer(const std::string& prefix, int channels)
        : gamma(prefix + ".gamma", Tensor<T>({channels}, T(1))),
          beta(prefix + ".beta", Tensor<T>({channels})),
          state(channels),
          name(prefix) {}

    Var<T> forward(Tape<T>& tp, Var<T> x, bool training) {
        return nn::ops::batch_norm2d(tp, x, tp.param(gamma), tp.param(beta), state, training,
                                     static_cast<T>(kBnMomentum), static_cast<T>(kBnEps));
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&gamma);
        out.push_back(&beta);
    }
};

template <typename T>
struct ConvTranspose2xLayer {
    Parameter<T> weight;  // [Cin, Cout, 2, 2]
    Parameter<T> bias;

    ConvTranspose2xLayer(const std::string& prefix, int cin, int cout, Rng& rng)
        : weight(prefix + ".weight", Tensor<T>({cin, cout, 2, 2})), bias(prefix + ".bias", Tensor<T>({cout})) {
        const double b = kaiming_bound(cin * 4);
        nn::fill_uniform(weight.value, rng, -b, b);
    }

    Var<T> forward(Tape<T>& tp, Var<T> x) {
        return nn::ops::conv_transpose2d_2x(tp, x, tp.param(weight), tp.param(bias));
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }
};

template <typename T>
struct LinearLayer {
    Parameter<T> weight;
    Parameter<T> bias;

    LinearLayer(const std::string& prefix, int din, int dout, Rng& rng)
        : weight(prefix + ".weight", Tensor<T>({dout, din})), bias(prefix + ".bias", Tensor<T>({dout})) {
        const double b = kaiming_bound(din);
        nn::fill_uniform(weight.value, rng, -b, b);
    }

    Var<T> forward(Tape<T>& tp, Var<T> x) {
        return nn::ops::linear(tp, x, tp.param(weight), tp.param(bias));
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }
};

// conv3x3 + BN + ReLU, twice.
template <typename T>
struct DoubleConv {
    Conv2dLayer<T> conv1;
    BatchNorm2dLayer<T> bn1;
    Conv2dLayer<T> conv2;
    BatchNorm2dLayer<T> bn2;

    DoubleConv(const std::string& prefix, int cin, int cout, Rng& rng)
        : conv1(prefix + ".conv1", cin, cout, 3, 1, rng),
          bn1(prefix + ".bn1", cout),
          conv2(prefix + ".conv2", cout, cout, 3, 1, rng),
          bn2(prefix + ".bn2", cout) {}

    Var<T> forward(Tape<T>& tp, Var<T> x, bool training) {
        x = nn::ops::relu(tp, bn1.forward(tp, conv1.forward(tp, x), training));
        x = nn::ops::relu(tp, bn2.forward(tp, conv2.forward(tp, x), training));
        return x;
    }

    void collect(std::vector<Parameter<T>*>& out) {
        conv1.collect(out);
        bn1.collect(out);
        conv2.collect(out);
        bn2.collect(out);
    }
};

template <typename T>
struct DecoderStage {
    std::optional<Conv2dLayer<T>> reduce;       // bilinear path: 1x1 conv halves channels
    std::optional<ConvTranspose2xLayer<T>> up;  // transposed path
    DoubleConv<T> dc;

    DecoderStage(const std::string& prefix, int cin, Upsampler mode, Rng& rng)
        : reduce(mode == Upsampler::bilinear
                     ? std::optional<Conv2dLayer<T>>(std::in_place, prefix + ".reduce", cin, cin / 2, 1, 0, rng)
                     : std::nullopt),
          up(mode == Upsampler::transposed
                 ? std::optional<ConvTranspose2xLayer<T>>(std::in_place, prefix + ".up", cin, cin / 2, rng)
                 : std::nullopt),
          dc(prefix, cin, cin / 2, rng) {}

    Var<T> forward(Tape<T>& tp, Var<T> x, Var<T> skip, bool training) {
        if (reduce) {
            x = nn::ops::upsample_bilinear2x(tp, x);
            x = reduce->forward(tp, x);
        } else {
            x = up->forward(tp, x);
        }
        x = nn::ops::concat_channels(tp, x, skip);
        return dc.forward(tp, x, training);
    }

    void collect(std::vector<Parameter<T>*>& out) {
        if (reduce) reduce->collect(out);
        if (up) up->collect(out);
        dc.collect(out);
    }
};

template <typename T>
struct EmbedRefine {
    Conv2dLayer<T> conv;
    BatchNorm2dLayer<T> bn;

    EmbedRefine(const std::string& prefix, int channels, Rng& rng)
        : conv(prefix + ".conv", channels, channels, 3, 1, rng), bn(prefix + ".bn", channels) {}

    Var<T> forward(Tape<T>& tp, Var<T> x, bool training) {
        return nn::ops::relu(tp, bn.forward(tp, conv.forward(tp, x), training));
    }

    void collect(std::vector<Parameter<T>*>& out) {
        conv.collect(out);
        bn.collect(out);
    }
};

}  // namespace detail

// U-Net backbone with a shared encoder feeding both the segmentation decoder
// and the identity embedding head. The anchor path gates the bottleneck
// features with the (downsampled) ground-truth mask; reference images pool
// globally and never touch the decoder.
template <typename T>
class IAUNet {
  public:
    IAUNet(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(derive_seed(seed, {hash_str("model-init")}));
        const int b = cfg_.base_channels;
        encoder_.reserve(4);
        encoder_.emplace_back("encoder.stage1", cfg_.in_channels, b, rng);
        encoder_.emplace_back("encoder.stage2", b, 2 * b, rng);
        encoder_.emplace_back("encoder.stage3", 2 * b, 4 * b, rng);
        encoder_.emplace_back("encoder.stage4", 4 * b, 8 * b, rng);
        bottleneck_ = std::make_unique<detail::DoubleConv<T>>("bottleneck", 8 * b, 16 * b, rng);
        decoder_.reserve(4);
        for (int i = 0; i < 4; ++i) {
            decoder_.emplace_back("decoder.stage" + std::to_string(i + 1), 16 * b >> i, cfg_.upsampler, rng);
        }
        head_ = std::make_unique<detail::Conv2dLayer<T>>("head", b, cfg_.num_classes, 1, 0, rng);
        const int bc = 16 * b;
        refine_.reserve(static_cast<std::size_t>(cfg_.embed_conv_layers));
        for (int i = 0; i < cfg_.embed_conv_layers; ++i) {
            refine_.emplace_back("embed.refine" + std::to_string(i + 1), bc, rng);
        }
        fc1_ = std::make_unique<detail::LinearLayer<T>>("embed.mlp.fc1", bc, 2 * cfg_.embed_dim, rng);
        fc2_ = std::make_unique<detail::LinearLayer<T>>("embed.mlp.fc2", 2 * cfg_.embed_dim, cfg_.embed_dim, rng);
    }

    IAUNet(const IAUNet&) = delete;
    IAUNet& operator=(const IAUNet&) = delete;

    const ModelConfig& config() const { return cfg_; }
    void set_training(bool on) { training_ = on; }
    bool training() const { return training_; }

    struct Encoded {
        Var<T> bottleneck;
        std::array<Var<T>, 4> skips;
    };

    // Shared encoder path. When capture_encoder is set, every stage output
    // (plus the bottleneck) is copied out for instrumentation.
    Encoded encode(Tape<T>& tp, Var<T> image) {
        check_input(tp.value(image));
        Encoded enc;
        Var<T> x = image;
        for (int i = 0; i < 4; ++i) {
            x = encoder_[static_cast<std::size_t>(i)].forward(tp, x, training_);
            enc.skips[static_cast<std::size_t>(i)] = x;
            x = nn::ops::max_pool2d(tp, x);
        }
        enc.bottleneck = bottleneck_->forward(tp, x, training_);
        if (capture_encoder) {
            for (const auto& s : enc.skips) capture_encoder->push_back(tp.value(s));
            capture_encoder->push_back(tp.value(enc.bottleneck));
        }
        return enc;
    }

    Var<T> decode(Tape<T>& tp, const Encoded& enc) {
        Var<T> x = enc.bottleneck;
        for (int i = 0; i < 4; ++i) {
            x = decoder_[static_cast<std::size_t>(i)].forward(tp, x, enc.skips[static_cast<std::size_t>(3 - i)],
                                                              training_);
        }
        return head_->forward(tp, x);
    }

    // Refined bottleneck features pooled to a vector: mask-gated for anchors,
    // global average for references.
    Var<T> embed_pooled(Tape<T>& tp, Var<T> bottleneck, const Tensor<T>* mask) {
        Var<T> h = bottleneck;
        for (auto& r : refine_) h = r.forward(tp, h, training_);
        if (mask) return nn::ops::masked_pool(tp, h, *mask);
        return nn::ops::global_avg_pool(tp, h);
    }

    Var<T> embed_from_pooled(Tape<T>& tp, Var<T> pooled) {
        Var<T> z = nn::ops::relu(tp, fc1_->forward(tp, pooled));
        z = fc2_->forward(tp, z);
        return nn::ops::l2_normalize(tp, z);
    }

    Var<T> forward_segment(Tape<T>& tp, Var<T> image) { return decode(tp, encode(tp, image)); }

    Var<T> forward_segment(Tape<T>& tp, const Tensor<T>& image) {
        return forward_segment(tp, tp.input(image, "image"));
    }

    Var<T> forward_embed_reference(Tape<T>& tp, Var<T> image) {
        Encoded enc = encode(tp, image);
        return embed_from_pooled(tp, embed_pooled(tp, enc.bottleneck, nullptr));
    }

    Var<T> forward_embed_reference(Tape<T>& tp, const Tensor<T>& image) {
        return forward_embed_reference(tp, tp.input(image, "image"));
    }

    Var<T> forward_embed_anchor(Tape<T>& tp, Var<T> image, const Tensor<T>& mask) {
        check_mask(tp.value(image), mask);
        Encoded enc = encode(tp, image);
        return embed_from_pooled(tp, embed_pooled(tp, enc.bottleneck, &mask));
    }

    Var<T> forward_embed_anchor(Tape<T>& tp, const Tensor<T>& image, const Tensor<T>& mask) {
        return forward_embed_anchor(tp, tp.input(image, "image"), mask);
    }

    struct AnchorOutput {
        Var<T> logits;
        Var<T> embedding;
    };

    // Anchor forward: one encoder pass feeds both the decoder and the
    // mask-gated embedding head.
    AnchorOutput forward_anchor(Tape<T>& tp, Var<T> image, const Tensor<T>& mask) {
        check_mask(tp.value(image), mask);
        Encoded enc = encode(tp, image);
        Var<T> logits = decode(tp, enc);
        Var<T> emb = embed_from_pooled(tp, embed_pooled(tp, enc.bottleneck, &mask));
        return {logits, emb};
    }

    AnchorOutput forward_anchor(Tape<T>& tp, const Tensor<T>& image, const Tensor<T>& mask) {
        return forward_anchor(tp, tp.input(image, "image"), mask);
    }

    void visit_params(const std::function<void(Parameter<T>&)>& fn) {
        std::vector<Parameter<T>*> all;
        collect(all);
        for (auto* p : all) fn(*p);
    }

    std::vector<Parameter<T>*> parameters() {
        std::vector<Parameter<T>*> all;
        collect(all);
        return all;
    }

    // Batch-norm running statistics, named alongside the parameters.
    void visit_state(const std::function<void(const std::string&, Tensor<T>&)>& fn) {
        for (auto& dc : encoder_) visit_dc_state(dc, fn);
        visit_dc_state(*bottleneck_, fn);
        for (auto& ds : decoder_) visit_dc_state(ds.dc, fn);
        for (auto& r : refine_) {
            fn(r.bn.name + ".running_mean", r.bn.state.running_mean);
            fn(r.bn.name + ".running_var", r.bn.state.running_var);
        }
    }

    std::int64_t parameter_count() {
        std::int64_t n = 0;
        visit_params([&](Parameter<T>& p) { n += p.value.numel(); });
        return n;
    }

    void zero_grad() {
        visit_params([](Parameter<T>& p) { p.zero_grad(); });
    }

    // Set by tests to record encoder activations.
    std::vector<Tensor<T>>* capture_encoder = nullptr;

  private:
    void check_input(const Tensor<T>& image) const {
        nn::ops::detail::require_4d(image, "IAUNet forward");
        if (image.dim(1) != cfg_.in_channels)
            throw DimensionError("IAUNet: expected " + std::to_string(cfg_.in_channels) + " input channels, got " +
                                 image.shape_str());
        if (image.dim(2) % ModelConfig::spatial_factor != 0 || image.dim(3) % ModelConfig::spatial_factor != 0)
            throw DimensionError("IAUNet: spatial size must be divisible by 16 (no implicit padding), got " +
                                 image.shape_str());
    }

    void check_mask(const Tensor<T>& image, const Tensor<T>& mask) const {
        nn::ops::detail::require_4d(mask, "anchor mask");
        if (mask.dim(0) != image.dim(0) || mask.dim(1) != 1 || mask.dim(2) != image.dim(2) ||
            mask.dim(3) != image.dim(3))
            throw DimensionError("anchor mask must be [N,1,H,W] matching the image, got " + mask.shape_str());
        for (std::int64_t i = 0; i < mask.numel(); ++i) {
            if (mask[i] != T(0) && mask[i] != T(1))
                throw ValidationError("anchor mask must be binary; found value " +
                                      std::to_string(static_cast<double>(mask[i])));
        }
    }

    void collect(std::vector<Parameter<T>*>& out) {
        for (auto& dc : encoder_) dc.collect(out);
        bottleneck_->collect(out);
        for (auto& ds : decoder_) ds.collect(out);
        head_->collect(out);
        for (auto& r : refine_) r.collect(out);
        fc1_->collect(out);
        fc2_->collect(out);
    }

    static void visit_dc_state(detail::DoubleConv<T>& dc,
                               const std::function<void(const std::string&, Tensor<T>&)>& fn) {
        fn(dc.bn1.name + ".running_mean", dc.bn1.state.running_mean);
        fn(dc.bn1.name + ".running_var", dc.bn1.state.running_var);
        fn(dc.bn2.name + ".running_mean", dc.bn2.state.running_mean);
        fn(dc.bn2.name + ".running_var", dc.bn2.state.running_var);
    }

    ModelConfig cfg_;
    bool training_ = true;
    std::vector<detail::DoubleConv<T>> encoder_;
    std::unique_ptr<detail::DoubleConv<T>> bottleneck_;
    std::vector<detail::DecoderStage<T>> decoder_;
    std::unique_ptr<detail::Conv2dLayer<T>> head_;
    std::vector<detail::EmbedRefine<T>> refine_;
    std::unique_ptr<detail::LinearLayer<T>> fc1_;
    std::unique_ptr<detail::LinearLayer<T>> fc2_;
};

}  // namespace iaunet
