#include "iaunet/config.hpp"

#include <fstream>
#include <functional>
#include <map>

namespace iaunet::config {

namespace {

struct Field {
    std::string type;  // "integer" | "number" | "boolean" | "string"
    std::string doc;
    std::function<nlohmann::json(const RunConfig&)> get;
    std::function<void(RunConfig&, const nlohmann::json&)> set;
};

template <typename T, typename M>
Field field(M RunConfig::* outer, T M::* inner, const char* type, const char* doc) {
    return Field{type, doc, [=](const RunConfig& c) { return nlohmann::json(c.*outer.*inner); },
                 [=](RunConfig& c, const nlohmann::json& v) { c.*outer.*inner = v.get<T>(); }};
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> f;
        f["model.in_channels"] = field(&RunConfig::model, &ModelConfig::in_channels, "integer", "input channels");
        f["model.num_classes"] = field(&RunConfig::model, &ModelConfig::num_classes, "integer",
                                       "segmentation classes (1 = binary)");
        f["model.base_channels"] =
            field(&RunConfig::model, &ModelConfig::base_channels, "integer", "stage-1 width; deeper stages double it");
        f["model.upsampler"] = Field{
            "string", "decoder upsampler: bilinear | transposed",
            [](const RunConfig& c) {
                return nlohmann::json(c.model.upsampler == Upsampler::bilinear ? "bilinear" : "transposed");
            },
            [](RunConfig& c, const nlohmann::json& v) {
                const std::string s = v.get<std::string>();
                if (s == "bilinear") {
                    c.model.upsampler = Upsampler::bilinear;
                } else if (s == "transposed") {
                    c.model.upsampler = Upsampler::transposed;
                } else {
                    throw ValidationError("model.upsampler must be bilinear or transposed, got " + s);
                }
            }};
        f["model.embed_dim"] = field(&RunConfig::model, &ModelConfig::embed_dim, "integer", "identity embedding size");
        f["model.embed_conv_layers"] = field(&RunConfig::model, &ModelConfig::embed_conv_layers, "integer",
                                             "refining convolutions in the embedding head");

        f["loss.margin"] = Field{"number", "triplet margin m",
                                 [](const RunConfig& c) { return nlohmann::json(c.train.loss.margin); },
                                 [](RunConfig& c, const nlohmann::json& v) { c.train.loss.margin = v.get<double>(); }};
        f["loss.lambda"] = Field{"number", "weight of the triplet term (0 = plain U-Net)",
                                 [](const RunConfig& c) { return nlohmann::json(c.train.loss.lambda); },
                                 [](RunConfig& c, const nlohmann::json& v) { c.train.loss.lambda = v.get<double>(); }};
        f["loss.dice_smooth"] =
            Field{"number", "dice smoothing epsilon",
                  [](const RunConfig& c) { return nlohmann::json(c.train.loss.dice_smooth); },
                  [](RunConfig& c, const nlohmann::json& v) { c.train.loss.dice_smooth = v.get<double>(); }};
        f["loss.mode"] = Field{"string", "segmentation mode: binary | multiclass",
                               [](const RunConfig& c) {
                                   return nlohmann::json(c.train.loss.mode == losses::SegMode::binary ? "binary"
                                                                                                      : "multiclass");
                               },
                               [](RunConfig& c, const nlohmann::json& v) {
                                   const std::string s = v.get<std::string>();
                                   if (s == "binary") {
                                       c.train.loss.mode = losses::SegMode::binary;
                                   } else if (s == "multiclass") {
                                       c.train.loss.mode = losses::SegMode::multiclass;
                                   } else {
                                       throw ValidationError("loss.mode must be binary or multiclass, got " + s);
                                   }
                               }};

        f["train.epochs"] = field(&RunConfig::train, &train::TrainConfig::epochs, "integer", "training epochs");
        f["train.batch_size"] = field(&RunConfig::train, &train::TrainConfig::batch_size, "integer", "anchors per step");
        f["train.lr"] = field(&RunConfig::train, &train::TrainConfig::lr, "number", "RMSProp learning rate");
        f["train.rmsprop_alpha"] =
            field(&RunConfig::train, &train::TrainConfig::rmsprop_alpha, "number", "squared-gradient EMA factor");
        f["train.rmsprop_momentum"] =
            field(&RunConfig::train, &train::TrainConfig::rmsprop_momentum, "number", "heavy-ball momentum");
        f["train.weight_decay"] =
            field(&RunConfig::train, &train::TrainConfig::weight_decay, "number", "decoupled weight decay");
        f["train.grad_clip_norm"] =
            field(&RunConfig::train, &train::TrainConfig::grad_clip_norm, "number", "global gradient-norm cap");
        f["train.hard_negative_prob"] = field(&RunConfig::train, &train::TrainConfig::hard_negative_prob, "number",
                                              "probability a negative is drawn from the pool");
        f["train.seed"] = Field{"integer", "seed threaded to every RNG consumer",
                                [](const RunConfig& c) { return nlohmann::json(c.train.seed); },
                                [](RunConfig& c, const nlohmann::json& v) { c.train.seed = v.get<std::uint64_t>(); }};
        f["train.log_every"] =
            field(&RunConfig::train, &train::TrainConfig::log_every, "integer", "steps between log records");
        f["train.dtype"] = Field{"string", "training dtype: float32 | float64",
                                 [](const RunConfig& c) { return nlohmann::json(c.dtype); },
                                 [](RunConfig& c, const nlohmann::json& v) {
                                     const std::string s = v.get<std::string>();
                                     if (s != "float32" && s != "float64")
                                         throw ValidationError("train.dtype must be float32 or float64, got " + s);
                                     c.dtype = s;
                                 }};

        f["aug.enabled"] =
            field(&RunConfig::train, &train::TrainConfig::augment_enabled, "boolean", "online augmentation switch");
        auto aug_field = [](double data::AugmentationConfig::* member, const char* doc) {
            return Field{"number", doc,
                         [member](const RunConfig& c) { return nlohmann::json(c.train.aug.*member); },
                         [member](RunConfig& c, const nlohmann::json& v) { c.train.aug.*member = v.get<double>(); }};
        };
        f["aug.flip_prob"] = aug_field(&data::AugmentationConfig::flip_prob, "per-axis flip probability");
        f["aug.rotation_deg"] = aug_field(&data::AugmentationConfig::rotation_deg, "rotation range in degrees");
        f["aug.scale_min"] = aug_field(&data::AugmentationConfig::scale_min, "minimum affine scale");
        f["aug.scale_max"] = aug_field(&data::AugmentationConfig::scale_max, "maximum affine scale");
        f["aug.translate_frac"] = aug_field(&data::AugmentationConfig::translate_frac, "translation range fraction");
        f["aug.jitter"] = aug_field(&data::AugmentationConfig::jitter, "brightness/contrast jitter range");

        f["synth.num_images"] = field(&RunConfig::synth, &data::SynthConfig::num_images, "integer", "images to emit");
        f["synth.image_size"] =
            field(&RunConfig::synth, &data::SynthConfig::image_size, "integer", "square extent, divisible by 16");
        f["synth.cells_min"] = field(&RunConfig::synth, &data::SynthConfig::cells_min, "integer", "minimum cells");
        f["synth.cells_max"] = field(&RunConfig::synth, &data::SynthConfig::cells_max, "integer", "maximum cells");
        f["synth.identity_count"] =
            field(&RunConfig::synth, &data::SynthConfig::identity_count, "integer", "texture identities");
        f["synth.touching_prob"] =
            field(&RunConfig::synth, &data::SynthConfig::touching_prob, "number", "probability of a touching pair");
        f["synth.noise_sigma"] =
            field(&RunConfig::synth, &data::SynthConfig::noise_sigma, "number", "additive Gaussian noise sigma");
        f["synth.seed"] = Field{"integer", "generator seed",
                                [](const RunConfig& c) { return nlohmann::json(c.synth.seed); },
                                [](RunConfig& c, const nlohmann::json& v) { c.synth.seed = v.get<std::uint64_t>(); }};

        f["eval.threshold"] = Field{"number", "foreground probability threshold",
                                    [](const RunConfig& c) { return nlohmann::json(c.eval_threshold); },
                                    [](RunConfig& c, const nlohmann::json& v) { c.eval_threshold = v.get<double>(); }};
        return f;
    }();
    return table;
}

}  // namespace

void RunConfig::apply_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config file not found: " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw ValidationError("config must be a JSON object of flat dotted keys: " + path);
    apply_json(j);
}

void RunConfig::apply_json(const nlohmann::json& flat) {
    for (auto it = flat.begin(); it != flat.end(); ++it) {
        const auto f = fields().find(it.key());
        if (f == fields().end()) throw ValidationError("unknown config key: " + it.key());
        try {
            f->second.set(*this, it.value());
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("config key " + it.key() + ": " + e.what());
        }
    }
}

void RunConfig::apply_kv(const std::string& key, const std::string& value) {
    const auto f = fields().find(key);
    if (f == fields().end()) throw ValidationError("unknown config key: " + key);
    nlohmann::json v;
    if (f->second.type == "integer") {
        v = std::stoll(value);
    } else if (f->second.type == "number") {
        v = std::stod(value);
    } else if (f->second.type == "boolean") {
        if (value == "true" || value == "1") {
            v = true;
        } else if (value == "false" || value == "0") {
            v = false;
        } else {
            throw ValidationError("config key " + key + " expects true/false, got " + value);
        }
    } else {
        v = value;
    }
    f->second.set(*this, v);
}

nlohmann::json RunConfig::to_flat_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [key, f] : fields()) j[key] = f.get(*this);
    return j;
}

void RunConfig::validate() const {
    model.validate();
    train.validate();
    if (eval_threshold < 0.0 || eval_threshold > 1.0)
        throw ValidationError("eval.threshold must lie in [0,1]");
}

nlohmann::json RunConfig::schema() {
    RunConfig defaults;
    nlohmann::json props = nlohmann::json::object();
    for (const auto& [key, f] : fields()) {
        props[key] = {{"type", f.type}, {"description", f.doc}, {"default", f.get(defaults)}};
    }
    return {{"$schema", "http://json-schema.org/draft-07/schema#"},
            {"title", "iaunet run configuration"},
            {"type", "object"},
            {"additionalProperties", false},
            {"properties", props}};
}

}  // namespace iaunet::config
