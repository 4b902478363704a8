#pragma once

#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "iaunet/model.hpp"

namespace iaunet::ckpt {

// Versioned binary container: 8-byte magic, u32 dtype code (element width in
// bytes), u32 format version, u64 header length, JSON header, then the raw
// little-endian tensor payload at the offsets recorded in the header.
// The byte layout is documented in docs/checkpoint_format.md.

inline constexpr char kMagic[8] = {'I', 'A', 'U', 'N', 'E', 'T', 'C', 'K'};
inline constexpr std::uint32_t kFormatVersion = 1;

class Writer {
  public:
    explicit Writer(std::uint32_t dtype_bytes) : dtype_bytes_(dtype_bytes) {}

    template <typename T>
    void add(const std::string& name, const nn::Tensor<T>& t) {
        if (sizeof(T) != dtype_bytes_) throw UsageError("checkpoint Writer: tensor dtype does not match container");
        nlohmann::json entry;
        entry["name"] = name;
        entry["shape"] = t.shape();
        entry["offset"] = payload_.size();
        entry["count"] = t.numel();
        tensors_.push_back(entry);
        const std::size_t bytes = static_cast<std::size_t>(t.numel()) * sizeof(T);
        const std::size_t at = payload_.size();
        payload_.resize(at + bytes);
        std::memcpy(payload_.data() + at, t.data(), bytes);
    }

    nlohmann::json& meta() { return meta_; }

    void write(const std::string& path) const {
        nlohmann::json header;
        header["format_version"] = kFormatVersion;
        header["dtype"] = dtype_bytes_ == 4 ? "float32" : "float64";
        header["meta"] = meta_;
        header["tensors"] = tensors_;
        const std::string hs = header.dump();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open checkpoint for writing: " + path);
        out.write(kMagic, 8);
        const std::uint32_t dtype = dtype_bytes_;
        const std::uint32_t ver = kFormatVersion;
        const std::uint64_t hlen = hs.size();
        out.write(reinterpret_cast<const char*>(&dtype), 4);
        out.write(reinterpret_cast<const char*>(&ver), 4);
        out.write(reinterpret_cast<const char*>(&hlen), 8);
        out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
        out.write(reinterpret_cast<const char*>(payload_.data()), static_cast<std::streamsize>(payload_.size()));
        if (!out) throw IoError("short write on checkpoint: " + path);
    }

  private:
    std::uint32_t dtype_bytes_;
    nlohmann::json meta_ = nlohmann::json::object();
    std::vector<nlohmann::json> tensors_;
    std::vector<unsigned char> payload_;
};

class Reader {
  public:
    explicit Reader(const std::string& path) : path_(path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open checkpoint: " + path);
        char magic[8];
        in.read(magic, 8);
        if (!in || std::memcmp(magic, kMagic, 8) != 0)
            throw IoError("not an iaunet checkpoint: " + path);
        std::uint32_t ver = 0;
        std::uint64_t hlen = 0;
        in.read(reinterpret_cast<char*>(&dtype_bytes_), 4);
        in.read(reinterpret_cast<char*>(&ver), 4);
        in.read(reinterpret_cast<char*>(&hlen), 8);
        if (!in) throw IoError("truncated checkpoint header: " + path);
        if (ver != kFormatVersion)
            throw IoError("checkpoint format version " + std::to_string(ver) + " unsupported (expected " +
                          std::to_string(kFormatVersion) + "): " + path);
        std::string hs(hlen, '\0');
        in.read(hs.data(), static_cast<std::streamsize>(hlen));
        if (!in) throw IoError("truncated checkpoint header: " + path);
        header_ = nlohmann::json::parse(hs, nullptr, false);
        if (header_.is_discarded()) throw IoError("corrupt checkpoint header JSON: " + path);
        payload_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        for (const auto& e : header_["tensors"]) {
            index_[e["name"].get<std::string>()] = &e;
        }
    }

    const nlohmann::json& meta() const { return header_.at("meta"); }
    std::uint32_t dtype_bytes() const { return dtype_bytes_; }

    bool has(const std::string& name) const { return index_.count(name) > 0; }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& e : header_["tensors"]) out.push_back(e["name"].get<std::string>());
        return out;
    }

    std::vector<int> shape(const std::string& name) const {
        return entry(name)["shape"].get<std::vector<int>>();
    }

    template <typename T>
    nn::Tensor<T> read(const std::string& name) const {
        if (sizeof(T) != dtype_bytes_)
            throw ValidationError("checkpoint " + path_ + " holds " + dtype_name() + " tensors; requested dtype differs");
        const nlohmann::json& e = entry(name);
        const auto shape = e["shape"].get<std::vector<int>>();
        const std::uint64_t offset = e["offset"].get<std::uint64_t>();
        const std::uint64_t count = e["count"].get<std::uint64_t>();
        if ((offset + count * sizeof(T)) > payload_.size())
            throw IoError("corrupt checkpoint: tensor " + name + " extends past payload in " + path_);
        std::vector<T> data(count);
        std::memcpy(data.data(), payload_.data() + offset, count * sizeof(T));
        return nn::Tensor<T>::from(shape, std::move(data));
    }

  private:
    const nlohmann::json& entry(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw IoError("checkpoint " + path_ + " has no tensor named " + name);
        return *it->second;
    }

    std::string dtype_name() const { return dtype_bytes_ == 4 ? "float32" : "float64"; }

    std::string path_;
    std::uint32_t dtype_bytes_ = 0;
    nlohmann::json header_;
    std::vector<unsigned char> payload_;
    std::map<std::string, const nlohmann::json*> index_;
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
    return {{"in_channels", c.in_channels},
            {"num_classes", c.num_classes},
            {"base_channels", c.base_channels},
            {"upsampler", c.upsampler == Upsampler::bilinear ? "bilinear" : "transposed"},
            {"embed_dim", c.embed_dim},
            {"embed_conv_layers", c.embed_conv_layers}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.in_channels = j.at("in_channels").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    const std::string up = j.at("upsampler").get<std::string>();
    if (up == "bilinear") {
        c.upsampler = Upsampler::bilinear;
    } else if (up == "transposed") {
        c.upsampler = Upsampler::transposed;
    } else {
        throw ValidationError("unknown upsampler '" + up + "'");
    }
    c.embed_dim = j.at("embed_dim").get<int>();
    c.embed_conv_layers = j.at("embed_conv_layers").get<int>();
    c.validate();
    return c;
}

// Serializes every parameter and batch-norm running statistic; `extra` lands
// in the header for callers that piggyback more state (the trainer adds its
// optimizer tensors through `more`).
template <typename T>
void save_model(IAUNet<T>& model, const std::string& path, const nlohmann::json& extra = nlohmann::json::object(),
                const std::function<void(Writer&)>& more = nullptr) {
    Writer w(sizeof(T));
    w.meta()["model"] = model_config_to_json(model.config());
    w.meta()["extra"] = extra;
    model.visit_params([&](nn::Parameter<T>& p) { w.add(p.name, p.value); });
    model.visit_state([&](const std::string& name, nn::Tensor<T>& t) { w.add(name, t); });
    if (more) more(w);
    w.write(path);
}

// Fills an existing model from a reader, insisting on exact name/shape
// agreement; reports the first mismatched tensor by name.
template <typename T>
void load_model_into(IAUNet<T>& model, const Reader& r) {
    auto take = [&](const std::string& name, nn::Tensor<T>& dst) {
        if (!r.has(name)) throw ValidationError("checkpoint mismatch: missing tensor " + name);
        if (r.shape(name) != dst.shape())
            throw ValidationError("checkpoint mismatch at tensor " + name + ": file has " +
                                  nn::Tensor<T>::shape_str(r.shape(name)) + ", model expects " + dst.shape_str());
        dst = r.read<T>(name);
    };
    model.visit_params([&](nn::Parameter<T>& p) { take(p.name, p.value); });
    model.visit_state([&](const std::string& name, nn::Tensor<T>& t) { take(name, t); });
}

// Rebuilds the model from the embedded config, then restores tensors.
template <typename T>
std::unique_ptr<IAUNet<T>> load_model(const std::string& path) {
    Reader r(path);
    if (r.dtype_bytes() != sizeof(T))
        throw ValidationError("checkpoint dtype mismatch: " + path + " stores " +
                              std::string(r.dtype_bytes() == 4 ? "float32" : "float64"));
    ModelConfig cfg = model_config_from_json(r.meta().at("model"));
    auto model = std::make_unique<IAUNet<T>>(cfg, 0);
    load_model_into(*model, r);
    return model;
}

}  // namespace iaunet::ckpt
