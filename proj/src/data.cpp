#include "iaunet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"

namespace fs = std::filesystem;

namespace iaunet::data {

namespace {

nlohmann::json parse_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("manifest not found: " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_array())
        throw ValidationError("manifest must be a JSON array: " + path);
    return j;
}

std::vector<SampleRecord> parse_records(const std::string& manifest_path, bool mask_required) {
    const fs::path root = fs::path(manifest_path).parent_path();
    nlohmann::json j = parse_manifest(manifest_path);
    std::vector<SampleRecord> out;
    std::set<std::string> seen;
    for (const auto& e : j) {
        SampleRecord r;
        if (!e.contains("image")) throw ValidationError("manifest record missing \"image\": " + manifest_path);
        r.image_path = (root / e["image"].get<std::string>()).string();
        if (e.contains("mask") && !e["mask"].is_null()) {
            r.mask_path = (root / e["mask"].get<std::string>()).string();
        } else if (mask_required) {
            throw ValidationError("manifest record for " + r.image_path + " is missing its mask");
        }
        r.identity = e.value("identity", std::string());
        if (r.identity.empty()) throw ValidationError("manifest record for " + r.image_path + " has no identity");
        if (e.contains("tags")) r.tags = e["tags"].get<std::vector<std::string>>();
        if (!seen.insert(r.image_path).second)
            throw ValidationError("duplicate image path in manifest: " + r.image_path);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

std::vector<SampleRecord> load_dataset(const std::string& manifest_path, bool binary, int num_classes) {
    std::vector<SampleRecord> records = parse_records(manifest_path, /*mask_required=*/true);
    for (const auto& r : records) {
        if (!fs::exists(r.image_path)) throw ValidationError("image file missing: " + r.image_path);
        if (!fs::exists(r.mask_path)) throw ValidationError("mask file missing: " + r.mask_path);
        const nn::Tensor<float> img = read_image(r.image_path);
        const nn::Tensor<float> mask = read_mask(r.mask_path, binary, num_classes);
        if (img.dim(1) != mask.dim(1) || img.dim(2) != mask.dim(2))
            throw ValidationError("mask extent " + std::to_string(mask.dim(2)) + "x" + std::to_string(mask.dim(1)) +
                                  " does not match image " + std::to_string(img.dim(2)) + "x" +
                                  std::to_string(img.dim(1)) + " for " + r.image_path);
    }
    return records;
}

std::vector<SampleRecord> load_pool(const std::string& manifest_path) {
    std::vector<SampleRecord> records = parse_records(manifest_path, /*mask_required=*/false);
    for (const auto& r : records) {
        if (!fs::exists(r.image_path)) throw ValidationError("pool image missing: " + r.image_path);
    }
    return records;
}

TripletIndex::TripletIndex(std::vector<SampleRecord> records, std::vector<SampleRecord> pool,
                           double hard_negative_prob)
    : records_(std::move(records)), pool_(std::move(pool)), hard_negative_prob_(hard_negative_prob) {
    if (records_.empty()) throw ValidationError("triplet sampling needs at least one record");
    for (int i = 0; i < static_cast<int>(records_.size()); ++i) {
        by_identity_[records_[static_cast<std::size_t>(i)].identity].push_back(i);
    }
    if (by_identity_.size() < 2 && pool_.empty())
        throw ValidationError("triplet sampling needs >=2 identities or a non-empty hard-negative pool");
}

Triplet TripletIndex::sample(int anchor_index, Rng& rng) const {
    const SampleRecord& anchor = records_[static_cast<std::size_t>(anchor_index)];
    const auto& same = by_identity_.at(anchor.identity);

    // Fixed draw order: branch uniform, positive pick, negative pick.
    const double branch = rng.uniform();

    Triplet t;
    t.anchor = anchor;

    if (same.size() > 1) {
        std::int64_t k = rng.uniform_int(static_cast<std::int64_t>(same.size()) - 1);
        for (int idx : same) {
            if (idx == anchor_index) continue;
            if (k == 0) {
                t.positive = records_[static_cast<std::size_t>(idx)];
                break;
            }
            --k;
        }
    } else {
        (void)rng.uniform_int(1);  // keep the stream shape uniform
        t.positive = anchor;       // augmentation supplies the second view
    }

    const std::int64_t others =
        static_cast<std::int64_t>(records_.size()) - static_cast<std::int64_t>(same.size());
    const bool want_pool = branch < hard_negative_prob_;
    const bool use_pool = (want_pool && !pool_.empty()) || others == 0;
    if (use_pool) {
        const std::int64_t k = rng.uniform_int(static_cast<std::int64_t>(pool_.size()));
        t.negative = pool_[static_cast<std::size_t>(k)];
        t.negative_source = NegativeSource::pool;
    } else {
        std::int64_t k = rng.uniform_int(others);
        for (const auto& [identity, idxs] : by_identity_) {
            if (identity == anchor.identity) continue;
            if (k < static_cast<std::int64_t>(idxs.size())) {
                t.negative = records_[static_cast<std::size_t>(idxs[static_cast<std::size_t>(k)])];
                break;
            }
            k -= static_cast<std::int64_t>(idxs.size());
        }
        t.negative_source =
            t.negative.has_tag("background") ? NegativeSource::background : NegativeSource::adjacent;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Augmentation

namespace {

void flip_horizontal(nn::Tensor<float>& t) {
    const int C = t.dim(0), H = t.dim(1), W = t.dim(2);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y) {
            float* row = t.data() + (static_cast<std::int64_t>(c) * H + y) * W;
            std::reverse(row, row + W);
        }
}

void flip_vertical(nn::Tensor<float>& t) {
    const int C = t.dim(0), H = t.dim(1), W = t.dim(2);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H / 2; ++y) {
            float* a = t.data() + (static_cast<std::int64_t>(c) * H + y) * W;
            float* b = t.data() + (static_cast<std::int64_t>(c) * H + (H - 1 - y)) * W;
            std::swap_ranges(a, a + W, b);
        }
}

float sample_bilinear(const nn::Tensor<float>& t, int c, double sy, double sx) {
    const int H = t.dim(1), W = t.dim(2);
    const int y0 = static_cast<int>(std::floor(sy));
    const int x0 = static_cast<int>(std::floor(sx));
    const double fy = sy - y0, fx = sx - x0;
    auto px = [&](int y, int x) -> double {
        if (y < 0 || y >= H || x < 0 || x >= W) return 0.0;  // out-of-frame fill
        return t[(static_cast<std::int64_t>(c) * H + y) * W + x];
    };
    return static_cast<float>((1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                              fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1)));
}

float sample_nearest(const nn::Tensor<float>& t, int c, double sy, double sx) {
    const int H = t.dim(1), W = t.dim(2);
    const int y = static_cast<int>(std::lround(sy));
    const int x = static_cast<int>(std::lround(sx));
    if (y < 0 || y >= H || x < 0 || x >= W) return 0.0f;  // background fill
    return t[(static_cast<std::int64_t>(c) * H + y) * W + x];
}

}  // namespace

void augment(nn::Tensor<float>& image, nn::Tensor<float>& mask, const AugmentationConfig& cfg, Rng& rng) {
    if (image.ndim() != 3 || mask.ndim() != 3)
        throw DimensionError("augment: expects [C,H,W] image and [1,H,W] mask");
    if (image.dim(1) != mask.dim(1) || image.dim(2) != mask.dim(2))
        throw DimensionError("augment: image and mask extents differ");
    const int H = image.dim(1), W = image.dim(2);

    const bool fh = rng.uniform() < cfg.flip_prob;
    const bool fv = rng.uniform() < cfg.flip_prob;
    const double rot = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg) * 3.14159265358979323846 / 180.0;
    const double scl = rng.uniform(cfg.scale_min, cfg.scale_max);
    const double tx = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * W;
    const double ty = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * H;
    const double brightness = rng.uniform(1.0 - cfg.jitter, 1.0 + cfg.jitter);
    const double contrast = rng.uniform(1.0 - cfg.jitter, 1.0 + cfg.jitter);

    if (fh) {
        flip_horizontal(image);
        flip_horizontal(mask);
    }
    if (fv) {
        flip_vertical(image);
        flip_vertical(mask);
    }

    if (rot != 0.0 || scl != 1.0 || tx != 0.0 || ty != 0.0) {
        // Inverse-map each destination pixel through the affine transform
        // about the image center.
        const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
        const double cosr = std::cos(rot), sinr = std::sin(rot);
        nn::Tensor<float> img_out(image.shape());
        nn::Tensor<float> mask_out(mask.shape());
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double dx = x - cx - tx;
                const double dy = y - cy - ty;
                const double sx = (cosr * dx + sinr * dy) / scl + cx;
                const double sy = (-sinr * dx + cosr * dy) / scl + cy;
                for (int c = 0; c < image.dim(0); ++c)
                    img_out[(static_cast<std::int64_t>(c) * H + y) * W + x] = sample_bilinear(image, c, sy, sx);
                mask_out[static_cast<std::int64_t>(y) * W + x] = sample_nearest(mask, 0, sy, sx);
            }
        image = std::move(img_out);
        mask = std::move(mask_out);
    }

    if (brightness != 1.0 || contrast != 1.0) {
        // brightness scales, contrast stretches about mid-gray; mask untouched
        for (std::int64_t i = 0; i < image.numel(); ++i) {
            double v = image[i] * brightness;
            v = (v - 0.5) * contrast + 0.5;
            image[i] = static_cast<float>(v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v));
        }
    }
}

// ---------------------------------------------------------------------------
// Synthetic benchmark

namespace {

bool inside(const EllipseSpec& e, double x, double y) {
    const double dx = x - e.cx, dy = y - e.cy;
    const double c = std::cos(e.theta), s = std::sin(e.theta);
    const double u = (dx * c + dy * s) / e.a;
    const double v = (-dx * s + dy * c) / e.b;
    return u * u + v * v <= 1.0;
}

// Top cell in draw order wins a contested pixel.
int top_cell(const std::vector<EllipseSpec>& cells, double x, double y) {
    int hit = -1;
    for (int i = 0; i < static_cast<int>(cells.size()); ++i) {
        if (inside(cells[static_cast<std::size_t>(i)], x, y)) hit = i;
    }
    return hit;
}

std::vector<EllipseSpec> sample_layout(const SynthConfig& cfg, Rng& rng) {
    const double s = cfg.image_size / 64.0;
    const int ncells = cfg.cells_min + static_cast<int>(rng.uniform_int(cfg.cells_max - cfg.cells_min + 1));
    const bool force_touch = rng.uniform() < cfg.touching_prob;
    std::vector<EllipseSpec> cells;
    for (int i = 0; i < ncells; ++i) {
        EllipseSpec e;
        e.a = rng.uniform(5.0, 11.0) * s;
        e.b = rng.uniform(4.0, e.a / s) * s;
        e.theta = rng.uniform(0.0, 3.14159265358979323846);
        // first cell is always a target so the mask is never empty
        e.identity = i == 0 ? 0 : static_cast<int>(rng.uniform_int(cfg.identity_count));
        if (i == 1 && force_touch) {
            // plant the second cell so the two boundary disks overlap
            const EllipseSpec& o = cells[0];
            const double ang = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
            const double d = 0.8 * (o.b + e.b);
            e.cx = o.cx + d * std::cos(ang);
            e.cy = o.cy + d * std::sin(ang);
        } else {
            e.cx = rng.uniform(e.a, cfg.image_size - e.a);
            e.cy = rng.uniform(e.a, cfg.image_size - e.a);
        }
        cells.push_back(e);
    }
    return cells;
}

double mask_fraction(const std::vector<EllipseSpec>& cells, int size) {
    std::int64_t fg = 0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const int t = top_cell(cells, x, y);
            if (t >= 0 && cells[static_cast<std::size_t>(t)].identity == 0) ++fg;
        }
    return static_cast<double>(fg) / (static_cast<double>(size) * size);
}

void paint_cells(nn::Tensor<float>& img, const std::vector<EllipseSpec>& cells, Rng& rng) {
    const int S = img.dim(1);
    // per-cell appearance draws (fixed order before rasterizing)
    struct Look {
        double r, g, b, stripe_dir;
    };
    std::vector<Look> looks;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        Look l;
        l.r = rng.uniform(0.55, 0.85);
        l.g = rng.uniform(0.55, 0.85);
        l.b = rng.uniform(0.55, 0.85);
        l.stripe_dir = rng.uniform(0.0, 3.14159265358979323846);
        looks.push_back(l);
    }
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
            const int t = top_cell(cells, x, y);
            if (t < 0) continue;
            const EllipseSpec& e = cells[static_cast<std::size_t>(t)];
            const Look& l = looks[static_cast<std::size_t>(t)];
            double shade = 1.0;
            if (e.identity != 0) {
                // striped fill with matched mean intensity
                const double proj = x * std::cos(l.stripe_dir) + y * std::sin(l.stripe_dir);
                shade = static_cast<std::int64_t>(std::floor(proj / 3.0)) % 2 == 0 ? 1.25 : 0.75;
            }
            auto put = [&](int c, double v) {
                img[(static_cast<std::int64_t>(c) * S + y) * S + x] =
                    static_cast<float>(std::clamp(v, 0.0, 1.0));
            };
            put(0, l.r * shade);
            put(1, l.g * shade);
            put(2, l.b * shade);
        }
}

void add_noise(nn::Tensor<float>& img, double sigma, Rng& rng) {
    for (std::int64_t i = 0; i < img.numel(); ++i) {
        const double v = img[i] + sigma * rng.normal();
        img[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
}

}  // namespace

nn::Tensor<float> rasterize_target_mask(const std::vector<EllipseSpec>& cells, int size) {
    nn::Tensor<float> mask({1, size, size});
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const int t = top_cell(cells, x, y);
            if (t >= 0 && cells[static_cast<std::size_t>(t)].identity == 0)
                mask[static_cast<std::int64_t>(y) * size + x] = 1.0f;
        }
    return mask;
}

SynthLayout generate_synthetic(const SynthConfig& cfg, const std::string& out_dir) {
    if (cfg.num_images < 1) throw UsageError("generate_synthetic: num_images must be positive");
    if (cfg.image_size % 16 != 0) throw UsageError("generate_synthetic: image_size must be divisible by 16");
    if (cfg.cells_min < 1 || cfg.cells_max < cfg.cells_min)
        throw UsageError("generate_synthetic: invalid cell count range");
    if (cfg.identity_count < 2) throw UsageError("generate_synthetic: identity_count must be >= 2");

    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "masks");
    fs::create_directories(fs::path(out_dir) / "pool");

    SynthLayout layout;
    nlohmann::json manifest = nlohmann::json::array();
    nlohmann::json pool_manifest = nlohmann::json::array();
    nlohmann::json layout_json = nlohmann::json::array();

    char buf[64];
    for (int i = 0; i < cfg.num_images; ++i) {
        Rng rng(derive_seed(cfg.seed, {hash_str("synth-image"), static_cast<std::uint64_t>(i)}));
        // resample layouts until the target area lands in the documented
        // 5%-40% band
        std::vector<EllipseSpec> cells;
        for (int attempt = 0; attempt < 200; ++attempt) {
            cells = sample_layout(cfg, rng);
            const double frac = mask_fraction(cells, cfg.image_size);
            if (frac >= 0.05 && frac <= 0.40) break;
            cells.clear();
        }
        if (cells.empty()) throw NumericError("generate_synthetic: could not reach the target mask-area band");

        nn::Tensor<float> img({3, cfg.image_size, cfg.image_size}, 0.15f);
        paint_cells(img, cells, rng);
        add_noise(img, cfg.noise_sigma, rng);
        nn::Tensor<float> mask = rasterize_target_mask(cells, cfg.image_size);

        std::snprintf(buf, sizeof buf, "%03d", i);
        const std::string stem(buf);
        write_image((fs::path(out_dir) / "images" / (stem + ".png")).string(), img);
        write_mask((fs::path(out_dir) / "masks" / (stem + ".png")).string(), mask);
        manifest.push_back({{"image", "images/" + stem + ".png"},
                            {"mask", "masks/" + stem + ".png"},
                            {"identity", "0"},
                            {"tags", nlohmann::json::array()}});

        nlohmann::json cell_list = nlohmann::json::array();
        for (const auto& e : cells)
            cell_list.push_back(
                {{"cx", e.cx}, {"cy", e.cy}, {"a", e.a}, {"b", e.b}, {"theta", e.theta}, {"identity", e.identity}});
        layout_json.push_back(cell_list);
        layout.images.push_back(cells);
    }

    // Hard-negative pool: pure background noise plus striped-only lookalike
    // images (no masks).
    const int pool_each = std::max(4, cfg.num_images / 5);
    for (int i = 0; i < pool_each; ++i) {
        Rng rng(derive_seed(cfg.seed, {hash_str("synth-noise"), static_cast<std::uint64_t>(i)}));
        nn::Tensor<float> img({3, cfg.image_size, cfg.image_size}, 0.15f);
        add_noise(img, std::max(cfg.noise_sigma, 0.08), rng);
        std::snprintf(buf, sizeof buf, "noise_%02d", i);
        const std::string stem(buf);
        write_image((fs::path(out_dir) / "pool" / (stem + ".png")).string(), img);
        pool_manifest.push_back(
            {{"image", "pool/" + stem + ".png"}, {"identity", "noise"}, {"tags", {"background"}}});
    }
    for (int i = 0; i < pool_each; ++i) {
        Rng rng(derive_seed(cfg.seed, {hash_str("synth-similar"), static_cast<std::uint64_t>(i)}));
        SynthConfig distractor = cfg;
        std::vector<EllipseSpec> cells = sample_layout(distractor, rng);
        for (auto& e : cells) e.identity = 1;  // striped everywhere, no targets
        nn::Tensor<float> img({3, cfg.image_size, cfg.image_size}, 0.15f);
        paint_cells(img, cells, rng);
        add_noise(img, cfg.noise_sigma, rng);
        std::snprintf(buf, sizeof buf, "similar_%02d", i);
        const std::string stem(buf);
        write_image((fs::path(out_dir) / "pool" / (stem + ".png")).string(), img);
        pool_manifest.push_back({{"image", "pool/" + stem + ".png"}, {"identity", "1"}, {"tags", {"similar"}}});
    }

    std::ofstream((fs::path(out_dir) / "manifest.json").string()) << manifest.dump(1) << "\n";
    std::ofstream((fs::path(out_dir) / "hard_negatives.json").string()) << pool_manifest.dump(1) << "\n";
    std::ofstream((fs::path(out_dir) / "layout.json").string()) << layout_json.dump(1) << "\n";
    return layout;
}

}  // namespace iaunet::data
