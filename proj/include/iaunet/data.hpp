#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iaunet/image_io.hpp"

namespace iaunet::data {

struct SampleRecord {
    std::string image_path;  // resolved against the manifest location
    std::string mask_path;   // empty for pool records without masks
    std::string identity;
    std::vector<std::string> tags;

    bool has_tag(const std::string& t) const {
        for (const auto& s : tags)
            if (s == t) return true;
        return false;
    }
};

// Manifest: JSON array of {"image", "mask", "identity", "tags"} with paths
// relative to the manifest file. load_dataset validates every record (files
// exist, mask matches image extent, values binary / in-range); load_pool
// makes the mask optional and skips mask validation.
std::vector<SampleRecord> load_dataset(const std::string& manifest_path, bool binary = true, int num_classes = 1);
std::vector<SampleRecord> load_pool(const std::string& manifest_path);

enum class NegativeSource { pool, background, adjacent };

inline const char* negative_source_name(NegativeSource s) {
    switch (s) {
        case NegativeSource::pool: return "pool";
        case NegativeSource::background: return "background";
        default: return "adjacent";
    }
}

struct Triplet {
    SampleRecord anchor;
    SampleRecord positive;
    SampleRecord negative;
    NegativeSource negative_source = NegativeSource::adjacent;
};

// Sampling index over a record set plus an optional hard-negative pool.
// Positives come uniformly from the anchor's identity (excluding the anchor
// itself when the identity has more than one record; otherwise the anchor
// doubles as its own positive and augmentation provides the second view).
// Negatives come from the pool with probability hard_negative_prob, else
// uniformly from other identities, falling back to whichever source exists.
class TripletIndex {
  public:
    TripletIndex(std::vector<SampleRecord> records, std::vector<SampleRecord> pool, double hard_negative_prob);

    Triplet sample(int anchor_index, Rng& rng) const;
    int size() const { return static_cast<int>(records_.size()); }
    const std::vector<SampleRecord>& records() const { return records_; }
    const std::vector<SampleRecord>& pool() const { return pool_; }

  private:
    std::vector<SampleRecord> records_;
    std::vector<SampleRecord> pool_;
    std::map<std::string, std::vector<int>> by_identity_;
    double hard_negative_prob_;
};

// Seeded triplet stream cycling over anchors in record order. Concurrent
// consumers shard by constructing with seed + consumer_index.
class TripletStream {
  public:
    TripletStream(std::vector<SampleRecord> records, std::vector<SampleRecord> pool, double hard_negative_prob,
                  std::uint64_t seed)
        : index_(std::move(records), std::move(pool), hard_negative_prob),
          rng_(derive_seed(seed, {hash_str("triplets")})) {}

    Triplet next() {
        Triplet t = index_.sample(cursor_, rng_);
        cursor_ = (cursor_ + 1) % index_.size();
        return t;
    }

    const TripletIndex& index() const { return index_; }

  private:
    TripletIndex index_;
    Rng rng_;
    int cursor_ = 0;
};

struct AugmentationConfig {
    double flip_prob = 0.5;        // per axis
    double rotation_deg = 15.0;    // uniform in +-rotation_deg
    double scale_min = 0.9;
    double scale_max = 1.1;
    double translate_frac = 0.05;  // uniform in +-frac of each extent
    double jitter = 0.2;           // brightness/contrast factors in 1 +- jitter

    static AugmentationConfig disabled() {
        return {0.0, 0.0, 1.0, 1.0, 0.0, 0.0};
    }
};

// Joint geometric transform (image bilinear, mask nearest, out-of-frame
// filled with 0 / background) plus photometric jitter on the image only.
// Exactly eight RNG draws per call regardless of configuration, so the
// stream position is a pure function of the call count.
void augment(nn::Tensor<float>& image, nn::Tensor<float>& mask, const AugmentationConfig& cfg, Rng& rng);

struct SynthConfig {
    int num_images = 20;
    int image_size = 64;
    int cells_min = 3;
    int cells_max = 8;
    int identity_count = 2;
    double touching_prob = 0.3;
    double noise_sigma = 0.04;
    std::uint64_t seed = 1;
};

struct EllipseSpec {
    double cx, cy, a, b, theta;
    int identity;
};

struct SynthLayout {
    std::vector<std::vector<EllipseSpec>> images;  // per generated image
};

// Elliptical-cell benchmark: identity 0 cells are smooth-filled (the target,
// covered by the mask), identity 1+ cells are striped lookalikes with the
// same contour statistics. Also emits a hard-negative pool of background
// noise and striped-only images. Writes images/, masks/, pool/,
// manifest.json, hard_negatives.json and layout.json under out_dir; byte
// deterministic for a fixed seed.
SynthLayout generate_synthetic(const SynthConfig& cfg, const std::string& out_dir);

// Rasterizes the target mask implied by a cell list (top cell in draw order
// wins); exposed so tests can replay layout.json against the written masks.
nn::Tensor<float> rasterize_target_mask(const std::vector<EllipseSpec>& cells, int size);

}  // namespace iaunet::data
