#pragma once

#include <optional>
#include <string>
#include <vector>

#include "anonreid/imaging.hpp"
#include "anonreid/metrics.hpp"
#include "anonreid/upgradation.hpp"

namespace anonreid {

struct LabeledImage {
    std::string path;
    int person_id = 0;
    int camera_id = 0;
    bool distractor = false;  // pid -1 or 0 in the Market-1501 convention
    SampleMeta meta() const { return {person_id, camera_id}; }
};

// Market-1501 naming: "<pid>_c<cam>...". pid -1/0 entries are flagged for
// exclusion rather than rejected.
LabeledImage parse_filename(const std::string& name);

struct SplitSpec {
    std::vector<LabeledImage> train;
    std::vector<LabeledImage> val_gallery;
    std::vector<LabeledImage> val_query;
    uint32_t seed = 0;
    std::vector<std::string> warnings;

    std::string to_manifest_json() const;
    static SplitSpec from_manifest_json(const std::string& json_text);
};

// Per-identity image-level 4:1 train/val split, then 4:1 gallery/query inside
// val, preferring cross-camera query-gallery pairs. Deterministic under seed.
SplitSpec make_splits(const std::vector<LabeledImage>& samples, uint32_t seed);

// Scans bounding_box_train/ (or a flat directory) for image files.
std::vector<LabeledImage> scan_dataset_dir(const std::string& root);

struct PairedBatch {
    Tensor raw;          // (P*K, 3, H, W)
    Tensor supervision;  // index-aligned targets from the store
    std::vector<int> labels;      // dense class indices
    std::vector<int> sample_ids;  // indices into the train list
};

// PK-structured epoch iteration: P identities x K instances, sampling with
// replacement when an identity has fewer than K images.
class BatchIterator {
public:
    BatchIterator(const std::vector<LabeledImage>& train, const SupervisionStore& store, int P,
                  int K, int image_h, int image_w, uint32_t seed, int epoch);

    std::optional<PairedBatch> next();
    int num_identities() const { return static_cast<int>(ids_.size()); }
    // dense label index for a person id (stable across epochs)
    int label_of(int person_id) const;

private:
    const std::vector<LabeledImage>& train_;
    const SupervisionStore& store_;
    int P_, K_, h_, w_;
    std::mt19937 rng_;
    std::vector<int> ids_;                        // distinct person ids, sorted
    std::vector<std::vector<int>> by_identity_;   // sample indices per identity
    std::vector<int> identity_order_;
    size_t cursor_ = 0;
    int batches_left_ = 0;  // epoch length: about one pass over the images
};

// Loads, resizes and caches train images; shared by training and evaluation.
class ImageCache {
public:
    ImageCache(int h, int w) : h_(h), w_(w) {}
    const Image& get(const LabeledImage& s);

private:
    int h_, w_;
    std::unordered_map<std::string, Image> cache_;
};

// Synthetic desk-scale corpus: identities with distinctive color/stripe
// signatures, per-image pose/brightness jitter and per-camera tint. Written
// in the Market-1501 directory layout.
struct ToyCorpusConfig {
    int identities = 8;
    int images_per_identity = 25;
    int cameras = 4;
    int image_h = 64;
    int image_w = 32;
    uint32_t seed = 7;
};
Image render_toy_image(const ToyCorpusConfig& cfg, int identity, int instance, int camera);
void write_toy_corpus(const ToyCorpusConfig& cfg, const std::string& root);

}  // namespace anonreid
