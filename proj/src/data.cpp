#include "anonreid/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <regex>
#include <stdexcept>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace anonreid {

LabeledImage parse_filename(const std::string& name) {
    static const std::regex pat(R"(^(-?\d+)_c(\d+).*)");
    const std::string base = fs::path(name).filename().string();
    std::smatch m;
    if (!std::regex_match(base, m, pat))
        throw std::runtime_error("unparseable dataset filename: " + name);
    LabeledImage out;
    out.path = name;
    out.person_id = std::stoi(m[1].str());
    out.camera_id = std::stoi(m[2].str());
    out.distractor = out.person_id <= 0;
    return out;
}

static json samples_to_json(const std::vector<LabeledImage>& v) {
    json arr = json::array();
    for (const auto& s : v)
        arr.push_back({{"path", s.path}, {"pid", s.person_id}, {"cam", s.camera_id}});
    return arr;
}

static std::vector<LabeledImage> samples_from_json(const json& arr) {
    std::vector<LabeledImage> out;
    for (const auto& e : arr) {
        LabeledImage s;
        s.path = e.at("path").get<std::string>();
        s.person_id = e.at("pid").get<int>();
        s.camera_id = e.at("cam").get<int>();
        out.push_back(std::move(s));
    }
    return out;
}

std::string SplitSpec::to_manifest_json() const {
    json j;
    j["seed"] = seed;
    j["train"] = samples_to_json(train);
    j["val_gallery"] = samples_to_json(val_gallery);
    j["val_query"] = samples_to_json(val_query);
    j["warnings"] = warnings;
    return j.dump(2);
}

SplitSpec SplitSpec::from_manifest_json(const std::string& text) {
    json j = json::parse(text);
    SplitSpec out;
    out.seed = j.at("seed").get<uint32_t>();
    out.train = samples_from_json(j.at("train"));
    out.val_gallery = samples_from_json(j.at("val_gallery"));
    out.val_query = samples_from_json(j.at("val_query"));
    out.warnings = j.at("warnings").get<std::vector<std::string>>();
    return out;
}

SplitSpec make_splits(const std::vector<LabeledImage>& samples, uint32_t seed) {
    // group by identity, distractors excluded
    std::vector<std::pair<int, std::vector<LabeledImage>>> groups;
    for (const auto& s : samples) {
        if (s.distractor) continue;
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const auto& g) { return g.first == s.person_id; });
        if (it == groups.end()) groups.push_back({s.person_id, {s}});
        else it->second.push_back(s);
    }
    std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    if (groups.size() < 2) throw std::invalid_argument("make_splits: need >= 2 identities");

    SplitSpec spec;
    spec.seed = seed;
    std::mt19937 rng(seed);
    for (auto& [pid, imgs] : groups) {
        std::sort(imgs.begin(), imgs.end(),
                  [](const LabeledImage& a, const LabeledImage& b) { return a.path < b.path; });
        std::shuffle(imgs.begin(), imgs.end(), rng);
        const int n = static_cast<int>(imgs.size());
        if (n == 1) {
            spec.train.push_back(imgs[0]);
            spec.warnings.push_back("identity " + std::to_string(pid) +
                                    " has a single image; assigned wholly to train");
            continue;
        }
        const int val_n = (n + 4) / 5;  // ceil(n/5)
        std::vector<LabeledImage> val(imgs.begin(), imgs.begin() + val_n);
        for (int i = val_n; i < n; ++i) spec.train.push_back(imgs[i]);

        bool single_camera = true;
        for (const auto& s : val)
            if (s.camera_id != val[0].camera_id) single_camera = false;
        if (single_camera && val.size() > 1)
            spec.warnings.push_back("identity " + std::to_string(pid) +
                                    " validation images come from a single camera");

        const int q_n = (val_n + 4) / 5;  // ceil(m/5)
        // prefer queries that have a different-camera gallery partner
        std::stable_sort(val.begin(), val.end(), [&](const LabeledImage& a, const LabeledImage& b) {
            auto cross = [&](const LabeledImage& s) {
                for (const auto& o : val)
                    if (&o != &s && o.camera_id != s.camera_id) return 1;
                return 0;
            };
            return cross(a) > cross(b);
        });
        for (int i = 0; i < val_n; ++i) {
            if (i < q_n) spec.val_query.push_back(val[i]);
            else spec.val_gallery.push_back(val[i]);
        }
    }
    return spec;
}

std::vector<LabeledImage> scan_dataset_dir(const std::string& root) {
    fs::path dir(root);
    if (fs::exists(dir / "bounding_box_train")) dir /= "bounding_box_train";
    if (!fs::is_directory(dir)) throw std::runtime_error("scan_dataset_dir: no such directory " + root);
    std::vector<LabeledImage> out;
    std::vector<std::string> paths;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".bmp")
            paths.push_back(e.path().string());
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) out.push_back(parse_filename(p));
    if (out.empty()) throw std::runtime_error("scan_dataset_dir: no images under " + root);
    return out;
}

const Image& ImageCache::get(const LabeledImage& s) {
    auto it = cache_.find(s.path);
    if (it != cache_.end()) return it->second;
    Image img = resize(load_image(s.path), h_, w_);
    return cache_.emplace(s.path, std::move(img)).first->second;
}

BatchIterator::BatchIterator(const std::vector<LabeledImage>& train, const SupervisionStore& store,
                             int P, int K, int image_h, int image_w, uint32_t seed, int epoch)
    : train_(train),
      store_(store),
      P_(P),
      K_(K),
      h_(image_h),
      w_(image_w),
      rng_(seed ^ (0x9E3779B9u * static_cast<uint32_t>(epoch + 1))) {
    for (size_t i = 0; i < train.size(); ++i) {
        const int pid = train[i].person_id;
        auto it = std::find(ids_.begin(), ids_.end(), pid);
        size_t gi;
        if (it == ids_.end()) {
            ids_.push_back(pid);
            by_identity_.emplace_back();
            gi = ids_.size() - 1;
        } else {
            gi = static_cast<size_t>(it - ids_.begin());
        }
        by_identity_[gi].push_back(static_cast<int>(i));
    }
    // sort identities for a stable label mapping
    std::vector<size_t> perm(ids_.size());
    std::iota(perm.begin(), perm.end(), size_t(0));
    std::sort(perm.begin(), perm.end(), [&](size_t a, size_t b) { return ids_[a] < ids_[b]; });
    std::vector<int> ids2;
    std::vector<std::vector<int>> by2;
    for (size_t p : perm) {
        ids2.push_back(ids_[p]);
        by2.push_back(std::move(by_identity_[p]));
    }
    ids_ = std::move(ids2);
    by_identity_ = std::move(by2);
    if (static_cast<int>(ids_.size()) < P_)
        throw std::invalid_argument("BatchIterator: fewer identities than P");
    identity_order_.resize(ids_.size());
    std::iota(identity_order_.begin(), identity_order_.end(), 0);
    std::shuffle(identity_order_.begin(), identity_order_.end(), rng_);
    batches_left_ = std::max(size_t(1), train.size() / (static_cast<size_t>(P_) * K_));
}

int BatchIterator::label_of(int person_id) const {
    auto it = std::lower_bound(ids_.begin(), ids_.end(), person_id);
    if (it == ids_.end() || *it != person_id)
        throw std::invalid_argument("BatchIterator: unknown person id");
    return static_cast<int>(it - ids_.begin());
}

std::optional<PairedBatch> BatchIterator::next() {
    if (batches_left_ == 0) return std::nullopt;
    --batches_left_;
    if (cursor_ + P_ > identity_order_.size()) {
        // next pass over the identities; any trailing partial group is dropped
        std::shuffle(identity_order_.begin(), identity_order_.end(), rng_);
        cursor_ = 0;
    }
    PairedBatch batch;
    batch.raw = Tensor({P_ * K_, 3, h_, w_});
    batch.supervision = Tensor({P_ * K_, 3, h_, w_});
    int slot = 0;
    for (int p = 0; p < P_; ++p) {
        const int gid = identity_order_[cursor_ + p];
        std::vector<int> pool = by_identity_[gid];
        std::shuffle(pool.begin(), pool.end(), rng_);
        for (int k = 0; k < K_; ++k) {
            int si;
            if (k < static_cast<int>(pool.size())) si = pool[k];
            else  // with replacement when the identity has < K images
                si = pool[std::uniform_int_distribution<int>(0, static_cast<int>(pool.size()) - 1)(rng_)];
            batch.sample_ids.push_back(si);
            batch.labels.push_back(gid);
            const Image raw = resize(load_image(train_[si].path), h_, w_);
            const Image& sup = store_.target(si);
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < h_; ++y)
                    for (int x = 0; x < w_; ++x) {
                        batch.raw.at4(slot, c, y, x) = raw.at(y, x, c);
                        batch.supervision.at4(slot, c, y, x) = sup.at(y, x, c);
                    }
            ++slot;
        }
    }
    cursor_ += P_;
    return batch;
}

// ---- synthetic toy corpus ----

static uint32_t mix(uint32_t a, uint32_t b) {
    uint64_t x = (static_cast<uint64_t>(a) << 32) | b;
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ULL;
    x ^= x >> 33;
    return static_cast<uint32_t>(x);
}

Image render_toy_image(const ToyCorpusConfig& cfg, int identity, int instance, int camera) {
    std::mt19937 id_rng(mix(cfg.seed, 1000 + static_cast<uint32_t>(identity)));
    std::uniform_real_distribution<real> u01(0, 1);
    // identity signature: two clothing colors, stripe geometry, head tone
    real c0[3], c1[3], head[3];
    for (int c = 0; c < 3; ++c) c0[c] = 0.15 + 0.7 * u01(id_rng);
    for (int c = 0; c < 3; ++c) c1[c] = 0.15 + 0.7 * u01(id_rng);
    for (int c = 0; c < 3; ++c) head[c] = 0.3 + 0.5 * u01(id_rng);
    const real period = 6 + 10 * u01(id_rng);
    const real slope = u01(id_rng) < 0.5 ? 0 : 0.5;
    const real split = 0.45 + 0.2 * u01(id_rng);  // torso/legs boundary

    std::mt19937 inst_rng(mix(mix(cfg.seed, 2000 + static_cast<uint32_t>(identity)),
                              static_cast<uint32_t>(instance)));
    const real brightness = 0.9 + 0.2 * u01(inst_rng);
    const real phase = period * u01(inst_rng);
    const real sway = (u01(inst_rng) - 0.5) * 4;  // horizontal offset, pixels
    std::normal_distribution<real> noise(0, 0.02);

    // mild per-camera tint
    const real tint[4][3] = {{1.00, 1.00, 1.00}, {1.06, 0.98, 0.96}, {0.96, 1.05, 0.98},
                             {0.97, 0.98, 1.06}};
    const int t = ((camera - 1) % 4 + 4) % 4;

    Image img(cfg.image_h, cfg.image_w);
    const real cx = cfg.image_w / real(2) + sway;
    for (int y = 0; y < cfg.image_h; ++y) {
        const real fy = static_cast<real>(y) / cfg.image_h;
        for (int x = 0; x < cfg.image_w; ++x) {
            const real dx = std::abs(x - cx) / cfg.image_w;
            real px[3];
            if (fy < 0.18) {  // head region
                const bool inside = dx < 0.16 && fy > 0.04;
                for (int c = 0; c < 3; ++c) px[c] = inside ? head[c] : 0.85;
            } else if (dx > 0.32) {  // background
                for (int c = 0; c < 3; ++c) px[c] = 0.85;
            } else if (fy < split) {  // torso: striped mix of the two colors
                const real s = std::sin(2 * M_PI * (y + slope * x + phase) / period);
                const real mixw = s > 0 ? 1 : 0;
                for (int c = 0; c < 3; ++c) px[c] = mixw * c0[c] + (1 - mixw) * c1[c];
            } else {  // legs: solid secondary color, darkened
                for (int c = 0; c < 3; ++c) px[c] = 0.7 * c1[c];
            }
            for (int c = 0; c < 3; ++c) {
                real v = px[c] * brightness * tint[t][c] + noise(inst_rng);
                img.at(y, x, c) = std::min(real(1), std::max(real(0), v));
            }
        }
    }
    return img;
}

void write_toy_corpus(const ToyCorpusConfig& cfg, const std::string& root) {
    fs::path dir = fs::path(root) / "bounding_box_train";
    fs::create_directories(dir);
    char name[64];
    for (int id = 0; id < cfg.identities; ++id) {
        for (int k = 0; k < cfg.images_per_identity; ++k) {
            const int cam = k % cfg.cameras + 1;
            std::snprintf(name, sizeof(name), "%04d_c%ds1_%06d_00.png", id + 1, cam, k + 1);
            save_image(render_toy_image(cfg, id, k, cam), (dir / name).string());
        }
    }
}

}  // namespace anonreid
