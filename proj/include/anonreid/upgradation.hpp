#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "anonreid/imaging.hpp"

namespace anonreid {

enum class UpgradeDecision { kept, upgraded };

struct EpsilonTriple {
    real psnr = 1.0;
    real ssim = 0.05;
    real r1 = 0.05;
};

struct UpgradeState {
    real psnr_des = 0;  // desensitized-vs-raw validation mean, fixed baseline
    real ssim_des = 0;
    real max_r1 = 0;  // running maximum rank-1, raw query / anonymized gallery
    EpsilonTriple eps;
    int upgrade_count = 0;
    UpgradeDecision last_decision = UpgradeDecision::kept;
};

struct ValidationSnapshot {
    real psnr_ano = 0;
    real ssim_ano = 0;
    real r1_raw_ano = 0;
};

// max_r1 starts at the pretrain rank-1 minus eps.r1
UpgradeState init_state(real r1_raw_des, real psnr_des, real ssim_des,
                        const EpsilonTriple& eps = {});

// Privacy gate: PSNR/SSIM of anonymized images below the desensitized baseline
// plus eps. Re-ID gate: rank-1 above the running maximum. Upgrade only when
// both hold; an upgrade raises max_r1 to the snapshot's rank-1.
UpgradeDecision check(UpgradeState& state, const ValidationSnapshot& snap);

struct SupervisionEntry {
    Image target;
    std::string tag;  // "desensitized" or "upgraded@<epoch>"
};

class SupervisionStore {
public:
    void set_initial(int sample_id, Image target);
    const Image& target(int sample_id) const;
    const std::string& tag(int sample_id) const;
    size_t size() const { return entries_.size(); }
    std::vector<int> sample_ids() const;

    // Replaces every target with generate(sample_id); all-or-nothing — a
    // generation failure leaves the store untouched.
    void apply_upgrade(const std::function<Image(int)>& generate, int epoch);

private:
    std::unordered_map<int, SupervisionEntry> entries_;
};

}  // namespace anonreid
