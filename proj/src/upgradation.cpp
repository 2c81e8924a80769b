#include "anonreid/upgradation.hpp"

#include <algorithm>
#include <stdexcept>

namespace anonreid {

UpgradeState init_state(real r1_raw_des, real psnr_des, real ssim_des, const EpsilonTriple& eps) {
    if (r1_raw_des < 0 || r1_raw_des > 1)
        throw std::invalid_argument("init_state: r1_raw_des out of [0,1]");
    UpgradeState st;
    st.psnr_des = psnr_des;
    st.ssim_des = ssim_des;
    st.eps = eps;
    st.max_r1 = r1_raw_des - eps.r1;
    st.upgrade_count = 0;
    st.last_decision = UpgradeDecision::kept;
    return st;
}

UpgradeDecision check(UpgradeState& state, const ValidationSnapshot& snap) {
    const bool privacy_ok = snap.psnr_ano < state.psnr_des + state.eps.psnr &&
                            snap.ssim_ano < state.ssim_des + state.eps.ssim;
    const bool reid_ok = snap.r1_raw_ano > state.max_r1;
    if (privacy_ok && reid_ok) {
        state.max_r1 = snap.r1_raw_ano;
        ++state.upgrade_count;
        state.last_decision = UpgradeDecision::upgraded;
    } else {
        state.last_decision = UpgradeDecision::kept;
    }
    return state.last_decision;
}

void SupervisionStore::set_initial(int sample_id, Image target) {
    entries_[sample_id] = SupervisionEntry{std::move(target), "desensitized"};
}

const Image& SupervisionStore::target(int sample_id) const {
    auto it = entries_.find(sample_id);
    if (it == entries_.end())
        throw std::invalid_argument("SupervisionStore: unknown sample id " +
                                    std::to_string(sample_id));
    return it->second.target;
}

const std::string& SupervisionStore::tag(int sample_id) const {
    auto it = entries_.find(sample_id);
    if (it == entries_.end())
        throw std::invalid_argument("SupervisionStore: unknown sample id " +
                                    std::to_string(sample_id));
    return it->second.tag;
}

std::vector<int> SupervisionStore::sample_ids() const {
    std::vector<int> ids;
    ids.reserve(entries_.size());
    for (const auto& [id, e] : entries_) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

void SupervisionStore::apply_upgrade(const std::function<Image(int)>& generate, int epoch) {
    // stage everything first so a failure leaves the store unchanged
    std::vector<std::pair<int, Image>> staged;
    staged.reserve(entries_.size());
    for (const auto& [id, e] : entries_) staged.emplace_back(id, generate(id));
    const std::string tag = "upgraded@" + std::to_string(epoch);
    for (auto& [id, img] : staged) entries_[id] = SupervisionEntry{std::move(img), tag};
}

}  // namespace anonreid
