#pragma once

#include <map>
#include <string>

#include "anonreid/tensor.hpp"
#include "anonreid/upgradation.hpp"

namespace anonreid {

// Single-archive checkpoint: named parameter tensors for all five models,
// the upgradation state, the epoch counter and a config fingerprint.
// Written atomically (temp file + rename).
struct Checkpoint {
    std::map<std::string, Tensor> tensors;  // keys like "gx/enc0.w"
    UpgradeState upgrade_state;
    int epoch = 0;
    std::string config_fingerprint;

    void save(const std::string& path) const;
    // Loading with a mismatched fingerprint is an error; pass "" to skip.
    static Checkpoint load(const std::string& path, const std::string& expected_fingerprint = "");
};

std::string config_fingerprint_of(const std::string& config_json);

}  // namespace anonreid
