#include "anonreid/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace anonreid {

static constexpr char kMagic[] = "ANONREID-CKPT-1\n";

void Checkpoint::save(const std::string& path) const {
    json hdr;
    hdr["epoch"] = epoch;
    hdr["fingerprint"] = config_fingerprint;
    hdr["upgrade"] = {{"psnr_des", upgrade_state.psnr_des},
                      {"ssim_des", upgrade_state.ssim_des},
                      {"max_r1", upgrade_state.max_r1},
                      {"eps_psnr", upgrade_state.eps.psnr},
                      {"eps_ssim", upgrade_state.eps.ssim},
                      {"eps_r1", upgrade_state.eps.r1},
                      {"upgrade_count", upgrade_state.upgrade_count},
                      {"last_decision",
                       upgrade_state.last_decision == UpgradeDecision::upgraded ? "upgraded" : "kept"}};
    json dir = json::array();
    uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        dir.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
        offset += static_cast<uint64_t>(t.numel()) * sizeof(real);
    }
    hdr["tensors"] = dir;
    const std::string hdr_text = hdr.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("checkpoint save: cannot open " + tmp);
        os.write(kMagic, sizeof(kMagic) - 1);
        const uint64_t hlen = hdr_text.size();
        os.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
        os.write(hdr_text.data(), static_cast<std::streamsize>(hlen));
        for (const auto& [name, t] : tensors)
            os.write(reinterpret_cast<const char*>(t.v.data()),
                     static_cast<std::streamsize>(t.v.size() * sizeof(real)));
        if (!os) throw std::runtime_error("checkpoint save: write failed for " + tmp);
    }
    fs::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::string& path, const std::string& expected_fingerprint) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint load: cannot open " + path);
    char magic[sizeof(kMagic) - 1];
    is.read(magic, sizeof(magic));
    if (!is || std::string(magic, sizeof(magic)) != std::string(kMagic, sizeof(magic)))
        throw std::runtime_error("checkpoint load: bad magic in " + path);
    uint64_t hlen = 0;
    is.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hdr_text(hlen, '\0');
    is.read(hdr_text.data(), static_cast<std::streamsize>(hlen));
    json hdr = json::parse(hdr_text);

    Checkpoint ck;
    ck.epoch = hdr.at("epoch").get<int>();
    ck.config_fingerprint = hdr.at("fingerprint").get<std::string>();
    if (!expected_fingerprint.empty() && ck.config_fingerprint != expected_fingerprint)
        throw std::runtime_error("checkpoint load: config fingerprint mismatch (" +
                                 ck.config_fingerprint + " vs " + expected_fingerprint + ")");
    const auto& up = hdr.at("upgrade");
    ck.upgrade_state.psnr_des = up.at("psnr_des").get<real>();
    ck.upgrade_state.ssim_des = up.at("ssim_des").get<real>();
    ck.upgrade_state.max_r1 = up.at("max_r1").get<real>();
    ck.upgrade_state.eps.psnr = up.at("eps_psnr").get<real>();
    ck.upgrade_state.eps.ssim = up.at("eps_ssim").get<real>();
    ck.upgrade_state.eps.r1 = up.at("eps_r1").get<real>();
    ck.upgrade_state.upgrade_count = up.at("upgrade_count").get<int>();
    ck.upgrade_state.last_decision = up.at("last_decision").get<std::string>() == "upgraded"
                                         ? UpgradeDecision::upgraded
                                         : UpgradeDecision::kept;
    for (const auto& e : hdr.at("tensors")) {
        Tensor t(e.at("shape").get<std::vector<int>>());
        is.read(reinterpret_cast<char*>(t.v.data()),
                static_cast<std::streamsize>(t.v.size() * sizeof(real)));
        ck.tensors[e.at("name").get<std::string>()] = std::move(t);
    }
    if (!is) throw std::runtime_error("checkpoint load: truncated file " + path);
    return ck;
}

std::string config_fingerprint_of(const std::string& config_json) {
    const size_t h = std::hash<std::string>{}(config_json);
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

}  // namespace anonreid
