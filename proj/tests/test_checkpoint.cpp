#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "anonreid/checkpoint.hpp"

using namespace anonreid;
namespace fs = std::filesystem;

namespace {

Tensor random_tensor(const std::vector<int>& shape, uint32_t seed) {
    Tensor t(shape);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<real> u(-2, 2);
    for (auto& x : t.v) x = u(rng);
    return t;
}

std::string temp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("checkpoints round-trip tensors, state and metadata exactly") {
    Checkpoint ck;
    ck.tensors["gx/enc0.w"] = random_tensor({4, 3, 4, 4}, 1);
    ck.tensors["reid/classifier.w"] = random_tensor({8, 5}, 2);
    ck.tensors["centers"] = random_tensor({5, 8}, 3);
    ck.epoch = 17;
    ck.config_fingerprint = "abc123";
    ck.upgrade_state.psnr_des = 21.5;
    ck.upgrade_state.ssim_des = 0.82;
    ck.upgrade_state.max_r1 = 0.61;
    ck.upgrade_state.upgrade_count = 3;
    ck.upgrade_state.eps.ssim = 0.07;
    ck.upgrade_state.last_decision = UpgradeDecision::upgraded;

    const std::string path = temp_path("anonreid_ckpt_roundtrip.bin");
    ck.save(path);
    Checkpoint back = Checkpoint::load(path, "abc123");
    fs::remove(path);

    REQUIRE(back.tensors.size() == 3);
    for (const auto& [name, t] : ck.tensors) {
        REQUIRE(back.tensors.count(name) == 1);
        CHECK(back.tensors.at(name).shape == t.shape);
        CHECK(back.tensors.at(name).v == t.v);  // bit-exact
    }
    CHECK(back.epoch == 17);
    CHECK(back.config_fingerprint == "abc123");
    CHECK(back.upgrade_state.psnr_des == ck.upgrade_state.psnr_des);
    CHECK(back.upgrade_state.ssim_des == ck.upgrade_state.ssim_des);
    CHECK(back.upgrade_state.max_r1 == ck.upgrade_state.max_r1);
    CHECK(back.upgrade_state.upgrade_count == 3);
    CHECK(back.upgrade_state.eps.ssim == ck.upgrade_state.eps.ssim);
    CHECK(back.upgrade_state.last_decision == UpgradeDecision::upgraded);
}

TEST_CASE("loading with a mismatched fingerprint fails") {
    Checkpoint ck;
    ck.tensors["w"] = random_tensor({2, 2}, 4);
    ck.config_fingerprint = "fp-one";
    const std::string path = temp_path("anonreid_ckpt_fp.bin");
    ck.save(path);
    CHECK_THROWS(Checkpoint::load(path, "fp-two"));
    CHECK_NOTHROW(Checkpoint::load(path, "fp-one"));
    CHECK_NOTHROW(Checkpoint::load(path, ""));  // explicit skip
    fs::remove(path);
}

TEST_CASE("loading garbage or missing files fails cleanly") {
    CHECK_THROWS(Checkpoint::load(temp_path("anonreid_no_such_ckpt.bin")));
    const std::string path = temp_path("anonreid_ckpt_garbage.bin");
    std::ofstream(path) << "this is not a checkpoint";
    CHECK_THROWS(Checkpoint::load(path));
    fs::remove(path);
}

TEST_CASE("saving leaves no temp droppings and overwrites in place") {
    Checkpoint ck;
    ck.tensors["w"] = random_tensor({3}, 5);
    const std::string path = temp_path("anonreid_ckpt_atomic.bin");
    ck.save(path);
    ck.tensors["w"].v[0] = 42;
    ck.save(path);
    Checkpoint back = Checkpoint::load(path);
    CHECK(back.tensors.at("w").v[0] == 42);
    fs::remove(path);
    int leftovers = 0;
    for (const auto& e : fs::directory_iterator(fs::temp_directory_path()))
        if (e.path().filename().string().find("anonreid_ckpt_atomic") != std::string::npos)
            ++leftovers;
    CHECK(leftovers == 0);
}

TEST_CASE("config fingerprints separate different configurations") {
    CHECK(config_fingerprint_of("{\"a\":1}") == config_fingerprint_of("{\"a\":1}"));
    CHECK(config_fingerprint_of("{\"a\":1}") != config_fingerprint_of("{\"a\":2}"));
    CHECK_FALSE(config_fingerprint_of("{}").empty());
}
