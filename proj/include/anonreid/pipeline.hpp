#pragma once

#include <array>
#include <memory>
#include <string>

#include "anonreid/checkpoint.hpp"
#include "anonreid/data.hpp"
#include "anonreid/losses.hpp"
#include "anonreid/metrics.hpp"
#include "anonreid/networks.hpp"
#include "anonreid/upgradation.hpp"

namespace anonreid {

struct TrainConfig {
    std::string dataset_root;
    std::string workdir = "work";

    int image_h = 256, image_w = 128;
    int P = 16, K = 4;  // batch = P*K
    int epochs = 120;
    int pretrain_epochs = 0;  // 0: same budget as epochs

    // learning-rate schedule: linear warmup, then step drops to absolute values
    real lr_base = 3.5e-5, lr_peak = 3.5e-4;
    int warmup_epochs = 10;
    int decay1_epoch = 40, decay2_epoch = 80;
    real lr_decay1 = 3.5e-5, lr_decay2 = 3.5e-6;

    AdamConfig gen_adam{0.5, 0.999, 1e-8};
    AdamConfig reid_adam{0.9, 0.999, 1e-8};

    real lambda_l1 = 100;
    bool non_saturating = true;
    real center_weight = 5e-4;
    real center_lr = 0.5;
    real psnr_mean_cap = 60;  // per-image +inf PSNR contributes this to means

    DesensitizeMethod desens;
    EpsilonTriple eps;
    bool upgradation_enabled = true;
    int upgrade_check_every = 1;

    GeneratorConfig gen;
    DiscriminatorConfig disc;
    ReidConfig reid;

    uint32_t seed = 42;

    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
    std::string fingerprint() const { return config_fingerprint_of(to_json()); }

    // 64x32 images, small models, short schedule: a full run in minutes on CPU
    static TrainConfig desk_default();
};

// 1-based epoch -> learning rate
real lr_at(const TrainConfig& cfg, int epoch);

// The five learnable components plus center-loss state, as one unit.
struct JointModels {
    UNetGenerator gx, gy;
    PatchDiscriminator dx, dy;
    ReidModel reid;
    CenterState centers;

    explicit JointModels(const TrainConfig& cfg);
    std::map<std::string, Tensor> all_tensors() const;
    void load_tensors(const std::map<std::string, Tensor>& st);
};

struct PretrainResult {
    real r1_raw_des = 0;
    real psnr_des = 0;
    real ssim_des = 0;
};

// Trains the Re-ID model on raw + desensitized pairs and measures everything
// init_state needs (rank-1 raw query / desensitized gallery, PSNR/SSIM means).
PretrainResult pretrain_baseline(const TrainConfig& cfg, JointModels& models,
                                 const SplitSpec& split, const SupervisionStore& store);

struct TrainResult {
    std::string checkpoint_path;
    UpgradeState final_state;
    int upgrade_events = 0;
};

// Full joint loop: per batch D step, G step, Re-ID step; per epoch validation,
// upgradation check, loss log append and checkpoint.
TrainResult train_joint(const TrainConfig& cfg, JointModels& models, const SplitSpec& split,
                        SupervisionStore& store, const PretrainResult& pre);

enum class ImageDomain { OI, PI };

struct EvalSetting {
    ImageDomain query_domain = ImageDomain::OI;
    ImageDomain gallery_domain = ImageDomain::OI;
    std::string name() const;
};

// Table-style grid: the four query/gallery OI/PI combinations.
std::array<EvalSetting, 4> four_settings();
std::array<EvalReport, 4> evaluate_four_settings(const TrainConfig& cfg, const JointModels& models,
                                                 const SplitSpec& split);

struct RecoveryEval {
    real psnr_mean = 0;
    real ssim_mean = 0;
    real psnr_des_mean = 0;  // desensitized-vs-raw comparison values
    real ssim_des_mean = 0;
};
RecoveryEval evaluate_recovery(const TrainConfig& cfg, const JointModels& models,
                               const SplitSpec& split);

// Directory translation; skips unreadable files with a warning, returns the
// number written. Throws only if every input fails.
int anonymize_dir(const TrainConfig& cfg, const JointModels& models, const std::string& in_dir,
                  const std::string& out_dir);
int recover_dir(const TrainConfig& cfg, const JointModels& models, const std::string& in_dir,
                const std::string& out_dir);

// Per-image bn features with labels and raw/protected domain tags (CSV).
void export_embeddings(const TrainConfig& cfg, const JointModels& models, const SplitSpec& split,
                       const std::string& out_csv);

// Initializes the supervision store with desensitized train images.
void init_supervision(const TrainConfig& cfg, const SplitSpec& split, SupervisionStore& store);

// mean PSNR (capped) / SSIM between two aligned image lists
std::pair<real, real> image_quality_means(const std::vector<Image>& a, const std::vector<Image>& b,
                                          real psnr_cap);

// checkpoint glue
void save_joint_checkpoint(const TrainConfig& cfg, const JointModels& models,
                           const UpgradeState& st, int epoch, const std::string& path);
void load_joint_checkpoint(const TrainConfig& cfg, JointModels& models, UpgradeState& st,
                           const std::string& path);

}  // namespace anonreid
