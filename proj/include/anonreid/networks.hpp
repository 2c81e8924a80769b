#pragma once

#include <string>
#include <vector>

#include "anonreid/nn.hpp"

namespace anonreid {

struct GeneratorConfig {
    int in_channels = 3;
    int out_channels = 3;
    int base_width = 16;
    int depth = 3;  // encoder-decoder levels; H and W must be divisible by 2^depth
    int image_h = 64;
    int image_w = 32;
};

struct DiscriminatorConfig {
    int in_channels = 6;  // conditional pair, channel-concatenated
    int base_width = 16;
    int n_layers = 2;  // stride-2 downsampling convs before the score head
};

struct ReidConfig {
    std::vector<int> widths{16, 32, 64};
    int last_stride = 1;  // the stride-1 modification of the final stage
    int num_classes = 8;
    real gem_p_init = 3.0;
};

// pix2pix-style U-Net: stride-2 conv encoder, transposed-conv decoder with
// skip concatenation, output squashed into [0,1].
class UNetGenerator {
public:
    UNetGenerator(const GeneratorConfig& cfg, uint32_t seed);

    Var forward(const Var& x, bool training) const;
    Tensor generate(const Tensor& batch) const;  // eval-mode convenience

    ParamSet& params() { return ps_; }
    const ParamSet& params() const { return ps_; }
    const GeneratorConfig& config() const { return cfg_; }

private:
    GeneratorConfig cfg_;
    ParamSet ps_;
    std::vector<Conv2dLayer> enc_;
    std::vector<BatchNormLayer> enc_bn_;  // index 0 unused (no BN on first layer)
    std::vector<ConvT2dLayer> dec_;
    std::vector<BatchNormLayer> dec_bn_;
    ConvT2dLayer out_;
};

// Conditional patch discriminator: score map of probabilities in (0,1).
class PatchDiscriminator {
public:
    PatchDiscriminator(const DiscriminatorConfig& cfg, uint32_t seed);

    // condition and candidate are (N,3,H,W); returns the sigmoid score map
    Var forward(const Var& condition, const Var& candidate, bool training) const;

    ParamSet& params() { return ps_; }
    const ParamSet& params() const { return ps_; }

private:
    DiscriminatorConfig cfg_;
    ParamSet ps_;
    std::vector<Conv2dLayer> convs_;
    std::vector<BatchNormLayer> bns_;
    Conv2dLayer head_;
};

struct ReidForward {
    Var pooled;   // feeds center/triplet losses
    Var bn_feat;  // feeds retrieval distance
    Var logits;   // feeds identity loss
};

// Backbone CNN + GeM pooling + BNNeck + linear classifier.
class ReidModel {
public:
    ReidModel(const ReidConfig& cfg, uint32_t seed);

    ReidForward forward(const Var& x, bool training) const;
    Tensor embed(const Tensor& batch) const;  // eval-mode bn features
    Var backbone_map(const Var& x, bool training) const;

    ParamSet& params() { return ps_; }
    const ParamSet& params() const { return ps_; }
    const ReidConfig& config() const { return cfg_; }
    int feature_dim() const { return cfg_.widths.back(); }

private:
    ReidConfig cfg_;
    ParamSet ps_;
    std::vector<Conv2dLayer> convs_;
    std::vector<BatchNormLayer> bns_;
    GeMLayer gem_;
    BatchNormLayer bnneck_;
    LinearLayer classifier_;
};

}  // namespace anonreid
