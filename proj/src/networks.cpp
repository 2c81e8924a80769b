#include "anonreid/networks.hpp"

#include <stdexcept>

namespace anonreid {

static int level_width(int base, int level) {
    int w = base;
    for (int i = 0; i < level; ++i) w = std::min(w * 2, base * 8);
    return w;
}

UNetGenerator::UNetGenerator(const GeneratorConfig& cfg, uint32_t seed) : cfg_(cfg) {
    if (cfg.depth < 1) throw std::invalid_argument("UNetGenerator: depth must be >= 1");
    const int div = 1 << cfg.depth;
    if (cfg.image_h % div != 0 || cfg.image_w % div != 0)
        throw std::invalid_argument("UNetGenerator: image dims must be divisible by 2^depth");
    std::mt19937 rng(seed);
    int cin = cfg.in_channels;
    for (int i = 0; i < cfg.depth; ++i) {
        const int cout = level_width(cfg.base_width, i);
        enc_.emplace_back(ps_, "enc" + std::to_string(i), cin, cout, 4, 2, 1, rng);
        if (i > 0)
            enc_bn_.emplace_back(ps_, "enc_bn" + std::to_string(i), cout, true);
        cin = cout;
    }
    int cur = level_width(cfg.base_width, cfg.depth - 1);
    for (int i = cfg.depth - 1; i >= 1; --i) {
        const int cout = level_width(cfg.base_width, i - 1);
        dec_.emplace_back(ps_, "dec" + std::to_string(i), cur, cout, 4, 2, 1, rng);
        dec_bn_.emplace_back(ps_, "dec_bn" + std::to_string(i), cout, true);
        cur = cout * 2;  // skip concat with encoder level i-1
    }
    out_ = ConvT2dLayer(ps_, "out", cur, cfg.out_channels, 4, 2, 1, rng);
}

Var UNetGenerator::forward(const Var& x, bool training) const {
    if (x->val.ndim() != 4 || x->val.dim(1) != cfg_.in_channels ||
        x->val.dim(2) != cfg_.image_h || x->val.dim(3) != cfg_.image_w)
        throw std::invalid_argument("UNetGenerator: input shape mismatch");
    std::vector<Var> acts;
    Var h = x;
    for (size_t i = 0; i < enc_.size(); ++i) {
        h = enc_[i].forward(h);
        if (i > 0) h = enc_bn_[i - 1].forward(h, training);
        h = leaky_relu(h, 0.2);
        acts.push_back(h);
    }
    for (size_t i = 0; i < dec_.size(); ++i) {
        h = dec_[i].forward(h);
        h = dec_bn_[i].forward(h, training);
        h = relu(h);
        const size_t skip = enc_.size() - 2 - i;
        h = concat_channels(h, acts[skip]);
    }
    h = out_.forward(h);
    // saturating output: (tanh+1)/2 keeps values in the canonical range
    return scale(add_scalar(tanh_op(h), 1), 0.5);
}

Tensor UNetGenerator::generate(const Tensor& batch) const {
    Var x = constant(batch);
    return forward(x, false)->val;
}

PatchDiscriminator::PatchDiscriminator(const DiscriminatorConfig& cfg, uint32_t seed) : cfg_(cfg) {
    std::mt19937 rng(seed);
    int cin = cfg.in_channels;
    for (int i = 0; i < cfg.n_layers; ++i) {
        const int cout = level_width(cfg.base_width, i);
        convs_.emplace_back(ps_, "conv" + std::to_string(i), cin, cout, 4, 2, 1, rng);
        if (i > 0) bns_.emplace_back(ps_, "bn" + std::to_string(i), cout, true);
        cin = cout;
    }
    head_ = Conv2dLayer(ps_, "head", cin, 1, 4, 1, 1, rng);
}

Var PatchDiscriminator::forward(const Var& condition, const Var& candidate, bool training) const {
    check_same_shape(condition->val, candidate->val, "discriminate");
    Var h = concat_channels(condition, candidate);
    for (size_t i = 0; i < convs_.size(); ++i) {
        h = convs_[i].forward(h);
        if (i > 0) h = bns_[i - 1].forward(h, training);
        h = leaky_relu(h, 0.2);
    }
    return sigmoid(head_.forward(h));
}

ReidModel::ReidModel(const ReidConfig& cfg, uint32_t seed) : cfg_(cfg) {
    if (cfg.widths.empty()) throw std::invalid_argument("ReidModel: empty backbone widths");
    std::mt19937 rng(seed);
    int cin = 3;
    for (size_t i = 0; i < cfg.widths.size(); ++i) {
        const bool last = i + 1 == cfg.widths.size();
        const int stride = last ? cfg.last_stride : 2;
        convs_.emplace_back(ps_, "conv" + std::to_string(i), cin, cfg.widths[i], 3, stride, 1, rng);
        bns_.emplace_back(ps_, "bn" + std::to_string(i), cfg.widths[i], true);
        cin = cfg.widths[i];
    }
    gem_ = GeMLayer(ps_, "gem", cfg.gem_p_init);
    bnneck_ = BatchNormLayer(ps_, "bnneck", cin, false);
    classifier_ = LinearLayer(ps_, "classifier", cin, cfg.num_classes, false, rng);
}

Var ReidModel::backbone_map(const Var& x, bool training) const {
    Var h = x;
    for (size_t i = 0; i < convs_.size(); ++i) {
        h = convs_[i].forward(h);
        h = bns_[i].forward(h, training);
        h = relu(h);
    }
    return h;
}

ReidForward ReidModel::forward(const Var& x, bool training) const {
    Var map = backbone_map(x, training);
    ReidForward out;
    out.pooled = gem_.forward(map);
    out.bn_feat = bnneck_.forward(out.pooled, training);
    out.logits = classifier_.forward(out.bn_feat);
    return out;
}

Tensor ReidModel::embed(const Tensor& batch) const {
    Var x = constant(batch);
    return forward(x, false).bn_feat->val;
}

}  // namespace anonreid
