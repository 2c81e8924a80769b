#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "anonreid/autodiff.hpp"

namespace anonreid {

// Named long-lived parameter leaves plus the non-trainable running stats that
// must travel with them in checkpoints.
struct ParamSet {
    std::vector<std::pair<std::string, Var>> params;
    std::vector<std::pair<std::string, Tensor*>> buffers;

    Var add(const std::string& name, Tensor init) {
        auto v = make_leaf(std::move(init));
        params.emplace_back(name, v);
        return v;
    }
    void add_buffer(const std::string& name, Tensor* t) { buffers.emplace_back(name, t); }

    void zero_grad() {
        for (auto& [n, p] : params) p->zero_grad();
    }
    std::map<std::string, Tensor> state() const;
    void load_state(const std::map<std::string, Tensor>& st);
    long param_count() const;
    real checksum() const;  // cheap fingerprint for "evaluation mutates nothing" checks
};

struct AdamConfig {
    real beta1 = 0.9;
    real beta2 = 0.999;
    real eps = 1e-8;
};

class Adam {
public:
    Adam(ParamSet& ps, AdamConfig cfg) : ps_(ps), cfg_(cfg) {}
    void step(real lr);
    void zero_grad() { ps_.zero_grad(); }

private:
    ParamSet& ps_;
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    long t_ = 0;
};

// ---- layers ----

struct Conv2dLayer {
    Var w, b;
    int stride, pad;
    Conv2dLayer() = default;
    Conv2dLayer(ParamSet& ps, const std::string& name, int cin, int cout, int k, int stride_,
                int pad_, std::mt19937& rng, real init_std = 0.02);
    Var forward(const Var& x) const { return conv2d(x, w, b, stride, pad); }
};

struct ConvT2dLayer {
    Var w, b;
    int stride, pad;
    ConvT2dLayer() = default;
    ConvT2dLayer(ParamSet& ps, const std::string& name, int cin, int cout, int k, int stride_,
                 int pad_, std::mt19937& rng, real init_std = 0.02);
    Var forward(const Var& x) const { return conv_transpose2d(x, w, b, stride, pad); }
};

struct BatchNormLayer {
    Var gamma, beta;
    std::shared_ptr<BatchNormState> st;
    bool spatial = true;
    BatchNormLayer() = default;
    BatchNormLayer(ParamSet& ps, const std::string& name, int channels, bool spatial_);
    Var forward(const Var& x, bool training) const {
        return spatial ? batchnorm2d(x, gamma, beta, *st, training)
                       : batchnorm1d(x, gamma, beta, *st, training);
    }
};

struct LinearLayer {
    Var w, b;
    bool has_bias = true;
    LinearLayer() = default;
    LinearLayer(ParamSet& ps, const std::string& name, int in, int out, bool bias, std::mt19937& rng,
                real init_std = 0.02);
    Var forward(const Var& x) const { return has_bias ? linear(x, w, b) : linear_nobias(x, w); }
};

struct GeMLayer {
    Var p;
    GeMLayer() = default;
    GeMLayer(ParamSet& ps, const std::string& name, real init_p = 3.0);
    Var forward(const Var& x) const { return gem_pool(x, p); }
};

}  // namespace anonreid
