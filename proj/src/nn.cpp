#include "anonreid/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace anonreid {

std::map<std::string, Tensor> ParamSet::state() const {
    std::map<std::string, Tensor> st;
    for (auto& [n, p] : params) st[n] = p->val;
    for (auto& [n, b] : buffers) st[n] = *b;
    return st;
}

void ParamSet::load_state(const std::map<std::string, Tensor>& st) {
    for (auto& [n, p] : params) {
        auto it = st.find(n);
        if (it == st.end()) throw std::runtime_error("load_state: missing parameter " + n);
        if (it->second.shape != p->val.shape)
            throw std::runtime_error("load_state: shape mismatch for " + n);
        p->val = it->second;
    }
    for (auto& [n, b] : buffers) {
        auto it = st.find(n);
        if (it == st.end()) throw std::runtime_error("load_state: missing buffer " + n);
        *b = it->second;
    }
}

long ParamSet::param_count() const {
    long n = 0;
    for (auto& [name, p] : params) n += p->val.numel();
    return n;
}

real ParamSet::checksum() const {
    real s = 0;
    long k = 1;
    for (auto& [name, p] : params)
        for (real x : p->val.v) s += x * std::sin(static_cast<real>(k++));
    return s;
}

void Adam::step(real lr) {
    if (m_.empty()) {
        for (auto& [n, p] : ps_.params) {
            m_.emplace_back(p->val.shape);
            v_.emplace_back(p->val.shape);
        }
    }
    ++t_;
    const real bc1 = 1 - std::pow(cfg_.beta1, static_cast<real>(t_));
    const real bc2 = 1 - std::pow(cfg_.beta2, static_cast<real>(t_));
    for (size_t i = 0; i < ps_.params.size(); ++i) {
        auto& p = ps_.params[i].second;
        p->ensure_grad();
        for (long j = 0; j < p->val.numel(); ++j) {
            const real g = p->grad.at(j);
            m_[i].at(j) = cfg_.beta1 * m_[i].at(j) + (1 - cfg_.beta1) * g;
            v_[i].at(j) = cfg_.beta2 * v_[i].at(j) + (1 - cfg_.beta2) * g * g;
            const real mhat = m_[i].at(j) / bc1;
            const real vhat = v_[i].at(j) / bc2;
            p->val.at(j) -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

Conv2dLayer::Conv2dLayer(ParamSet& ps, const std::string& name, int cin, int cout, int k,
                         int stride_, int pad_, std::mt19937& rng, real init_std)
    : stride(stride_), pad(pad_) {
    Tensor wt({cout, cin, k, k});
    wt.fill_gaussian(rng, 0, init_std);
    w = ps.add(name + ".w", std::move(wt));
    b = ps.add(name + ".b", Tensor({cout}, 0));
}

ConvT2dLayer::ConvT2dLayer(ParamSet& ps, const std::string& name, int cin, int cout, int k,
                           int stride_, int pad_, std::mt19937& rng, real init_std)
    : stride(stride_), pad(pad_) {
    Tensor wt({cin, cout, k, k});
    wt.fill_gaussian(rng, 0, init_std);
    w = ps.add(name + ".w", std::move(wt));
    b = ps.add(name + ".b", Tensor({cout}, 0));
}

BatchNormLayer::BatchNormLayer(ParamSet& ps, const std::string& name, int channels, bool spatial_)
    : spatial(spatial_) {
    gamma = ps.add(name + ".gamma", Tensor({channels}, 1));
    beta = ps.add(name + ".beta", Tensor({channels}, 0));
    st = std::make_shared<BatchNormState>();
    st->running_mean = Tensor({channels}, 0);
    st->running_var = Tensor({channels}, 1);
    st->initialized = true;
    ps.add_buffer(name + ".running_mean", &st->running_mean);
    ps.add_buffer(name + ".running_var", &st->running_var);
}

LinearLayer::LinearLayer(ParamSet& ps, const std::string& name, int in, int out, bool bias,
                         std::mt19937& rng, real init_std)
    : has_bias(bias) {
    Tensor wt({in, out});
    wt.fill_gaussian(rng, 0, init_std);
    w = ps.add(name + ".w", std::move(wt));
    if (bias) b = ps.add(name + ".b", Tensor({out}, 0));
}

GeMLayer::GeMLayer(ParamSet& ps, const std::string& name, real init_p) {
    p = ps.add(name + ".p", Tensor({1}, init_p));
}

}  // namespace anonreid
