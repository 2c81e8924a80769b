#include "anonreid/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace anonreid {

static Var one_minus(const Var& x) { return add_scalar(scale(x, -1), 1); }

AdvLossPair adv_loss_pair(const Var& d_real_scores, const Var& d_fake_scores, bool non_saturating) {
    for (const Var* s : {&d_real_scores, &d_fake_scores})
        for (real x : (*s)->val.v)
            if (!(x > 0 && x < 1))
                throw std::invalid_argument("adv_loss_pair: scores must lie in (0,1)");
    AdvLossPair out;
    Var log_real = mean_all(log_clamped(d_real_scores));
    Var log_one_minus_fake = mean_all(log_clamped(one_minus(d_fake_scores)));
    out.discriminator_term = scale(add(log_real, log_one_minus_fake), -1);
    out.generator_term = non_saturating ? scale(mean_all(log_clamped(d_fake_scores)), -1)
                                        : log_one_minus_fake;
    return out;
}

Var l1_reconstruction(const Var& pred, const Var& target) { return l1_loss(pred, target); }

Var id_loss(const Var& logits, const std::vector<int>& labels) {
    return cross_entropy(logits, labels);
}

Var center_loss(const Var& features, const std::vector<int>& labels, const CenterState& state) {
    return center_loss_op(features, labels, state.centers);
}

void update_centers(CenterState& state, const Tensor& features, const std::vector<int>& labels) {
    const int N = features.dim(0), D = features.dim(1);
    const int C = state.centers.dim(0);
    std::vector<int> count(C, 0);
    Tensor delta({C, D});
    for (int i = 0; i < N; ++i) {
        const int y = labels[i];
        if (y < 0 || y >= C) throw std::invalid_argument("update_centers: label out of range");
        ++count[y];
        for (int d = 0; d < D; ++d) delta.at2(y, d) += state.centers.at2(y, d) - features.at2(i, d);
    }
    for (int c = 0; c < C; ++c) {
        if (count[c] == 0) continue;
        for (int d = 0; d < D; ++d)
            state.centers.at2(c, d) -= state.update_lr * delta.at2(c, d) / (1 + count[c]);
    }
}

Var wrt_loss(const Var& features, const std::vector<int>& labels) {
    return wrt_loss_op(features, labels);
}

AgwTerms agw_loss(const ReidModel& model, const Var& batch, const std::vector<int>& labels,
                  const CenterState& centers, const ReidLossConfig& cfg, bool training) {
    ReidForward f = model.forward(batch, training);
    AgwTerms t;
    t.pooled = f.pooled;
    t.id = id_loss(f.logits, labels);
    t.center = center_loss(f.pooled, labels, centers);
    t.wrt = wrt_loss(f.pooled, labels);
    t.total = add(add(t.id, scale(t.center, cfg.center_weight)), t.wrt);
    return t;
}

ReidLossOut reid_loss(const ReidModel& model, const Var& raw_batch, const Var& anon_batch,
                      const std::vector<int>& labels, const CenterState& centers,
                      const ReidLossConfig& cfg, bool training) {
    if (raw_batch->val.dim(0) != anon_batch->val.dim(0) ||
        raw_batch->val.dim(0) != static_cast<int>(labels.size()))
        throw std::invalid_argument("reid_loss: raw/anonymized/label misalignment");
    ReidLossOut out;
    out.raw = agw_loss(model, raw_batch, labels, centers, cfg, training);
    out.anon = agw_loss(model, anon_batch, labels, centers, cfg, training);
    out.total = add(out.raw.total, out.anon.total);
    return out;
}

real total_objective(const LossBundle& b) {
    for (real x : {b.adv1, b.l1_ano, b.ano_total, b.adv2, b.l1_rec, b.rec_total, b.id, b.center,
                   b.wrt, b.reid_total})
        if (std::isnan(x)) throw std::runtime_error("training divergence: NaN loss component");
    return b.ano_total + b.rec_total + b.reid_total;
}

}  // namespace anonreid
