#pragma once

#include <vector>

#include "anonreid/networks.hpp"

namespace anonreid {

struct LossBundle {
    real adv1 = 0, l1_ano = 0, ano_total = 0;
    real adv2 = 0, l1_rec = 0, rec_total = 0;
    real id = 0, center = 0, wrt = 0, reid_total = 0;
    real grand_total = 0;
    real lambda_l1 = 100;
};

struct AdvLossPair {
    Var generator_term;
    Var discriminator_term;
};

// Minimax / non-saturating adversarial terms from score maps in (0,1),
// averaged over batch and patch grid.
AdvLossPair adv_loss_pair(const Var& d_real_scores, const Var& d_fake_scores,
                          bool non_saturating = true);

Var l1_reconstruction(const Var& pred, const Var& target);

// mean cross-entropy, no label smoothing
Var id_loss(const Var& logits, const std::vector<int>& labels);

struct CenterState {
    Tensor centers;  // (num_classes, dim)
    real update_lr = 0.5;
    CenterState() = default;
    CenterState(int num_classes, int dim) : centers({num_classes, dim}) {}
};

Var center_loss(const Var& features, const std::vector<int>& labels, const CenterState& state);
// moving-average center update (applied between batches, outside the graph)
void update_centers(CenterState& state, const Tensor& features, const std::vector<int>& labels);

Var wrt_loss(const Var& features, const std::vector<int>& labels);

struct AgwTerms {
    Var id, center, wrt, total;
    Var pooled;  // pooled features, exposed for the center update rule
};

struct ReidLossConfig {
    real center_weight = 5e-4;
};

AgwTerms agw_loss(const ReidModel& model, const Var& batch, const std::vector<int>& labels,
                  const CenterState& centers, const ReidLossConfig& cfg, bool training);

// L_AGW(raw) + L_AGW(anonymized); anonymized may carry gradients into G_X
struct ReidLossOut {
    Var total;
    AgwTerms raw, anon;
};
ReidLossOut reid_loss(const ReidModel& model, const Var& raw_batch, const Var& anon_batch,
                      const std::vector<int>& labels, const CenterState& centers,
                      const ReidLossConfig& cfg, bool training);

// recomputes and validates the bundle's arithmetic identities
real total_objective(const LossBundle& bundle);

}  // namespace anonreid
