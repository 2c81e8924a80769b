#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "anonreid/tensor.hpp"

namespace anonreid {

// Reverse-mode autodiff over Tensor. A Node is created per forward op; the
// backward closure accumulates into the gradients of its inputs. Graphs are
// rebuilt every step; parameters are long-lived leaf nodes.
struct Node {
    Tensor val;
    Tensor grad;
    bool requires_grad = true;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;  // reads this->grad

    void ensure_grad() {
        if (grad.v.size() != val.v.size()) {
            grad = Tensor(val.shape);
        }
    }
    void zero_grad() {
        ensure_grad();
        grad.fill(0);
    }
};

using Var = std::shared_ptr<Node>;

Var make_leaf(Tensor t, bool requires_grad = true);
Var constant(Tensor t);

// Runs backprop from a scalar root (seed gradient 1).
void backward(const Var& root);

// Cuts the graph: value copied, no gradient flows upstream.
Var detach(const Var& x);

// ---- elementwise / reductions ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, real k);
Var add_scalar(const Var& a, real k);
Var mean_all(const Var& a);
Var sum_all(const Var& a);
Var abs_op(const Var& a);
// log(max(x, eps)); keeps adversarial terms finite when a sigmoid saturates
Var log_clamped(const Var& a, real eps = 1e-12);
Var relu(const Var& a);
Var leaky_relu(const Var& a, real slope = 0.2);
Var sigmoid(const Var& a);
Var tanh_op(const Var& a);
Var softplus(const Var& a);

// ---- linear algebra ----
// a: (M,K), b: (K,N) -> (M,N)
Var matmul(const Var& a, const Var& b);
// x: (N,C), w: (C,O), optional bias (O)
Var linear(const Var& x, const Var& w, const Var& b);
Var linear_nobias(const Var& x, const Var& w);

// ---- conv / structure (NCHW) ----
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var concat_channels(const Var& a, const Var& b);

// Batch norm. 2d normalizes per channel over (N,H,W); 1d per feature over N.
// In training mode batch statistics are used and running stats updated in place.
struct BatchNormState {
    Tensor running_mean, running_var;
    real momentum = 0.1;
    real eps = 1e-5;
    bool initialized = false;
};
Var batchnorm2d(const Var& x, const Var& gamma, const Var& beta, BatchNormState& st, bool training);
Var batchnorm1d(const Var& x, const Var& gamma, const Var& beta, BatchNormState& st, bool training);

// Generalized-mean pooling over spatial dims: ((1/HW) sum max(x,eps)^p)^(1/p).
// x: (N,C,H,W), p: scalar learnable -> (N,C)
Var gem_pool(const Var& x, const Var& p, real eps = 1e-6);

// mean cross entropy over batch; logits (N,C)
Var cross_entropy(const Var& logits, const std::vector<int>& labels);

// 0.5 * mean_i ||f_i - centers[label_i]||^2 ; gradient w.r.t. features only
Var center_loss_op(const Var& features, const std::vector<int>& labels, const Tensor& centers);

// Weighted regularization triplet loss (softmax-weighted positives/negatives,
// softplus hinge), batch mean over anchors.
Var wrt_loss_op(const Var& features, const std::vector<int>& labels);

// mean absolute difference over all elements
Var l1_loss(const Var& pred, const Var& target);

}  // namespace anonreid
