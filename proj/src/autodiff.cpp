#include "anonreid/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace anonreid {

using MatRM = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

Var make_leaf(Tensor t, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    n->requires_grad = requires_grad;
    n->ensure_grad();
    return n;
}

Var constant(Tensor t) { return make_leaf(std::move(t), false); }

static Var make_op(Tensor val, std::vector<Var> inputs, std::function<void(Node&)> bwd) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    n->inputs = std::move(inputs);
    n->backward_fn = std::move(bwd);
    bool any = false;
    for (auto& in : n->inputs) any = any || in->requires_grad;
    n->requires_grad = any;
    return n;
}

void backward(const Var& root) {
    if (root->val.numel() != 1)
        throw std::invalid_argument("backward: root must be scalar");
    // topo order: DFS post-order, then reverse
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->inputs.size()) {
            Node* child = n->inputs[idx++].get();
            if (!seen.count(child) && child->backward_fn) {
                seen.insert(child);
                stack.emplace_back(child, 0);
            } else {
                seen.insert(child);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    for (Node* n : order) {
        n->ensure_grad();
        if (n->backward_fn) n->grad.fill(0);  // leaves accumulate across calls
    }
    root->grad.fill(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->requires_grad) n->backward_fn(*n);
    }
}

Var detach(const Var& x) { return constant(x->val); }

// ---- elementwise ----

Var add(const Var& a, const Var& b) {
    check_same_shape(a->val, b->val, "add");
    Tensor out = a->val;
    for (long i = 0; i < out.numel(); ++i) out.at(i) += b->val.at(i);
    return make_op(std::move(out), {a, b}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            auto& in = *n.inputs[k];
            if (!in.requires_grad) continue;
            in.ensure_grad();
            for (long i = 0; i < n.grad.numel(); ++i) in.grad.at(i) += n.grad.at(i);
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a->val, b->val, "sub");
    Tensor out = a->val;
    for (long i = 0; i < out.numel(); ++i) out.at(i) -= b->val.at(i);
    return make_op(std::move(out), {a, b}, [](Node& n) {
        auto& ia = *n.inputs[0];
        auto& ib = *n.inputs[1];
        if (ia.requires_grad) {
            ia.ensure_grad();
            for (long i = 0; i < n.grad.numel(); ++i) ia.grad.at(i) += n.grad.at(i);
        }
        if (ib.requires_grad) {
            ib.ensure_grad();
            for (long i = 0; i < n.grad.numel(); ++i) ib.grad.at(i) -= n.grad.at(i);
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a->val, b->val, "mul");
    Tensor out = a->val;
    for (long i = 0; i < out.numel(); ++i) out.at(i) *= b->val.at(i);
    return make_op(std::move(out), {a, b}, [](Node& n) {
        auto& ia = *n.inputs[0];
        auto& ib = *n.inputs[1];
        if (ia.requires_grad) {
            ia.ensure_grad();
            for (long i = 0; i < n.grad.numel(); ++i) ia.grad.at(i) += n.grad.at(i) * ib.val.at(i);
        }
        if (ib.requires_grad) {
            ib.ensure_grad();
            for (long i = 0; i < n.grad.numel(); ++i) ib.grad.at(i) += n.grad.at(i) * ia.val.at(i);
        }
    });
}

Var scale(const Var& a, real k) {
    Tensor out = a->val;
    for (auto& x : out.v) x *= k;
    return make_op(std::move(out), {a}, [k](Node& n) {
        auto& in = *n.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i) in.grad.at(i) += k * n.grad.at(i);
    });
}

Var add_scalar(const Var& a, real k) {
    Tensor out = a->val;
    for (auto& x : out.v) x += k;
    return make_op(std::move(out), {a}, [](Node& n) {
        auto& in = *n.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i) in.grad.at(i) += n.grad.at(i);
    });
}

Var sum_all(const Var& a) {
    Tensor out({1});
    real s = 0;
    for (real x : a->val.v) s += x;
    out.at(0) = s;
    return make_op(std::move(out), {a}, [](Node& n) {
        auto& in = *n.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        real g = n.grad.at(0);
        for (auto& x : in.grad.v) x += g;
    });
}

Var mean_all(const Var& a) { return scale(sum_all(a), real(1) / static_cast<real>(a->val.numel())); }

Var abs_op(const Var& a) {
    Tensor out = a->val;
    for (auto& x : out.v) x = std::abs(x);
    return make_op(std::move(out), {a}, [](Node& n) {
        auto& in = *n.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i) {
            real x = in.val.at(i);
            in.grad.at(i) += n.grad.at(i) * (x > 0 ? real(1) : (x < 0 ? real(-1) : real(0)));
        }
    });
}

Var log_clamped(const Var& a, real eps) {
    Tensor out = a->val;
    for (auto& x : out.v) x = std::log(std::max(x, eps));
    return make_op(std::move(out), {a}, [eps](Node& n) {
        auto& in = *n.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i)
            in.grad.at(i) += n.grad.at(i) / std::max(in.val.at(i), eps);
    });
}

Var relu(const Var& a) {
    Tensor out = a->val;
    for (auto& x : out.v) x = std::max(x, real(0));
    return make_op(std::move(out), {a}, [](Node& n) {
        auto& in = *n.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i)
            if (in.val.at(i) > 0) in.grad.at(i) += n.grad.at(i);
    });
}

Var leaky_relu(const Var& a, real slope) {
    Tensor out = a->val;
    for (auto& x : out.v) x = x > 0 ? x : slope * x;
    return make_op(std::move(out), {a}, [slope](Node& n) {
        auto& in = *n.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i)
            in.grad.at(i) += n.grad.at(i) * (in.val.at(i) > 0 ? real(1) : slope);
    });
}

Var sigmoid(const Var& a) {
    Tensor out = a->val;
    for (auto& x : out.v) x = real(1) / (real(1) + std::exp(-x));
    return make_op(std::move(out), {a}, [](Node& n) {
        auto& in = *n.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i) {
            real y = n.val.at(i);
            in.grad.at(i) += n.grad.at(i) * y * (1 - y);
        }
    });
}

Var tanh_op(const Var& a) {
    Tensor out = a->val;
    for (auto& x : out.v) x = std::tanh(x);
    return make_op(std::move(out), {a}, [](Node& n) {
        auto& in = *n.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i) {
            real y = n.val.at(i);
            in.grad.at(i) += n.grad.at(i) * (1 - y * y);
        }
    });
}

Var softplus(const Var& a) {
    Tensor out = a->val;
    for (auto& x : out.v) x = x > 30 ? x : std::log1p(std::exp(x));
    return make_op(std::move(out), {a}, [](Node& n) {
        auto& in = *n.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i) {
            real s = real(1) / (real(1) + std::exp(-in.val.at(i)));
            in.grad.at(i) += n.grad.at(i) * s;
        }
    });
}

// ---- linear algebra ----

Var matmul(const Var& a, const Var& b) {
    if (a->val.ndim() != 2 || b->val.ndim() != 2 || a->val.dim(1) != b->val.dim(0))
        throw std::invalid_argument("matmul: incompatible shapes");
    const int M = a->val.dim(0), K = a->val.dim(1), N = b->val.dim(1);
    Tensor out({M, N});
    CMapM A(a->val.v.data(), M, K), B(b->val.v.data(), K, N);
    MapM(out.v.data(), M, N) = A * B;
    return make_op(std::move(out), {a, b}, [M, K, N](Node& n) {
        auto& ia = *n.inputs[0];
        auto& ib = *n.inputs[1];
        CMapM G(n.grad.v.data(), M, N);
        if (ia.requires_grad) {
            ia.ensure_grad();
            CMapM B(ib.val.v.data(), K, N);
            MapM(ia.grad.v.data(), M, K) += G * B.transpose();
        }
        if (ib.requires_grad) {
            ib.ensure_grad();
            CMapM A(ia.val.v.data(), M, K);
            MapM(ib.grad.v.data(), K, N) += A.transpose() * G;
        }
    });
}

Var linear_nobias(const Var& x, const Var& w) { return matmul(x, w); }

Var linear(const Var& x, const Var& w, const Var& b) {
    Var y = matmul(x, w);
    const int N = y->val.dim(0), O = y->val.dim(1);
    if (b->val.numel() != O) throw std::invalid_argument("linear: bias size mismatch");
    Tensor out = y->val;
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < O; ++j) out.at2(i, j) += b->val.at(j);
    return make_op(std::move(out), {y, b}, [N, O](Node& n) {
        auto& iy = *n.inputs[0];
        auto& ib = *n.inputs[1];
        if (iy.requires_grad) {
            iy.ensure_grad();
            for (long i = 0; i < n.grad.numel(); ++i) iy.grad.at(i) += n.grad.at(i);
        }
        if (ib.requires_grad) {
            ib.ensure_grad();
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < O; ++j) ib.grad.at(j) += n.grad.at2(i, j);
        }
    });
}

// ---- conv plumbing ----

static int conv_out(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

// col: (C*k*k) x (GH*GW), row-major
static void im2col(const real* img, int C, int H, int W, int k, int s, int p, real* col) {
    const int GH = conv_out(H, k, s, p), GW = conv_out(W, k, s, p);
    const int ncols = GH * GW;
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                real* row = col + static_cast<size_t>((c * k + ki) * k + kj) * ncols;
                for (int gh = 0; gh < GH; ++gh) {
                    const int ih = gh * s - p + ki;
                    for (int gw = 0; gw < GW; ++gw) {
                        const int iw = gw * s - p + kj;
                        row[gh * GW + gw] = (ih >= 0 && ih < H && iw >= 0 && iw < W)
                                                ? img[(c * H + ih) * W + iw]
                                                : real(0);
                    }
                }
            }
        }
    }
}

static void col2im_acc(const real* col, int C, int H, int W, int k, int s, int p, real* img) {
    const int GH = conv_out(H, k, s, p), GW = conv_out(W, k, s, p);
    const int ncols = GH * GW;
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const real* row = col + static_cast<size_t>((c * k + ki) * k + kj) * ncols;
                for (int gh = 0; gh < GH; ++gh) {
                    const int ih = gh * s - p + ki;
                    if (ih < 0 || ih >= H) continue;
                    for (int gw = 0; gw < GW; ++gw) {
                        const int iw = gw * s - p + kj;
                        if (iw < 0 || iw >= W) continue;
                        img[(c * H + ih) * W + iw] += row[gh * GW + gw];
                    }
                }
            }
        }
    }
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    if (x->val.ndim() != 4 || w->val.ndim() != 4)
        throw std::invalid_argument("conv2d: expects NCHW input and OIHW weight");
    const int N = x->val.dim(0), Cin = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    const int Cout = w->val.dim(0), k = w->val.dim(2);
    if (w->val.dim(1) != Cin || w->val.dim(3) != k)
        throw std::invalid_argument("conv2d: weight/input channel mismatch");
    const int OH = conv_out(H, k, stride, pad), OW = conv_out(W, k, stride, pad);
    if (OH < 1 || OW < 1) throw std::invalid_argument("conv2d: kernel larger than padded input");
    Tensor out({N, Cout, OH, OW});
    const int ck2 = Cin * k * k, ncols = OH * OW;
    std::vector<real> col(static_cast<size_t>(ck2) * ncols);
    CMapM Wm(w->val.v.data(), Cout, ck2);
    for (int n = 0; n < N; ++n) {
        im2col(x->val.v.data() + static_cast<size_t>(n) * Cin * H * W, Cin, H, W, k, stride, pad,
               col.data());
        CMapM Cm(col.data(), ck2, ncols);
        MapM Om(out.v.data() + static_cast<size_t>(n) * Cout * ncols, Cout, ncols);
        Om = Wm * Cm;
        for (int c = 0; c < Cout; ++c) Om.row(c).array() += b->val.at(c);
    }
    return make_op(std::move(out), {x, w, b},
                   [N, Cin, H, W, Cout, k, stride, pad, ck2, ncols](Node& n) {
                       auto& ix = *n.inputs[0];
                       auto& iw = *n.inputs[1];
                       auto& ib = *n.inputs[2];
                       std::vector<real> col(static_cast<size_t>(ck2) * ncols);
                       std::vector<real> dcol(static_cast<size_t>(ck2) * ncols);
                       ix.ensure_grad();
                       iw.ensure_grad();
                       ib.ensure_grad();
                       CMapM Wm(iw.val.v.data(), Cout, ck2);
                       MapM dWm(iw.grad.v.data(), Cout, ck2);
                       for (int s = 0; s < N; ++s) {
                           CMapM dOm(n.grad.v.data() + static_cast<size_t>(s) * Cout * ncols, Cout,
                                     ncols);
                           if (iw.requires_grad || ib.requires_grad) {
                               im2col(ix.val.v.data() + static_cast<size_t>(s) * Cin * H * W, Cin, H,
                                      W, k, stride, pad, col.data());
                               CMapM Cm(col.data(), ck2, ncols);
                               if (iw.requires_grad) dWm += dOm * Cm.transpose();
                               if (ib.requires_grad)
                                   for (int c = 0; c < Cout; ++c) ib.grad.at(c) += dOm.row(c).sum();
                           }
                           if (ix.requires_grad) {
                               MapM dCm(dcol.data(), ck2, ncols);
                               dCm = Wm.transpose() * dOm;
                               col2im_acc(dcol.data(), Cin, H, W, k, stride, pad,
                                          ix.grad.v.data() + static_cast<size_t>(s) * Cin * H * W);
                           }
                       }
                   });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    // weight layout: (Cin, Cout, k, k)
    const int N = x->val.dim(0), Cin = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    const int Cout = w->val.dim(1), k = w->val.dim(2);
    if (w->val.dim(0) != Cin) throw std::invalid_argument("conv_transpose2d: channel mismatch");
    const int OH = (H - 1) * stride - 2 * pad + k, OW = (W - 1) * stride - 2 * pad + k;
    if (OH < 1 || OW < 1) throw std::invalid_argument("conv_transpose2d: degenerate output size");
    Tensor out({N, Cout, OH, OW});
    const int ck2 = Cout * k * k, ncols = H * W;
    std::vector<real> col(static_cast<size_t>(ck2) * ncols);
    CMapM Wm(w->val.v.data(), Cin, ck2);
    for (int n = 0; n < N; ++n) {
        CMapM Xm(x->val.v.data() + static_cast<size_t>(n) * Cin * ncols, Cin, ncols);
        MapM Cm(col.data(), ck2, ncols);
        Cm = Wm.transpose() * Xm;
        real* outp = out.v.data() + static_cast<size_t>(n) * Cout * OH * OW;
        col2im_acc(col.data(), Cout, OH, OW, k, stride, pad, outp);
        for (int c = 0; c < Cout; ++c)
            for (int i = 0; i < OH * OW; ++i) outp[c * OH * OW + i] += b->val.at(c);
    }
    return make_op(
        std::move(out), {x, w, b}, [N, Cin, H, W, Cout, k, stride, pad, ck2, ncols, OH, OW](Node& n) {
            auto& ix = *n.inputs[0];
            auto& iw = *n.inputs[1];
            auto& ib = *n.inputs[2];
            ix.ensure_grad();
            iw.ensure_grad();
            ib.ensure_grad();
            std::vector<real> dcol(static_cast<size_t>(ck2) * ncols);
            CMapM Wm(iw.val.v.data(), Cin, ck2);
            MapM dWm(iw.grad.v.data(), Cin, ck2);
            for (int s = 0; s < N; ++s) {
                const real* dOut = n.grad.v.data() + static_cast<size_t>(s) * Cout * OH * OW;
                im2col(dOut, Cout, OH, OW, k, stride, pad, dcol.data());
                CMapM dCm(dcol.data(), ck2, ncols);
                if (ix.requires_grad) {
                    MapM dXm(ix.grad.v.data() + static_cast<size_t>(s) * Cin * ncols, Cin, ncols);
                    dXm += Wm * dCm;
                }
                if (iw.requires_grad) {
                    CMapM Xm(ix.val.v.data() + static_cast<size_t>(s) * Cin * ncols, Cin, ncols);
                    dWm += Xm * dCm.transpose();
                }
                if (ib.requires_grad)
                    for (int c = 0; c < Cout; ++c)
                        for (int i = 0; i < OH * OW; ++i) ib.grad.at(c) += dOut[c * OH * OW + i];
            }
        });
}

Var concat_channels(const Var& a, const Var& b) {
    if (a->val.ndim() != 4 || b->val.ndim() != 4 || a->val.dim(0) != b->val.dim(0) ||
        a->val.dim(2) != b->val.dim(2) || a->val.dim(3) != b->val.dim(3))
        throw std::invalid_argument("concat_channels: incompatible shapes");
    const int N = a->val.dim(0), Ca = a->val.dim(1), Cb = b->val.dim(1);
    const int H = a->val.dim(2), W = a->val.dim(3);
    const long plane = static_cast<long>(H) * W;
    Tensor out({N, Ca + Cb, H, W});
    for (int n = 0; n < N; ++n) {
        std::copy_n(a->val.v.data() + static_cast<size_t>(n) * Ca * plane, Ca * plane,
                    out.v.data() + static_cast<size_t>(n) * (Ca + Cb) * plane);
        std::copy_n(b->val.v.data() + static_cast<size_t>(n) * Cb * plane, Cb * plane,
                    out.v.data() + static_cast<size_t>(n) * (Ca + Cb) * plane + Ca * plane);
    }
    return make_op(std::move(out), {a, b}, [N, Ca, Cb, plane](Node& n) {
        auto& ia = *n.inputs[0];
        auto& ib = *n.inputs[1];
        if (ia.requires_grad) {
            ia.ensure_grad();
            for (int s = 0; s < N; ++s)
                for (long i = 0; i < Ca * plane; ++i)
                    ia.grad.v[static_cast<size_t>(s) * Ca * plane + i] +=
                        n.grad.v[static_cast<size_t>(s) * (Ca + Cb) * plane + i];
        }
        if (ib.requires_grad) {
            ib.ensure_grad();
            for (int s = 0; s < N; ++s)
                for (long i = 0; i < Cb * plane; ++i)
                    ib.grad.v[static_cast<size_t>(s) * Cb * plane + i] +=
                        n.grad.v[static_cast<size_t>(s) * (Ca + Cb) * plane + Ca * plane + i];
        }
    });
}

// ---- batch norm ----

static Var batchnorm_impl(const Var& x, const Var& gamma, const Var& beta, BatchNormState& st,
                          bool training, bool spatial) {
    const int C = spatial ? x->val.dim(1) : x->val.dim(1);
    if (!st.initialized) {
        st.running_mean = Tensor({C}, 0);
        st.running_var = Tensor({C}, 1);
        st.initialized = true;
    }
    const int N = x->val.dim(0);
    const int H = spatial ? x->val.dim(2) : 1, W = spatial ? x->val.dim(3) : 1;
    const long R = static_cast<long>(N) * H * W;  // reduction size per channel
    auto idx = [&](int n, int c, long hw) {
        return spatial ? (static_cast<size_t>(n) * C + c) * (static_cast<long>(H) * W) + hw
                       : static_cast<size_t>(n) * C + c;
    };
    std::vector<real> mean(C), var(C);
    if (training) {
        for (int c = 0; c < C; ++c) {
            real m = 0;
            for (int n = 0; n < N; ++n)
                for (long hw = 0; hw < static_cast<long>(H) * W; ++hw) m += x->val.v[idx(n, c, hw)];
            m /= static_cast<real>(R);
            real v = 0;
            for (int n = 0; n < N; ++n)
                for (long hw = 0; hw < static_cast<long>(H) * W; ++hw) {
                    real d = x->val.v[idx(n, c, hw)] - m;
                    v += d * d;
                }
            v /= static_cast<real>(R);
            mean[c] = m;
            var[c] = v;
            st.running_mean.at(c) = (1 - st.momentum) * st.running_mean.at(c) + st.momentum * m;
            st.running_var.at(c) = (1 - st.momentum) * st.running_var.at(c) + st.momentum * v;
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[c] = st.running_mean.at(c);
            var[c] = st.running_var.at(c);
        }
    }
    Tensor out(x->val.shape);
    auto xhat = std::make_shared<Tensor>(x->val.shape);
    const real eps = st.eps;
    for (int c = 0; c < C; ++c) {
        const real inv = real(1) / std::sqrt(var[c] + eps);
        const real g = gamma->val.at(c), b = beta->val.at(c);
        for (int n = 0; n < N; ++n)
            for (long hw = 0; hw < static_cast<long>(H) * W; ++hw) {
                size_t i = idx(n, c, hw);
                real xh = (x->val.v[i] - mean[c]) * inv;
                xhat->v[i] = xh;
                out.v[i] = g * xh + b;
            }
    }
    auto varv = std::make_shared<std::vector<real>>(std::move(var));
    return make_op(std::move(out), {x, gamma, beta},
                   [C, N, H, W, R, eps, training, xhat, varv, spatial](Node& nd) {
                       auto& ix = *nd.inputs[0];
                       auto& ig = *nd.inputs[1];
                       auto& ib = *nd.inputs[2];
                       ix.ensure_grad();
                       ig.ensure_grad();
                       ib.ensure_grad();
                       const long HW = static_cast<long>(H) * W;
                       auto idx = [&](int n, int c, long hw) -> size_t {
                           return spatial ? (static_cast<size_t>(n) * C + c) * HW + hw
                                          : static_cast<size_t>(n) * C + c;
                       };
                       for (int c = 0; c < C; ++c) {
                           const real inv = real(1) / std::sqrt((*varv)[c] + eps);
                           const real g = ig.val.at(c);
                           real sum_dy = 0, sum_dy_xh = 0;
                           for (int n = 0; n < N; ++n)
                               for (long hw = 0; hw < HW; ++hw) {
                                   size_t i = idx(n, c, hw);
                                   sum_dy += nd.grad.v[i];
                                   sum_dy_xh += nd.grad.v[i] * xhat->v[i];
                               }
                           if (ig.requires_grad) ig.grad.at(c) += sum_dy_xh;
                           if (ib.requires_grad) ib.grad.at(c) += sum_dy;
                           if (!ix.requires_grad) continue;
                           if (training) {
                               const real mdy = sum_dy / static_cast<real>(R);
                               const real mdyxh = sum_dy_xh / static_cast<real>(R);
                               for (int n = 0; n < N; ++n)
                                   for (long hw = 0; hw < HW; ++hw) {
                                       size_t i = idx(n, c, hw);
                                       ix.grad.v[i] +=
                                           g * inv * (nd.grad.v[i] - mdy - xhat->v[i] * mdyxh);
                                   }
                           } else {
                               for (int n = 0; n < N; ++n)
                                   for (long hw = 0; hw < HW; ++hw) {
                                       size_t i = idx(n, c, hw);
                                       ix.grad.v[i] += g * inv * nd.grad.v[i];
                                   }
                           }
                       }
                   });
}

Var batchnorm2d(const Var& x, const Var& gamma, const Var& beta, BatchNormState& st, bool training) {
    if (x->val.ndim() != 4) throw std::invalid_argument("batchnorm2d: expects NCHW");
    return batchnorm_impl(x, gamma, beta, st, training, true);
}

Var batchnorm1d(const Var& x, const Var& gamma, const Var& beta, BatchNormState& st, bool training) {
    if (x->val.ndim() != 2) throw std::invalid_argument("batchnorm1d: expects (N,C)");
    return batchnorm_impl(x, gamma, beta, st, training, false);
}

// ---- GeM pooling ----

Var gem_pool(const Var& x, const Var& p, real eps) {
    if (x->val.ndim() != 4) throw std::invalid_argument("gem_pool: expects NCHW");
    const int N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    const long HW = static_cast<long>(H) * W;
    const real pe = p->val.at(0);
    Tensor out({N, C});
    auto mpow = std::make_shared<Tensor>(std::vector<int>{N, C});  // mean of clamped^p
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            real m = 0;
            for (long i = 0; i < HW; ++i)
                m += std::pow(std::max(x->val.at4(n, c, static_cast<int>(i / W), static_cast<int>(i % W)), eps), pe);
            m /= static_cast<real>(HW);
            mpow->at2(n, c) = m;
            out.at2(n, c) = std::pow(m, real(1) / pe);
        }
    return make_op(std::move(out), {x, p}, [N, C, H, W, HW, pe, eps, mpow](Node& nd) {
        auto& ix = *nd.inputs[0];
        auto& ip = *nd.inputs[1];
        ix.ensure_grad();
        ip.ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const real m = mpow->at2(n, c);
                const real y = nd.val.at2(n, c);
                const real g = nd.grad.at2(n, c);
                if (g == 0) continue;
                const real dm_coef = std::pow(m, real(1) / pe - 1);  // dy/dm * p
                real mean_xp_logx = 0;
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w) {
                        real xc = std::max(ix.val.at4(n, c, h, w), eps);
                        real xp1 = std::pow(xc, pe - 1);
                        if (ix.requires_grad && ix.val.at4(n, c, h, w) > eps)
                            ix.grad.at4(n, c, h, w) += g * dm_coef * xp1 / static_cast<real>(HW);
                        mean_xp_logx += xp1 * xc * std::log(xc);
                    }
                mean_xp_logx /= static_cast<real>(HW);
                if (ip.requires_grad) {
                    // y = m^(1/p): dy/dp = y*(-ln m /p^2 + (dm/dp)/(p m))
                    real dy_dp = y * (-std::log(m) / (pe * pe) + mean_xp_logx / (pe * m));
                    ip.grad.at(0) += g * dy_dp;
                }
            }
    });
}

// ---- losses with dedicated backward ----

Var cross_entropy(const Var& logits, const std::vector<int>& labels) {
    if (logits->val.ndim() != 2) throw std::invalid_argument("cross_entropy: logits must be (N,C)");
    const int N = logits->val.dim(0), C = logits->val.dim(1);
    if (static_cast<int>(labels.size()) != N)
        throw std::invalid_argument("cross_entropy: label count mismatch");
    for (int y : labels)
        if (y < 0 || y >= C) throw std::invalid_argument("cross_entropy: label out of range");
    auto probs = std::make_shared<Tensor>(std::vector<int>{N, C});
    real loss = 0;
    for (int i = 0; i < N; ++i) {
        real mx = logits->val.at2(i, 0);
        for (int c = 1; c < C; ++c) mx = std::max(mx, logits->val.at2(i, c));
        real z = 0;
        for (int c = 0; c < C; ++c) z += std::exp(logits->val.at2(i, c) - mx);
        for (int c = 0; c < C; ++c) probs->at2(i, c) = std::exp(logits->val.at2(i, c) - mx) / z;
        loss -= std::log(std::max(probs->at2(i, labels[i]), real(1e-300)));
    }
    Tensor out({1});
    out.at(0) = loss / N;
    auto lab = std::make_shared<std::vector<int>>(labels);
    return make_op(std::move(out), {logits}, [N, C, probs, lab](Node& nd) {
        auto& il = *nd.inputs[0];
        if (!il.requires_grad) return;
        il.ensure_grad();
        const real g = nd.grad.at(0) / N;
        for (int i = 0; i < N; ++i)
            for (int c = 0; c < C; ++c)
                il.grad.at2(i, c) += g * (probs->at2(i, c) - (c == (*lab)[i] ? 1 : 0));
    });
}

Var center_loss_op(const Var& features, const std::vector<int>& labels, const Tensor& centers) {
    const int N = features->val.dim(0), D = features->val.dim(1);
    if (centers.ndim() != 2 || centers.dim(1) != D)
        throw std::invalid_argument("center_loss: center dim mismatch");
    for (int y : labels)
        if (y < 0 || y >= centers.dim(0))
            throw std::invalid_argument("center_loss: missing center for label");
    real loss = 0;
    for (int i = 0; i < N; ++i)
        for (int d = 0; d < D; ++d) {
            real diff = features->val.at2(i, d) - centers.at2(labels[i], d);
            loss += diff * diff;
        }
    Tensor out({1});
    out.at(0) = real(0.5) * loss / N;
    auto lab = std::make_shared<std::vector<int>>(labels);
    auto cen = std::make_shared<Tensor>(centers);
    return make_op(std::move(out), {features}, [N, D, lab, cen](Node& nd) {
        auto& f = *nd.inputs[0];
        if (!f.requires_grad) return;
        f.ensure_grad();
        const real g = nd.grad.at(0) / N;
        for (int i = 0; i < N; ++i)
            for (int d = 0; d < D; ++d)
                f.grad.at2(i, d) += g * (f.val.at2(i, d) - cen->at2((*lab)[i], d));
    });
}

Var wrt_loss_op(const Var& features, const std::vector<int>& labels) {
    const int N = features->val.dim(0), D = features->val.dim(1);
    if (static_cast<int>(labels.size()) != N)
        throw std::invalid_argument("wrt_loss: label count mismatch");
    // PK precondition: >= 2 identities with >= 2 samples each
    {
        std::vector<std::pair<int, int>> counts;
        for (int y : labels) {
            bool found = false;
            for (auto& [id, c] : counts)
                if (id == y) {
                    ++c;
                    found = true;
                }
            if (!found) counts.emplace_back(y, 1);
        }
        int multi = 0;
        for (auto& [id, c] : counts)
            if (c >= 2) ++multi;
        if (counts.size() < 2 || multi < 2)
            throw std::invalid_argument("wrt_loss: batch violates PK structure");
    }
    const real deps = 1e-16;
    auto dist = std::make_shared<Tensor>(std::vector<int>{N, N});
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            real sq = 0;
            for (int d = 0; d < D; ++d) {
                real diff = features->val.at2(i, d) - features->val.at2(j, d);
                sq += diff * diff;
            }
            dist->at2(i, j) = std::sqrt(sq + deps);
        }
    // per anchor: softmax weights over positives / negated negatives
    auto alpha = std::make_shared<Tensor>(std::vector<int>{N, N});  // positives
    auto beta = std::make_shared<Tensor>(std::vector<int>{N, N});   // negatives
    auto sv = std::make_shared<std::vector<real>>(N);               // hinge argument per anchor
    real loss = 0;
    for (int i = 0; i < N; ++i) {
        real pmax = -1e300, nmax = -1e300;
        for (int j = 0; j < N; ++j) {
            if (j == i) continue;
            if (labels[j] == labels[i]) pmax = std::max(pmax, dist->at2(i, j));
            else nmax = std::max(nmax, -dist->at2(i, j));
        }
        real pz = 0, nz = 0;
        for (int j = 0; j < N; ++j) {
            if (j == i) continue;
            if (labels[j] == labels[i]) pz += std::exp(dist->at2(i, j) - pmax);
            else nz += std::exp(-dist->at2(i, j) - nmax);
        }
        real sp = 0, sn = 0;
        for (int j = 0; j < N; ++j) {
            if (j == i) continue;
            if (labels[j] == labels[i]) {
                real a = std::exp(dist->at2(i, j) - pmax) / pz;
                alpha->at2(i, j) = a;
                sp += a * dist->at2(i, j);
            } else {
                real b = std::exp(-dist->at2(i, j) - nmax) / nz;
                beta->at2(i, j) = b;
                sn += b * dist->at2(i, j);
            }
        }
        real s = sp - sn;
        (*sv)[i] = s;
        loss += s > 30 ? s : std::log1p(std::exp(s));
    }
    Tensor out({1});
    out.at(0) = loss / N;
    auto lab = std::make_shared<std::vector<int>>(labels);
    return make_op(std::move(out), {features}, [N, D, dist, alpha, beta, sv, lab](Node& nd) {
        auto& f = *nd.inputs[0];
        if (!f.requires_grad) return;
        f.ensure_grad();
        const real g0 = nd.grad.at(0) / N;
        for (int i = 0; i < N; ++i) {
            const real gs = g0 / (real(1) + std::exp(-(*sv)[i]));  // softplus'
            real Sp = 0, Sn = 0;
            for (int j = 0; j < N; ++j) {
                if (j == i) continue;
                if ((*lab)[j] == (*lab)[i]) Sp += alpha->at2(i, j) * dist->at2(i, j);
                else Sn += beta->at2(i, j) * dist->at2(i, j);
            }
            for (int j = 0; j < N; ++j) {
                if (j == i) continue;
                const real dij = dist->at2(i, j);
                real dd;  // ds_i / d d_ij
                if ((*lab)[j] == (*lab)[i]) {
                    dd = alpha->at2(i, j) * (1 + dij - Sp);
                } else {
                    dd = -beta->at2(i, j) * (1 - dij + Sn);
                }
                const real coef = gs * dd / dij;
                for (int d = 0; d < D; ++d) {
                    const real diff = f.val.at2(i, d) - f.val.at2(j, d);
                    f.grad.at2(i, d) += coef * diff;
                    f.grad.at2(j, d) -= coef * diff;
                }
            }
        }
    });
}

Var l1_loss(const Var& pred, const Var& target) {
    check_same_shape(pred->val, target->val, "l1_loss");
    return mean_all(abs_op(sub(pred, target)));
}

}  // namespace anonreid
