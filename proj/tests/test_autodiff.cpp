#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "anonreid/autodiff.hpp"

using namespace anonreid;

namespace {

Tensor tensor_of(std::vector<int> shape, std::vector<real> vals) {
    Tensor t(std::move(shape));
    t.v = std::move(vals);
    return t;
}

Tensor random_tensor(const std::vector<int>& shape, uint32_t seed, real lo = -1, real hi = 1) {
    Tensor t(shape);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<real> u(lo, hi);
    for (auto& x : t.v) x = u(rng);
    return t;
}

// Central finite differences against reverse-mode gradients for a scalar-
// valued function of the given leaves. Relative error over the whole
// gradient vector.
real grad_check(std::vector<Var> leaves, const std::function<Var(const std::vector<Var>&)>& f,
                real h = 1e-5) {
    for (auto& l : leaves) l->zero_grad();
    Var root = f(leaves);
    REQUIRE(root->val.numel() == 1);
    backward(root);

    real num_sq = 0, den_sq = 0;
    for (auto& l : leaves) {
        for (size_t i = 0; i < l->val.v.size(); ++i) {
            const real keep = l->val.v[i];
            l->val.v[i] = keep + h;
            const real up = f(leaves)->val.v[0];
            l->val.v[i] = keep - h;
            const real dn = f(leaves)->val.v[0];
            l->val.v[i] = keep;
            const real fd = (up - dn) / (2 * h);
            const real an = l->grad.v[i];
            num_sq += (fd - an) * (fd - an);
            den_sq += std::max(fd * fd + an * an, real(1e-12));
        }
    }
    return std::sqrt(num_sq / den_sq);
}

}  // namespace

TEST_CASE("elementwise op gradients pass finite differences") {
    auto a = make_leaf(random_tensor({3, 4}, 1));
    auto b = make_leaf(random_tensor({3, 4}, 2));
    using F = std::function<Var(const std::vector<Var>&)>;
    std::vector<std::pair<const char*, F>> cases = {
        {"add", [](const std::vector<Var>& v) { return mean_all(mul(add(v[0], v[1]), v[0])); }},
        {"sub", [](const std::vector<Var>& v) { return mean_all(mul(sub(v[0], v[1]), v[1])); }},
        {"mul", [](const std::vector<Var>& v) { return sum_all(mul(v[0], v[1])); }},
        {"scale", [](const std::vector<Var>& v) { return mean_all(scale(v[0], -2.5)); }},
        {"add_scalar", [](const std::vector<Var>& v) { return mean_all(mul(add_scalar(v[0], 3), v[1])); }},
        {"sigmoid", [](const std::vector<Var>& v) { return mean_all(sigmoid(v[0])); }},
        {"tanh", [](const std::vector<Var>& v) { return mean_all(tanh_op(v[0])); }},
        {"softplus", [](const std::vector<Var>& v) { return mean_all(softplus(v[0])); }},
        {"leaky_relu", [](const std::vector<Var>& v) { return mean_all(leaky_relu(v[0])); }},
        {"relu", [](const std::vector<Var>& v) { return mean_all(relu(v[0])); }},
    };
    for (auto& [name, f] : cases) {
        CAPTURE(name);
        CHECK(grad_check({a, b}, f) < 1e-6);
    }
}

TEST_CASE("abs and log gradients away from their kinks") {
    auto pos = make_leaf(random_tensor({2, 5}, 3, 0.5, 2.0));
    CHECK(grad_check({pos}, [](const std::vector<Var>& v) { return mean_all(abs_op(v[0])); }) <
          1e-6);
    CHECK(grad_check({pos}, [](const std::vector<Var>& v) {
              return mean_all(log_clamped(v[0]));
          }) < 1e-6);
}

TEST_CASE("matmul and linear gradients") {
    auto a = make_leaf(random_tensor({3, 4}, 4));
    auto b = make_leaf(random_tensor({4, 2}, 5));
    auto bias = make_leaf(random_tensor({2}, 6));
    CHECK(grad_check({a, b}, [](const std::vector<Var>& v) {
              return sum_all(matmul(v[0], v[1]));
          }) < 1e-6);
    CHECK(grad_check({a, b, bias}, [](const std::vector<Var>& v) {
              return mean_all(sigmoid(linear(v[0], v[1], v[2])));
          }) < 1e-6);
    CHECK(grad_check({a, b}, [](const std::vector<Var>& v) {
              return mean_all(linear_nobias(v[0], v[1]));
          }) < 1e-6);
}

TEST_CASE("conv2d gradients, stride and padding variants") {
    auto x = make_leaf(random_tensor({2, 2, 5, 4}, 7));
    auto w = make_leaf(random_tensor({3, 2, 3, 3}, 8, -0.5, 0.5));
    auto b = make_leaf(random_tensor({3}, 9));
    for (int stride : {1, 2})
        for (int pad : {0, 1}) {
            CAPTURE(stride);
            CAPTURE(pad);
            CHECK(grad_check({x, w, b}, [=](const std::vector<Var>& v) {
                      return mean_all(tanh_op(conv2d(v[0], v[1], v[2], stride, pad)));
                  }) < 1e-6);
        }
}

TEST_CASE("conv_transpose2d gradients and upsampling shape") {
    auto x = make_leaf(random_tensor({1, 3, 3, 2}, 10));
    auto w = make_leaf(random_tensor({3, 2, 4, 4}, 11, -0.5, 0.5));
    auto b = make_leaf(random_tensor({2}, 12));
    Var y = conv_transpose2d(x, w, b, 2, 1);
    CHECK(y->val.shape == std::vector<int>{1, 2, 6, 4});
    CHECK(grad_check({x, w, b}, [](const std::vector<Var>& v) {
              return mean_all(sigmoid(conv_transpose2d(v[0], v[1], v[2], 2, 1)));
          }) < 1e-6);
}

TEST_CASE("conv_transpose2d inverts conv2d shapes") {
    auto x = make_leaf(random_tensor({1, 4, 8, 6}, 13));
    auto w = make_leaf(random_tensor({4, 4, 4, 4}, 14, -0.2, 0.2));
    auto b = make_leaf(Tensor({4}));
    Var down = conv2d(x, w, b, 2, 1);
    CHECK(down->val.shape == std::vector<int>{1, 4, 4, 3});
    Var up = conv_transpose2d(down, w, b, 2, 1);
    CHECK(up->val.shape == x->val.shape);
}

TEST_CASE("concat_channels splits gradients correctly") {
    auto a = make_leaf(random_tensor({2, 2, 3, 3}, 15));
    auto b = make_leaf(random_tensor({2, 3, 3, 3}, 16));
    Var y = concat_channels(a, b);
    CHECK(y->val.shape == std::vector<int>{2, 5, 3, 3});
    CHECK(grad_check({a, b}, [](const std::vector<Var>& v) {
              return mean_all(mul(concat_channels(v[0], v[1]), concat_channels(v[0], v[1])));
          }) < 1e-6);
}

TEST_CASE("batchnorm2d training-mode gradients") {
    auto x = make_leaf(random_tensor({3, 2, 4, 3}, 17));
    auto gamma = make_leaf(random_tensor({2}, 18, 0.5, 1.5));
    auto beta = make_leaf(random_tensor({2}, 19));
    CHECK(grad_check({x, gamma, beta}, [](const std::vector<Var>& v) {
              BatchNormState st;  // fresh per call so running stats do not drift
              return mean_all(sigmoid(batchnorm2d(v[0], v[1], v[2], st, true)));
          }) < 1e-6);
}

TEST_CASE("batchnorm2d normalizes per channel and tracks running stats") {
    auto x = make_leaf(random_tensor({4, 3, 5, 5}, 20, 2, 5));
    auto gamma = make_leaf(tensor_of({3}, {1, 1, 1}));
    auto beta = make_leaf(Tensor({3}));
    BatchNormState st;
    Var y = batchnorm2d(x, gamma, beta, st, true);
    for (int c = 0; c < 3; ++c) {
        real mean = 0, var = 0;
        long n = 0;
        for (int i = 0; i < 4; ++i)
            for (int h = 0; h < 5; ++h)
                for (int w = 0; w < 5; ++w) {
                    mean += y->val.at4(i, c, h, w);
                    ++n;
                }
        mean /= n;
        for (int i = 0; i < 4; ++i)
            for (int h = 0; h < 5; ++h)
                for (int w = 0; w < 5; ++w) {
                    const real d = y->val.at4(i, c, h, w) - mean;
                    var += d * d;
                }
        var /= n;
        CHECK(mean == doctest::Approx(0.0).scale(1));
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
    CHECK(st.initialized);
    CHECK(st.running_mean.v[0] != 0);

    // eval mode uses the stored statistics, not the batch
    Var y2 = batchnorm2d(x, gamma, beta, st, false);
    CHECK(y2->val.v != y->val.v);
}

TEST_CASE("batchnorm1d gradients") {
    auto x = make_leaf(random_tensor({6, 4}, 21));
    auto gamma = make_leaf(random_tensor({4}, 22, 0.5, 1.5));
    auto beta = make_leaf(random_tensor({4}, 23));
    CHECK(grad_check({x, gamma, beta}, [](const std::vector<Var>& v) {
              BatchNormState st;
              return mean_all(tanh_op(batchnorm1d(v[0], v[1], v[2], st, true)));
          }) < 1e-6);
}

TEST_CASE("gem pooling gradients including the exponent") {
    auto x = make_leaf(random_tensor({2, 3, 4, 3}, 24, 0.05, 1.0));
    auto p = make_leaf(tensor_of({1}, {3.0}));
    CHECK(grad_check({x, p}, [](const std::vector<Var>& v) {
              return mean_all(gem_pool(v[0], v[1]));
          }) < 1e-5);
}

TEST_CASE("gem pooling interpolates between average and max pooling") {
    Tensor xt = random_tensor({1, 2, 6, 6}, 25, 0.0, 1.0);
    auto x = make_leaf(xt, false);
    Var avg = gem_pool(x, make_leaf(tensor_of({1}, {1.0}), false));
    Var nearmax = gem_pool(x, make_leaf(tensor_of({1}, {64.0}), false));
    for (int c = 0; c < 2; ++c) {
        real mean = 0, mx = 0;
        for (int h = 0; h < 6; ++h)
            for (int w = 0; w < 6; ++w) {
                mean += xt.at4(0, c, h, w);
                mx = std::max(mx, xt.at4(0, c, h, w));
            }
        mean /= 36;
        CHECK(avg->val.at2(0, c) == doctest::Approx(mean).epsilon(1e-9));
        CHECK(nearmax->val.at2(0, c) == doctest::Approx(mx).epsilon(0.05));
    }
}

TEST_CASE("cross entropy gradients and the uniform-logit closed form") {
    auto logits = make_leaf(random_tensor({4, 5}, 26));
    std::vector<int> labels{0, 2, 4, 1};
    CHECK(grad_check({logits}, [&](const std::vector<Var>& v) {
              return cross_entropy(v[0], labels);
          }) < 1e-6);

    for (int C : {3, 7, 16}) {
        auto uniform = make_leaf(Tensor({2, C}, 0.7), false);
        Var loss = cross_entropy(uniform, {0, C - 1});
        CHECK(loss->val.v[0] == doctest::Approx(std::log(real(C))).epsilon(1e-9));
    }
}

TEST_CASE("center loss gradients and value") {
    auto f = make_leaf(random_tensor({4, 3}, 27));
    Tensor centers = random_tensor({2, 3}, 28);
    std::vector<int> labels{0, 1, 0, 1};
    CHECK(grad_check({f}, [&](const std::vector<Var>& v) {
              return center_loss_op(v[0], labels, centers);
          }) < 1e-6);
    Var loss = center_loss_op(f, labels, centers);
    real expect = 0;
    for (int i = 0; i < 4; ++i)
        for (int d = 0; d < 3; ++d) {
            const real diff = f->val.at2(i, d) - centers.at2(labels[i], d);
            expect += diff * diff;
        }
    expect = 0.5 * expect / 4;
    CHECK(loss->val.v[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("wrt loss gradients on a PK batch") {
    auto f = make_leaf(random_tensor({8, 4}, 29));
    std::vector<int> labels{0, 0, 1, 1, 2, 2, 3, 3};
    CHECK(grad_check({f}, [&](const std::vector<Var>& v) { return wrt_loss_op(v[0], labels); },
                     1e-6) < 1e-5);
}

TEST_CASE("wrt loss requires positives and negatives") {
    auto f = make_leaf(random_tensor({4, 4}, 30));
    CHECK_THROWS(wrt_loss_op(f, {0, 1, 2, 3}));  // no positives anywhere
    CHECK_THROWS(wrt_loss_op(f, {0, 0, 0, 0}));  // no negatives anywhere
}

TEST_CASE("wrt loss with equidistant positives and negatives is ln 2") {
    // one-hot corners of the 4-simplex: every pairwise distance is sqrt(2),
    // so the weighted positive and negative sums cancel and softplus(0) = ln 2
    Tensor ft({4, 4});
    for (int i = 0; i < 4; ++i) ft.at2(i, i) = 1;
    auto f = make_leaf(ft, false);
    Var loss = wrt_loss_op(f, {0, 0, 1, 1});
    CHECK(loss->val.v[0] == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("l1 loss gradients and triangle inequality") {
    auto a = make_leaf(random_tensor({3, 4}, 31));
    auto b = make_leaf(random_tensor({3, 4}, 32));
    auto c = make_leaf(random_tensor({3, 4}, 33));
    CHECK(grad_check({a, b}, [](const std::vector<Var>& v) {
              return l1_loss(v[0], v[1]);
          }) < 1e-6);
    const real ab = l1_loss(a, b)->val.v[0];
    const real bc = l1_loss(b, c)->val.v[0];
    const real ac = l1_loss(a, c)->val.v[0];
    CHECK(ac <= ab + bc + 1e-12);
    CHECK(l1_loss(a, a)->val.v[0] == doctest::Approx(0.0));
}

TEST_CASE("detach blocks gradient flow") {
    auto a = make_leaf(random_tensor({2, 2}, 34));
    a->zero_grad();
    Var root = mean_all(mul(detach(a), a));
    backward(root);
    // d/da of mean(const * a) = const/4, not 2a/4
    for (size_t i = 0; i < a->val.v.size(); ++i)
        CHECK(a->grad.v[i] == doctest::Approx(a->val.v[i] / 4).epsilon(1e-12));
}

TEST_CASE("gradients accumulate across backward calls on leaves") {
    auto a = make_leaf(tensor_of({1}, {2.0}));
    a->zero_grad();
    backward(mul(a, a));
    backward(mul(a, a));
    CHECK(a->grad.v[0] == doctest::Approx(8.0));  // 2*2a
    a->zero_grad();
    CHECK(a->grad.v[0] == 0.0);
}

TEST_CASE("shared subexpression gets both gradient paths") {
    auto a = make_leaf(tensor_of({1}, {3.0}));
    a->zero_grad();
    Var s = mul(a, a);       // a^2
    Var root = add(s, s);    // 2 a^2
    backward(root);
    CHECK(a->grad.v[0] == doctest::Approx(12.0));
}
