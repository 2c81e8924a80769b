#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "anonreid/networks.hpp"

using namespace anonreid;

namespace {

Tensor random_batch(int n, int c, int h, int w, uint32_t seed) {
    Tensor t({n, c, h, w});
    std::mt19937 rng(seed);
    std::uniform_real_distribution<real> u(0, 1);
    for (auto& x : t.v) x = u(rng);
    return t;
}

GeneratorConfig small_gen() {
    GeneratorConfig g;
    g.base_width = 4;
    g.depth = 2;
    g.image_h = 16;
    g.image_w = 8;
    return g;
}

}  // namespace

TEST_CASE("generator preserves shape and keeps the output in [0,1]") {
    UNetGenerator gen(small_gen(), 1);
    Tensor x = random_batch(2, 3, 16, 8, 2);
    Tensor y = gen.generate(x);
    REQUIRE(y.shape == x.shape);
    for (real v : y.v) {
        CHECK(v >= 0);
        CHECK(v <= 1);
    }
}

TEST_CASE("generator rejects dims not divisible by 2^depth") {
    GeneratorConfig g = small_gen();
    g.image_h = 18;
    CHECK_THROWS(UNetGenerator(g, 1));
}

TEST_CASE("generator forward rejects mismatched input size") {
    UNetGenerator gen(small_gen(), 1);
    CHECK_THROWS(gen.generate(random_batch(1, 3, 32, 8, 3)));
}

TEST_CASE("generator is deterministic under a fixed seed") {
    UNetGenerator a(small_gen(), 5), b(small_gen(), 5), c(small_gen(), 6);
    Tensor x = random_batch(1, 3, 16, 8, 4);
    CHECK(a.generate(x).v == b.generate(x).v);
    CHECK(a.generate(x).v != c.generate(x).v);
}

TEST_CASE("discriminator produces a strict-probability score map") {
    DiscriminatorConfig dc;
    dc.base_width = 4;
    dc.n_layers = 2;
    PatchDiscriminator d(dc, 7);
    Tensor cond = random_batch(2, 3, 16, 8, 8);
    Tensor cand = random_batch(2, 3, 16, 8, 9);
    Var score = d.forward(constant(cond), constant(cand), true);
    REQUIRE(score->val.ndim() == 4);
    CHECK(score->val.dim(0) == 2);
    CHECK(score->val.dim(1) == 1);
    // two stride-2 layers shrink the grid by 4 in each dimension
    CHECK(score->val.dim(2) < 16);
    CHECK(score->val.dim(3) < 8);
    for (real v : score->val.v) {
        CHECK(v > 0);
        CHECK(v < 1);
    }
}

TEST_CASE("discriminator is conditional: swapping the condition changes scores") {
    DiscriminatorConfig dc;
    dc.base_width = 4;
    PatchDiscriminator d(dc, 10);
    Tensor cand = random_batch(1, 3, 16, 8, 11);
    Var s1 = d.forward(constant(random_batch(1, 3, 16, 8, 12)), constant(cand), false);
    Var s2 = d.forward(constant(random_batch(1, 3, 16, 8, 13)), constant(cand), false);
    CHECK(s1->val.v != s2->val.v);
}

TEST_CASE("reid forward produces pooled, bn and logit tensors of the right shape") {
    ReidConfig rc;
    rc.widths = {4, 8};
    rc.num_classes = 5;
    ReidModel m(rc, 14);
    Tensor x = random_batch(3, 3, 16, 8, 15);
    ReidForward f = m.forward(constant(x), true);
    CHECK(f.pooled->val.shape == std::vector<int>{3, 8});
    CHECK(f.bn_feat->val.shape == std::vector<int>{3, 8});
    CHECK(f.logits->val.shape == std::vector<int>{3, 5});
    CHECK(m.feature_dim() == 8);
}

TEST_CASE("last_stride 1 doubles the final feature-map area versus stride 2") {
    ReidConfig rc;
    rc.widths = {4, 8};
    Tensor x = random_batch(1, 3, 16, 8, 16);

    rc.last_stride = 1;
    ReidModel m1(rc, 17);
    Var f1 = m1.backbone_map(constant(x), false);
    rc.last_stride = 2;
    ReidModel m2(rc, 17);
    Var f2 = m2.backbone_map(constant(x), false);

    CHECK(f1->val.dim(2) == 2 * f2->val.dim(2));
    CHECK(f1->val.dim(3) == 2 * f2->val.dim(3));
}

TEST_CASE("embed returns bn features and matches forward in eval mode") {
    ReidConfig rc;
    rc.widths = {4, 8};
    ReidModel m(rc, 18);
    Tensor x = random_batch(2, 3, 16, 8, 19);
    // run once in training mode to populate running stats
    m.forward(constant(x), true);
    Tensor e = m.embed(x);
    ReidForward f = m.forward(constant(x), false);
    REQUIRE(e.shape == f.bn_feat->val.shape);
    for (size_t i = 0; i < e.v.size(); ++i)
        CHECK(e.v[i] == doctest::Approx(f.bn_feat->val.v[i]).epsilon(1e-12));
}

TEST_CASE("parameter sets are named, non-empty and checksummed") {
    UNetGenerator gen(small_gen(), 20);
    CHECK(gen.params().param_count() > 0);
    auto st = gen.params().state();
    CHECK(st.size() == gen.params().params.size() + gen.params().buffers.size());
    const real before = gen.params().checksum();
    gen.params().load_state(st);
    CHECK(gen.params().checksum() == doctest::Approx(before).epsilon(1e-15));
}

TEST_CASE("state round-trip restores exact behaviour") {
    ReidConfig rc;
    rc.widths = {4, 8};
    ReidModel a(rc, 21), b(rc, 22);
    Tensor x = random_batch(2, 3, 16, 8, 23);
    Tensor ea = a.embed(x);
    b.params().load_state(a.params().state());
    Tensor eb = b.embed(x);
    CHECK(ea.v == eb.v);
}
