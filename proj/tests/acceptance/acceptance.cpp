// Acceptance gate for the toolkit: one printed pass/fail line per criterion,
// nonzero exit if anything fails. The end-to-end section trains the full
// desk-scale configuration twice and takes the bulk of the runtime.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "anonreid/losses.hpp"
#include "anonreid/pipeline.hpp"

using namespace anonreid;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(const std::string& name, bool ok, const std::string& detail = "") {
    std::printf("[%s] %s%s%s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.empty() ? "" : " - ",
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Image random_image(int h, int w, std::mt19937& rng) {
    Image img(h, w);
    std::uniform_real_distribution<real> u(0, 1);
    for (auto& x : img.v) x = u(rng);
    return img;
}

// ---- independent oracles ----

real psnr_oracle(const Image& a, const Image& b) {
    real mse = 0;
    for (size_t i = 0; i < a.v.size(); ++i) mse += (a.v[i] - b.v[i]) * (a.v[i] - b.v[i]);
    mse /= a.numel();
    if (mse == 0) return std::numeric_limits<real>::infinity();
    return 10 * std::log10(1.0 / mse);
}

real ssim_oracle(const Image& a, const Image& b) {
    const int win = 11;
    const real sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
    std::vector<real> g(win * win);
    real gsum = 0;
    for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) {
            const real dy = y - 5, dx = x - 5;
            g[y * win + x] = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
            gsum += g[y * win + x];
        }
    for (auto& w : g) w /= gsum;
    real acc = 0;
    long count = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y + win <= a.h; ++y)
            for (int x = 0; x + win <= a.w; ++x) {
                real mu_a = 0, mu_b = 0, va = 0, vb = 0, cov = 0;
                for (int j = 0; j < win; ++j)
                    for (int i = 0; i < win; ++i) {
                        mu_a += g[j * win + i] * a.at(y + j, x + i, c);
                        mu_b += g[j * win + i] * b.at(y + j, x + i, c);
                    }
                for (int j = 0; j < win; ++j)
                    for (int i = 0; i < win; ++i) {
                        const real da = a.at(y + j, x + i, c) - mu_a;
                        const real db = b.at(y + j, x + i, c) - mu_b;
                        va += g[j * win + i] * da * da;
                        vb += g[j * win + i] * db * db;
                        cov += g[j * win + i] * da * db;
                    }
                acc += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                       ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
                ++count;
            }
    return acc / count;
}

real ap_oracle(const std::vector<char>& flags) {
    int hits = 0;
    real ap = 0;
    for (size_t i = 0; i < flags.size(); ++i)
        if (flags[i]) {
            ++hits;
            ap += static_cast<real>(hits) / static_cast<real>(i + 1);
        }
    return ap / hits;
}

real inp_oracle(const std::vector<char>& flags) {
    int total = 0;
    size_t last = 0;
    for (size_t i = 0; i < flags.size(); ++i)
        if (flags[i]) {
            ++total;
            last = i + 1;
        }
    return static_cast<real>(total) / static_cast<real>(last);
}

// ---- criteria ----

void metric_oracle_suite() {
    auto t0 = std::chrono::steady_clock::now();
    std::mt19937 rng(2024);
    real max_img_err = 0;
    bool rank_exact = true;
    int instances = 0;

    for (int trial = 0; trial < 110; ++trial) {
        // image-quality pair
        const int h = 12 + static_cast<int>(rng() % 21);  // 12..32
        const int w = 12 + static_cast<int>(rng() % 21);
        Image a = random_image(h, w, rng), b = random_image(h, w, rng);
        max_img_err = std::max(max_img_err, std::abs(psnr(a, b) - psnr_oracle(a, b)));
        max_img_err = std::max(max_img_err, std::abs(ssim(a, b) - ssim_oracle(a, b)));

        // ranking instance
        const int Q = 1 + static_cast<int>(rng() % 5);
        const int G = 5 + static_cast<int>(rng() % 16);  // <= 20
        std::vector<SampleMeta> qm(Q), gm(G);
        for (auto& m : qm) m = {static_cast<int>(rng() % 4) + 1, static_cast<int>(rng() % 3) + 1};
        for (auto& m : gm) m = {static_cast<int>(rng() % 4) + 1, static_cast<int>(rng() % 3) + 1};
        Tensor dist({Q, G});
        std::uniform_real_distribution<real> u(0, 1);
        for (auto& d : dist.v) d = u(rng);

        RankResult r = rank_list(dist, qm, gm);
        real ap_sum = 0, inp_sum = 0, r1 = 0, r5 = 0, r10 = 0;
        int kept = 0;
        for (int q = 0; q < Q; ++q) {
            std::vector<std::pair<real, int>> order;
            for (int g = 0; g < G; ++g) {
                if (gm[g].person_id == qm[q].person_id && gm[g].camera_id == qm[q].camera_id)
                    continue;
                order.push_back({dist.at2(q, g), g});
            }
            std::stable_sort(order.begin(), order.end());
            std::vector<char> row;
            bool any = false;
            int first_hit = -1;
            for (size_t i = 0; i < order.size(); ++i) {
                const bool hit = gm[order[i].second].person_id == qm[q].person_id;
                row.push_back(hit);
                if (hit && first_hit < 0) first_hit = static_cast<int>(i);
                any = any || hit;
            }
            if (!any) continue;
            ++kept;
            ap_sum += ap_oracle(row);
            inp_sum += inp_oracle(row);
            if (first_hit < 1) r1 += 1;
            if (first_hit < 5) r5 += 1;
            if (first_hit < 10) r10 += 1;
        }
        if (static_cast<int>(r.flags.size()) != kept || r.dropped_queries != Q - kept)
            rank_exact = false;
        if (kept > 0) {
            auto c = cmc(r.flags);
            if (std::abs(mean_ap(r.flags) - ap_sum / kept) > 1e-12 ||
                std::abs(mean_inp(r.flags) - inp_sum / kept) > 1e-12 ||
                std::abs(c[1] - r1 / kept) > 1e-12 || std::abs(c[5] - r5 / kept) > 1e-12 ||
                std::abs(c[10] - r10 / kept) > 1e-12)
                rank_exact = false;
        }
        ++instances;
    }
    const double secs = seconds_since(t0);
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "%d instances, psnr/ssim max err %.2e, ranking exact: %s, %.1fs", instances,
                  max_img_err, rank_exact ? "yes" : "no", secs);
    report("metric oracle suite", instances >= 100 && max_img_err <= 1e-6 && rank_exact &&
                                      secs < 60, detail);
}

void closed_form_checks() {
    bool ok = true;
    std::string why;
    auto expect = [&](bool cond, const char* what) {
        if (!cond) {
            ok = false;
            why += std::string(why.empty() ? "" : "; ") + what;
        }
    };

    expect(std::abs(mean_ap({{1, 0, 1}}) - 5.0 / 6) < 1e-12, "AP([1,0,1])");
    expect(std::abs(mean_inp({{1, 0, 0, 1}}) - 0.5) < 1e-12, "mINP hardest-at-4");

    Image a(24, 24, 64.0 / 255), b(24, 24, 80.0 / 255);
    expect(std::abs(psnr(a, b) - 10 * std::log10(255.0 * 255 / 256)) < 0.01, "PSNR 16/255");
    expect(std::abs(ssim(a, a) - 1.0) < 1e-12, "SSIM identical");

    for (int C : {5, 12}) {
        Var logits = constant(Tensor({3, C}, 0.4));
        expect(std::abs(id_loss(logits, {0, 1, C - 1})->val.v[0] - std::log(real(C))) < 1e-6,
               "id_loss uniform");
    }

    Tensor ft({4, 4});
    for (int i = 0; i < 4; ++i) ft.at2(i, i) = 1;  // equidistant one-hot corners
    Var wrt = wrt_loss(make_leaf(ft, false), {0, 0, 1, 1});
    expect(std::abs(wrt->val.v[0] - std::log(2.0)) < 1e-6, "wrt equidistant");

    report("closed-form checks", ok, why);
}

void gradient_suite() {
    auto t0 = std::chrono::steady_clock::now();
    real worst = 0;
    std::string worst_name;

    auto fd_for = [&](const char* name, ParamSet& ps, const std::function<Var()>& f) {
        ps.zero_grad();
        backward(f());
        real num = 0, den = 0;
        const real h = 1e-5;
        for (auto& [pname, p] : ps.params)
            for (size_t i = 0; i < p->val.v.size(); ++i) {
                const real keep = p->val.v[i];
                p->val.v[i] = keep + h;
                const real up = f()->val.v[0];
                p->val.v[i] = keep - h;
                const real dn = f()->val.v[0];
                p->val.v[i] = keep;
                const real fd = (up - dn) / (2 * h);
                const real an = p->grad.v[i];
                num += (fd - an) * (fd - an);
                den += std::max(fd * fd + an * an, real(1e-10));
            }
        const real rel = std::sqrt(num / den);
        if (rel > worst) {
            worst = rel;
            worst_name = name;
        }
    };

    std::mt19937 rng(5);
    std::uniform_real_distribution<real> u(0, 1);

    // adversarial + reconstruction terms through a tiny score head
    {
        ParamSet ps;
        Tensor wt({1, 3, 3, 3});
        wt.fill_gaussian(rng, 0, 0.3);
        Var w = ps.add("w", wt);
        Var b = ps.add("b", Tensor({1}));
        Tensor xt({2, 3, 6, 6});
        for (auto& x : xt.v) x = u(rng);
        Var x = constant(xt);
        Tensor rt({2, 1, 6, 6}, 0.6);
        Var real_scores = constant(rt);
        fd_for("adversarial (disc)", ps, [&]() {
            Var fake = sigmoid(conv2d(x, w, b, 1, 1));
            return adv_loss_pair(real_scores, fake).discriminator_term;
        });
        fd_for("adversarial (gen)", ps, [&]() {
            Var fake = sigmoid(conv2d(x, w, b, 1, 1));
            return adv_loss_pair(real_scores, fake).generator_term;
        });
        Tensor tgt({2, 1, 6, 6}, 0.25);
        fd_for("l1 reconstruction", ps, [&]() {
            return l1_reconstruction(sigmoid(conv2d(x, w, b, 1, 1)), constant(tgt));
        });
    }

    // identity, center and triplet terms through a linear embedder
    {
        ParamSet ps;
        Tensor wt({5, 4});
        wt.fill_gaussian(rng, 0, 0.5);
        Var w = ps.add("w", wt);
        Tensor xt({6, 5});
        for (auto& x : xt.v) x = u(rng);
        Var x = constant(xt);
        std::vector<int> labels{0, 0, 1, 1, 2, 2};
        Tensor centers({3, 4});
        centers.fill_gaussian(rng, 0, 0.5);
        fd_for("id loss", ps, [&]() { return id_loss(matmul(x, w), labels); });
        fd_for("center loss", ps, [&]() { return center_loss_op(matmul(x, w), labels, centers); });
        fd_for("wrt loss", ps, [&]() { return wrt_loss(matmul(x, w), labels); });
    }

    // the identity-preservation path: reid loss on generator output, gradient
    // taken through the generator weights
    {
        GeneratorConfig gc;
        gc.base_width = 2;
        gc.depth = 1;
        gc.image_h = 8;
        gc.image_w = 8;
        UNetGenerator gx(gc, 31);
        ReidConfig rc;
        rc.widths = {2};
        rc.num_classes = 2;
        ReidModel reid(rc, 32);
        CenterState centers(2, 2);
        ReidLossConfig rcfg;
        Tensor xt({4, 3, 8, 8});
        for (auto& v : xt.v) v = u(rng);
        Var x = constant(xt);
        std::vector<int> labels{0, 0, 1, 1};
        fd_for("identity preservation through the generator", gx.params(), [&]() {
            Var anon = gx.forward(x, true);
            return reid_loss(reid, x, anon, labels, centers, rcfg, true).total;
        });
    }

    const double secs = seconds_since(t0);
    char detail[160];
    std::snprintf(detail, sizeof(detail), "worst rel err %.2e (%s), %.1fs", worst,
                  worst_name.c_str(), secs);
    report("gradient finite-difference suite", worst < 1e-4 && secs < 120, detail);
}

void upgradation_table() {
    bool ok = true;
    std::string why;
    auto expect = [&](bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            why += (why.empty() ? "" : "; ") + what;
        }
    };

    // init formula with the default margin
    UpgradeState st = init_state(0.60, 20.0, 0.80);
    expect(std::abs(st.max_r1 - 0.55) < 1e-12, "init max_r1");

    struct Row {
        ValidationSnapshot snap;
        UpgradeDecision expect;
        real max_r1_after;
    };
    const std::vector<Row> table{
        {{20.5, 0.80, 0.60}, UpgradeDecision::upgraded, 0.60},   // both gates pass
        {{20.5, 0.80, 0.60}, UpgradeDecision::kept, 0.60},       // r1 not above the new max
        {{21.5, 0.80, 0.70}, UpgradeDecision::kept, 0.60},       // psnr gate fails
        {{20.9, 0.80, 0.70}, UpgradeDecision::upgraded, 0.70},   // psnr barely inside
        {{19.0, 0.86, 0.90}, UpgradeDecision::kept, 0.70},       // ssim gate fails
        {{19.0, 0.84, 0.90}, UpgradeDecision::upgraded, 0.90},   // ssim inside
        {{18.0, 0.70, 0.50}, UpgradeDecision::kept, 0.90},       // reid gate fails
        {{25.0, 0.95, 0.95}, UpgradeDecision::kept, 0.90},       // privacy fails despite r1
        {{19.5, 0.78, 0.95}, UpgradeDecision::upgraded, 0.95},   // recovery
    };
    real prev = st.max_r1;
    for (size_t i = 0; i < table.size(); ++i) {
        UpgradeDecision d = check(st, table[i].snap);
        expect(d == table[i].expect, "row " + std::to_string(i) + " decision");
        expect(std::abs(st.max_r1 - table[i].max_r1_after) < 1e-12,
               "row " + std::to_string(i) + " max_r1");
        expect(st.max_r1 >= prev, "row " + std::to_string(i) + " monotone");
        prev = st.max_r1;
    }

    // negative epsilons: the thresholds tighten below the baselines
    EpsilonTriple neg{-1.0, -0.05, -0.05};
    UpgradeState tight = init_state(0.60, 20.0, 0.80, neg);
    expect(std::abs(tight.max_r1 - 0.65) < 1e-12, "negative eps init");
    expect(check(tight, {19.5, 0.70, 0.90}) == UpgradeDecision::kept, "psnr above des-1");
    expect(check(tight, {18.5, 0.76, 0.90}) == UpgradeDecision::kept, "ssim above des-0.05");
    expect(check(tight, {18.5, 0.70, 0.90}) == UpgradeDecision::upgraded, "tightened pass");

    report("upgradation state machine", ok, why);
}

void equation_identities() {
    std::mt19937 rng(9);
    std::uniform_real_distribution<real> u(0, 5);
    bool ok = true;
    for (int i = 0; i < 200; ++i) {
        LossBundle b;
        b.adv1 = u(rng);
        b.l1_ano = u(rng);
        b.adv2 = u(rng);
        b.l1_rec = u(rng);
        b.id = u(rng);
        b.center = u(rng);
        b.wrt = u(rng);
        b.lambda_l1 = 100;
        b.ano_total = b.adv1 + b.lambda_l1 * b.l1_ano;
        b.rec_total = b.adv2 + b.lambda_l1 * b.l1_rec;
        b.reid_total = b.id + 5e-4 * b.center + b.wrt;
        b.grand_total = b.ano_total + b.rec_total + b.reid_total;
        if (b.ano_total != b.adv1 + 100 * b.l1_ano) ok = false;
        if (b.rec_total != b.adv2 + 100 * b.l1_rec) ok = false;
        if (total_objective(b) != b.ano_total + b.rec_total + b.reid_total) ok = false;
        if (b.grand_total != total_objective(b)) ok = false;
    }
    report("equation identities on random bundles", ok);
}

struct E2EOutcome {
    PretrainResult pre;
    std::array<EvalReport, 4> settings;  // OI/OI, PI/PI, OI/PI, PI/OI
    RecoveryEval recovery;
    real psnr_ano = 0, ssim_ano = 0;
    std::string first_epoch_log;
    std::string manifest;
};

E2EOutcome run_arm(const fs::path& data, const fs::path& work, bool upgradation) {
    TrainConfig cfg = TrainConfig::desk_default();
    cfg.dataset_root = data.string();
    cfg.workdir = work.string();
    cfg.upgradation_enabled = upgradation;
    SplitSpec split = make_splits(scan_dataset_dir(cfg.dataset_root), cfg.seed);
    JointModels models(cfg);
    SupervisionStore store;
    init_supervision(cfg, split, store);
    E2EOutcome out;
    out.manifest = split.to_manifest_json();
    out.pre = pretrain_baseline(cfg, models, split, store);
    train_joint(cfg, models, split, store, out.pre);
    out.settings = evaluate_four_settings(cfg, models, split);
    out.recovery = evaluate_recovery(cfg, models, split);
    out.psnr_ano = out.settings[1].psnr_db;  // protected gallery vs raw
    out.ssim_ano = out.settings[1].ssim_val;

    std::ifstream is(work / "loss_log.csv");
    std::string line;
    std::getline(is, line);  // header
    // keep only the first epoch's rows for the determinism criterion
    while (std::getline(is, line)) {
        if (line.rfind("1,", 0) != 0) break;
        out.first_epoch_log += line + "\n";
    }
    return out;
}

void end_to_end_and_determinism() {
    auto t0 = std::chrono::steady_clock::now();
    fs::path base = fs::temp_directory_path() / "anonreid_acceptance";
    fs::remove_all(base);
    fs::create_directories(base);

    ToyCorpusConfig toy;  // 8 identities, 64x32
    write_toy_corpus(toy, (base / "toy").string());

    E2EOutcome with_u = run_arm(base / "toy", base / "with_u", true);
    E2EOutcome without_u = run_arm(base / "toy", base / "without_u", false);

    const real chance3 = 3.0 / 8.0;
    const real prot_r1 = with_u.settings[1].rank_k.at(1);      // PI/PI
    const real cross_qp_r1 = with_u.settings[2].rank_k.at(1);  // OI query / PI gallery
    const real cross_pq_r1 = with_u.settings[3].rank_k.at(1);  // PI query / OI gallery

    char d[256];
    std::snprintf(d, sizeof(d), "anonymized %.2f dB vs desensitized %.2f dB",
                  with_u.psnr_ano, with_u.pre.psnr_des);
    report("e2e (a): anonymization at least as private as desensitization",
           with_u.psnr_ano <= with_u.pre.psnr_des + 1.0, d);

    std::snprintf(d, sizeof(d), "protected %.3f, crossed %.3f / %.3f (chance 0.125)", prot_r1,
                  cross_qp_r1, cross_pq_r1);
    report("e2e (b): protected and crossed rank-1 at 3x chance or better",
           prot_r1 >= chance3 && cross_qp_r1 >= chance3 && cross_pq_r1 >= chance3, d);

    std::snprintf(d, sizeof(d), "recovered ssim %.4f vs desensitized %.4f",
                  with_u.recovery.ssim_mean, with_u.recovery.ssim_des_mean);
    report("e2e (c): recovery beats desensitization on ssim",
           with_u.recovery.ssim_mean > with_u.recovery.ssim_des_mean, d);

    const real wu_cross = std::min(cross_qp_r1, cross_pq_r1);
    const real wo_cross = std::min(without_u.settings[2].rank_k.at(1),
                                   without_u.settings[3].rank_k.at(1));
    std::snprintf(d, sizeof(d), "with upgradation %.3f vs without %.3f", wu_cross, wo_cross);
    report("e2e (d): upgradation does not hurt crossed retrieval", wu_cross >= wo_cross, d);

    std::snprintf(d, sizeof(d), "%.1f min total", seconds_since(t0) / 60);
    report("e2e runtime within budget", seconds_since(t0) < 30 * 60, d);

    // determinism: re-run the first arm's first epoch under identical seeds
    E2EOutcome rerun = run_arm(base / "toy", base / "with_u_rerun", true);
    report("determinism: identical split manifests",
           with_u.manifest == rerun.manifest && !with_u.manifest.empty());
    report("determinism: identical first-epoch loss logs",
           with_u.first_epoch_log == rerun.first_epoch_log && !with_u.first_epoch_log.empty());

    fs::remove_all(base);
}

}  // namespace

int main() {
    try {
        metric_oracle_suite();
        closed_form_checks();
        gradient_suite();
        upgradation_table();
        equation_identities();
        end_to_end_and_determinism();
    } catch (const std::exception& e) {
        report("acceptance run aborted", false, e.what());
    }
    std::printf("%s\n", g_failures == 0 ? "ALL CRITERIA PASSED" : "CRITERIA FAILED");
    return g_failures == 0 ? 0 : 1;
}
