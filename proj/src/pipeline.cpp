#include "anonreid/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace anonreid {

// ---- config ----

std::string TrainConfig::to_json() const {
    json j;
    j["dataset_root"] = dataset_root;
    j["workdir"] = workdir;
    j["image_h"] = image_h;
    j["image_w"] = image_w;
    j["P"] = P;
    j["K"] = K;
    j["epochs"] = epochs;
    j["pretrain_epochs"] = pretrain_epochs;
    j["lr_base"] = lr_base;
    j["lr_peak"] = lr_peak;
    j["warmup_epochs"] = warmup_epochs;
    j["decay1_epoch"] = decay1_epoch;
    j["decay2_epoch"] = decay2_epoch;
    j["lr_decay1"] = lr_decay1;
    j["lr_decay2"] = lr_decay2;
    j["gen_adam"] = {gen_adam.beta1, gen_adam.beta2};
    j["reid_adam"] = {reid_adam.beta1, reid_adam.beta2};
    j["lambda_l1"] = lambda_l1;
    j["non_saturating"] = non_saturating;
    j["center_weight"] = center_weight;
    j["center_lr"] = center_lr;
    j["psnr_mean_cap"] = psnr_mean_cap;
    j["desens"] = {{"kind", to_string(desens.kind)},
                   {"blur_kernel", desens.blur_kernel},
                   {"pixel_block", desens.pixel_block},
                   {"noise_variance", desens.noise_variance}};
    j["eps"] = {{"psnr", eps.psnr}, {"ssim", eps.ssim}, {"r1", eps.r1}};
    j["upgradation_enabled"] = upgradation_enabled;
    j["upgrade_check_every"] = upgrade_check_every;
    j["gen"] = {{"base_width", gen.base_width}, {"depth", gen.depth}};
    j["disc"] = {{"base_width", disc.base_width}, {"n_layers", disc.n_layers}};
    j["reid"] = {{"widths", reid.widths},
                 {"last_stride", reid.last_stride},
                 {"num_classes", reid.num_classes},
                 {"gem_p_init", reid.gem_p_init}};
    j["seed"] = seed;
    return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    TrainConfig c;
    auto get = [&](const char* k, auto& field) {
        if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
    };
    get("dataset_root", c.dataset_root);
    get("workdir", c.workdir);
    get("image_h", c.image_h);
    get("image_w", c.image_w);
    get("P", c.P);
    get("K", c.K);
    get("epochs", c.epochs);
    get("pretrain_epochs", c.pretrain_epochs);
    get("lr_base", c.lr_base);
    get("lr_peak", c.lr_peak);
    get("warmup_epochs", c.warmup_epochs);
    get("decay1_epoch", c.decay1_epoch);
    get("decay2_epoch", c.decay2_epoch);
    get("lr_decay1", c.lr_decay1);
    get("lr_decay2", c.lr_decay2);
    if (j.contains("gen_adam")) {
        c.gen_adam.beta1 = j["gen_adam"][0].get<real>();
        c.gen_adam.beta2 = j["gen_adam"][1].get<real>();
    }
    if (j.contains("reid_adam")) {
        c.reid_adam.beta1 = j["reid_adam"][0].get<real>();
        c.reid_adam.beta2 = j["reid_adam"][1].get<real>();
    }
    get("lambda_l1", c.lambda_l1);
    get("non_saturating", c.non_saturating);
    get("center_weight", c.center_weight);
    get("center_lr", c.center_lr);
    get("psnr_mean_cap", c.psnr_mean_cap);
    if (j.contains("desens")) {
        const auto& d = j["desens"];
        c.desens.kind = desensitize_kind_from_string(d.at("kind").get<std::string>());
        if (d.contains("blur_kernel")) c.desens.blur_kernel = d["blur_kernel"].get<int>();
        if (d.contains("pixel_block")) c.desens.pixel_block = d["pixel_block"].get<int>();
        if (d.contains("noise_variance")) c.desens.noise_variance = d["noise_variance"].get<real>();
    }
    if (j.contains("eps")) {
        c.eps.psnr = j["eps"].at("psnr").get<real>();
        c.eps.ssim = j["eps"].at("ssim").get<real>();
        c.eps.r1 = j["eps"].at("r1").get<real>();
    }
    get("upgradation_enabled", c.upgradation_enabled);
    get("upgrade_check_every", c.upgrade_check_every);
    if (j.contains("gen")) {
        c.gen.base_width = j["gen"].at("base_width").get<int>();
        c.gen.depth = j["gen"].at("depth").get<int>();
    }
    if (j.contains("disc")) {
        c.disc.base_width = j["disc"].at("base_width").get<int>();
        c.disc.n_layers = j["disc"].at("n_layers").get<int>();
    }
    if (j.contains("reid")) {
        c.reid.widths = j["reid"].at("widths").get<std::vector<int>>();
        c.reid.last_stride = j["reid"].at("last_stride").get<int>();
        c.reid.num_classes = j["reid"].at("num_classes").get<int>();
        c.reid.gem_p_init = j["reid"].at("gem_p_init").get<real>();
    }
    get("seed", c.seed);
    c.gen.image_h = c.image_h;
    c.gen.image_w = c.image_w;
    return c;
}

TrainConfig TrainConfig::desk_default() {
    TrainConfig c;
    c.image_h = 64;
    c.image_w = 32;
    c.P = 8;
    c.K = 4;
    c.epochs = 30;
    c.pretrain_epochs = 8;
    c.warmup_epochs = 5;
    c.decay1_epoch = 15;
    c.decay2_epoch = 25;
    c.gen.base_width = 12;
    c.gen.depth = 3;
    c.gen.image_h = 64;
    c.gen.image_w = 32;
    c.disc.base_width = 12;
    c.disc.n_layers = 2;
    c.reid.widths = {16, 32, 48};
    c.reid.last_stride = 1;
    c.reid.num_classes = 8;
    return c;
}

real lr_at(const TrainConfig& cfg, int epoch) {
    if (epoch >= cfg.decay2_epoch) return cfg.lr_decay2;
    if (epoch >= cfg.decay1_epoch) return cfg.lr_decay1;
    if (epoch <= cfg.warmup_epochs && cfg.warmup_epochs > 1)
        return cfg.lr_base +
               (static_cast<real>(epoch - 1) / (cfg.warmup_epochs - 1)) * (cfg.lr_peak - cfg.lr_base);
    return cfg.lr_peak;
}

// ---- models ----

JointModels::JointModels(const TrainConfig& cfg)
    : gx(cfg.gen, cfg.seed + 1),
      gy(cfg.gen, cfg.seed + 2),
      dx(cfg.disc, cfg.seed + 3),
      dy(cfg.disc, cfg.seed + 4),
      reid(cfg.reid, cfg.seed + 5),
      centers(cfg.reid.num_classes, cfg.reid.widths.back()) {
    centers.update_lr = cfg.center_lr;
}

static void merge_prefixed(std::map<std::string, Tensor>& out, const std::string& prefix,
                           const ParamSet& ps) {
    for (const auto& [name, t] : ps.state()) out[prefix + name] = t;
}

std::map<std::string, Tensor> JointModels::all_tensors() const {
    std::map<std::string, Tensor> out;
    merge_prefixed(out, "gx/", gx.params());
    merge_prefixed(out, "gy/", gy.params());
    merge_prefixed(out, "dx/", dx.params());
    merge_prefixed(out, "dy/", dy.params());
    merge_prefixed(out, "reid/", reid.params());
    out["centers"] = centers.centers;
    return out;
}

static std::map<std::string, Tensor> strip_prefix(const std::map<std::string, Tensor>& st,
                                                  const std::string& prefix) {
    std::map<std::string, Tensor> out;
    for (const auto& [name, t] : st)
        if (name.rfind(prefix, 0) == 0) out[name.substr(prefix.size())] = t;
    return out;
}

void JointModels::load_tensors(const std::map<std::string, Tensor>& st) {
    gx.params().load_state(strip_prefix(st, "gx/"));
    gy.params().load_state(strip_prefix(st, "gy/"));
    dx.params().load_state(strip_prefix(st, "dx/"));
    dy.params().load_state(strip_prefix(st, "dy/"));
    reid.params().load_state(strip_prefix(st, "reid/"));
    auto it = st.find("centers");
    if (it == st.end()) throw std::runtime_error("checkpoint missing centers");
    centers.centers = it->second;
}

void save_joint_checkpoint(const TrainConfig& cfg, const JointModels& models,
                           const UpgradeState& st, int epoch, const std::string& path) {
    Checkpoint ck;
    ck.tensors = models.all_tensors();
    ck.upgrade_state = st;
    ck.epoch = epoch;
    ck.config_fingerprint = cfg.fingerprint();
    ck.save(path);
}

void load_joint_checkpoint(const TrainConfig& cfg, JointModels& models, UpgradeState& st,
                           const std::string& path) {
    Checkpoint ck = Checkpoint::load(path, cfg.fingerprint());
    models.load_tensors(ck.tensors);
    st = ck.upgrade_state;
}

// ---- shared helpers ----

static Image load_resized(const TrainConfig& cfg, const LabeledImage& s) {
    return resize(load_image(s.path), cfg.image_h, cfg.image_w);
}

static std::vector<Image> load_all(const TrainConfig& cfg, const std::vector<LabeledImage>& list) {
    std::vector<Image> out;
    out.reserve(list.size());
    for (const auto& s : list) out.push_back(load_resized(cfg, s));
    return out;
}

static DesensitizeMethod method_for_sample(const TrainConfig& cfg, uint32_t index) {
    DesensitizeMethod m = cfg.desens;
    m.noise_seed = static_cast<uint64_t>(cfg.seed) * 1000003u + index;
    return m;
}

static std::vector<Image> desensitize_all(const TrainConfig& cfg, const std::vector<Image>& imgs,
                                          uint32_t seed_offset) {
    std::vector<Image> out;
    out.reserve(imgs.size());
    for (size_t i = 0; i < imgs.size(); ++i)
        out.push_back(desensitize(imgs[i], method_for_sample(cfg, seed_offset + static_cast<uint32_t>(i))));
    return out;
}

static std::vector<Image> translate_all(const UNetGenerator& gen, const std::vector<Image>& imgs) {
    std::vector<Image> out;
    out.reserve(imgs.size());
    const int chunk = 32;
    for (size_t i = 0; i < imgs.size(); i += chunk) {
        std::vector<Image> part(imgs.begin() + i,
                                imgs.begin() + std::min(imgs.size(), i + chunk));
        Tensor gen_out = gen.generate(images_to_batch(part));
        for (auto& im : batch_to_images(gen_out)) out.push_back(std::move(im));
    }
    return out;
}

static Tensor embed_all(const ReidModel& model, const std::vector<Image>& imgs) {
    const int D = model.feature_dim();
    Tensor out({static_cast<int>(imgs.size()), D});
    const int chunk = 32;
    for (size_t i = 0; i < imgs.size(); i += chunk) {
        std::vector<Image> part(imgs.begin() + i,
                                imgs.begin() + std::min(imgs.size(), i + chunk));
        Tensor f = model.embed(images_to_batch(part));
        for (int r = 0; r < f.dim(0); ++r)
            for (int d = 0; d < D; ++d) out.at2(static_cast<int>(i) + r, d) = f.at2(r, d);
    }
    return out;
}

std::pair<real, real> image_quality_means(const std::vector<Image>& a, const std::vector<Image>& b,
                                          real psnr_cap) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("image_quality_means: list size mismatch");
    real ps = 0, ss = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        ps += std::min(psnr(a[i], b[i]), psnr_cap);
        ss += ssim(a[i], b[i]);
    }
    return {ps / a.size(), ss / a.size()};
}

static std::vector<SampleMeta> metas(const std::vector<LabeledImage>& list) {
    std::vector<SampleMeta> out;
    out.reserve(list.size());
    for (const auto& s : list) out.push_back(s.meta());
    return out;
}

static real rank1(const Tensor& qf, const Tensor& gf, const std::vector<LabeledImage>& q,
                  const std::vector<LabeledImage>& g) {
    RankResult rr = rank_list(distance_matrix(qf, gf), metas(q), metas(g));
    if (rr.flags.empty()) return 0;
    return cmc(rr.flags).at(1);
}

void init_supervision(const TrainConfig& cfg, const SplitSpec& split, SupervisionStore& store) {
    for (size_t i = 0; i < split.train.size(); ++i) {
        Image raw = load_resized(cfg, split.train[i]);
        store.set_initial(static_cast<int>(i),
                          desensitize(raw, method_for_sample(cfg, static_cast<uint32_t>(i))));
    }
}

// ---- pretrain ----

PretrainResult pretrain_baseline(const TrainConfig& cfg, JointModels& models,
                                 const SplitSpec& split, const SupervisionStore& store) {
    const int epochs = cfg.pretrain_epochs > 0 ? cfg.pretrain_epochs : cfg.epochs;
    Adam opt(models.reid.params(), cfg.reid_adam);
    ReidLossConfig rlc{cfg.center_weight};
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        const real lr = lr_at(cfg, epoch);
        BatchIterator it(split.train, store, cfg.P, cfg.K, cfg.image_h, cfg.image_w, cfg.seed,
                         epoch);
        while (auto batch = it.next()) {
            Var x = constant(batch->raw);
            Var des = constant(batch->supervision);
            ReidLossOut loss = reid_loss(models.reid, x, des, batch->labels, models.centers, rlc,
                                         true);
            if (std::isnan(loss.total->val.at(0)))
                throw std::runtime_error("training divergence: NaN loss in pretrain");
            opt.zero_grad();
            backward(loss.total);
            opt.step(lr);
            update_centers(models.centers, loss.raw.pooled->val, batch->labels);
            update_centers(models.centers, loss.anon.pooled->val, batch->labels);
        }
    }
    // measurement pass: raw query vs desensitized gallery, plus image-quality baselines
    std::vector<Image> q_raw = load_all(cfg, split.val_query);
    std::vector<Image> g_raw = load_all(cfg, split.val_gallery);
    std::vector<Image> g_des = desensitize_all(cfg, g_raw, 500000);
    std::vector<Image> q_des = desensitize_all(cfg, q_raw, 600000);

    PretrainResult res;
    res.r1_raw_des = rank1(embed_all(models.reid, q_raw), embed_all(models.reid, g_des),
                           split.val_query, split.val_gallery);
    std::vector<Image> all_raw = g_raw, all_des = g_des;
    all_raw.insert(all_raw.end(), q_raw.begin(), q_raw.end());
    all_des.insert(all_des.end(), q_des.begin(), q_des.end());
    auto [pm, sm] = image_quality_means(all_des, all_raw, cfg.psnr_mean_cap);
    res.psnr_des = pm;
    res.ssim_des = sm;
    return res;
}

// ---- joint training ----

TrainResult train_joint(const TrainConfig& cfg, JointModels& models, const SplitSpec& split,
                        SupervisionStore& store, const PretrainResult& pre) {
    fs::create_directories(cfg.workdir);
    std::ofstream loss_log(fs::path(cfg.workdir) / "loss_log.csv", std::ios::trunc);
    loss_log << "epoch,step,adv1,l1_ano,ano_total,adv2,l1_rec,rec_total,id,center,wrt,reid_total,"
                "grand_total\n";
    std::ofstream upgrade_log(fs::path(cfg.workdir) / "upgrade_log.csv", std::ios::trunc);
    upgrade_log << "epoch,psnr_ano,ssim_ano,r1_raw_ano,decision,max_r1\n";

    UpgradeState state = init_state(pre.r1_raw_des, pre.psnr_des, pre.ssim_des, cfg.eps);

    Adam opt_gx(models.gx.params(), cfg.gen_adam);
    Adam opt_gy(models.gy.params(), cfg.gen_adam);
    Adam opt_dx(models.dx.params(), cfg.gen_adam);
    Adam opt_dy(models.dy.params(), cfg.gen_adam);
    Adam opt_reid(models.reid.params(), cfg.reid_adam);
    ReidLossConfig rlc{cfg.center_weight};

    auto zero_all = [&] {
        models.gx.params().zero_grad();
        models.gy.params().zero_grad();
        models.dx.params().zero_grad();
        models.dy.params().zero_grad();
        models.reid.params().zero_grad();
    };

    // validation images loaded once; anonymized versions refreshed per epoch
    std::vector<Image> q_raw = load_all(cfg, split.val_query);
    std::vector<Image> g_raw = load_all(cfg, split.val_gallery);

    const std::string ckpt_path = (fs::path(cfg.workdir) / "checkpoint_last.bin").string();
    TrainResult result;
    result.checkpoint_path = ckpt_path;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const real lr = lr_at(cfg, epoch);
        BatchIterator it(split.train, store, cfg.P, cfg.K, cfg.image_h, cfg.image_w, cfg.seed,
                         epoch);
        int step = 0;
        while (auto batch = it.next()) {
            ++step;
            Var x = constant(batch->raw);
            Var y = constant(batch->supervision);

            Var anon = models.gx.forward(x, true);
            Var rec = models.gy.forward(anon, true);
            Var anon_c = detach(anon);
            Var rec_c = detach(rec);

            // (1) discriminators, generators frozen
            auto advY_d = adv_loss_pair(models.dy.forward(x, y, true),
                                        models.dy.forward(x, anon_c, true), cfg.non_saturating);
            auto advX_d = adv_loss_pair(models.dx.forward(anon_c, x, true),
                                        models.dx.forward(anon_c, rec_c, true), cfg.non_saturating);
            Var d_total = add(advY_d.discriminator_term, advX_d.discriminator_term);
            zero_all();
            backward(d_total);
            opt_dy.step(lr);
            opt_dx.step(lr);

            // (2) generators on L_ano + L_rec + the Re-ID path through G_X
            Var gen_adv1 = adv_loss_pair(detach(models.dy.forward(x, y, true)),
                                         models.dy.forward(x, anon, true), cfg.non_saturating)
                               .generator_term;
            Var l1_ano = l1_reconstruction(anon, y);
            Var gen_adv2 = adv_loss_pair(detach(models.dx.forward(anon_c, x, true)),
                                         models.dx.forward(anon, rec, true), cfg.non_saturating)
                               .generator_term;
            Var l1_rec = l1_reconstruction(rec, x);
            ReidLossOut reid_g = reid_loss(models.reid, x, anon, batch->labels, models.centers, rlc,
                                           true);
            Var ano_total = add(gen_adv1, scale(l1_ano, cfg.lambda_l1));
            Var rec_total = add(gen_adv2, scale(l1_rec, cfg.lambda_l1));
            Var g_total = add(add(ano_total, rec_total), reid_g.total);
            zero_all();
            backward(g_total);
            opt_gx.step(lr);
            opt_gy.step(lr);

            // (3) Re-ID model on hybrid inputs, anonymized branch detached
            ReidLossOut reid_r = reid_loss(models.reid, x, detach(anon), batch->labels,
                                           models.centers, rlc, true);
            zero_all();
            backward(reid_r.total);
            opt_reid.step(lr);
            update_centers(models.centers, reid_r.raw.pooled->val, batch->labels);
            update_centers(models.centers, reid_r.anon.pooled->val, batch->labels);

            LossBundle b;
            b.lambda_l1 = cfg.lambda_l1;
            b.adv1 = gen_adv1->val.at(0);
            b.l1_ano = l1_ano->val.at(0);
            b.ano_total = ano_total->val.at(0);
            b.adv2 = gen_adv2->val.at(0);
            b.l1_rec = l1_rec->val.at(0);
            b.rec_total = rec_total->val.at(0);
            b.id = reid_r.raw.id->val.at(0) + reid_r.anon.id->val.at(0);
            b.center = reid_r.raw.center->val.at(0) + reid_r.anon.center->val.at(0);
            b.wrt = reid_r.raw.wrt->val.at(0) + reid_r.anon.wrt->val.at(0);
            b.reid_total = reid_r.total->val.at(0);
            b.grand_total = total_objective(b);  // throws on NaN
            loss_log << epoch << "," << step << "," << b.adv1 << "," << b.l1_ano << ","
                     << b.ano_total << "," << b.adv2 << "," << b.l1_rec << "," << b.rec_total << ","
                     << b.id << "," << b.center << "," << b.wrt << "," << b.reid_total << ","
                     << b.grand_total << "\n";
        }
        loss_log.flush();

        // per-epoch validation + upgradation
        std::vector<Image> q_anon = translate_all(models.gx, q_raw);
        std::vector<Image> g_anon = translate_all(models.gx, g_raw);
        std::vector<Image> all_raw = g_raw, all_anon = g_anon;
        all_raw.insert(all_raw.end(), q_raw.begin(), q_raw.end());
        all_anon.insert(all_anon.end(), q_anon.begin(), q_anon.end());
        ValidationSnapshot snap;
        auto [pm, sm] = image_quality_means(all_anon, all_raw, cfg.psnr_mean_cap);
        snap.psnr_ano = pm;
        snap.ssim_ano = sm;
        snap.r1_raw_ano = rank1(embed_all(models.reid, q_raw), embed_all(models.reid, g_anon),
                                split.val_query, split.val_gallery);

        if (cfg.upgradation_enabled && epoch % cfg.upgrade_check_every == 0) {
            UpgradeDecision dec = check(state, snap);
            upgrade_log << epoch << "," << snap.psnr_ano << "," << snap.ssim_ano << ","
                        << snap.r1_raw_ano << ","
                        << (dec == UpgradeDecision::upgraded ? "upgraded" : "kept") << ","
                        << state.max_r1 << "\n";
            upgrade_log.flush();
            if (dec == UpgradeDecision::upgraded) {
                store.apply_upgrade(
                    [&](int sid) {
                        std::vector<Image> one{load_resized(cfg, split.train[sid])};
                        return translate_all(models.gx, one)[0];
                    },
                    epoch);
                ++result.upgrade_events;
            }
        }
        save_joint_checkpoint(cfg, models, state, epoch, ckpt_path);
    }
    result.final_state = state;
    return result;
}

// ---- evaluation ----

std::string EvalSetting::name() const {
    auto d = [](ImageDomain x) { return x == ImageDomain::OI ? "OI" : "PI"; };
    return std::string(d(query_domain)) + "/" + d(gallery_domain);
}

std::array<EvalSetting, 4> four_settings() {
    return {EvalSetting{ImageDomain::OI, ImageDomain::OI},
            EvalSetting{ImageDomain::PI, ImageDomain::PI},
            EvalSetting{ImageDomain::OI, ImageDomain::PI},
            EvalSetting{ImageDomain::PI, ImageDomain::OI}};
}

std::array<EvalReport, 4> evaluate_four_settings(const TrainConfig& cfg, const JointModels& models,
                                                 const SplitSpec& split) {
    std::vector<Image> q_oi = load_all(cfg, split.val_query);
    std::vector<Image> g_oi = load_all(cfg, split.val_gallery);
    std::vector<Image> q_pi = translate_all(models.gx, q_oi);
    std::vector<Image> g_pi = translate_all(models.gx, g_oi);

    Tensor q_oi_f = embed_all(models.reid, q_oi);
    Tensor g_oi_f = embed_all(models.reid, g_oi);
    Tensor q_pi_f = embed_all(models.reid, q_pi);
    Tensor g_pi_f = embed_all(models.reid, g_pi);

    std::array<EvalReport, 4> out;
    const auto settings = four_settings();
    for (size_t i = 0; i < settings.size(); ++i) {
        const Tensor& qf = settings[i].query_domain == ImageDomain::OI ? q_oi_f : q_pi_f;
        const Tensor& gf = settings[i].gallery_domain == ImageDomain::OI ? g_oi_f : g_pi_f;
        RankResult rr = rank_list(distance_matrix(qf, gf), metas(split.val_query),
                                  metas(split.val_gallery));
        EvalReport rep;
        if (!rr.flags.empty()) {
            rep.rank_k = cmc(rr.flags);
            rep.mAP = mean_ap(rr.flags);
            rep.mINP = mean_inp(rr.flags);
        }
        if (settings[i].gallery_domain == ImageDomain::PI) {
            auto [pm, sm] = image_quality_means(g_pi, g_oi, cfg.psnr_mean_cap);
            rep.psnr_db = pm;
            rep.ssim_val = sm;
        } else {
            rep.psnr_db = std::numeric_limits<real>::infinity();
            rep.ssim_val = 1.0;
        }
        out[i] = rep;
    }
    return out;
}

RecoveryEval evaluate_recovery(const TrainConfig& cfg, const JointModels& models,
                               const SplitSpec& split) {
    std::vector<Image> raw = load_all(cfg, split.val_gallery);
    std::vector<Image> q = load_all(cfg, split.val_query);
    raw.insert(raw.end(), q.begin(), q.end());
    std::vector<Image> recovered = translate_all(models.gy, translate_all(models.gx, raw));
    std::vector<Image> des = desensitize_all(cfg, raw, 700000);
    RecoveryEval out;
    auto [pm, sm] = image_quality_means(recovered, raw, cfg.psnr_mean_cap);
    out.psnr_mean = pm;
    out.ssim_mean = sm;
    auto [pd, sd] = image_quality_means(des, raw, cfg.psnr_mean_cap);
    out.psnr_des_mean = pd;
    out.ssim_des_mean = sd;
    return out;
}

static int translate_dir(const TrainConfig& cfg, const UNetGenerator& gen, const std::string& in_dir,
                         const std::string& out_dir) {
    if (!fs::is_directory(in_dir)) throw std::runtime_error("no such directory: " + in_dir);
    fs::create_directories(out_dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(in_dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    int written = 0;
    for (const auto& f : files) {
        try {
            Image img = resize(load_image(f.string()), cfg.image_h, cfg.image_w);
            std::vector<Image> one{img};
            save_image(translate_all(gen, one)[0], (fs::path(out_dir) / f.filename()).string());
            ++written;
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping " << f << ": " << e.what() << "\n";
        }
    }
    if (!files.empty() && written == 0)
        throw std::runtime_error("all inputs failed in " + in_dir);
    return written;
}

int anonymize_dir(const TrainConfig& cfg, const JointModels& models, const std::string& in_dir,
                  const std::string& out_dir) {
    return translate_dir(cfg, models.gx, in_dir, out_dir);
}

int recover_dir(const TrainConfig& cfg, const JointModels& models, const std::string& in_dir,
                const std::string& out_dir) {
    return translate_dir(cfg, models.gy, in_dir, out_dir);
}

void export_embeddings(const TrainConfig& cfg, const JointModels& models, const SplitSpec& split,
                       const std::string& out_csv) {
    std::vector<LabeledImage> all = split.val_gallery;
    all.insert(all.end(), split.val_query.begin(), split.val_query.end());
    std::vector<Image> raw = load_all(cfg, all);
    std::vector<Image> prot = translate_all(models.gx, raw);
    Tensor raw_f = embed_all(models.reid, raw);
    Tensor prot_f = embed_all(models.reid, prot);
    const int D = raw_f.dim(1);
    std::ofstream os(out_csv, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + out_csv);
    os << "path,pid,cam,domain";
    for (int d = 0; d < D; ++d) os << ",f" << d;
    os << "\n";
    for (int pass = 0; pass < 2; ++pass) {
        const Tensor& f = pass == 0 ? raw_f : prot_f;
        const char* domain = pass == 0 ? "raw" : "protected";
        for (size_t i = 0; i < all.size(); ++i) {
            os << all[i].path << "," << all[i].person_id << "," << all[i].camera_id << "," << domain;
            for (int d = 0; d < D; ++d) os << "," << f.at2(static_cast<int>(i), d);
            os << "\n";
        }
    }
}

}  // namespace anonreid
