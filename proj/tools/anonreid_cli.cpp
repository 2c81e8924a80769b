#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "anonreid/pipeline.hpp"
#include "anonreid/report.hpp"

namespace fs = std::filesystem;
using namespace anonreid;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << text;
}

struct CommonOpts {
    std::string config_path;
    std::string dataset_root;
    std::string workdir;
    std::string manifest_path;
    uint32_t seed = 0;
    bool have_seed = false;

    TrainConfig load() const {
        TrainConfig cfg =
            config_path.empty() ? TrainConfig::desk_default() : TrainConfig::from_json(read_file(config_path));
        if (!dataset_root.empty()) cfg.dataset_root = dataset_root;
        if (!workdir.empty()) cfg.workdir = workdir;
        if (have_seed) cfg.seed = seed;
        return cfg;
    }
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "JSON config file (defaults to desk-scale settings)");
    cmd->add_option("--data", o.dataset_root, "dataset root (Market-1501 layout)");
    cmd->add_option("--workdir", o.workdir, "working directory for logs/checkpoints");
    cmd->add_option("--manifest", o.manifest_path, "split manifest JSON");
    cmd->add_option("--seed", o.seed, "override config seed")->each([&](const std::string&) {
        o.have_seed = true;
    });
}

SplitSpec obtain_split(const TrainConfig& cfg, const std::string& manifest_path) {
    if (!manifest_path.empty() && fs::exists(manifest_path))
        return SplitSpec::from_manifest_json(read_file(manifest_path));
    if (cfg.dataset_root.empty()) throw std::runtime_error("need --data or --manifest");
    SplitSpec split = make_splits(scan_dataset_dir(cfg.dataset_root), cfg.seed);
    fs::create_directories(cfg.workdir);
    const std::string out = manifest_path.empty()
                                ? (fs::path(cfg.workdir) / "split_manifest.json").string()
                                : manifest_path;
    write_file(out, split.to_manifest_json());
    for (const auto& w : split.warnings) std::cerr << "split warning: " << w << "\n";
    return split;
}

void fit_num_classes(TrainConfig& cfg, const SplitSpec& split) {
    std::vector<int> ids;
    for (const auto& s : split.train)
        if (std::find(ids.begin(), ids.end(), s.person_id) == ids.end()) ids.push_back(s.person_id);
    cfg.reid.num_classes = static_cast<int>(ids.size());
}

PretrainResult run_or_load_pretrain(TrainConfig& cfg, JointModels& models, const SplitSpec& split,
                                    SupervisionStore& store, bool fresh) {
    const fs::path stats_path = fs::path(cfg.workdir) / "pretrain.json";
    const fs::path ckpt_path = fs::path(cfg.workdir) / "pretrain.bin";
    if (!fresh && fs::exists(stats_path) && fs::exists(ckpt_path)) {
        UpgradeState dummy;
        load_joint_checkpoint(cfg, models, dummy, ckpt_path.string());
        auto j = nlohmann::json::parse(read_file(stats_path.string()));
        PretrainResult pre;
        pre.r1_raw_des = j.at("r1_raw_des").get<real>();
        pre.psnr_des = j.at("psnr_des").get<real>();
        pre.ssim_des = j.at("ssim_des").get<real>();
        std::cerr << "loaded pretrain artifacts from " << cfg.workdir << "\n";
        return pre;
    }
    PretrainResult pre = pretrain_baseline(cfg, models, split, store);
    fs::create_directories(cfg.workdir);
    save_joint_checkpoint(cfg, models, UpgradeState{}, 0, ckpt_path.string());
    nlohmann::json j{{"r1_raw_des", pre.r1_raw_des},
                     {"psnr_des", pre.psnr_des},
                     {"ssim_des", pre.ssim_des}};
    write_file(stats_path.string(), j.dump(2));
    return pre;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reversible identity-preserving pedestrian anonymization toolkit"};
    app.require_subcommand(1);

    // make-toy
    auto* c_toy = app.add_subcommand("make-toy", "generate the synthetic desk-scale corpus");
    ToyCorpusConfig toy;
    std::string toy_out = "toy_corpus";
    c_toy->add_option("--out", toy_out, "output dataset root");
    c_toy->add_option("--identities", toy.identities);
    c_toy->add_option("--images-per-identity", toy.images_per_identity);
    c_toy->add_option("--height", toy.image_h);
    c_toy->add_option("--width", toy.image_w);
    c_toy->add_option("--seed", toy.seed);

    // split
    CommonOpts o_split;
    auto* c_split = app.add_subcommand("split", "build the 4:1 train/val split manifest");
    add_common(c_split, o_split);
    std::string split_out;
    c_split->add_option("--out", split_out, "manifest output path");

    // desensitize
    CommonOpts o_des;
    auto* c_des = app.add_subcommand("desensitize", "apply a conventional desensitizer to a directory");
    add_common(c_des, o_des);
    std::string des_in, des_out, des_method = "blur";
    c_des->add_option("--in", des_in)->required();
    c_des->add_option("--out", des_out)->required();
    c_des->add_option("--method", des_method, "blur | pixelate | noise");

    // pretrain
    CommonOpts o_pre;
    auto* c_pre = app.add_subcommand("pretrain", "train the baseline Re-ID model on raw+desensitized pairs");
    add_common(c_pre, o_pre);

    // train
    CommonOpts o_train;
    auto* c_train = app.add_subcommand("train", "joint training with progressive supervision upgradation");
    add_common(c_train, o_train);
    bool no_upgradation = false, fresh_pretrain = false;
    c_train->add_flag("--no-upgradation", no_upgradation, "disable the upgradation hook (w/o U arm)");
    c_train->add_flag("--fresh-pretrain", fresh_pretrain, "ignore cached pretrain artifacts");

    // evaluate
    CommonOpts o_eval;
    auto* c_eval = app.add_subcommand("evaluate", "four-setting Re-ID evaluation plus recovery quality");
    add_common(c_eval, o_eval);
    std::string eval_ckpt;
    c_eval->add_option("--checkpoint", eval_ckpt, "checkpoint path (defaults to workdir/checkpoint_last.bin)");

    // anonymize / recover
    CommonOpts o_anon, o_rec;
    auto* c_anon = app.add_subcommand("anonymize", "translate a directory with the anonymization generator");
    auto* c_rec = app.add_subcommand("recover", "translate a directory with the recovery generator");
    std::string anon_in, anon_out, anon_ckpt, rec_in, rec_out, rec_ckpt;
    add_common(c_anon, o_anon);
    c_anon->add_option("--in", anon_in)->required();
    c_anon->add_option("--out", anon_out)->required();
    c_anon->add_option("--checkpoint", anon_ckpt);
    add_common(c_rec, o_rec);
    c_rec->add_option("--in", rec_in)->required();
    c_rec->add_option("--out", rec_out)->required();
    c_rec->add_option("--checkpoint", rec_ckpt);

    // export-embeddings
    CommonOpts o_emb;
    auto* c_emb = app.add_subcommand("export-embeddings", "dump bn features for raw and protected images");
    add_common(c_emb, o_emb);
    std::string emb_out, emb_ckpt;
    c_emb->add_option("--out", emb_out, "output CSV");
    c_emb->add_option("--checkpoint", emb_ckpt);

    // report
    CommonOpts o_rep;
    auto* c_rep = app.add_subcommand("report", "render CSV/JSON reports and plot images");
    add_common(c_rep, o_rep);

    try {
        app.parse(argc, argv);

        if (*c_toy) {
            write_toy_corpus(toy, toy_out);
            std::cout << "wrote " << toy.identities * toy.images_per_identity << " images to "
                      << toy_out << "\n";
            return 0;
        }
        if (*c_split) {
            TrainConfig cfg = o_split.load();
            if (!split_out.empty()) o_split.manifest_path = split_out;
            SplitSpec split = obtain_split(cfg, o_split.manifest_path);
            std::cout << "train=" << split.train.size() << " gallery=" << split.val_gallery.size()
                      << " query=" << split.val_query.size() << "\n";
            return 0;
        }
        if (*c_des) {
            TrainConfig cfg = o_des.load();
            DesensitizeMethod m = cfg.desens;
            m.kind = desensitize_kind_from_string(des_method);
            fs::create_directories(des_out);
            int count = 0;
            for (const auto& e : fs::directory_iterator(des_in)) {
                if (!e.is_regular_file()) continue;
                m.noise_seed = cfg.seed + static_cast<uint64_t>(count);
                save_image(desensitize(load_image(e.path().string()), m),
                           (fs::path(des_out) / e.path().filename()).string());
                ++count;
            }
            std::cout << "desensitized " << count << " images\n";
            return 0;
        }
        if (*c_pre) {
            TrainConfig cfg = o_pre.load();
            SplitSpec split = obtain_split(cfg, o_pre.manifest_path);
            fit_num_classes(cfg, split);
            JointModels models(cfg);
            SupervisionStore store;
            init_supervision(cfg, split, store);
            PretrainResult pre = run_or_load_pretrain(cfg, models, split, store, true);
            std::cout << "r1_raw_des=" << pre.r1_raw_des << " psnr_des=" << pre.psnr_des
                      << " ssim_des=" << pre.ssim_des << "\n";
            return 0;
        }
        if (*c_train) {
            TrainConfig cfg = o_train.load();
            if (no_upgradation) cfg.upgradation_enabled = false;
            SplitSpec split = obtain_split(cfg, o_train.manifest_path);
            fit_num_classes(cfg, split);
            JointModels models(cfg);
            SupervisionStore store;
            init_supervision(cfg, split, store);
            PretrainResult pre = run_or_load_pretrain(cfg, models, split, store, fresh_pretrain);
            TrainResult res = train_joint(cfg, models, split, store, pre);
            std::cout << "checkpoint=" << res.checkpoint_path
                      << " upgrades=" << res.upgrade_events << " max_r1=" << res.final_state.max_r1
                      << "\n";
            return 0;
        }

        auto load_models = [&](const CommonOpts& o, const std::string& ckpt, TrainConfig& cfg,
                               SplitSpec& split) {
            cfg = o.load();
            split = obtain_split(cfg, o.manifest_path);
            fit_num_classes(cfg, split);
            auto models = std::make_unique<JointModels>(cfg);
            UpgradeState st;
            const std::string path =
                ckpt.empty() ? (fs::path(cfg.workdir) / "checkpoint_last.bin").string() : ckpt;
            load_joint_checkpoint(cfg, *models, st, path);
            return models;
        };

        if (*c_eval) {
            TrainConfig cfg;
            SplitSpec split;
            auto models = load_models(o_eval, eval_ckpt, cfg, split);
            auto reports = evaluate_four_settings(cfg, *models, split);
            std::array<std::string, 4> names;
            const auto settings = four_settings();
            for (size_t i = 0; i < 4; ++i) names[i] = settings[i].name();
            fs::create_directories(cfg.workdir);
            write_settings_csv(reports, names, (fs::path(cfg.workdir) / "eval_settings.csv").string());
            write_settings_json(reports, names, (fs::path(cfg.workdir) / "eval_settings.json").string());
            RecoveryEval rec = evaluate_recovery(cfg, *models, split);
            nlohmann::json j{{"psnr_recovered", rec.psnr_mean},
                             {"ssim_recovered", rec.ssim_mean},
                             {"psnr_desensitized", rec.psnr_des_mean},
                             {"ssim_desensitized", rec.ssim_des_mean}};
            write_file((fs::path(cfg.workdir) / "eval_recovery.json").string(), j.dump(2));
            for (size_t i = 0; i < 4; ++i)
                std::cout << names[i] << ": " << reports[i].to_csv_row() << "\n";
            std::cout << "recovery: psnr=" << rec.psnr_mean << " ssim=" << rec.ssim_mean << "\n";
            return 0;
        }
        if (*c_anon) {
            TrainConfig cfg;
            SplitSpec split;
            auto models = load_models(o_anon, anon_ckpt, cfg, split);
            std::cout << anonymize_dir(cfg, *models, anon_in, anon_out) << " files written\n";
            return 0;
        }
        if (*c_rec) {
            TrainConfig cfg;
            SplitSpec split;
            auto models = load_models(o_rec, rec_ckpt, cfg, split);
            std::cout << recover_dir(cfg, *models, rec_in, rec_out) << " files written\n";
            return 0;
        }
        if (*c_emb) {
            TrainConfig cfg;
            SplitSpec split;
            auto models = load_models(o_emb, emb_ckpt, cfg, split);
            const std::string out =
                emb_out.empty() ? (fs::path(cfg.workdir) / "embeddings.csv").string() : emb_out;
            export_embeddings(cfg, *models, split, out);
            std::cout << "wrote " << out << "\n";
            return 0;
        }
        if (*c_rep) {
            TrainConfig cfg = o_rep.load();
            const fs::path wd(cfg.workdir);
            render_loss_curves((wd / "loss_log.csv").string(), (wd / "loss_curves.png").string());
            std::array<std::string, 4> names;
            auto reports = read_settings_json((wd / "eval_settings.json").string(), names);
            render_cmc_curves(reports, names, (wd / "cmc_curves.png").string());
            if (fs::exists(wd / "embeddings.csv"))
                render_embedding_scatter((wd / "embeddings.csv").string(),
                                         (wd / "embedding_scatter.png").string());
            std::cout << "report rendered in " << cfg.workdir << "\n";
            return 0;
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
