#include "ldae/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "ldae/evaluation.hpp"
#include "ldae/pipeline.hpp"

namespace fs = std::filesystem;

namespace ldae::cli {

namespace {

using config::PipelineConfig;

struct Options {
    PipelineConfig cfg;
    bool voxel = false;
    bool resume = false;
    std::vector<double> alphas = {0, 1, 2, 3, 4, 5};
    double t_value = 0.5;
    std::string towards = "healthy";
    std::string subject_filter;
    std::vector<int> sweep;
    int subjects_cap = 0;  // 0 = no cap
};

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    return out;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    return out;
}

Options parse_options(const std::vector<std::string>& args, std::size_t first) {
    config::KeyValues file_pairs, overrides;
    Options opt;
    std::vector<std::pair<std::string, std::string>> locals;
    for (std::size_t i = first; i < args.size(); ++i) {
        const std::string& a = args[i];
        auto need_value = [&]() -> const std::string& {
            if (i + 1 >= args.size()) throw InvalidParams("flag needs a value: " + a);
            return args[++i];
        };
        if (a == "--config")
            file_pairs = config::read_config_file(need_value());
        else if (a == "--set") {
            std::string kv = need_value();
            auto eq = kv.find('=');
            if (eq == std::string::npos) throw InvalidParams("--set expects key=value");
            overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
        } else if (a == "--seed")
            overrides.emplace_back("seed", need_value());
        else if (a == "--steps")
            overrides.emplace_back("steps", need_value());
        else if (a == "--invert-steps")
            overrides.emplace_back("invert_steps", need_value());
        else if (a == "--out")
            overrides.emplace_back("out_dir", need_value());
        else if (a == "--data")
            overrides.emplace_back("data_dir", need_value());
        else if (a == "--profile")
            overrides.emplace_back("profile", need_value());
        else if (a == "--subjects")
            locals.emplace_back("subjects", need_value());
        else if (a == "--alpha")
            locals.emplace_back("alpha", need_value());
        else if (a == "--t")
            locals.emplace_back("t", need_value());
        else if (a == "--towards")
            locals.emplace_back("towards", need_value());
        else if (a == "--subject")
            locals.emplace_back("subject", need_value());
        else if (a == "--sweep")
            locals.emplace_back("sweep", need_value());
        else if (a == "--voxel")
            opt.voxel = true;
        else if (a == "--resume")
            opt.resume = true;
        else
            throw InvalidParams("unknown flag: " + a);
    }
    opt.cfg = config::make_config(file_pairs, overrides);
    for (const auto& [k, v] : locals) {
        if (k == "subjects")
            opt.subjects_cap = std::stoi(v);
        else if (k == "alpha")
            opt.alphas = parse_double_list(v);
        else if (k == "t")
            opt.t_value = std::stod(v);
        else if (k == "towards")
            opt.towards = v;
        else if (k == "subject")
            opt.subject_filter = v;
        else if (k == "sweep")
            opt.sweep = parse_int_list(v);
    }
    return opt;
}

std::string manifest_path(const PipelineConfig& cfg) {
    return (fs::path(cfg.data_dir) / "manifest.csv").string();
}

std::ofstream open_report(const PipelineConfig& cfg, const std::string& name) {
    fs::create_directories(fs::path(cfg.out_dir) / "reports");
    std::ofstream os(fs::path(cfg.out_dir) / "reports" / name, std::ios::binary);
    if (!os) throw IoError("cannot write report " + name);
    os << "# config_hash=" << to_hex(config_hash(cfg)) << " seed=" << cfg.seed << "\n";
    return os;
}

training::TrainConfig train_config(const PipelineConfig& cfg, const std::string& stage) {
    training::TrainConfig tc;
    tc.seed = derive_seed(cfg.seed, fnv1a64(stage));
    tc.ema_decay = cfg.ema_decay;
    tc.val_substeps = cfg.val_substeps;
    if (stage == "ldm" || stage == "ldm_voxel") {
        tc.epochs = stage == "ldm" ? cfg.ldm_epochs : cfg.voxel_ldm_epochs;
        tc.batch = cfg.ldm_batch;
        tc.lr = cfg.ldm_lr;
    } else {
        tc.epochs = (stage == "ldae") ? cfg.ldae_epochs : cfg.voxel_ldae_epochs;
        tc.batch = cfg.ldae_batch;
        tc.lr = cfg.ldae_lr;
    }
    return tc;
}

std::string log_path(const PipelineConfig& cfg, const std::string& stage) {
    fs::create_directories(fs::path(cfg.out_dir) / "logs");
    return (fs::path(cfg.out_dir) / "logs" / (stage + "_train.csv")).string();
}

// ---------------------------------------------------------------- commands

int cmd_gen_data(const Options& opt) {
    const PipelineConfig& cfg = opt.cfg;
    fs::create_directories(cfg.data_dir);
    config::write_effective_config(cfg, cfg.out_dir);
    auto records = phantom::generate_cohort(cfg.n_subjects, cfg.seed, cfg.cohort_config(),
                                            cfg.data_dir, config::config_hash(cfg));
    phantom::validate_manifest(manifest_path(cfg));
    int train = 0, val = 0, test = 0, sessions = 0;
    for (const auto& r : records) {
        sessions += static_cast<int>(r.sessions.size());
        if (r.split == "train")
            ++train;
        else if (r.split == "val")
            ++val;
        else
            ++test;
    }
    std::cout << "gen-data: " << records.size() << " subjects (" << train << " train, " << val
              << " val, " << test << " test), " << sessions << " volumes\n";
    return 0;
}

int cmd_train_ae(const Options& opt) {
    const PipelineConfig& cfg = opt.cfg;
    config::write_effective_config(cfg, cfg.out_dir);
    auto splits = pipeline::load_splits(manifest_path(cfg));
    auto train = pipeline::load_volumes(cfg.data_dir, splits.rows, splits.train_rows);
    auto val = pipeline::load_volumes(cfg.data_dir, splits.rows, splits.val_rows);

    compression::CompressionTrainConfig tc;
    tc.kl_weight = cfg.kl_weight;
    tc.lr = cfg.ae_lr;
    tc.epochs = cfg.ae_epochs;
    tc.batch = cfg.ae_batch;
    tc.seed = derive_seed(cfg.seed, fnv1a64("ae"));

    compression::AeState state;
    if (opt.resume) {
        ckpt::Checkpoint prev = ckpt::load_checkpoint(pipeline::checkpoint_path(cfg, "ae"));
        pipeline::restore_ae(prev, state, tc.lr);
    } else {
        state = compression::make_ae_state(cfg.compressor_spec(), tc);
    }
    compression::run_ae_training(state, train, val, tc, log_path(cfg, "ae"),
                                 config::config_hash(cfg));
    // capture the resumable state before the best weights are swapped in
    ckpt::Checkpoint c = pipeline::capture_ae(state, cfg, compression::LatentScaler{});
    compression::LatentScaler scaler = compression::finish_autoencoder(state, train, 32);
    c.scaler = scaler.scale;

    // test-split reconstruction metrics
    auto test = pipeline::load_volumes(cfg.data_dir, splits.rows, splits.test_rows);
    std::vector<double> ssims;
    double mse_sum = 0.0;
    for (const auto& vol : test) {
        Volume rec = compression::decode(*state.net, scaler,
                                         compression::encode(*state.net, scaler, vol));
        ssims.push_back(evaluation::ssim3d(vol, rec));
        mse_sum += evaluation::mse(vol, rec);
    }
    std::sort(ssims.begin(), ssims.end());
    double median_ssim = ssims.empty() ? 0.0 : ssims[ssims.size() / 2];

    c.extra["test_ssim_median"] = median_ssim;
    c.extra["test_mse_mean"] = test.empty() ? 0.0 : mse_sum / static_cast<double>(test.size());
    fs::create_directories(fs::path(cfg.out_dir) / "checkpoints");
    ckpt::save_checkpoint(pipeline::checkpoint_path(cfg, "ae"), c);

    auto rep = open_report(cfg, "ae_metrics.csv");
    rep << "metric,value\n";
    char buf[128];
    std::snprintf(buf, sizeof buf, "val_ssim_best,%.9g\n", state.best_val_ssim);
    rep << buf;
    std::snprintf(buf, sizeof buf, "test_ssim_median,%.9g\n", median_ssim);
    rep << buf;
    std::snprintf(buf, sizeof buf, "final_train_loss,%.9g\n", state.final_loss);
    rep << buf;
    rep << "# reference (full-scale, not reproduced here): compression SSIM 0.962, MSE 0.001\n";

    std::cout << "train-ae: best val ssim " << state.best_val_ssim << " (epoch "
              << state.best_epoch << "), test median ssim " << median_ssim << "\n";
    return 0;
}

// encode every row of the given indices with the compressor (or identity)
std::vector<Tensor> encode_rows(const PipelineConfig& cfg, const pipeline::DataSplits& splits,
                                const std::vector<int>& rows, nets::CompressionAE* ae,
                                const compression::LatentScaler& scaler) {
    std::vector<Tensor> out;
    out.reserve(rows.size());
    for (int r : rows) {
        Volume vol = pipeline::load_row_volume(cfg.data_dir, splits.rows[r]);
        out.push_back(ae ? compression::encode(*ae, scaler, vol) : vol.to_tensor());
    }
    return out;
}

int cmd_train_ldm(const Options& opt) {
    const PipelineConfig& cfg = opt.cfg;
    config::write_effective_config(cfg, cfg.out_dir);
    auto splits = pipeline::load_splits(manifest_path(cfg));
    const std::string stage = opt.voxel ? "ldm_voxel" : "ldm";

    pipeline::AeRuntime ae_rt;
    std::string parent_hash;
    double scaler_value = 1.0;
    if (!opt.voxel) {
        ae_rt = pipeline::load_ae_runtime(cfg);  // throws MissingParent when absent
        parent_hash = ckpt::file_hash_hex(pipeline::checkpoint_path(cfg, "ae"));
        scaler_value = ae_rt.scaler.scale;
    }
    auto latents =
        encode_rows(cfg, splits, splits.train_rows, ae_rt.ae.get(), ae_rt.scaler);

    auto s = schedule::make_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end, cfg.gamma);
    training::TrainConfig tc = train_config(cfg, stage);
    nets::NetworkSpec spec = opt.voxel ? cfg.voxel_unet_spec() : cfg.unet_spec();

    training::LdmState state;
    if (opt.resume) {
        ckpt::Checkpoint prev = ckpt::load_checkpoint(pipeline::checkpoint_path(cfg, stage));
        pipeline::restore_ldm(prev, state, tc.lr);
    } else {
        state = training::make_ldm_state(spec, tc);
    }
    training::run_ldm_training(state, latents, s, tc, log_path(cfg, stage),
                               config::config_hash(cfg));

    ckpt::Checkpoint c = pipeline::capture_ldm(state, cfg, spec, opt.voxel, scaler_value, parent_hash);
    ckpt::save_checkpoint(pipeline::checkpoint_path(cfg, stage), c);
    std::cout << "train-" << stage << ": final loss " << state.final_loss << " after "
              << state.epochs_done << " epochs\n";
    return 0;
}

int cmd_train_ldae(const Options& opt) {
    const PipelineConfig& cfg = opt.cfg;
    config::write_effective_config(cfg, cfg.out_dir);
    auto splits = pipeline::load_splits(manifest_path(cfg));
    const std::string ldm_stage = opt.voxel ? "ldm_voxel" : "ldm";
    const std::string stage = opt.voxel ? "ldae_voxel" : "ldae";

    std::string ldm_path = pipeline::checkpoint_path(cfg, ldm_stage);
    ckpt::Checkpoint cl = ckpt::load_checkpoint(ldm_path);

    pipeline::AeRuntime ae_rt;
    if (!opt.voxel) {
        ae_rt = pipeline::load_ae_runtime(cfg);
        if (cl.parent_hash != ckpt::file_hash_hex(pipeline::checkpoint_path(cfg, "ae")))
            throw MissingParent("ldm checkpoint does not chain to the current ae checkpoint");
    }

    auto s = cl.make_schedule();
    nets::UNet3d frozen(cl.specs.at("eps_unet"), cl.seed);
    {
        nets::ParamList p = frozen.params();
        cl.load_params(p, "ema.");
    }

    auto train_vols = pipeline::load_volumes(cfg.data_dir, splits.rows, splits.train_rows);
    auto val_vols = pipeline::load_volumes(cfg.data_dir, splits.rows, splits.val_rows);
    std::vector<Tensor> train_lats;
    train_lats.reserve(train_vols.size());
    for (const auto& vol : train_vols)
        train_lats.push_back(ae_rt.ae ? compression::encode(*ae_rt.ae, ae_rt.scaler, vol)
                                      : vol.to_tensor());

    auto decode_fn = [&](const Tensor& z0) {
        return ae_rt.ae ? compression::decode(*ae_rt.ae, ae_rt.scaler, z0)
                        : clamp01(Volume::from_tensor(z0));
    };

    training::TrainConfig tc = train_config(cfg, stage);
    training::LdaeState state;
    if (opt.resume) {
        ckpt::Checkpoint prev = ckpt::load_checkpoint(pipeline::checkpoint_path(cfg, stage));
        state = training::make_ldae_state(frozen, prev.specs.at("semantic_enc"), tc);
        pipeline::restore_ldae(prev, state, tc.lr);
    } else {
        nets::NetworkSpec sem = cfg.semantic_spec();
        state = training::make_ldae_state(frozen, sem, tc);
    }
    training::run_ldae_training(state, train_vols, train_lats, val_vols, s, frozen, tc, decode_fn,
                                log_path(cfg, stage), config::config_hash(cfg));

    ckpt::Checkpoint c = pipeline::capture_ldae(state, cfg, opt.voxel, cl.scaler,
                                                ckpt::file_hash_hex(ldm_path));
    ckpt::save_checkpoint(pipeline::checkpoint_path(cfg, stage), c);
    std::cout << "train-" << stage << ": best val ssim " << state.best_val_ssim << " (epoch "
              << state.best_epoch << ")\n";
    return 0;
}

struct SubjectPick {
    std::vector<int> rows;  // manifest row indices, test split, capped by subject
};

SubjectPick pick_test_rows(const pipeline::DataSplits& splits, int subjects_cap,
                           const std::string& subject_filter) {
    SubjectPick pick;
    auto groups = phantom::group_rows_by_subject(splits.rows);
    int used = 0;
    for (const auto& g : groups) {
        if (splits.rows[g[0]].split != "test") continue;
        if (!subject_filter.empty() && splits.rows[g[0]].subject_id != subject_filter) continue;
        if (subjects_cap > 0 && used >= subjects_cap) break;
        ++used;
        for (int r : g) pick.rows.push_back(r);
    }
    return pick;
}

int cmd_reconstruct(const Options& opt) {
    const PipelineConfig& cfg = opt.cfg;
    config::write_effective_config(cfg, cfg.out_dir);
    pipeline::Runtime rt = pipeline::load_runtime(cfg, opt.voxel);
    latentops::Models m = rt.models();
    auto splits = pipeline::load_splits(manifest_path(cfg));
    SubjectPick pick = pick_test_rows(splits, opt.subjects_cap, opt.subject_filter);

    std::vector<int> steps_list = opt.sweep.empty() ? std::vector<int>{cfg.steps} : opt.sweep;
    fs::create_directories(fs::path(cfg.out_dir) / "recon");

    auto rep = open_report(cfg, "recon_metrics.csv");
    rep << "subject_id,session_id,steps,ssim_vs_ae,mse_vs_ae,ssim_vs_orig,mse_vs_orig\n";
    std::map<int, std::vector<double>> sweep_ssim;
    char buf[256];
    for (int r : pick.rows) {
        Volume orig = pipeline::load_row_volume(cfg.data_dir, splits.rows[r]);
        Volume ae_rec = m.decode_image(m.encode_image(orig));
        latentops::DualCode code = latentops::encode_dual(m, orig, cfg.invert_steps);
        for (int steps : steps_list) {
            Volume rec = latentops::decode_dual(m, code, steps);
            double sa = evaluation::ssim3d(rec, ae_rec);
            double so = evaluation::ssim3d(rec, orig);
            std::snprintf(buf, sizeof buf, "%s,%s,%d,%.9g,%.9g,%.9g,%.9g\n",
                          splits.rows[r].subject_id.c_str(), splits.rows[r].session_id.c_str(),
                          steps, sa, evaluation::mse(rec, ae_rec), so, evaluation::mse(rec, orig));
            rep << buf;
            sweep_ssim[steps].push_back(so);
            if (steps == steps_list.back()) {
                std::string name = splits.rows[r].subject_id + "_" + splits.rows[r].session_id +
                                   "_steps" + std::to_string(steps) + ".vol";
                write_volume_file((fs::path(cfg.out_dir) / "recon" / name).string(), rec);
            }
        }
    }
    for (auto& [steps, v] : sweep_ssim) {
        std::sort(v.begin(), v.end());
        std::snprintf(buf, sizeof buf, "# steps,%d,median_ssim_vs_orig,%.9g\n", steps,
                      v.empty() ? 0.0 : v[v.size() / 2]);
        rep << buf;
    }
    std::cout << "reconstruct: " << pick.rows.size() << " volumes, steps";
    for (int s : steps_list) std::cout << " " << s;
    std::cout << "\n";
    return 0;
}

// direction from training-split semantic codes, oriented by --towards
latentops::DirectionVector disease_direction(const PipelineConfig& cfg,
                                             const pipeline::DataSplits& splits,
                                             latentops::Models& m, const std::string& towards) {
    std::vector<std::pair<Tensor, int>> codes;
    for (int r : splits.train_rows) {
        Volume vol = pipeline::load_row_volume(cfg.data_dir, splits.rows[r]);
        codes.emplace_back(m.enc->forward(vol.to_tensor()), splits.rows[r].disease_label);
    }
    latentops::DirectionVector dir = latentops::fit_direction(codes);
    // fit orients +w toward disease_label == 1 (diseased)
    if (towards == "healthy") {
        dir.w.scale_(-1.0);
        dir.b = -dir.b;
        dir.positive_class_label = 0;
    } else if (towards != "diseased") {
        throw InvalidParams("--towards expects healthy or diseased");
    }
    return dir;
}

int cmd_manipulate(const Options& opt) {
    const PipelineConfig& cfg = opt.cfg;
    config::write_effective_config(cfg, cfg.out_dir);
    pipeline::Runtime rt = pipeline::load_runtime(cfg, opt.voxel);
    latentops::Models m = rt.models();
    auto splits = pipeline::load_splits(manifest_path(cfg));
    latentops::DirectionVector dir = disease_direction(cfg, splits, m, opt.towards);

    SubjectPick pick = pick_test_rows(splits, opt.subjects_cap, opt.subject_filter);
    fs::create_directories(fs::path(cfg.out_dir) / "manip");
    auto rep = open_report(cfg, "manip_metrics.csv");
    rep << "subject_id,session_id,disease_label,towards,alpha,ventricle_voxels,ssim_vs_alpha0\n";
    char buf[256];

    // one inversion per subject baseline session, reused across the sweep
    auto groups = phantom::group_rows_by_subject(splits.rows);
    for (const auto& g : groups) {
        if (splits.rows[g[0]].split != "test") continue;
        bool picked = false;
        for (int r : pick.rows) picked |= (r == g[0]);
        if (!picked) continue;
        const auto& row = splits.rows[g[0]];
        Volume orig = pipeline::load_row_volume(cfg.data_dir, row);
        latentops::DualCode code = latentops::encode_dual(m, orig, cfg.invert_steps);
        Volume base;
        for (double alpha : opt.alphas) {
            Volume out = latentops::manipulate(m, code, dir, alpha, cfg.steps);
            if (alpha == opt.alphas.front()) base = out;
            std::snprintf(buf, sizeof buf, "%s,%s,%d,%s,%.4f,%lld,%.9g\n", row.subject_id.c_str(),
                          row.session_id.c_str(), row.disease_label, opt.towards.c_str(), alpha,
                          static_cast<long long>(phantom::measure_ventricle_volume(out)),
                          evaluation::ssim3d(out, base));
            rep << buf;
            char aname[64];
            std::snprintf(aname, sizeof aname, "_alpha%.2f.vol", alpha);
            write_volume_file(
                (fs::path(cfg.out_dir) / "manip" / (row.subject_id + aname)).string(), out);
        }
    }
    std::cout << "manipulate: towards " << opt.towards << ", alphas " << opt.alphas.size() << "\n";
    return 0;
}

int cmd_interpolate(const Options& opt) {
    const PipelineConfig& cfg = opt.cfg;
    config::write_effective_config(cfg, cfg.out_dir);
    pipeline::Runtime rt = pipeline::load_runtime(cfg, opt.voxel);
    latentops::Models m = rt.models();
    auto splits = pipeline::load_splits(manifest_path(cfg));

    auto groups = phantom::group_rows_by_subject(splits.rows);
    const std::vector<int>* group = nullptr;
    for (const auto& g : groups) {
        if (splits.rows[g[0]].split != "test" || g.size() < 2) continue;
        if (!opt.subject_filter.empty() && splits.rows[g[0]].subject_id != opt.subject_filter)
            continue;
        group = &g;
        break;
    }
    if (!group) throw InvalidParams("no test subject with two sessions found");
    const auto& start_row = splits.rows[group->front()];
    const auto& end_row = splits.rows[group->back()];
    Volume start = pipeline::load_row_volume(cfg.data_dir, start_row);
    Volume end = pipeline::load_row_volume(cfg.data_dir, end_row);

    Volume out = latentops::interpolate_pair(m, start, end, opt.t_value, cfg.steps,
                                             cfg.invert_steps);
    fs::create_directories(fs::path(cfg.out_dir) / "interp");
    char tname[64];
    std::snprintf(tname, sizeof tname, "_t%.3f.vol", opt.t_value);
    write_volume_file(
        (fs::path(cfg.out_dir) / "interp" / (start_row.subject_id + tname)).string(), out);

    auto rep = open_report(cfg, "interp_metrics.csv");
    rep << "subject_id,start_months,end_months,t,ventricle_voxels,ssim_vs_target_ae\n";
    double month = start_row.months + opt.t_value * (end_row.months - start_row.months);
    double ssim_target = -1.0;
    for (int r : *group) {
        if (std::abs(splits.rows[r].months - month) < 1e-9) {
            Volume target = pipeline::load_row_volume(cfg.data_dir, splits.rows[r]);
            ssim_target = evaluation::ssim3d(out, m.decode_image(m.encode_image(target)));
        }
    }
    char buf[192];
    std::snprintf(buf, sizeof buf, "%s,%d,%d,%.4f,%lld,%.9g\n", start_row.subject_id.c_str(),
                  start_row.months, end_row.months, opt.t_value,
                  static_cast<long long>(phantom::measure_ventricle_volume(out)), ssim_target);
    rep << buf;
    std::cout << "interpolate: " << start_row.subject_id << " t=" << opt.t_value << "\n";
    return 0;
}

int cmd_probe(const Options& opt) {
    const PipelineConfig& cfg = opt.cfg;
    config::write_effective_config(cfg, cfg.out_dir);
    pipeline::Runtime rt = pipeline::load_runtime(cfg, opt.voxel);
    auto splits = pipeline::load_splits(manifest_path(cfg));

    std::vector<Tensor> codes(splits.rows.size());
    std::vector<int> labels(splits.rows.size());
    std::vector<double> ages(splits.rows.size());
    for (std::size_t i = 0; i < splits.rows.size(); ++i) {
        Volume vol = pipeline::load_row_volume(cfg.data_dir, splits.rows[i]);
        codes[i] = rt.enc->forward(vol.to_tensor());
        labels[i] = splits.rows[i].disease_label;
        ages[i] = splits.rows[i].age_proxy;
    }

    auto cls = evaluation::run_probe_classification(codes, labels, splits.train_rows,
                                                    splits.test_rows, cfg.seed);
    auto reg = evaluation::run_probe_regression(codes, ages, splits.train_rows, splits.test_rows,
                                                cfg.seed);

    // predict-the-mean baseline for the age proxy
    double mean_age = 0.0;
    for (int r : splits.train_rows) mean_age += ages[r];
    mean_age /= static_cast<double>(splits.train_rows.size());
    double base_mae = 0.0;
    for (int r : splits.test_rows) base_mae += std::abs(ages[r] - mean_age);
    base_mae /= static_cast<double>(splits.test_rows.size());

    auto rep = open_report(cfg, "probe_report.csv");
    rep << "task,accuracy,precision,recall,f1,mcc,roc_auc,mae,rmse\n";
    char buf[256];
    std::snprintf(buf, sizeof buf, "disease,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,,\n",
                  cls.report.accuracy, cls.report.precision, cls.report.recall, cls.report.f1,
                  cls.report.mcc, cls.report.roc_auc);
    rep << buf;
    std::snprintf(buf, sizeof buf, "age_proxy,,,,,,,%.9g,%.9g\n", reg.mae, reg.rmse);
    rep << buf;
    std::snprintf(buf, sizeof buf, "age_proxy_mean_baseline,,,,,,,%.9g,\n", base_mae);
    rep << buf;
    rep << "# reference (full-scale, not reproduced here): AD vs CN acc 0.8365, prec 0.8469, rec "
           "0.9102, f1 0.8774, mcc 0.6369, auc 0.8948; age MAE 4.16 y, RMSE 5.23 y\n";

    // LDA projection of all semantic codes
    auto coords = evaluation::lda_project(codes, labels);
    auto lda = open_report(cfg, "lda_coords.csv");
    lda << "sample_id,x,y,label\n";
    for (std::size_t i = 0; i < coords.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s_%s,%.9g,%.9g,%d\n", splits.rows[i].subject_id.c_str(),
                      splits.rows[i].session_id.c_str(), coords[i][0], coords[i][1], labels[i]);
        lda << buf;
    }
    std::cout << "probe: disease auc " << cls.report.roc_auc << ", age mae " << reg.mae
              << " (mean baseline " << base_mae << ")\n";
    return 0;
}

int cmd_benchmark(const Options& opt) {
    const PipelineConfig& cfg = opt.cfg;
    config::write_effective_config(cfg, cfg.out_dir);
    pipeline::Runtime rt = pipeline::load_runtime(cfg, opt.voxel);
    latentops::Models m = rt.models();
    auto splits = pipeline::load_splits(manifest_path(cfg));
    int cap = opt.subjects_cap > 0 ? opt.subjects_cap : cfg.bench_subjects;
    auto tasks = evaluation::enumerate_triplets(splits.rows, "test", cap);
    auto summary = evaluation::run_interpolation_benchmark(m, splits.rows, cfg.data_dir, tasks,
                                                           cfg.steps, cfg.invert_steps);
    fs::create_directories(fs::path(cfg.out_dir) / "reports");
    evaluation::write_interpolation_csv(
        (fs::path(cfg.out_dir) / "reports" / "interp_benchmark.csv").string(), summary,
        config::config_hash(cfg), cfg.seed);
    std::cout << "benchmark: " << tasks.size() << " triplets\n";
    return 0;
}

int cmd_bench_efficiency(const Options& opt) {
    const PipelineConfig& cfg = opt.cfg;
    config::write_effective_config(cfg, cfg.out_dir);

    pipeline::Runtime latent_rt = pipeline::load_runtime(cfg, false);
    pipeline::Runtime voxel_rt;
    try {
        voxel_rt = pipeline::load_runtime(cfg, true);
    } catch (const MissingParent& e) {
        std::cerr << "bench-efficiency: voxel baseline unavailable: " << e.what() << "\n";
        return 5;
    }

    auto splits = pipeline::load_splits(manifest_path(cfg));
    if (splits.test_rows.empty()) throw InvalidParams("no test volumes for the benchmark");
    Volume vol = pipeline::load_row_volume(cfg.data_dir, splits.rows[splits.test_rows[0]]);

    auto time_pipeline = [&](pipeline::Runtime& rt, int steps) {
        latentops::Models m = rt.models();
        // warm-up then timed repetitions of the full reconstruction
        latentops::DualCode warm = latentops::encode_dual(m, vol, steps);
        latentops::decode_dual(m, warm, steps);
        std::vector<double> ms;
        for (int rep = 0; rep < cfg.bench_reps; ++rep) {
            auto t0 = std::chrono::steady_clock::now();
            latentops::DualCode code = latentops::encode_dual(m, vol, steps);
            latentops::decode_dual(m, code, steps);
            auto t1 = std::chrono::steady_clock::now();
            ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        std::sort(ms.begin(), ms.end());
        return ms[ms.size() / 2];
    };

    int steps = cfg.table_steps;
    double latent_full = time_pipeline(latent_rt, steps);
    double voxel_full = time_pipeline(voxel_rt, steps);
    double latent_half = time_pipeline(latent_rt, steps / 2);
    double voxel_half = time_pipeline(voxel_rt, steps / 2);

    auto rep = open_report(cfg, "efficiency.csv");
    rep << "pipeline,steps,median_ms,reps\n";
    char buf[192];
    std::snprintf(buf, sizeof buf, "latent,%d,%.3f,%d\n", steps, latent_full, cfg.bench_reps);
    rep << buf;
    std::snprintf(buf, sizeof buf, "voxel,%d,%.3f,%d\n", steps, voxel_full, cfg.bench_reps);
    rep << buf;
    std::snprintf(buf, sizeof buf, "latent,%d,%.3f,%d\n", steps / 2, latent_half, cfg.bench_reps);
    rep << buf;
    std::snprintf(buf, sizeof buf, "voxel,%d,%.3f,%d\n", steps / 2, voxel_half, cfg.bench_reps);
    rep << buf;
    std::snprintf(buf, sizeof buf, "# speedup_at_T%d,%.3f\n", steps, voxel_full / latent_full);
    rep << buf;
    std::snprintf(buf, sizeof buf, "# step_scaling,latent,%.3f,voxel,%.3f\n",
                  latent_full / latent_half, voxel_full / voxel_half);
    rep << buf;
    rep << "# reference (full-scale, not reproduced here): ~6 s latent vs ~120 s voxel at T=100 "
           "(20x)\n";

    std::cout << "bench-efficiency: latent " << latent_full << " ms vs voxel " << voxel_full
              << " ms at T=" << steps << " -> speedup " << voxel_full / latent_full << "x\n";
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    if (args.empty()) {
        std::cerr << "usage: ldae <command> [flags]\n"
                  << "commands: gen-data train-ae train-ldm train-ldae reconstruct manipulate "
                     "interpolate probe benchmark bench-efficiency\n";
        return 2;
    }
    try {
        Options opt = parse_options(args, 1);
        const std::string& cmd = args[0];
        if (cmd == "gen-data") return cmd_gen_data(opt);
        if (cmd == "train-ae") return cmd_train_ae(opt);
        if (cmd == "train-ldm") return cmd_train_ldm(opt);
        if (cmd == "train-ldae") return cmd_train_ldae(opt);
        if (cmd == "reconstruct") return cmd_reconstruct(opt);
        if (cmd == "manipulate") return cmd_manipulate(opt);
        if (cmd == "interpolate") return cmd_interpolate(opt);
        if (cmd == "probe") return cmd_probe(opt);
        if (cmd == "benchmark") return cmd_benchmark(opt);
        if (cmd == "bench-efficiency") return cmd_bench_efficiency(opt);
        std::cerr << "unknown command: " << cmd << "\n";
        return 2;
    } catch (const MissingParent& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const Diverged& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace ldae::cli
