#include "ldae/pipeline.hpp"

#include <filesystem>

namespace fs = std::filesystem;

namespace ldae::pipeline {

DataSplits load_splits(const std::string& manifest_path) {
    DataSplits out;
    out.rows = phantom::read_manifest(manifest_path);
    for (int i = 0; i < static_cast<int>(out.rows.size()); ++i) {
        const std::string& s = out.rows[i].split;
        if (s == "train")
            out.train_rows.push_back(i);
        else if (s == "val")
            out.val_rows.push_back(i);
        else if (s == "test")
            out.test_rows.push_back(i);
        else
            throw InvalidParams("unknown split value: " + s);
    }
    return out;
}

Volume load_row_volume(const std::string& data_dir, const phantom::ManifestRow& row) {
    return read_volume_file_single((fs::path(data_dir) / row.path).string());
}

std::vector<Volume> load_volumes(const std::string& data_dir,
                                 const std::vector<phantom::ManifestRow>& rows,
                                 const std::vector<int>& indices) {
    std::vector<Volume> out;
    out.reserve(indices.size());
    for (int i : indices) out.push_back(load_row_volume(data_dir, rows[i]));
    return out;
}

std::string checkpoint_path(const config::PipelineConfig& cfg, const std::string& stage) {
    return (fs::path(cfg.out_dir) / "checkpoints" / (stage + ".ckpt")).string();
}

namespace {

void add_adam(ckpt::Checkpoint& c, const nets::Adam& adam, const nets::ParamList& params,
              const std::string& prefix) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        c.add_tensor_precise(prefix + ".m." + params[i].name, adam.m_[i]);
        c.add_tensor_precise(prefix + ".v." + params[i].name, adam.v_[i]);
    }
}

void load_adam(const ckpt::Checkpoint& c, nets::Adam& adam, const nets::ParamList& params,
               const std::string& prefix, std::int64_t steps) {
    adam.init(params);
    for (std::size_t i = 0; i < params.size(); ++i) {
        adam.m_[i] = c.tensor(prefix + ".m." + params[i].name);
        adam.v_[i] = c.tensor(prefix + ".v." + params[i].name);
    }
    adam.step_ = steps;
}

void add_shadow(ckpt::Checkpoint& c, const std::vector<Tensor>& shadow,
                const nets::ParamList& params, const std::string& prefix) {
    for (std::size_t i = 0; i < params.size(); ++i)
        c.add_tensor_precise(prefix + params[i].name, shadow[i]);
}

std::vector<Tensor> load_shadow(const ckpt::Checkpoint& c, const nets::ParamList& params,
                                const std::string& prefix) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& np : params) out.push_back(c.tensor(prefix + np.name));
    return out;
}

schedule::NoiseSchedule schedule_of(const config::PipelineConfig& cfg) {
    return schedule::make_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end, cfg.gamma);
}

}  // namespace

ckpt::Checkpoint capture_ae(compression::AeState& state, const config::PipelineConfig& cfg,
                            const compression::LatentScaler& scaler) {
    ckpt::Checkpoint c;
    c.stage = "ae";
    c.seed = cfg.seed;
    c.parent_hash = "";
    c.set_schedule(schedule_of(cfg));
    c.scaler = scaler.scale;
    c.specs["compressor"] = state.net->spec();
    nets::ParamList params = state.net->params();
    c.add_params(params, "cur.", true);
    add_adam(c, state.adam, params, "opt");
    if (!state.best_values.empty()) add_shadow(c, state.best_values, params, "best.");
    c.extra["epochs_done"] = state.epochs_done;
    c.extra["best_epoch"] = state.best_epoch;
    c.extra["best_val_ssim"] = state.best_val_ssim;
    c.extra["final_loss"] = state.final_loss;
    c.extra["adam_steps"] = state.adam.steps_taken();
    return c;
}

void restore_ae(const ckpt::Checkpoint& c, compression::AeState& state, double lr) {
    state.adam = nets::Adam(lr);
    state.net = std::make_unique<nets::CompressionAE>(c.specs.at("compressor"), c.seed);
    nets::ParamList params = state.net->params();
    c.load_params(params, "cur.");
    state.epochs_done = c.extra.at("epochs_done").get<int>();
    state.best_epoch = c.extra.at("best_epoch").get<int>();
    state.best_val_ssim = c.extra.at("best_val_ssim").get<double>();
    state.final_loss = c.extra.at("final_loss").get<double>();
    load_adam(c, state.adam, params, "opt", c.extra.at("adam_steps").get<std::int64_t>());
    if (c.find("best." + params[0].name)) state.best_values = load_shadow(c, params, "best.");
}

ckpt::Checkpoint capture_ldm(training::LdmState& state, const config::PipelineConfig& cfg,
                             const nets::NetworkSpec& spec, bool voxel, double scaler,
                             const std::string& parent_hash) {
    ckpt::Checkpoint c;
    c.stage = voxel ? "ldm_voxel" : "ldm";
    c.seed = cfg.seed;
    c.parent_hash = parent_hash;
    c.set_schedule(schedule_of(cfg));
    c.scaler = scaler;
    c.specs["eps_unet"] = spec;
    nets::ParamList params = state.net->params();
    c.add_params(params, "cur.", true);
    add_adam(c, state.adam, params, "opt");
    add_shadow(c, state.ema.shadow, params, "ema.");
    c.extra["epochs_done"] = state.epochs_done;
    c.extra["final_loss"] = state.final_loss;
    c.extra["adam_steps"] = state.adam.steps_taken();
    return c;
}

void restore_ldm(const ckpt::Checkpoint& c, training::LdmState& state, double lr) {
    state.adam = nets::Adam(lr);
    state.net = std::make_unique<nets::UNet3d>(c.specs.at("eps_unet"), c.seed);
    nets::ParamList params = state.net->params();
    c.load_params(params, "cur.");
    state.epochs_done = c.extra.at("epochs_done").get<int>();
    state.final_loss = c.extra.at("final_loss").get<double>();
    load_adam(c, state.adam, params, "opt", c.extra.at("adam_steps").get<std::int64_t>());
    state.ema = nets::Ema(params);
    state.ema.shadow = load_shadow(c, params, "ema.");
}

ckpt::Checkpoint capture_ldae(training::LdaeState& state, const config::PipelineConfig& cfg,
                              bool voxel, double scaler, const std::string& parent_hash) {
    ckpt::Checkpoint c;
    c.stage = voxel ? "ldae_voxel" : "ldae";
    c.seed = cfg.seed;
    c.parent_hash = parent_hash;
    c.set_schedule(schedule_of(cfg));
    c.scaler = scaler;
    c.specs["semantic_enc"] = state.enc->spec_;
    nets::ParamList enc_params = state.enc->params();
    nets::ParamList g_params = state.g->params();
    c.add_params(enc_params, "enc_cur.", true);
    c.add_params(g_params, "g_cur.", true);
    add_adam(c, state.enc_adam, enc_params, "enc_opt");
    add_adam(c, state.g_adam, g_params, "g_opt");
    add_shadow(c, state.enc_ema.shadow, enc_params, "enc_ema.");
    add_shadow(c, state.g_ema.shadow, g_params, "g_ema.");
    if (!state.best_enc_shadow.empty()) {
        add_shadow(c, state.best_enc_shadow, enc_params, "enc_best.");
        add_shadow(c, state.best_g_shadow, g_params, "g_best.");
    }
    c.extra["epochs_done"] = state.epochs_done;
    c.extra["best_epoch"] = state.best_epoch;
    c.extra["best_val_ssim"] = state.best_val_ssim;
    c.extra["final_loss"] = state.final_loss;
    c.extra["enc_adam_steps"] = state.enc_adam.steps_taken();
    c.extra["g_adam_steps"] = state.g_adam.steps_taken();
    return c;
}

void restore_ldae(const ckpt::Checkpoint& c, training::LdaeState& state, double lr) {
    // state.enc/state.g must already be constructed against the frozen UNet
    state.enc_adam = nets::Adam(lr);
    state.g_adam = nets::Adam(lr);
    nets::ParamList enc_params = state.enc->params();
    nets::ParamList g_params = state.g->params();
    c.load_params(enc_params, "enc_cur.");
    c.load_params(g_params, "g_cur.");
    state.epochs_done = c.extra.at("epochs_done").get<int>();
    state.best_epoch = c.extra.at("best_epoch").get<int>();
    state.best_val_ssim = c.extra.at("best_val_ssim").get<double>();
    state.final_loss = c.extra.at("final_loss").get<double>();
    load_adam(c, state.enc_adam, enc_params, "enc_opt",
              c.extra.at("enc_adam_steps").get<std::int64_t>());
    load_adam(c, state.g_adam, g_params, "g_opt", c.extra.at("g_adam_steps").get<std::int64_t>());
    state.enc_ema = nets::Ema(enc_params);
    state.enc_ema.shadow = load_shadow(c, enc_params, "enc_ema.");
    state.g_ema = nets::Ema(g_params);
    state.g_ema.shadow = load_shadow(c, g_params, "g_ema.");
    if (c.find("enc_best." + enc_params[0].name)) {
        state.best_enc_shadow = load_shadow(c, enc_params, "enc_best.");
        state.best_g_shadow = load_shadow(c, g_params, "g_best.");
    }
}

latentops::Models Runtime::models() {
    latentops::Models m;
    m.sched = &sched;
    m.ae = ae.get();
    m.scaler = scaler;
    m.eps = eps.get();
    m.g = g.get();
    m.enc = enc.get();
    return m;
}

AeRuntime load_ae_runtime(const config::PipelineConfig& cfg) {
    AeRuntime rt;
    ckpt::Checkpoint c = ckpt::load_checkpoint(checkpoint_path(cfg, "ae"));
    rt.ae = std::make_unique<nets::CompressionAE>(c.specs.at("compressor"), c.seed);
    nets::ParamList params = rt.ae->params();
    if (c.find("best." + params[0].name))
        c.load_params(params, "best.");
    else
        c.load_params(params, "cur.");
    rt.scaler.scale = c.scaler;
    rt.best_val_ssim = c.extra.at("best_val_ssim").get<double>();
    return rt;
}

Runtime load_runtime(const config::PipelineConfig& cfg, bool voxel) {
    Runtime rt;
    std::string ldm_name = voxel ? "ldm_voxel" : "ldm";
    std::string ldae_name = voxel ? "ldae_voxel" : "ldae";
    std::string ldm_path = checkpoint_path(cfg, ldm_name);
    std::string ldae_path = checkpoint_path(cfg, ldae_name);

    ckpt::Checkpoint cl = ckpt::load_checkpoint(ldm_path);
    if (!voxel) {
        std::string ae_path = checkpoint_path(cfg, "ae");
        ckpt::Checkpoint ca = ckpt::load_checkpoint(ae_path);
        if (cl.parent_hash != ckpt::file_hash_hex(ae_path))
            throw MissingParent("ldm checkpoint does not chain to the ae checkpoint");
        rt.ae = std::make_unique<nets::CompressionAE>(ca.specs.at("compressor"), ca.seed);
        nets::ParamList ae_params = rt.ae->params();
        if (ca.find("best." + ae_params[0].name))
            ca.load_params(ae_params, "best.");
        else
            ca.load_params(ae_params, "cur.");
        rt.scaler.scale = ca.scaler;
    }
    rt.sched = cl.make_schedule();
    rt.eps = std::make_unique<nets::UNet3d>(cl.specs.at("eps_unet"), cl.seed);
    {
        nets::ParamList p = rt.eps->params();
        cl.load_params(p, "ema.");
    }

    ckpt::Checkpoint cd = ckpt::load_checkpoint(ldae_path);
    if (cd.parent_hash != ckpt::file_hash_hex(ldm_path))
        throw MissingParent("ldae checkpoint does not chain to the ldm checkpoint");
    rt.enc = std::make_unique<nets::SemanticEncoder>(cd.specs.at("semantic_enc"), cd.seed);
    rt.g = std::make_unique<nets::GradEstimator>(rt.eps.get(), cd.seed + 1);
    {
        nets::ParamList ep = rt.enc->params();
        nets::ParamList gp = rt.g->params();
        if (cd.find("enc_best." + ep[0].name)) {
            cd.load_params(ep, "enc_best.");
            cd.load_params(gp, "g_best.");
        } else {
            cd.load_params(ep, "enc_ema.");
            cd.load_params(gp, "g_ema.");
        }
    }
    return rt;
}

}  // namespace ldae::pipeline
