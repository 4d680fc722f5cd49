#include "ldae/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ldae/common.hpp"

namespace fs = std::filesystem;

namespace ldae::config {

phantom::CohortConfig PipelineConfig::cohort_config() const {
    phantom::CohortConfig c;
    c.dims = {dims, dims, dims};
    c.disease_fraction = disease_fraction;
    c.disease_threshold = disease_threshold;
    c.texture_amplitude = texture_amplitude;
    c.min_sessions = min_sessions;
    c.max_sessions = max_sessions;
    c.train_fraction = train_fraction;
    c.val_fraction_of_train = val_fraction;
    return c;
}

nets::NetworkSpec PipelineConfig::unet_spec() const {
    nets::NetworkSpec s;
    s.role = "eps_unet";
    s.in_channels = c_lat;
    s.channels = unet_channels;
    s.groups = groups;
    s.t_dim = t_dim;
    s.attn_heads = heads;
    s.d_sem = d_sem;
    return s;
}

nets::NetworkSpec PipelineConfig::voxel_unet_spec() const {
    nets::NetworkSpec s = unet_spec();
    s.in_channels = 1;
    s.channels = voxel_channels;
    return s;
}

nets::NetworkSpec PipelineConfig::semantic_spec() const {
    nets::NetworkSpec s;
    s.role = "semantic_enc";
    s.in_channels = 1;
    s.groups = groups;
    s.d_sem = d_sem;
    s.attn_heads = heads;
    s.tower_channels = tower_channels;
    s.in_h = dims;
    s.in_w = dims;
    return s;
}

nets::NetworkSpec PipelineConfig::compressor_spec() const {
    nets::NetworkSpec s;
    s.role = "compressor";
    s.in_channels = 1;
    s.groups = groups;
    s.c_lat = c_lat;
    s.f = f;
    s.comp_channels = comp_channels;
    return s;
}

namespace {

std::vector<int> parse_int_list(const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    if (out.empty()) throw InvalidParams("empty int list");
    return out;
}

std::string fmt_int_list(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::string fmt_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return buf;
}

void apply_profile(PipelineConfig& c, const std::string& profile) {
    if (profile == "fast16") {
        c.dims = 16;
        c.n_subjects = 48;
        c.comp_channels = {8, 16, 32};
        c.ae_epochs = 60;
        c.unet_channels = {32, 64};
        c.ldm_epochs = 60;
        c.ldae_epochs = 60;
        c.ema_decay = 0.99;
        c.voxel_channels = {16, 32};
    } else if (profile == "full32") {
        c.dims = 32;
        c.n_subjects = 60;
        c.comp_channels = {8, 16, 32};
        c.ae_epochs = 80;
        c.unet_channels = {32, 64};
        c.ldm_epochs = 80;
        c.ldae_epochs = 80;
        c.ema_decay = 0.99;
        c.voxel_channels = {16, 32};
    } else {
        throw InvalidParams("unknown profile: " + profile);
    }
    c.profile = profile;
}

struct Field {
    std::function<void(PipelineConfig&, const std::string&)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

const std::vector<std::pair<std::string, Field>>& fields() {
    auto I = [](int PipelineConfig::* m) {
        return Field{[m](PipelineConfig& c, const std::string& v) { c.*m = std::stoi(v); },
                     [m](const PipelineConfig& c) { return std::to_string(c.*m); }};
    };
    auto D = [](double PipelineConfig::* m) {
        return Field{[m](PipelineConfig& c, const std::string& v) { c.*m = std::stod(v); },
                     [m](const PipelineConfig& c) { return fmt_double(c.*m); }};
    };
    auto S = [](std::string PipelineConfig::* m) {
        return Field{[m](PipelineConfig& c, const std::string& v) { c.*m = v; },
                     [m](const PipelineConfig& c) { return c.*m; }};
    };
    auto L = [](std::vector<int> PipelineConfig::* m) {
        return Field{[m](PipelineConfig& c, const std::string& v) { c.*m = parse_int_list(v); },
                     [m](const PipelineConfig& c) { return fmt_int_list(c.*m); }};
    };
    static const std::vector<std::pair<std::string, Field>> kFields = {
        {"profile", Field{[](PipelineConfig& c, const std::string& v) { apply_profile(c, v); },
                          [](const PipelineConfig& c) { return c.profile; }}},
        {"seed", Field{[](PipelineConfig& c, const std::string& v) { c.seed = std::stoull(v); },
                       [](const PipelineConfig& c) { return std::to_string(c.seed); }}},
        {"data_dir", S(&PipelineConfig::data_dir)},
        {"out_dir", S(&PipelineConfig::out_dir)},
        {"dims", I(&PipelineConfig::dims)},
        {"n_subjects", I(&PipelineConfig::n_subjects)},
        {"disease_fraction", D(&PipelineConfig::disease_fraction)},
        {"disease_threshold", D(&PipelineConfig::disease_threshold)},
        {"texture_amplitude", D(&PipelineConfig::texture_amplitude)},
        {"min_sessions", I(&PipelineConfig::min_sessions)},
        {"max_sessions", I(&PipelineConfig::max_sessions)},
        {"train_fraction", D(&PipelineConfig::train_fraction)},
        {"val_fraction", D(&PipelineConfig::val_fraction)},
        {"T", I(&PipelineConfig::T)},
        {"beta_start", D(&PipelineConfig::beta_start)},
        {"beta_end", D(&PipelineConfig::beta_end)},
        {"gamma", D(&PipelineConfig::gamma)},
        {"f", I(&PipelineConfig::f)},
        {"c_lat", I(&PipelineConfig::c_lat)},
        {"comp_channels", L(&PipelineConfig::comp_channels)},
        {"ae_epochs", I(&PipelineConfig::ae_epochs)},
        {"ae_batch", I(&PipelineConfig::ae_batch)},
        {"ae_lr", D(&PipelineConfig::ae_lr)},
        {"kl_weight", D(&PipelineConfig::kl_weight)},
        {"unet_channels", L(&PipelineConfig::unet_channels)},
        {"t_dim", I(&PipelineConfig::t_dim)},
        {"heads", I(&PipelineConfig::heads)},
        {"groups", I(&PipelineConfig::groups)},
        {"ldm_epochs", I(&PipelineConfig::ldm_epochs)},
        {"ldm_batch", I(&PipelineConfig::ldm_batch)},
        {"ldm_lr", D(&PipelineConfig::ldm_lr)},
        {"ema_decay", D(&PipelineConfig::ema_decay)},
        {"d_sem", I(&PipelineConfig::d_sem)},
        {"tower_channels", L(&PipelineConfig::tower_channels)},
        {"ldae_epochs", I(&PipelineConfig::ldae_epochs)},
        {"ldae_batch", I(&PipelineConfig::ldae_batch)},
        {"ldae_lr", D(&PipelineConfig::ldae_lr)},
        {"val_substeps", I(&PipelineConfig::val_substeps)},
        {"voxel_channels", L(&PipelineConfig::voxel_channels)},
        {"voxel_ldm_epochs", I(&PipelineConfig::voxel_ldm_epochs)},
        {"voxel_ldae_epochs", I(&PipelineConfig::voxel_ldae_epochs)},
        {"steps", I(&PipelineConfig::steps)},
        {"invert_steps", I(&PipelineConfig::invert_steps)},
        {"table_steps", I(&PipelineConfig::table_steps)},
        {"bench_subjects", I(&PipelineConfig::bench_subjects)},
        {"bench_reps", I(&PipelineConfig::bench_reps)},
    };
    return kFields;
}

const Field* find_field(const std::string& key) {
    for (const auto& [k, f] : fields())
        if (k == key) return &f;
    return nullptr;
}

}  // namespace

KeyValues parse_config_text(const std::string& text) {
    KeyValues out;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos || line[start] == '#') continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw InvalidParams("config line missing '=': " + line);
        std::string key = line.substr(start, eq - start);
        std::string val = line.substr(eq + 1);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        std::size_t vs = val.find_first_not_of(" \t");
        val = vs == std::string::npos ? "" : val.substr(vs);
        out.emplace_back(key, val);
    }
    return out;
}

KeyValues read_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read config: " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

PipelineConfig make_config(const KeyValues& file_pairs, const KeyValues& overrides) {
    PipelineConfig cfg;
    auto apply = [&](const KeyValues& pairs, bool profile_only) {
        for (const auto& [k, v] : pairs) {
            if ((k == "profile") != profile_only) continue;
            const Field* f = find_field(k);
            if (!f) throw InvalidParams("unknown config key: " + k);
            f->set(cfg, v);
        }
    };
    // profile presets first so explicit keys override them
    apply(file_pairs, true);
    apply(overrides, true);
    apply(file_pairs, false);
    apply(overrides, false);
    return cfg;
}

std::string canonical_text(const PipelineConfig& cfg) {
    std::string out;
    for (const auto& [k, f] : fields()) out += k + "=" + f.get(cfg) + "\n";
    return out;
}

std::uint64_t config_hash(const PipelineConfig& cfg) {
    // paths do not shape the data, so outputs stay comparable across
    // working directories
    std::string out;
    for (const auto& [k, f] : fields())
        if (k != "data_dir" && k != "out_dir") out += k + "=" + f.get(cfg) + "\n";
    return fnv1a64(out);
}

void write_effective_config(const PipelineConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream os(fs::path(out_dir) / "effective_config.txt", std::ios::binary);
    if (!os) throw IoError("cannot write effective config in " + out_dir);
    os << "# config_hash=" << to_hex(config_hash(cfg)) << "\n" << canonical_text(cfg);
}

}  // namespace ldae::config
