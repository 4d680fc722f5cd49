#include "ldae/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "ldae/common.hpp"

namespace ldae::ckpt {

namespace {
constexpr char kMagic[9] = {'L', 'D', 'A', 'E', 'C', 'K', 'P', 'T', '1'};
}

nlohmann::ordered_json spec_to_json(const nets::NetworkSpec& spec) {
    nlohmann::ordered_json j;
    j["role"] = spec.role;
    j["in_channels"] = spec.in_channels;
    j["channels"] = spec.channels;
    j["groups"] = spec.groups;
    j["t_dim"] = spec.t_dim;
    j["attn_deepest"] = spec.attn_deepest;
    j["attn_heads"] = spec.attn_heads;
    j["d_sem"] = spec.d_sem;
    j["tower_channels"] = spec.tower_channels;
    j["in_h"] = spec.in_h;
    j["in_w"] = spec.in_w;
    j["c_lat"] = spec.c_lat;
    j["f"] = spec.f;
    j["comp_channels"] = spec.comp_channels;
    return j;
}

nets::NetworkSpec spec_from_json(const nlohmann::ordered_json& j) {
    nets::NetworkSpec spec;
    spec.role = j.at("role").get<std::string>();
    spec.in_channels = j.at("in_channels").get<int>();
    spec.channels = j.at("channels").get<std::vector<int>>();
    spec.groups = j.at("groups").get<int>();
    spec.t_dim = j.at("t_dim").get<int>();
    spec.attn_deepest = j.at("attn_deepest").get<bool>();
    spec.attn_heads = j.at("attn_heads").get<int>();
    spec.d_sem = j.at("d_sem").get<int>();
    spec.tower_channels = j.at("tower_channels").get<std::vector<int>>();
    spec.in_h = j.at("in_h").get<int>();
    spec.in_w = j.at("in_w").get<int>();
    spec.c_lat = j.at("c_lat").get<int>();
    spec.f = j.at("f").get<int>();
    spec.comp_channels = j.at("comp_channels").get<std::vector<int>>();
    return spec;
}

void Checkpoint::set_schedule(const schedule::NoiseSchedule& s) {
    schedule_T = s.T;
    beta_start = s.beta_start;
    beta_end = s.beta_end;
    gamma = s.gamma;
    beta_hash = to_hex(s.beta_hash());
}

schedule::NoiseSchedule Checkpoint::make_schedule() const {
    auto s = schedule::make_linear_schedule(schedule_T, beta_start, beta_end, gamma);
    if (to_hex(s.beta_hash()) != beta_hash)
        throw IoError("checkpoint schedule hash mismatch (corrupted metadata?)");
    return s;
}

void Checkpoint::add_tensor(const std::string& name, const Tensor& t) {
    TensorEntry e;
    e.name = name;
    e.shape = t.shape;
    e.data.resize(t.v.size());
    for (std::size_t i = 0; i < t.v.size(); ++i) e.data[i] = static_cast<float>(t.v[i]);
    tensors.push_back(std::move(e));
}

void Checkpoint::add_tensor_precise(const std::string& name, const Tensor& t) {
    add_tensor(name, t);
    Tensor lo(t.shape);
    for (std::int64_t i = 0; i < t.numel(); ++i)
        lo.v[i] = t.v[i] - static_cast<double>(static_cast<float>(t.v[i]));
    add_tensor(name + ".lo", lo);
}

void Checkpoint::add_params(const nets::ParamList& params, const std::string& prefix,
                            bool precise) {
    for (const auto& np : params) {
        if (precise)
            add_tensor_precise(prefix + np.name, np.p->value);
        else
            add_tensor(prefix + np.name, np.p->value);
    }
}

void Checkpoint::add_ema(const nets::Ema& ema, const nets::ParamList& params,
                         const std::string& prefix) {
    for (std::size_t i = 0; i < params.size(); ++i) add_tensor(prefix + params[i].name, ema.shadow[i]);
}

const TensorEntry* Checkpoint::find(const std::string& name) const {
    for (const auto& e : tensors)
        if (e.name == name) return &e;
    return nullptr;
}

Tensor Checkpoint::tensor(const std::string& name) const {
    const TensorEntry* e = find(name);
    if (!e) throw IoError("checkpoint tensor missing: " + name);
    Tensor t(e->shape);
    for (std::size_t i = 0; i < e->data.size(); ++i) t.v[i] = static_cast<double>(e->data[i]);
    if (const TensorEntry* lo = find(name + ".lo"))
        for (std::size_t i = 0; i < lo->data.size(); ++i) t.v[i] += static_cast<double>(lo->data[i]);
    return t;
}

void Checkpoint::load_params(nets::ParamList params, const std::string& prefix) const {
    for (auto& np : params) {
        const TensorEntry* e = find(prefix + np.name);
        if (!e) throw IoError("checkpoint tensor missing: " + prefix + np.name);
        if (e->shape != np.p->value.shape)
            throw ShapeMismatch("checkpoint tensor " + np.name + " shape differs");
        np.p->value = tensor(prefix + np.name);
    }
}

nets::Ema Checkpoint::load_ema(const nets::ParamList& params, const std::string& prefix) const {
    nets::Ema ema(params);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const TensorEntry* e = find(prefix + params[i].name);
        if (!e) throw IoError("checkpoint ema tensor missing: " + prefix + params[i].name);
        if (e->shape != params[i].p->value.shape)
            throw ShapeMismatch("checkpoint ema tensor " + params[i].name + " shape differs");
        ema.shadow[i] = tensor(prefix + params[i].name);
    }
    return ema;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
    nlohmann::ordered_json meta;
    meta["stage"] = c.stage;
    meta["seed"] = c.seed;
    meta["parent_hash"] = c.parent_hash;
    meta["schedule"] = {{"T", c.schedule_T},
                        {"beta_start", c.beta_start},
                        {"beta_end", c.beta_end},
                        {"gamma", c.gamma},
                        {"beta_hash", c.beta_hash}};
    meta["scaler"] = c.scaler;
    nlohmann::ordered_json jspecs = nlohmann::ordered_json::object();
    for (const auto& [name, spec] : c.specs) jspecs[name] = spec_to_json(spec);
    meta["specs"] = jspecs;
    meta["extra"] = c.extra.is_null() ? nlohmann::ordered_json::object() : c.extra;
    nlohmann::ordered_json jt = nlohmann::ordered_json::array();
    for (const auto& e : c.tensors)
        jt.push_back({{"name", e.name}, {"shape", e.shape}, {"bytes", e.data.size() * 4}});
    meta["tensors"] = jt;

    std::string meta_str = meta.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint: " + path);
    os.write(kMagic, 9);
    std::uint32_t len = static_cast<std::uint32_t>(meta_str.size());
    unsigned char lb[4] = {static_cast<unsigned char>(len), static_cast<unsigned char>(len >> 8),
                           static_cast<unsigned char>(len >> 16), static_cast<unsigned char>(len >> 24)};
    os.write(reinterpret_cast<const char*>(lb), 4);
    os.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    for (const auto& e : c.tensors)
        os.write(reinterpret_cast<const char*>(e.data.data()),
                 static_cast<std::streamsize>(e.data.size() * 4));
    if (!os) throw IoError("short checkpoint write: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingParent("checkpoint not found: " + path);
    char magic[9];
    is.read(magic, 9);
    if (!is || std::memcmp(magic, kMagic, 9) != 0) throw IoError("bad checkpoint magic: " + path);
    unsigned char lb[4];
    is.read(reinterpret_cast<char*>(lb), 4);
    std::uint32_t len = static_cast<std::uint32_t>(lb[0]) | (static_cast<std::uint32_t>(lb[1]) << 8) |
                        (static_cast<std::uint32_t>(lb[2]) << 16) |
                        (static_cast<std::uint32_t>(lb[3]) << 24);
    std::string meta_str(len, '\0');
    is.read(meta_str.data(), len);
    if (!is) throw IoError("truncated checkpoint metadata: " + path);
    nlohmann::ordered_json meta = nlohmann::ordered_json::parse(meta_str);

    Checkpoint c;
    c.stage = meta.at("stage").get<std::string>();
    c.seed = meta.at("seed").get<std::uint64_t>();
    c.parent_hash = meta.at("parent_hash").get<std::string>();
    const auto& js = meta.at("schedule");
    c.schedule_T = js.at("T").get<int>();
    c.beta_start = js.at("beta_start").get<double>();
    c.beta_end = js.at("beta_end").get<double>();
    c.gamma = js.at("gamma").get<double>();
    c.beta_hash = js.at("beta_hash").get<std::string>();
    c.scaler = meta.at("scaler").get<double>();
    for (auto it = meta.at("specs").begin(); it != meta.at("specs").end(); ++it)
        c.specs[it.key()] = spec_from_json(it.value());
    c.extra = meta.at("extra");

    for (const auto& jt : meta.at("tensors")) {
        TensorEntry e;
        e.name = jt.at("name").get<std::string>();
        e.shape = jt.at("shape").get<std::vector<int>>();
        std::size_t bytes = jt.at("bytes").get<std::size_t>();
        std::int64_t n = 1;
        for (int d : e.shape) n *= d;
        if (bytes != static_cast<std::size_t>(n) * 4)
            throw IoError("checkpoint tensor " + e.name + " byte/shape mismatch");
        e.data.resize(static_cast<std::size_t>(n));
        is.read(reinterpret_cast<char*>(e.data.data()), static_cast<std::streamsize>(bytes));
        if (!is) throw IoError("truncated checkpoint blob: " + e.name);
        c.tensors.push_back(std::move(e));
    }
    is.peek();
    if (!is.eof()) throw IoError("trailing bytes after checkpoint blobs: " + path);
    return c;
}

std::string file_hash_hex(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot hash missing file: " + path);
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return to_hex(fnv1a64(bytes.data(), bytes.size()));
}

}  // namespace ldae::ckpt
