#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "ldae/networks.hpp"
#include "ldae/schedule.hpp"

namespace ldae::ckpt {

// "LDAECKPT1" container: magic, LE u32 metadata length, UTF-8 JSON metadata,
// then one raw f32 LE blob per tensor in metadata order. Loading verifies the
// blob byte accounting and the parent hash chain (ldae -> ldm -> ae).
struct TensorEntry {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
};

struct Checkpoint {
    std::string stage;  // ae | ldm | ldae | ldm_voxel | ldae_voxel
    std::uint64_t seed = 0;
    std::string parent_hash;  // hex of parent checkpoint file, empty at the chain root
    int schedule_T = 0;
    double beta_start = 0.0, beta_end = 0.0, gamma = 0.0;
    std::string beta_hash;
    double scaler = 1.0;
    std::map<std::string, nets::NetworkSpec> specs;
    nlohmann::ordered_json extra;  // stage-specific scalars (epochs_done, best score, ...)
    std::vector<TensorEntry> tensors;

    void set_schedule(const schedule::NoiseSchedule& s);
    schedule::NoiseSchedule make_schedule() const;  // verifies beta_hash

    void add_tensor(const std::string& name, const Tensor& t);
    // Stores an extra "<name>.lo" f32 residual so doubles round-trip to
    // ~1e-14 relative error; training state uses this so resumed runs track
    // uninterrupted ones.
    void add_tensor_precise(const std::string& name, const Tensor& t);
    void add_params(const nets::ParamList& params, const std::string& prefix = "",
                    bool precise = false);
    void add_ema(const nets::Ema& ema, const nets::ParamList& params, const std::string& prefix);
    const TensorEntry* find(const std::string& name) const;
    Tensor tensor(const std::string& name) const;  // throws; applies .lo when present

    // Copies stored tensors into matching params; throws on missing or shape.
    void load_params(nets::ParamList params, const std::string& prefix = "") const;
    nets::Ema load_ema(const nets::ParamList& params, const std::string& prefix) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

std::string file_hash_hex(const std::string& path);

nlohmann::ordered_json spec_to_json(const nets::NetworkSpec& spec);
nets::NetworkSpec spec_from_json(const nlohmann::ordered_json& j);

}  // namespace ldae::ckpt
