#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ldae/checkpoint.hpp"

using namespace ldae;
using namespace ldae::ckpt;
namespace fs = std::filesystem;

namespace {

std::string file_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

Checkpoint sample_checkpoint() {
    Checkpoint c;
    c.stage = "ldm";
    c.seed = 99;
    c.parent_hash = "0123456789abcdef";
    c.set_schedule(schedule::make_linear_schedule(100, 1e-4, 2e-2, 0.1));
    c.scaler = 1.75;
    nets::NetworkSpec spec;
    spec.role = "eps_unet";
    spec.channels = {6, 8};
    c.specs["eps_unet"] = spec;
    c.extra["epochs_done"] = 3;
    Rng rng(5);
    c.add_tensor("cur.a", Tensor::randn({2, 3}, rng));
    c.add_tensor("cur.b", Tensor::randn({4}, rng));
    return c;
}

}  // namespace

TEST_CASE("checkpoint save/load round trip is byte identical") {
    fs::path p1 = fs::temp_directory_path() / "ldae_ckpt_rt1.ckpt";
    fs::path p2 = fs::temp_directory_path() / "ldae_ckpt_rt2.ckpt";
    Checkpoint c = sample_checkpoint();
    save_checkpoint(p1.string(), c);
    Checkpoint loaded = load_checkpoint(p1.string());
    save_checkpoint(p2.string(), loaded);
    CHECK(file_bytes(p1) == file_bytes(p2));

    CHECK(loaded.stage == "ldm");
    CHECK(loaded.seed == 99);
    CHECK(loaded.parent_hash == "0123456789abcdef");
    CHECK(loaded.scaler == 1.75);
    CHECK(loaded.specs.at("eps_unet").channels == std::vector<int>{6, 8});
    CHECK(loaded.extra.at("epochs_done").get<int>() == 3);
    CHECK(loaded.tensors.size() == 2);
    auto sched = loaded.make_schedule();
    CHECK(sched.T == 100);
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("tampered checkpoints are rejected") {
    fs::path p = fs::temp_directory_path() / "ldae_ckpt_tamper.ckpt";
    Checkpoint c = sample_checkpoint();
    save_checkpoint(p.string(), c);
    std::string bytes = file_bytes(p);

    // truncated blob
    {
        std::ofstream os(p, std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
    }
    CHECK_THROWS_AS(load_checkpoint(p.string()), IoError);

    // trailing garbage
    {
        std::ofstream os(p, std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        os << "extra";
    }
    CHECK_THROWS_AS(load_checkpoint(p.string()), IoError);

    // bad magic
    {
        std::string mutated = bytes;
        mutated[0] = 'X';
        std::ofstream os(p, std::ios::binary);
        os.write(mutated.data(), static_cast<std::streamsize>(mutated.size()));
    }
    CHECK_THROWS_AS(load_checkpoint(p.string()), IoError);

    CHECK_THROWS_AS(load_checkpoint("/nonexistent/nowhere.ckpt"), MissingParent);
    fs::remove(p);
}

TEST_CASE("checkpoint param load restores network weights through f32") {
    nets::NetworkSpec spec;
    spec.role = "eps_unet";
    spec.in_channels = 2;
    spec.channels = {4};
    spec.groups = 2;
    spec.t_dim = 8;
    spec.attn_heads = 2;
    nets::UNet3d a(spec, 1), b(spec, 2);

    Checkpoint c;
    c.stage = "ldm";
    c.set_schedule(schedule::make_linear_schedule(10, 1e-4, 2e-2, 0.1));
    c.specs["eps_unet"] = spec;
    nets::ParamList pa = a.params();
    c.add_params(pa, "cur.");
    nets::ParamList pb = b.params();
    c.load_params(pb, "cur.");
    for (std::size_t i = 0; i < pa.size(); ++i)
        for (std::int64_t j = 0; j < pa[i].p->value.numel(); ++j)
            CHECK(static_cast<float>(pa[i].p->value.v[j]) ==
                  static_cast<float>(pb[i].p->value.v[j]));

    // identical predictions after the f32 round trip
    Rng rng(3);
    Tensor z = Tensor::randn({2, 4, 4, 4}, rng);
    Tensor ya = a.forward(z, 5);
    Tensor yb = b.forward(z, 5);
    CHECK(rms(ya - yb) < 1e-6);
}

TEST_CASE("schedule hash mismatch is detected") {
    Checkpoint c = sample_checkpoint();
    c.beta_hash = "deadbeefdeadbeef";
    CHECK_THROWS_AS(c.make_schedule(), IoError);
}
