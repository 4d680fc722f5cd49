#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ldae/config.hpp"

using namespace ldae;
using namespace ldae::config;
namespace fs = std::filesystem;

TEST_CASE("config parsing, profiles, and override order") {
    auto pairs = parse_config_text(
        "# comment\n"
        "profile=fast16\n"
        "n_subjects = 24\n"
        "ae_lr=2e-3\n"
        "unet_channels=16,32\n");
    PipelineConfig cfg = make_config(pairs, {{"n_subjects", "30"}});
    CHECK(cfg.dims == 16);
    CHECK(cfg.n_subjects == 30);  // override wins over file
    CHECK(cfg.ae_lr == doctest::Approx(2e-3));
    CHECK(cfg.unet_channels == std::vector<int>{16, 32});

    // profile applies before explicit keys regardless of file order
    auto pairs2 = parse_config_text("dims=20\nprofile=fast16\n");
    PipelineConfig cfg2 = make_config(pairs2, {});
    CHECK(cfg2.dims == 20);

    CHECK_THROWS_AS(make_config({{"no_such_key", "1"}}, {}), InvalidParams);
    CHECK_THROWS_AS(make_config({{"profile", "huge"}}, {}), InvalidParams);
    CHECK_THROWS_AS(parse_config_text("not a pair\n"), InvalidParams);
}

TEST_CASE("canonical text and hash are stable and sensitive") {
    PipelineConfig a, b;
    CHECK(config_hash(a) == config_hash(b));
    b.seed = 999;
    CHECK(config_hash(a) != config_hash(b));

    // canonical text round-trips through the parser
    auto pairs = parse_config_text(canonical_text(a));
    PipelineConfig c = make_config(pairs, {});
    CHECK(canonical_text(c) == canonical_text(a));
}

TEST_CASE("effective config is echoed into the output directory") {
    PipelineConfig cfg;
    fs::path dir = fs::temp_directory_path() / "ldae_test_cfg";
    fs::remove_all(dir);
    write_effective_config(cfg, dir.string());
    std::ifstream is(dir / "effective_config.txt");
    REQUIRE(is.good());
    std::string first;
    std::getline(is, first);
    CHECK(first.rfind("# config_hash=", 0) == 0);
    fs::remove_all(dir);
}

TEST_CASE("derived network specs follow the config") {
    PipelineConfig cfg;
    cfg.dims = 32;
    cfg.c_lat = 3;
    auto unet = cfg.unet_spec();
    CHECK(unet.in_channels == 3);
    auto voxel = cfg.voxel_unet_spec();
    CHECK(voxel.in_channels == 1);
    auto sem = cfg.semantic_spec();
    CHECK(sem.in_h == 32);
    auto comp = cfg.compressor_spec();
    CHECK(comp.c_lat == 3);
}
