#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ldae/phantom.hpp"

using namespace ldae;
using namespace ldae::phantom;
namespace fs = std::filesystem;

namespace {

PhantomParams base_params() {
    PhantomParams p;
    p.outer_radii = {0.9, 0.9, 0.9};
    p.shell_thickness = 0.15;
    p.ventricle_radius = 0.2;
    p.texture_seed = 0;
    p.texture_amplitude = 0.0;
    return p;
}

// 3^3 median filter with clamped borders, the smoothing oracle.
Volume median3(const Volume& v) {
    Volume out(v.depth, v.height, v.width);
    std::vector<double> win;
    for (int d = 0; d < v.depth; ++d)
        for (int h = 0; h < v.height; ++h)
            for (int w = 0; w < v.width; ++w) {
                win.clear();
                for (int a = std::max(0, d - 1); a <= std::min(v.depth - 1, d + 1); ++a)
                    for (int b = std::max(0, h - 1); b <= std::min(v.height - 1, h + 1); ++b)
                        for (int c = std::max(0, w - 1); c <= std::min(v.width - 1, w + 1); ++c)
                            win.push_back(v.at(a, b, c));
                std::nth_element(win.begin(), win.begin() + win.size() / 2, win.end());
                out.at(d, h, w) = win[win.size() / 2];
            }
    return out;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("zero texture gives a piecewise-constant, bit-stable volume") {
    auto p = base_params();
    Volume a = generate_volume(p, {16, 16, 16});
    Volume b = generate_volume(p, {16, 16, 16});
    CHECK(a.v == b.v);
    for (double x : a.v)
        CHECK((x == kBackground || x == kSkull || x == kCortex || x == kInterior || x == kVentricle));
    a.validate();
}

TEST_CASE("ventricle voxel count tracks the analytic ellipsoid volume") {
    auto p = base_params();
    Volume v = generate_volume(p, {32, 32, 32});
    double analytic = 4.0 / 3.0 * M_PI * std::pow(0.2 * 16.0, 3.0);  // ~137
    auto count = static_cast<double>(measure_ventricle_volume(v));
    CHECK(std::abs(count - analytic) / analytic < 0.15);
}

TEST_CASE("texture seeds agree after median smoothing") {
    auto p = base_params();
    p.texture_amplitude = 0.03;
    p.texture_seed = 1;
    Volume a = median3(generate_volume(p, {32, 32, 32}));
    p.texture_seed = 2;
    Volume b = median3(generate_volume(p, {32, 32, 32}));
    double mad = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) mad += std::abs(a.v[i] - b.v[i]);
    mad /= static_cast<double>(a.numel());
    CHECK(mad < 0.02);
}

TEST_CASE("ventricle oracle corner cases and monotonicity") {
    Volume ones(16, 16, 16);
    std::fill(ones.v.begin(), ones.v.end(), 1.0);
    CHECK(measure_ventricle_volume(ones) == 0);

    Volume zeros(32, 32, 32);
    CHECK(measure_ventricle_volume(zeros) == 16 * 16 * 16);

    auto p = base_params();
    p.outer_radii = {0.95, 0.95, 0.95};
    p.shell_thickness = 0.1;
    p.texture_amplitude = 0.05;
    p.texture_seed = 9;
    std::int64_t prev = -1;
    for (double r = 0.10; r <= 0.501; r += 0.05) {
        p.ventricle_radius = r;
        Volume v = generate_volume(p, {32, 32, 32});
        std::int64_t c = measure_ventricle_volume(v);
        CHECK(c > prev);
        prev = c;
    }
}

TEST_CASE("ventricle radius comparison for two phantoms") {
    auto p = base_params();
    p.texture_seed = 4;
    p.texture_amplitude = 0.03;
    p.ventricle_radius = 0.2;
    auto small = measure_ventricle_volume(generate_volume(p, {32, 32, 32}));
    p.ventricle_radius = 0.3;
    auto big = measure_ventricle_volume(generate_volume(p, {32, 32, 32}));
    CHECK(big > small);
}

TEST_CASE("parameter validation rejects a ventricle touching the shell") {
    auto p = base_params();
    p.shell_thickness = 0.29;
    p.ventricle_radius = 0.59;
    CHECK_THROWS_AS(generate_volume(p, {16, 16, 16}), InvalidParams);
    p = base_params();
    CHECK_THROWS_AS(generate_volume(p, {8, 16, 16}), InvalidParams);
}

TEST_CASE("cohort generation is byte-identical across reruns") {
    CohortConfig cfg;
    fs::path dir1 = fs::temp_directory_path() / "ldae_test_cohort1";
    fs::path dir2 = fs::temp_directory_path() / "ldae_test_cohort2";
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    auto rec1 = generate_cohort(10, 7, cfg, dir1.string(), 0xabc);
    auto rec2 = generate_cohort(10, 7, cfg, dir2.string(), 0xabc);
    CHECK(file_bytes(dir1 / "manifest.csv") == file_bytes(dir2 / "manifest.csv"));
    for (const auto& rec : rec1)
        for (const auto& ses : rec.sessions)
            CHECK(file_bytes(dir1 / ses.volume_path) == file_bytes(dir2 / ses.volume_path));
    validate_manifest((dir1 / "manifest.csv").string());

    // sessions strictly increasing, baseline present, label consistent
    for (const auto& rec : rec1) {
        REQUIRE(!rec.sessions.empty());
        CHECK(rec.sessions.front().months == 0);
        for (std::size_t i = 1; i < rec.sessions.size(); ++i)
            CHECK(rec.sessions[i].months > rec.sessions[i - 1].months);
        CHECK(rec.disease_label == (rec.progression_rate > cfg.disease_threshold ? 1 : 0));
    }
    fs::remove_all(dir1);
    fs::remove_all(dir2);
}

TEST_CASE("zero progression keeps sessions identical up to texture") {
    CohortConfig cfg;
    cfg.disease_fraction = 0.0;
    cfg.rate_healthy_lo = 0.0;
    cfg.rate_healthy_hi = 0.0;
    fs::path dir = fs::temp_directory_path() / "ldae_test_cohort3";
    fs::remove_all(dir);
    auto recs = generate_cohort(3, 5, cfg, dir.string());
    for (const auto& rec : recs) {
        auto first = measure_ventricle_volume(read_volume_file_single((dir / rec.sessions[0].volume_path).string()));
        for (const auto& ses : rec.sessions) {
            auto c = measure_ventricle_volume(read_volume_file_single((dir / ses.volume_path).string()));
            CHECK(c == first);
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("subject-level split fractions over 200 subjects") {
    CohortConfig cfg;
    cfg.dims = {16, 16, 16};
    cfg.min_sessions = 3;
    cfg.max_sessions = 3;
    fs::path dir = fs::temp_directory_path() / "ldae_test_cohort4";
    fs::remove_all(dir);
    auto recs = generate_cohort(200, 11, cfg, dir.string());
    int train_like = 0, test = 0;
    for (const auto& rec : recs) {
        if (rec.split == "test")
            ++test;
        else
            ++train_like;
    }
    CHECK(train_like == 180);
    CHECK(test == 20);

    auto rows = read_manifest((dir / "manifest.csv").string());
    for (const auto& rec : recs)
        for (const auto& row : rows)
            if (row.subject_id == rec.subject_id) CHECK(row.split == rec.split);
    fs::remove_all(dir);
}

TEST_CASE("volume file round trip is exact in f32") {
    auto p = base_params();
    p.texture_amplitude = 0.05;
    p.texture_seed = 3;
    Volume v = generate_volume(p, {16, 16, 16});
    fs::path f = fs::temp_directory_path() / "ldae_vol_roundtrip.vol";
    write_volume_file(f.string(), v);
    Volume r = read_volume_file_single(f.string());
    for (std::int64_t i = 0; i < v.numel(); ++i)
        CHECK(static_cast<float>(v.v[i]) == static_cast<float>(r.v[i]));
    fs::remove(f);
}
