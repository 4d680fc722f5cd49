#include "ldae/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ldae/common.hpp"
#include "ldae/rng.hpp"

namespace fs = std::filesystem;

namespace ldae::phantom {

void PhantomParams::validate() const {
    for (double r : outer_radii)
        if (!(r > 0.0 && r <= 1.0)) throw InvalidParams("outer radius outside (0,1]");
    if (!(shell_thickness > 0.02 && shell_thickness < 0.3))
        throw InvalidParams("shell_thickness outside (0.02,0.3)");
    if (!(ventricle_radius > 0.05 && ventricle_radius < 0.6))
        throw InvalidParams("ventricle_radius outside (0.05,0.6)");
    if (texture_amplitude < 0.0 || texture_amplitude > 0.1)
        throw InvalidParams("texture_amplitude outside [0,0.1]");
    double min_r = std::min({outer_radii[0], outer_radii[1], outer_radii[2]});
    double cavity = (1.0 - kSkullThickness - shell_thickness) * min_r;
    if (ventricle_radius >= cavity) throw InvalidParams("ventricle intersects the shell");
}

namespace {

// Per-voxel hash noise in [-1,1], order independent.
double hash_noise(std::uint64_t seed, std::int64_t idx) {
    std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(idx + 1));
    std::uint64_t z = splitmix64(s);
    return static_cast<double>(z >> 11) * 0x1.0p-52 - 1.0;
}

// Separable (1/4,1/2,1/4) smoothing along one axis with clamped borders.
void smooth_axis(std::vector<double>& v, int n0, int n1, int n2, int axis) {
    std::vector<double> out(v.size());
    auto idx = [&](int a, int b, int c) { return (static_cast<std::int64_t>(a) * n1 + b) * n2 + c; };
    int dims[3] = {n0, n1, n2};
    for (int a = 0; a < n0; ++a)
        for (int b = 0; b < n1; ++b)
            for (int c = 0; c < n2; ++c) {
                int p[3] = {a, b, c};
                int lo[3] = {a, b, c}, hi[3] = {a, b, c};
                lo[axis] = std::max(0, p[axis] - 1);
                hi[axis] = std::min(dims[axis] - 1, p[axis] + 1);
                double mid = v[idx(a, b, c)];
                double l = v[idx(lo[0], lo[1], lo[2])];
                double h = v[idx(hi[0], hi[1], hi[2])];
                out[idx(a, b, c)] = 0.25 * l + 0.5 * mid + 0.25 * h;
            }
    v.swap(out);
}

}  // namespace

Volume generate_volume(const PhantomParams& params, const std::array<int, 3>& dims) {
    params.validate();
    for (int d : dims)
        if (d < 16) throw InvalidParams("dims must each be >= 16");

    const int D = dims[0], H = dims[1], W = dims[2];
    Volume vol(D, H, W);

    std::vector<double> tex;
    if (params.texture_amplitude > 0.0) {
        tex.resize(vol.v.size());
        for (std::int64_t i = 0; i < vol.numel(); ++i) tex[i] = hash_noise(params.texture_seed, i);
        for (int axis = 0; axis < 3; ++axis) smooth_axis(tex, D, H, W, axis);
        // The kernel shrinks the band-limited field; x3 restores usable
        // contrast while keeping |texture| <= 3 * amplitude.
        for (auto& x : tex) x *= 3.0;
    }

    const double r0 = params.outer_radii[0], r1 = params.outer_radii[1], r2 = params.outer_radii[2];
    const double shell_in = 1.0 - kSkullThickness - params.shell_thickness;
    const double skull_in = 1.0 - kSkullThickness;
    const double vr = params.ventricle_radius;

    for (int d = 0; d < D; ++d) {
        double ud = (2.0 * (d + 0.5) / D) - 1.0;
        for (int h = 0; h < H; ++h) {
            double uh = (2.0 * (h + 0.5) / H) - 1.0;
            for (int w = 0; w < W; ++w) {
                double uw = (2.0 * (w + 0.5) / W) - 1.0;
                double a = ud / r0, b = uh / r1, c = uw / r2;
                double rho_out = std::sqrt(a * a + b * b + c * c);
                double rho_vent = std::sqrt(ud * ud + uh * uh + uw * uw);
                double val;
                if (rho_out > 1.0)
                    val = kBackground;
                else if (rho_out >= skull_in)
                    val = kSkull;
                else if (rho_out >= shell_in)
                    val = kCortex;
                else
                    val = kInterior;
                if (rho_vent <= vr && rho_out <= 1.0) val = kVentricle;
                if (!tex.empty() && rho_out <= 1.0) {
                    val += params.texture_amplitude * tex[vol.index(d, h, w)];
                    val = std::clamp(val, 0.0, 1.0);
                }
                vol.at(d, h, w) = val;
            }
        }
    }
    return vol;
}

double ventricle_at_month(const PhantomParams& baseline, double rate, int months, double cap) {
    return std::min(baseline.ventricle_radius + rate * months, cap);
}

std::int64_t measure_ventricle_volume(const Volume& v) {
    int d0 = v.depth / 4, d1 = v.depth - v.depth / 4;
    int h0 = v.height / 4, h1 = v.height - v.height / 4;
    int w0 = v.width / 4, w1 = v.width - v.width / 4;
    std::int64_t count = 0;
    for (int d = d0; d < d1; ++d)
        for (int h = h0; h < h1; ++h)
            for (int w = w0; w < w1; ++w)
                if (v.at(d, h, w) < 0.2) ++count;
    return count;
}

namespace {

std::string fmt6(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return buf;
}

std::vector<int> sample_months(Rng& rng, int min_sessions, int max_sessions) {
    static const int kGrid[] = {6, 12, 18, 24, 36};
    int n = static_cast<int>(rng.uniform_int(min_sessions, max_sessions));
    std::vector<int> pool(std::begin(kGrid), std::end(kGrid));
    // seeded partial shuffle
    for (int i = static_cast<int>(pool.size()) - 1; i > 0; --i) {
        int j = static_cast<int>(rng.uniform_int(0, i));
        std::swap(pool[i], pool[j]);
    }
    std::vector<int> months = {0};
    for (int i = 0; i < n - 1 && i < static_cast<int>(pool.size()); ++i) months.push_back(pool[i]);
    std::sort(months.begin(), months.end());
    return months;
}

}  // namespace

std::vector<SubjectRecord> generate_cohort(int n_subjects, std::uint64_t seed,
                                           const CohortConfig& cfg, const std::string& out_dir,
                                           std::uint64_t config_hash) {
    if (n_subjects < 1) throw InvalidParams("n_subjects must be >= 1");
    fs::create_directories(fs::path(out_dir) / "volumes");

    // subject-level split: shuffle, 90% train / 10% test, then carve
    // validation out of the train block
    std::vector<int> order(n_subjects);
    for (int i = 0; i < n_subjects; ++i) order[i] = i;
    Rng split_rng(derive_seed(seed, 1));
    for (int i = n_subjects - 1; i > 0; --i) {
        int j = static_cast<int>(split_rng.uniform_int(0, i));
        std::swap(order[i], order[j]);
    }
    int n_train = static_cast<int>(std::llround(cfg.train_fraction * n_subjects));
    n_train = std::clamp(n_train, 1, n_subjects - (n_subjects > 1 ? 1 : 0));
    int n_val = std::max<int>(1, static_cast<int>(std::llround(cfg.val_fraction_of_train * n_train)));
    n_val = std::min(n_val, n_train - 1 > 0 ? n_train - 1 : 1);
    std::vector<std::string> split_of(n_subjects);
    for (int pos = 0; pos < n_subjects; ++pos) {
        if (pos < n_train)
            split_of[order[pos]] = pos < n_val ? "val" : "train";
        else
            split_of[order[pos]] = "test";
    }

    std::vector<SubjectRecord> records(n_subjects);
    parallel_for(n_subjects, [&](std::int64_t si) {
        Rng rng(derive_seed(seed, 2, static_cast<std::uint64_t>(si)));
        SubjectRecord& rec = records[si];
        char name[32];
        std::snprintf(name, sizeof name, "sub-%04d", static_cast<int>(si) + 1);
        rec.subject_id = name;
        bool diseased = rng.uniform() < cfg.disease_fraction;
        PhantomParams p;
        for (int a = 0; a < 3; ++a) p.outer_radii[a] = rng.uniform(cfg.outer_radius_lo, cfg.outer_radius_hi);
        p.shell_thickness = rng.uniform(cfg.shell_lo, cfg.shell_hi);
        p.ventricle_radius = diseased ? rng.uniform(cfg.vent_diseased_lo, cfg.vent_diseased_hi)
                                      : rng.uniform(cfg.vent_healthy_lo, cfg.vent_healthy_hi);
        p.texture_amplitude = cfg.texture_amplitude;
        rec.baseline_params = p;
        rec.progression_rate = diseased ? rng.uniform(cfg.rate_diseased_lo, cfg.rate_diseased_hi)
                                        : rng.uniform(cfg.rate_healthy_lo, cfg.rate_healthy_hi);
        rec.disease_label = rec.progression_rate > cfg.disease_threshold ? 1 : 0;
        rec.age_proxy = p.shell_thickness;
        rec.split = split_of[si];

        std::vector<int> months = sample_months(rng, cfg.min_sessions, cfg.max_sessions);
        for (int m : months) {
            PhantomParams sp = p;
            sp.ventricle_radius = ventricle_at_month(p, rec.progression_rate, m, cfg.ventricle_max);
            sp.texture_seed = derive_seed(seed, 3, static_cast<std::uint64_t>(si) * 1000 + m);
            Volume vol = generate_volume(sp, cfg.dims);
            char ses[16];
            std::snprintf(ses, sizeof ses, "m%03d", m);
            std::string rel = std::string("volumes/") + rec.subject_id + "_ses-" + ses + ".vol";
            write_volume_file((fs::path(out_dir) / rel).string(), vol);
            rec.sessions.push_back({m, ses, rel});
        }
    });

    std::ofstream os(fs::path(out_dir) / "manifest.csv", std::ios::binary);
    if (!os) throw IoError("cannot write manifest in " + out_dir);
    os << "# config_hash=" << to_hex(config_hash) << " seed=" << seed << "\n";
    os << "subject_id,session_id,months,age_proxy,disease_score,disease_label,split,path\n";
    for (const auto& rec : records)
        for (const auto& ses : rec.sessions)
            os << rec.subject_id << "," << ses.session_id << "," << ses.months << ","
               << fmt6(rec.age_proxy) << "," << fmt6(rec.progression_rate) << ","
               << rec.disease_label << "," << rec.split << "," << ses.volume_path << "\n";
    return records;
}

std::vector<ManifestRow> read_manifest(const std::string& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw IoError("cannot read manifest: " + manifest_path);
    std::vector<ManifestRow> rows;
    std::string line;
    bool header_seen = false;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        std::stringstream ss(line);
        std::string f[8];
        for (int i = 0; i < 8; ++i)
            if (!std::getline(ss, f[i], ',')) throw IoError("malformed manifest row: " + line);
        ManifestRow r;
        r.subject_id = f[0];
        r.session_id = f[1];
        r.months = std::stoi(f[2]);
        r.age_proxy = std::stod(f[3]);
        r.disease_score = std::stod(f[4]);
        r.disease_label = std::stoi(f[5]);
        r.split = f[6];
        r.path = f[7];
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<std::vector<int>> group_rows_by_subject(const std::vector<ManifestRow>& rows) {
    std::vector<std::vector<int>> groups;
    std::map<std::string, int> pos;
    for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
        auto it = pos.find(rows[i].subject_id);
        if (it == pos.end()) {
            pos[rows[i].subject_id] = static_cast<int>(groups.size());
            groups.push_back({i});
        } else {
            groups[it->second].push_back(i);
        }
    }
    return groups;
}

void validate_manifest(const std::string& manifest_path) {
    auto rows = read_manifest(manifest_path);
    fs::path base = fs::path(manifest_path).parent_path();
    auto groups = group_rows_by_subject(rows);
    for (const auto& g : groups) {
        const std::string& split = rows[g[0]].split;
        int prev = -1;
        for (int i : g) {
            if (rows[i].split != split)
                throw InvalidParams("split differs within subject " + rows[i].subject_id);
            if (rows[i].months <= prev)
                throw InvalidParams("months not strictly increasing for " + rows[i].subject_id);
            prev = rows[i].months;
            if (!fs::exists(base / rows[i].path))
                throw IoError("missing volume file: " + rows[i].path);
        }
    }
}

}  // namespace ldae::phantom
