// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 1-3 are pure math/gradient checks; 4-8 run the full
// fast-profile pipeline in a scratch directory; 9 re-runs commands and
// compares bytes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>

#include "ldae/cli.hpp"
#include "ldae/evaluation.hpp"
#include "ldae/gradcheck.hpp"
#include "ldae/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ldae;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw IoError("missing file: " + p.string());
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

Tensor randn(std::vector<int> shape, std::uint64_t seed) {
    Rng rng(seed);
    return Tensor::randn(std::move(shape), rng);
}

// Spearman rank correlation with midrank ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    auto ranks = [](const std::vector<double>& x) {
        const int n = static_cast<int>(x.size());
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](int p, int q) { return x[p] < x[q]; });
        std::vector<double> r(n);
        int i = 0;
        while (i < n) {
            int j = i;
            while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
            double mid = 0.5 * (i + j) + 1.0;
            for (int k = i; k <= j; ++k) r[idx[k]] = mid;
            i = j + 1;
        }
        return r;
    };
    std::vector<double> ra = ranks(a), rb = ranks(b);
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= ra.size();
    mb /= rb.size();
    double num = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0 || vb == 0) return 0.0;
    return num / std::sqrt(va * vb);
}

// ------------------------------------------------------------- criterion 1

void criterion_1() {
    bool ok = true;
    std::string why = "all checks ok";
    try {
        auto s = schedule::make_linear_schedule(1000, 1e-4, 2e-2, 0.1);
        for (int t = 1; t <= s.T; ++t) {
            if (!(s.alpha_bar(t) < s.alpha_bar(t - 1))) throw std::runtime_error("abar monotone");
            if (!(s.posterior_var(t) <= s.beta(t) + 1e-18)) throw std::runtime_error("betatilde");
        }
        if (s.posterior_var(1) != 0.0) throw std::runtime_error("betatilde_1 != 0");
        if (!(s.alpha_bar(1000) < 1e-3)) throw std::runtime_error("terminal abar");
        double mid = schedule::loss_weight(s, 500);
        if (!(schedule::loss_weight(s, 1) < mid && schedule::loss_weight(s, 1000) < mid))
            throw std::runtime_error("lambda endpoint suppression");

        // forward/DDIM exact-noise consistency to 1e-8
        Tensor z0 = randn({2, 4, 4, 4}, 1), eps = randn({2, 4, 4, 4}, 2);
        for (auto [t, tp] : std::vector<std::pair<int, int>>{{1000, 900}, {500, 499}, {10, 0}}) {
            Tensor zt = diffusion::forward_sample(s, z0, t, eps);
            Tensor stepped = diffusion::ddim_step(s, zt, t, tp, eps, 0.0);
            Tensor expect = tp == 0 ? z0 : diffusion::forward_sample(s, z0, tp, eps);
            if (max_abs_diff(stepped, expect) > 1e-8) throw std::runtime_error("exact-noise step");
        }

        // posterior-mean-gap zero identity
        for (int t : {1, 100, 1000}) {
            Tensor zt = diffusion::forward_sample(s, z0, t, eps);
            diffusion::FnPredictor exact([&](const Tensor&, int) { return eps; });
            Tensor gap = diffusion::posterior_mean_gap(s, z0, zt, t, exact);
            if (max_abs_diff(gap, Tensor(gap.shape)) > 1e-8) throw std::runtime_error("gap zero");
        }

        // constant-predictor inversion round trip to 1e-8 relative
        Tensor ceps = randn({2, 4, 4, 4}, 3);
        diffusion::FnPredictor cpred([&](const Tensor&, int) { return ceps; });
        Tensor zT = diffusion::invert_loop(s, z0, 1000, cpred);
        Tensor back = diffusion::decode_loop(s, zT, 1000, cpred);
        back.sub_(z0);
        if (rms(back) / rms(z0) > 1e-8) throw std::runtime_error("round trip");

        // slerp norm preservation to 1e-6
        Rng rng(4);
        Tensor a = Tensor::randn({128}, rng), b = Tensor::randn({128}, rng);
        a.scale_(2.0 / a.norm());
        b.scale_(2.0 / b.norm());
        for (double t : {0.25, 0.5, 0.75})
            if (std::abs(latentops::slerp(a, b, t).norm() - 2.0) / 2.0 > 1e-6)
                throw std::runtime_error("slerp norm");

        // ssim hand-computed cases to 1e-9
        Volume va(10, 10, 10), vb(10, 10, 10);
        std::fill(vb.v.begin(), vb.v.end(), 1.0);
        double expect = (1e-4 * 9e-4) / ((1.0 + 1e-4) * 9e-4);
        if (std::abs(evaluation::ssim3d(va, vb) - expect) > 1e-9)
            throw std::runtime_error("ssim constant case");
        Rng vr(5);
        Volume vc(9, 9, 9);
        for (auto& x : vc.v) x = vr.uniform();
        if (evaluation::ssim3d(vc, vc) != 1.0) throw std::runtime_error("ssim identity");
    } catch (const std::exception& e) {
        ok = false;
        why = e.what();
    }
    report(1, "math-kernel suite", ok, why);
}

// ------------------------------------------------------------- criterion 2

void criterion_2() {
    bool ok = true;
    std::string why;
    char buf[160];
    try {
        // linear layer at 1e-8
        {
            Rng rng(10);
            nets::Linear lin(6, 5, rng);
            Tensor x = randn({6}, 11), w = randn({5}, 12), dx({6});
            nets::ParamList params;
            lin.collect("lin", params);
            auto entries = nets::entries_of(params);
            entries.push_back({"x", &x, &dx});
            auto rep = nets::grad_check([&] { return lin.forward(x).dot(w); },
                                        [&] {
                                            nets::zero_grads(params);
                                            lin.forward(x);
                                            dx = lin.backward(w);
                                        },
                                        entries);
            if (rep.max_rel_err > 1e-8) throw std::runtime_error("linear " + rep.worst);
            std::snprintf(buf, sizeof buf, "linear %.2e", rep.max_rel_err);
            why += buf;
        }
        // adagn and attention at 1e-4
        {
            Rng rng(13);
            nets::AdaGN ada(4, 2, 6, 5, rng);
            Tensor h = randn({4, 3, 3, 3}, 14), t = randn({6}, 15), y = randn({5}, 16);
            Tensor w = randn({4, 3, 3, 3}, 17), dh(h.shape), dt({6}), dy({5});
            nets::ParamList params;
            ada.collect("ada", params);
            auto entries = nets::entries_of(params);
            entries.push_back({"h", &h, &dh});
            entries.push_back({"t", &t, &dt});
            entries.push_back({"y", &y, &dy});
            auto rep = nets::grad_check([&] { return ada.forward(h, &t, &y).dot(w); },
                                        [&] {
                                            nets::zero_grads(params);
                                            dt.fill(0.0);
                                            dy.fill(0.0);
                                            ada.forward(h, &t, &y);
                                            dh = ada.backward(w, &dt, &dy);
                                        },
                                        entries);
            if (rep.max_rel_err > 1e-4) throw std::runtime_error("adagn " + rep.worst);
            std::snprintf(buf, sizeof buf, ", adagn %.2e", rep.max_rel_err);
            why += buf;
        }
        {
            Rng rng(18);
            nets::MultiHeadAttention mha(4, 2, rng);
            Tensor q = randn({1, 4}, 19), E = randn({5, 4}, 20), w = randn({1, 4}, 21);
            Tensor dq(q.shape), dE(E.shape);
            nets::ParamList params;
            mha.collect("mha", params);
            auto entries = nets::entries_of(params);
            entries.push_back({"q", &q, &dq});
            entries.push_back({"E", &E, &dE});
            auto rep = nets::grad_check([&] { return mha.forward(q, E).dot(w); },
                                        [&] {
                                            nets::zero_grads(params);
                                            mha.forward(q, E);
                                            auto [a, b2] = mha.backward(w);
                                            dq = a;
                                            dE = b2;
                                        },
                                        entries);
            if (rep.max_rel_err > 1e-4) throw std::runtime_error("attention " + rep.worst);
            std::snprintf(buf, sizeof buf, ", attention %.2e", rep.max_rel_err);
            why += buf;
        }
        {
            Rng rng(22);
            nets::SoftAttention soft(4, rng);
            Tensor E = randn({5, 4}, 23), w = randn({4}, 24), dE(E.shape);
            nets::ParamList params;
            soft.collect("soft", params);
            auto entries = nets::entries_of(params);
            entries.push_back({"E", &E, &dE});
            auto rep = nets::grad_check([&] { return soft.forward(E).dot(w); },
                                        [&] {
                                            nets::zero_grads(params);
                                            soft.forward(E);
                                            dE = soft.backward(w);
                                        },
                                        entries);
            if (rep.max_rel_err > 1e-4) throw std::runtime_error("soft attention " + rep.worst);
        }
        // full tiny networks at 1e-3
        nets::NetworkSpec uspec;
        uspec.role = "eps_unet";
        uspec.in_channels = 2;
        uspec.channels = {6, 8};
        uspec.groups = 2;
        uspec.t_dim = 8;
        uspec.attn_heads = 2;
        uspec.d_sem = 6;
        {
            nets::UNet3d net(uspec, 25);
            Tensor z = randn({2, 4, 4, 4}, 26), w = randn({2, 4, 4, 4}, 27), dz(z.shape);
            nets::ParamList params = net.params();
            auto entries = nets::entries_of(params);
            entries.push_back({"z", &z, &dz});
            auto rep = nets::grad_check([&] { return net.forward(z, 5).dot(w); },
                                        [&] {
                                            nets::zero_grads(params);
                                            net.forward(z, 5);
                                            dz = net.backward(w);
                                        },
                                        entries);
            if (rep.max_rel_err > 1e-3) throw std::runtime_error("unet " + rep.worst);
            std::snprintf(buf, sizeof buf, ", unet %.2e", rep.max_rel_err);
            why += buf;
        }
        {
            nets::UNet3d shared(uspec, 28);
            nets::GradEstimator g(&shared, 29);
            Rng wr(30);
            for (auto& v : g.out_conv->w.value.v) v = 0.05 * wr.normal();
            Tensor z = randn({2, 4, 4, 4}, 31), y = randn({6}, 32), w = randn({2, 4, 4, 4}, 33);
            Tensor dy({6});
            nets::ParamList params = g.params();
            auto entries = nets::entries_of(params);
            entries.push_back({"y", &y, &dy});
            auto rep = nets::grad_check([&] { return g.forward(z, 3, y).dot(w); },
                                        [&] {
                                            nets::zero_grads(params);
                                            g.forward(z, 3, y);
                                            dy = g.backward(w);
                                        },
                                        entries);
            if (rep.max_rel_err > 1e-3) throw std::runtime_error("grad estimator " + rep.worst);
        }
        {
            nets::NetworkSpec espec;
            espec.role = "semantic_enc";
            espec.d_sem = 6;
            espec.attn_heads = 2;
            espec.groups = 2;
            espec.tower_channels = {4, 4, 4};
            espec.in_h = 8;
            espec.in_w = 8;
            nets::SemanticEncoder enc(espec, 34);
            Tensor vol = randn({1, 4, 8, 8}, 35), w = randn({6}, 36);
            nets::ParamList params = enc.params();
            auto entries = nets::entries_of(params);
            auto rep = nets::grad_check([&] { return enc.forward(vol).dot(w); },
                                        [&] {
                                            nets::zero_grads(params);
                                            enc.forward(vol);
                                            enc.backward(w);
                                        },
                                        entries);
            if (rep.max_rel_err > 1e-3) throw std::runtime_error("semantic encoder " + rep.worst);
        }
        {
            nets::NetworkSpec cspec;
            cspec.role = "compressor";
            cspec.in_channels = 1;
            cspec.c_lat = 2;
            cspec.f = 4;
            cspec.comp_channels = {4, 4, 6};
            cspec.groups = 2;
            nets::CompressionAE ae(cspec, 37);
            Tensor x = randn({1, 8, 8, 8}, 38);
            auto [mean0, logvar0] = ae.encode_dist(x);
            Tensor wm = randn(mean0.shape, 39), wl = randn(logvar0.shape, 40);
            nets::ParamList params = ae.params();
            auto entries = nets::entries_of(params);
            auto rep = nets::grad_check(
                [&] {
                    auto [m, l] = ae.encode_dist(x);
                    return m.dot(wm) + l.dot(wl);
                },
                [&] {
                    nets::zero_grads(params);
                    ae.encode_dist(x);
                    ae.encode_backward(wm, wl);
                },
                entries);
            if (rep.max_rel_err > 1e-3) throw std::runtime_error("compressor " + rep.worst);
        }
    } catch (const std::exception& e) {
        ok = false;
        why = e.what();
    }
    report(2, "gradient suite", ok, why);
}

// ------------------------------------------------------------- criterion 3

void criterion_3() {
    bool ok = true;
    std::string why;
    try {
        auto s = schedule::make_linear_schedule(1000, 1e-4, 2e-2, 0.1);
        const double mu = 0.3, sd = 0.5;
        diffusion::FnPredictor oracle([&](const Tensor& z, int t) {
            double ab = s.alpha_bar(t);
            double denom = ab * sd * sd + 1.0 - ab;
            Tensor out = z;
            for (auto& x : out.v) x = (x - std::sqrt(ab) * mu) * std::sqrt(1.0 - ab) / denom;
            return out;
        });
        // the predictor is elementwise, so 1000 draws evolve as one tensor
        diffusion::SampleOptions opt;
        opt.n_steps = 50;
        opt.seed = 91;
        Tensor out = diffusion::sample_loop(s, oracle, {1, 10, 10, 10}, opt);
        double mean = out.mean();
        double var = 0.0;
        for (double x : out.v) var += (x - mean) * (x - mean);
        var /= static_cast<double>(out.numel());
        double sd_hat = std::sqrt(var);
        char buf[96];
        std::snprintf(buf, sizeof buf, "mean %.4f (target 0.3 +- 0.05), sd %.4f (target 0.5 +- 10%%)",
                      mean, sd_hat);
        why = buf;
        ok = std::abs(mean - mu) < 0.05 && std::abs(sd_hat - sd) / sd < 0.10;
    } catch (const std::exception& e) {
        ok = false;
        why = e.what();
    }
    report(3, "analytic-oracle sampling", ok, why);
}

// --------------------------------------------------- pipeline-backed 4..9

struct PipelineArtifacts {
    fs::path work;
    config::PipelineConfig cfg;
    std::map<int, latentops::DualCode> codes;   // per test row
    std::map<int, Volume> originals;            // per test row
    std::map<int, Volume> ae_recons;            // per test row
    pipeline::DataSplits splits;
};

std::vector<std::string> stage_args(const fs::path& work, const std::string& cmd,
                                    const std::vector<std::string>& extra = {}) {
    std::vector<std::string> args = {cmd,
                                     "--out",
                                     (work / "out").string(),
                                     "--data",
                                     (work / "out" / "data").string(),
                                     "--seed",
                                     "1234",
                                     "--profile",
                                     "fast16"};
    for (const auto& e : extra) args.push_back(e);
    return args;
}

int run_cli(const std::vector<std::string>& args) {
    int rc = cli::run(args);
    if (rc != 0) {
        std::string joined;
        for (const auto& a : args) joined += a + " ";
        throw std::runtime_error("command failed (" + std::to_string(rc) + "): " + joined);
    }
    return rc;
}

void run_pipeline(PipelineArtifacts& art) {
    const fs::path& work = art.work;
    fs::create_directories(work);
    auto started = std::chrono::steady_clock::now();
    run_cli(stage_args(work, "gen-data"));
    run_cli(stage_args(work, "train-ae"));
    run_cli(stage_args(work, "train-ldm"));
    run_cli(stage_args(work, "train-ldae"));
    run_cli(stage_args(work, "train-ldm", {"--voxel"}));
    run_cli(stage_args(work, "train-ldae", {"--voxel"}));
    double mins = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count() / 60.0;
    std::printf("[info] pipeline training finished in %.1f min\n", mins);
    std::fflush(stdout);

    config::KeyValues overrides = {{"out_dir", (work / "out").string()},
                                   {"data_dir", (work / "out" / "data").string()},
                                   {"seed", "1234"},
                                   {"profile", "fast16"}};
    config::KeyValues profile_first = {{"profile", "fast16"}};
    art.cfg = config::make_config(profile_first, overrides);
    art.splits = pipeline::load_splits((work / "out" / "data" / "manifest.csv").string());
}

void criterion_4_to_7(PipelineArtifacts& art) {
    const auto& cfg = art.cfg;
    pipeline::Runtime rt = pipeline::load_runtime(cfg, false);
    latentops::Models m = rt.models();

    // (4a) AE validation SSIM
    double ae_val_ssim = 0.0, ae_test_median = 0.0;
    {
        ckpt::Checkpoint ca = ckpt::load_checkpoint(pipeline::checkpoint_path(cfg, "ae"));
        ae_val_ssim = ca.extra.at("best_val_ssim").get<double>();
        ae_test_median = ca.extra.at("test_ssim_median").get<double>();
        char buf[96];
        std::snprintf(buf, sizeof buf, "val ssim %.4f (floor 0.90)", ae_val_ssim);
        report(4, "end-to-end 4a: AE validation SSIM", ae_val_ssim >= 0.90, buf);
    }

    // encode originals / AE recons / dual codes once
    auto t0 = std::chrono::steady_clock::now();
    for (int r : art.splits.test_rows) {
        Volume orig = pipeline::load_row_volume(cfg.data_dir, art.splits.rows[r]);
        art.ae_recons[r] = m.decode_image(m.encode_image(orig));
        art.codes[r] = latentops::encode_dual(m, orig, cfg.invert_steps);
        art.originals[r] = std::move(orig);
    }
    double inv_min =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
    std::printf("[info] %zu test inversions in %.1f min\n", art.codes.size(), inv_min);
    std::fflush(stdout);

    // (4b) dual-code reconstruction vs the AE bottleneck, plus the bottleneck
    // property itself
    {
        std::vector<double> recon_ssims, ae_ssims, diffs_vs_ae;
        for (int r : art.splits.test_rows) {
            Volume rec = latentops::decode_dual(m, art.codes[r], cfg.table_steps);
            double so = evaluation::ssim3d(rec, art.originals[r]);
            recon_ssims.push_back(so);
            ae_ssims.push_back(evaluation::ssim3d(art.ae_recons[r], art.originals[r]));
            diffs_vs_ae.push_back(so);
        }
        double recon_med = median(recon_ssims);
        double ae_med = median(ae_ssims);
        char buf[128];
        std::snprintf(buf, sizeof buf, "recon median %.4f vs AE median %.4f - 0.02", recon_med,
                      ae_med);
        report(4, "end-to-end 4b: dual-code reconstruction", recon_med >= ae_med - 0.02, buf);
        std::snprintf(buf, sizeof buf, "recon median %.4f <= AE median %.4f + 0.005 (bottleneck)",
                      recon_med, ae_med);
        if (recon_med > ae_med + 0.005)
            report(4, "extra: AE bottleneck property", false, buf);
    }

    // (4c) semantic-only vs unguided decode, paired, against the AE recon
    {
        std::vector<double> paired;
        int idx = 0;
        for (int r : art.splits.test_rows) {
            Tensor y = rt.enc->forward(art.originals[r].to_tensor());
            Rng zr(derive_seed(4242, 1, idx++));
            Tensor zT = Tensor::randn(m.latent_shape(art.originals[r]), zr);
            latentops::SharedGuided pair(m.eps, m.g);
            Tensor guided = diffusion::decode_loop(*m.sched, zT, cfg.steps, pair, &pair, &y);
            nets::UNetPredictor plain(m.eps);
            Tensor unguided = diffusion::decode_loop(*m.sched, zT, cfg.steps, plain);
            double s_g = evaluation::ssim3d(m.decode_image(guided), art.ae_recons[r]);
            double s_u = evaluation::ssim3d(m.decode_image(unguided), art.ae_recons[r]);
            paired.push_back(s_g - s_u);
        }
        double med = median(paired);
        char buf[96];
        std::snprintf(buf, sizeof buf, "median paired gain %.4f (floor 0.05)", med);
        report(4, "end-to-end 4c: semantic-only guidance gain", med >= 0.05, buf);
    }

    // (5) probes on y_sem
    {
        std::vector<Tensor> codes(art.splits.rows.size());
        std::vector<int> labels(art.splits.rows.size());
        std::vector<double> ages(art.splits.rows.size());
        for (std::size_t i = 0; i < art.splits.rows.size(); ++i) {
            Volume vol = pipeline::load_row_volume(cfg.data_dir, art.splits.rows[i]);
            codes[i] = rt.enc->forward(vol.to_tensor());
            labels[i] = art.splits.rows[i].disease_label;
            ages[i] = art.splits.rows[i].age_proxy;
        }
        auto cls = evaluation::run_probe_classification(codes, labels, art.splits.train_rows,
                                                        art.splits.test_rows, cfg.seed);
        auto reg = evaluation::run_probe_regression(codes, ages, art.splits.train_rows,
                                                    art.splits.test_rows, cfg.seed);
        double mean_age = 0.0;
        for (int r : art.splits.train_rows) mean_age += ages[r];
        mean_age /= static_cast<double>(art.splits.train_rows.size());
        double base_mae = 0.0;
        for (int r : art.splits.test_rows) base_mae += std::abs(ages[r] - mean_age);
        base_mae /= static_cast<double>(art.splits.test_rows.size());

        char buf[128];
        std::snprintf(buf, sizeof buf, "disease AUC %.4f (floor 0.90)", cls.report.roc_auc);
        report(5, "linear probe: disease ROC-AUC", cls.report.roc_auc >= 0.90, buf);
        std::snprintf(buf, sizeof buf, "age MAE %.5f vs 0.7 x baseline %.5f", reg.mae,
                      0.7 * base_mae);
        report(5, "linear probe: age-proxy MAE", reg.mae <= 0.7 * base_mae, buf);
    }

    // (6) manipulation monotonicity toward the healthy side
    {
        std::vector<std::pair<Tensor, int>> train_codes;
        for (int r : art.splits.train_rows) {
            Volume vol = pipeline::load_row_volume(cfg.data_dir, art.splits.rows[r]);
            train_codes.emplace_back(rt.enc->forward(vol.to_tensor()),
                                     art.splits.rows[r].disease_label);
        }
        latentops::DirectionVector dir = latentops::fit_direction(train_codes);
        dir.w.scale_(-1.0);  // +w was fitted toward the diseased label

        int diseased = 0, monotone = 0;
        bool alpha0_bitwise = true;
        auto groups = phantom::group_rows_by_subject(art.splits.rows);
        for (const auto& g : groups) {
            int r = g[0];
            if (art.splits.rows[r].split != "test" || art.splits.rows[r].disease_label != 1)
                continue;
            if (art.codes.find(r) == art.codes.end()) continue;
            ++diseased;
            std::vector<double> alphas = {0, 1, 2, 3, 4, 5}, counts;
            for (double a : alphas) {
                Volume out = latentops::manipulate(m, art.codes[r], dir, a, cfg.steps);
                counts.push_back(static_cast<double>(phantom::measure_ventricle_volume(out)));
                if (a == 0.0) {
                    Volume plain = latentops::decode_dual(m, art.codes[r], cfg.steps);
                    if (plain.v != out.v) alpha0_bitwise = false;
                }
            }
            double rho = spearman(alphas, counts);
            if (rho <= -0.9) ++monotone;
        }
        char buf[128];
        std::snprintf(buf, sizeof buf, "%d/%d diseased subjects monotone (floor 80%%)", monotone,
                      diseased);
        report(6, "manipulation monotonicity", diseased > 0 && monotone * 5 >= diseased * 4, buf);
        report(6, "manipulation alpha=0 bitwise identity", alpha0_bitwise,
               alpha0_bitwise ? "bit-identical to plain reconstruction" : "outputs differ");
    }

    // (7) interpolation benchmark over cached codes
    {
        auto tasks = evaluation::enumerate_triplets(art.splits.rows, "test", cfg.bench_subjects);
        int wins = 0;
        std::array<double, 4> mse_sum{};
        std::array<int, 4> mse_n{};
        std::map<int, Volume> recon_cache;
        auto recon_of = [&](int row) -> const Volume& {
            auto it = recon_cache.find(row);
            if (it == recon_cache.end())
                it = recon_cache.emplace(row, latentops::decode_dual(m, art.codes[row], cfg.steps))
                         .first;
            return it->second;
        };
        for (const auto& task : tasks) {
            latentops::DualCode mix = latentops::interpolate_codes(
                art.codes[task.start_row], art.codes[task.end_row], task.alpha);
            Volume gen = latentops::decode_dual(m, mix, cfg.steps);
            const Volume& target_ref = art.ae_recons[task.target_row];
            double ssim_gen = evaluation::ssim3d(gen, target_ref);
            int nearest = (task.target_months - task.start_months) <=
                                  (task.end_months - task.target_months)
                              ? task.start_row
                              : task.end_row;
            double ssim_base = evaluation::ssim3d(recon_of(nearest), target_ref);
            if (ssim_gen > ssim_base) ++wins;
            int bin = evaluation::prediction_gap_bin(task.prediction_gap);
            mse_sum[bin] += evaluation::mse(gen, target_ref);
            mse_n[bin] += 1;
        }
        char buf[128];
        std::snprintf(buf, sizeof buf, "%d/%zu triplets beat the nearest-endpoint copy (floor 70%%)",
                      wins, tasks.size());
        report(7, "interpolation beats endpoint copying", !tasks.empty() && wins * 10 >= static_cast<int>(tasks.size()) * 7, buf);

        bool monotone = true;
        double prev = -1.0;
        std::string trend;
        for (int b = 0; b < 4; ++b) {
            if (mse_n[b] == 0) continue;
            double mean = mse_sum[b] / mse_n[b];
            if (prev >= 0.0 && mean < prev - 1e-12) monotone = false;
            prev = mean;
            char num[32];
            std::snprintf(num, sizeof num, "%.5f ", mean);
            trend += num;
        }
        report(7, "binned mean MSE non-decreasing in prediction gap", monotone, "bins: " + trend);
    }
}

void criterion_8(PipelineArtifacts& art) {
    bool ok = true;
    std::string why;
    try {
        run_cli(stage_args(art.work, "bench-efficiency"));
        // parse the speedup comment from the report
        std::ifstream is(art.work / "out" / "reports" / "efficiency.csv");
        std::string line;
        double speedup = 0.0;
        while (std::getline(is, line)) {
            if (line.rfind("# speedup_at_T", 0) == 0) {
                auto comma = line.find(',');
                speedup = std::stod(line.substr(comma + 1));
            }
        }
        char buf[96];
        std::snprintf(buf, sizeof buf, "latent vs voxel speedup %.2fx (floor 3x)", speedup);
        why = buf;
        ok = speedup >= 3.0;
    } catch (const std::exception& e) {
        ok = false;
        why = e.what();
    }
    report(8, "efficiency analog", ok, why);
}

void criterion_9(PipelineArtifacts& art) {
    bool ok = true;
    std::string why = "all reruns byte-identical";
    try {
        const fs::path& work = art.work;
        // gen-data rerun into a fresh directory
        fs::path rework = work / "re";
        fs::create_directories(rework);
        run_cli({"gen-data", "--out", (rework / "out").string(), "--data",
                 (rework / "out" / "data").string(), "--seed", "1234", "--profile", "fast16"});
        auto rows = phantom::read_manifest((work / "out" / "data" / "manifest.csv").string());
        if (file_bytes(work / "out" / "data" / "manifest.csv") !=
            file_bytes(rework / "out" / "data" / "manifest.csv"))
            throw std::runtime_error("manifest differs across reruns");
        for (const auto& row : rows)
            if (file_bytes(work / "out" / "data" / row.path) !=
                file_bytes(rework / "out" / "data" / row.path))
                throw std::runtime_error("volume differs: " + row.path);

        // short training rerun: checkpoints must match bytewise
        for (int rep = 0; rep < 2; ++rep) {
            fs::path dir = work / ("train_rep" + std::to_string(rep));
            run_cli({"gen-data", "--out", (dir / "out").string(), "--data",
                     (dir / "out" / "data").string(), "--seed", "77", "--profile", "fast16",
                     "--set", "n_subjects=6"});
            run_cli({"train-ae", "--out", (dir / "out").string(), "--data",
                     (dir / "out" / "data").string(), "--seed", "77", "--profile", "fast16",
                     "--set", "n_subjects=6", "--set", "ae_epochs=2"});
        }
        if (file_bytes(work / "train_rep0" / "out" / "checkpoints" / "ae.ckpt") !=
            file_bytes(work / "train_rep1" / "out" / "checkpoints" / "ae.ckpt"))
            throw std::runtime_error("ae checkpoint differs across reruns");

        // reconstruct rerun: volumes and reports must match bytewise
        fs::path r1 = work / "recon_rep1", r2 = work / "recon_rep2";
        for (const fs::path& dir : {r1, r2}) {
            fs::create_directories(dir);
            fs::create_directories(dir / "checkpoints");
            for (const char* name : {"ae.ckpt", "ldm.ckpt", "ldae.ckpt"})
                fs::copy_file(work / "out" / "checkpoints" / name, dir / "checkpoints" / name,
                              fs::copy_options::overwrite_existing);
            run_cli({"reconstruct", "--out", dir.string(), "--data",
                     (work / "out" / "data").string(), "--seed", "1234", "--profile", "fast16",
                     "--subjects", "1", "--steps", "10", "--invert-steps", "50"});
        }
        if (file_bytes(r1 / "reports" / "recon_metrics.csv") !=
            file_bytes(r2 / "reports" / "recon_metrics.csv"))
            throw std::runtime_error("recon metrics differ across reruns");
        for (const auto& entry : fs::directory_iterator(r1 / "recon"))
            if (file_bytes(entry.path()) != file_bytes(r2 / "recon" / entry.path().filename()))
                throw std::runtime_error("recon volume differs across reruns");
    } catch (const std::exception& e) {
        ok = false;
        why = e.what();
    }
    report(9, "seeded reruns are bit-identical (timing columns excluded)", ok, why);
}

}  // namespace

int main(int argc, char** argv) {
    fs::path work = "acceptance_work";
    bool keep = false;
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        if (a == "--workdir" && i + 1 < argc)
            work = argv[++i];
        else if (a == "--keep")
            keep = true;
    }
    std::error_code ec;
    fs::remove_all(work, ec);

    auto t_start = std::chrono::steady_clock::now();
    criterion_1();
    criterion_2();
    criterion_3();

    PipelineArtifacts art;
    art.work = work;
    try {
        run_pipeline(art);
        criterion_4_to_7(art);
        criterion_8(art);
        criterion_9(art);
    } catch (const std::exception& e) {
        std::printf("[FAIL] pipeline execution: %s\n", e.what());
        ++g_failures;
    }

    double mins =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count() / 60.0;
    std::printf("%s: %d failure(s), %.1f min total\n", g_failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL",
                g_failures, mins);
    if (!keep && g_failures == 0) fs::remove_all(work, ec);
    return g_failures == 0 ? 0 : 1;
}
