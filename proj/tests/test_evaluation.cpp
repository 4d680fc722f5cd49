#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "ldae/evaluation.hpp"

using namespace ldae;
using namespace ldae::evaluation;

namespace {

Tensor vecn(int d, std::uint64_t seed, double shift = 0.0) {
    Rng rng(seed);
    Tensor t({d});
    for (auto& x : t.v) x = shift + rng.normal();
    return t;
}

// trapezoidal ROC integration, the independent oracle for the rank AUC
double auc_trapezoid(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::vector<int> idx(scores.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return scores[a] > scores[b]; });
    double P = 0, N = 0;
    for (int l : labels) (l ? P : N) += 1;
    double tp = 0, fp = 0, auc = 0, prev_tpr = 0, prev_fpr = 0;
    for (int i : idx) {
        if (labels[i])
            tp += 1;
        else
            fp += 1;
        double tpr = tp / P, fpr = fp / N;
        auc += 0.5 * (tpr + prev_tpr) * (fpr - prev_fpr);
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    return auc;
}

struct Toy {
    std::vector<Tensor> emb;
    std::vector<int> labels;
    std::vector<double> targets;
    std::vector<int> train_rows, test_rows;
};

Toy separable_toy(int d, int n_per_class, double dist, std::uint64_t seed) {
    Toy toy;
    Rng rng(seed);
    for (int i = 0; i < 2 * n_per_class; ++i) {
        int label = i % 2;
        Tensor x({d});
        for (int j = 0; j < d; ++j) x.v[j] = rng.normal() + (j == 0 ? (label ? dist : 0.0) : 0.0);
        toy.emb.push_back(x);
        toy.labels.push_back(label);
        toy.targets.push_back(0.0);
        if (i < static_cast<int>(1.4 * n_per_class))
            toy.train_rows.push_back(i);
        else
            toy.test_rows.push_back(i);
    }
    return toy;
}

}  // namespace

TEST_CASE("rank AUC equals trapezoidal integration on tie-free data") {
    Rng rng(1);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 500; ++i) {
        labels.push_back(i % 2);
        scores.push_back(rng.normal() + (i % 2 ? 0.8 : 0.0));
    }
    CHECK(std::abs(roc_auc_rank(scores, labels) - auc_trapezoid(scores, labels)) < 1e-9);

    std::vector<double> ties(40, 0.5);
    std::vector<int> tl;
    for (int i = 0; i < 40; ++i) tl.push_back(i % 2);
    CHECK(roc_auc_rank(ties, tl) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("classification probe on separable clusters") {
    Toy toy = separable_toy(6, 120, 12.0, 2);
    auto res = run_probe_classification(toy.emb, toy.labels, toy.train_rows, toy.test_rows, 7);
    CHECK(res.report.accuracy == 1.0);
    CHECK(res.report.roc_auc == 1.0);
    CHECK(res.report.mcc == 1.0);
    CHECK(res.report.f1 == 1.0);
    CHECK(res.direction.w.norm() == doctest::Approx(1.0).epsilon(1e-9));

    std::vector<int> constant(toy.labels.size(), 1);
    CHECK_THROWS_AS(
        run_probe_classification(toy.emb, constant, toy.train_rows, toy.test_rows, 7),
        DegenerateLabels);
}

TEST_CASE("flipping labels negates MCC and mirrors AUC for fixed scores") {
    Rng rng(17);
    std::vector<double> scores;
    std::vector<int> labels, flipped;
    for (int i = 0; i < 200; ++i) {
        labels.push_back(i % 2);
        flipped.push_back(1 - i % 2);
        scores.push_back(1.0 / (1.0 + std::exp(-(rng.normal() + (i % 2 ? 1.0 : 0.0)))));
    }
    auto a = classification_metrics(scores, labels);
    auto b = classification_metrics(scores, flipped);
    CHECK(b.mcc == doctest::Approx(-a.mcc).epsilon(1e-9));
    CHECK(b.roc_auc == doctest::Approx(1.0 - a.roc_auc).epsilon(1e-9));
}

TEST_CASE("probe metrics survive an embedding rotation") {
    Toy toy = separable_toy(4, 200, 8.0, 3);
    auto base = run_probe_classification(toy.emb, toy.labels, toy.train_rows, toy.test_rows, 9);

    // a fixed Givens-style rotation across dims (0,1) and (2,3)
    auto rotate = [](const Tensor& x) {
        Tensor y = x;
        double c = std::cos(0.7), s = std::sin(0.7);
        y.v[0] = c * x.v[0] - s * x.v[1];
        y.v[1] = s * x.v[0] + c * x.v[1];
        y.v[2] = c * x.v[2] - s * x.v[3];
        y.v[3] = s * x.v[2] + c * x.v[3];
        return y;
    };
    std::vector<Tensor> rotated;
    for (const auto& x : toy.emb) rotated.push_back(rotate(x));
    auto rot = run_probe_classification(rotated, toy.labels, toy.train_rows, toy.test_rows, 9);
    CHECK(rot.report.accuracy == base.report.accuracy);
}

TEST_CASE("regression probe: realizable targets, constant embeddings, power mean") {
    Rng rng(4);
    Toy toy;
    Tensor w_true({5});
    for (auto& x : w_true.v) x = rng.normal();
    for (int i = 0; i < 120; ++i) {
        Tensor x({5});
        for (auto& v : x.v) v = rng.normal();
        toy.emb.push_back(x);
        toy.labels.push_back(0);
        toy.targets.push_back(w_true.dot(x) + 0.25);
        if (i < 84)
            toy.train_rows.push_back(i);
        else
            toy.test_rows.push_back(i);
    }
    auto rep = run_probe_regression(toy.emb, toy.targets, toy.train_rows, toy.test_rows, 11);
    CHECK(rep.mae < 1e-3);
    CHECK(rep.rmse >= rep.mae);

    // zero-variance embeddings converge to the mean target
    std::vector<Tensor> flat(toy.emb.size(), Tensor({5}, 1.0));
    auto rep2 = run_probe_regression(flat, toy.targets, toy.train_rows, toy.test_rows, 11);
    double mean_t = 0.0;
    for (int r : toy.train_rows) mean_t += toy.targets[r];
    mean_t /= static_cast<double>(toy.train_rows.size());
    double mad = 0.0;
    for (int r : toy.test_rows) mad += std::abs(toy.targets[r] - mean_t);
    mad /= static_cast<double>(toy.test_rows.size());
    CHECK(rep2.mae == doctest::Approx(mad).epsilon(1e-2));
    CHECK(rep2.rmse >= rep2.mae);
}

TEST_CASE("lda projection separates distant clusters and keeps row count") {
    Rng rng(5);
    std::vector<Tensor> emb;
    std::vector<int> labels;
    for (int i = 0; i < 120; ++i) {
        int label = i % 2;
        Tensor x({6});
        for (auto& v : x.v) v = rng.normal();
        x.v[2] += label ? 5.0 : 0.0;  // 5 sigma apart
        emb.push_back(x);
        labels.push_back(label);
    }
    auto coords = lda_project(emb, labels);
    REQUIRE(coords.size() == emb.size());
    double m0 = 0, m1 = 0, v0 = 0, v1 = 0;
    int n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < coords.size(); ++i)
        if (labels[i]) {
            m1 += coords[i][0];
            ++n1;
        } else {
            m0 += coords[i][0];
            ++n0;
        }
    m0 /= n0;
    m1 /= n1;
    for (std::size_t i = 0; i < coords.size(); ++i) {
        double d = coords[i][0] - (labels[i] ? m1 : m0);
        (labels[i] ? v1 : v0) += d * d;
    }
    double within_sd = std::sqrt((v0 + v1) / (n0 + n1 - 2));
    CHECK(std::abs(m1 - m0) / within_sd > 3.0);

    // identical clusters: no signal along axis 1
    std::vector<Tensor> same;
    std::vector<int> sl;
    for (int i = 0; i < 80; ++i) {
        Tensor x({6});
        for (auto& v : x.v) v = rng.normal();
        same.push_back(x);
        sl.push_back(i % 2);
    }
    auto c2 = lda_project(same, sl);
    double s0 = 0, s1 = 0;
    for (std::size_t i = 0; i < c2.size(); ++i) (sl[i] ? s1 : s0) += c2[i][0];
    CHECK(std::abs(s1 / 40 - s0 / 40) < 1.0);
}

TEST_CASE("triplet enumeration matches the closed cases and brute force") {
    using phantom::ManifestRow;
    auto row = [](const std::string& sid, int months) {
        ManifestRow r;
        r.subject_id = sid;
        r.session_id = "m" + std::to_string(months);
        r.months = months;
        r.split = "test";
        return r;
    };

    std::vector<ManifestRow> rows = {row("a", 0), row("a", 6), row("a", 24)};
    auto tasks = enumerate_triplets(rows, "test", 0);
    REQUIRE(tasks.size() == 1);
    CHECK(tasks[0].alpha == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(tasks[0].prediction_gap == 6);
    CHECK(tasks[0].time_gap == 24);

    std::vector<ManifestRow> rows4 = {row("b", 0), row("b", 6), row("b", 12), row("b", 24)};
    CHECK(enumerate_triplets(rows4, "test", 0).size() == 4);

    std::vector<ManifestRow> rows2 = {row("c", 0), row("c", 6)};
    CHECK(enumerate_triplets(rows2, "test", 0).empty());

    // brute-force count C(n,3) for n <= 6
    for (int n = 3; n <= 6; ++n) {
        std::vector<ManifestRow> rs;
        for (int i = 0; i < n; ++i) rs.push_back(row("s", 6 * i));
        int expect = n * (n - 1) * (n - 2) / 6;
        CHECK(static_cast<int>(enumerate_triplets(rs, "test", 0).size()) == expect);
    }

    // subject cap in manifest order
    std::vector<ManifestRow> two_subjects = {row("a", 0), row("a", 6),  row("a", 12),
                                             row("b", 0), row("b", 12), row("b", 24)};
    CHECK(enumerate_triplets(two_subjects, "test", 1).size() == 1);
    CHECK(enumerate_triplets(two_subjects, "test", 0).size() == 2);

    CHECK(prediction_gap_bin(6) == 0);
    CHECK(prediction_gap_bin(7) == 1);
    CHECK(prediction_gap_bin(12) == 1);
    CHECK(prediction_gap_bin(13) == 2);
    CHECK(prediction_gap_bin(19) == 3);
}
