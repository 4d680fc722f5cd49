#include "ldae/probes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ldae/common.hpp"
#include "ldae/rng.hpp"

namespace ldae::evaluation {

double roc_auc_rank(const std::vector<double>& scores, const std::vector<int>& labels) {
    const int n = static_cast<int>(scores.size());
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n);
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        double mid = 0.5 * (i + j) + 1.0;  // midrank, 1-based
        for (int k = i; k <= j; ++k) rank[idx[k]] = mid;
        i = j + 1;
    }
    double rank_sum_pos = 0.0;
    std::int64_t n1 = 0, n0 = 0;
    for (int k = 0; k < n; ++k) {
        if (labels[k] == 1) {
            rank_sum_pos += rank[k];
            ++n1;
        } else {
            ++n0;
        }
    }
    if (n1 == 0 || n0 == 0) throw DegenerateLabels("roc_auc: one class only");
    double u = rank_sum_pos - 0.5 * static_cast<double>(n1) * (n1 + 1);
    return u / (static_cast<double>(n1) * static_cast<double>(n0));
}

namespace {

struct Standardizer {
    Tensor mu, sd;

    static Standardizer fit(const std::vector<Tensor>& xs, const std::vector<int>& rows) {
        const int d = static_cast<int>(xs[0].numel());
        Standardizer st;
        st.mu = Tensor({d});
        st.sd = Tensor({d});
        for (int r : rows) st.mu.add_(xs[r]);
        st.mu.scale_(1.0 / static_cast<double>(rows.size()));
        for (int r : rows)
            for (int j = 0; j < d; ++j) {
                double diff = xs[r].v[j] - st.mu.v[j];
                st.sd.v[j] += diff * diff;
            }
        for (int j = 0; j < d; ++j) {
            st.sd.v[j] = std::sqrt(st.sd.v[j] / static_cast<double>(rows.size()));
            if (st.sd.v[j] < 1e-12) st.sd.v[j] = 1.0;  // constant dims pass through
        }
        return st;
    }

    Tensor apply(const Tensor& x) const {
        Tensor out = x;
        for (std::int64_t j = 0; j < out.numel(); ++j) out.v[j] = (out.v[j] - mu.v[j]) / sd.v[j];
        return out;
    }
};

std::pair<std::vector<int>, std::vector<int>> split_70_30(const std::vector<int>& rows,
                                                          std::uint64_t seed) {
    std::vector<int> shuffled = rows;
    Rng rng(derive_seed(seed, 70));
    for (int i = static_cast<int>(shuffled.size()) - 1; i > 0; --i) {
        int j = static_cast<int>(rng.uniform_int(0, i));
        std::swap(shuffled[i], shuffled[j]);
    }
    std::size_t n_fit = std::max<std::size_t>(1, (shuffled.size() * 7 + 5) / 10);
    std::vector<int> fit(shuffled.begin(), shuffled.begin() + n_fit);
    std::vector<int> mon(shuffled.begin() + n_fit, shuffled.end());
    return {fit, mon};
}

}  // namespace

ProbeReport classification_metrics(const std::vector<double>& scores,
                                   const std::vector<int>& labels) {
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        bool pred = scores[i] >= 0.5;
        if (pred && labels[i] == 1) ++tp;
        if (pred && labels[i] == 0) ++fp;
        if (!pred && labels[i] == 0) ++tn;
        if (!pred && labels[i] == 1) ++fn;
    }
    ProbeReport rep;
    double n = tp + tn + fp + fn;
    rep.accuracy = (tp + tn) / n;
    rep.precision = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
    rep.recall = (tp + fn) > 0 ? tp / (tp + fn) : 0.0;
    rep.f1 = (rep.precision + rep.recall) > 0
                 ? 2.0 * rep.precision * rep.recall / (rep.precision + rep.recall)
                 : 0.0;
    double mcc_den = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
    rep.mcc = mcc_den > 0 ? (tp * tn - fp * fn) / mcc_den : 0.0;
    rep.roc_auc = roc_auc_rank(scores, labels);
    return rep;
}

ProbeResult run_probe_classification(const std::vector<Tensor>& embeddings,
                                     const std::vector<int>& labels,
                                     const std::vector<int>& train_rows,
                                     const std::vector<int>& test_rows, std::uint64_t seed) {
    for (const auto& rows : {train_rows, test_rows}) {
        int c0 = 0, c1 = 0;
        for (int r : rows) (labels[r] ? c1 : c0)++;
        if (c0 < 2 || c1 < 2) throw DegenerateLabels("probe needs >= 2 examples per class per split");
    }
    auto [fit_rows, mon_rows] = split_70_30(train_rows, seed);
    (void)mon_rows;
    Standardizer st = Standardizer::fit(embeddings, fit_rows);

    const int d = static_cast<int>(embeddings[0].numel());
    Tensor w({d});
    double b = 0.0;
    // single fully-connected layer, BCE, mini-batch Adam, 200 epochs, lr 1e-3
    Tensor mw({d}), vw({d});
    double mb = 0.0, vb = 0.0;
    const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const int batch = std::min<int>(32, static_cast<int>(fit_rows.size()));
    std::vector<int> order = fit_rows;
    std::int64_t step = 0;
    for (int epoch = 0; epoch < 200; ++epoch) {
        Rng erng(derive_seed(seed, 72, static_cast<std::uint64_t>(epoch)));
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
            int j = static_cast<int>(erng.uniform_int(0, i));
            std::swap(order[i], order[j]);
        }
        for (std::size_t start = 0; start < order.size(); start += batch) {
            std::size_t stop = std::min(order.size(), start + batch);
            Tensor gw({d});
            double gb = 0.0;
            for (std::size_t k = start; k < stop; ++k) {
                int r = order[k];
                Tensor x = st.apply(embeddings[r]);
                double z = w.dot(x) + b;
                double p = 1.0 / (1.0 + std::exp(-z));
                double resid = p - static_cast<double>(labels[r]);
                gw.axpy_(resid, x);
                gb += resid;
            }
            double inv_n = 1.0 / static_cast<double>(stop - start);
            gw.scale_(inv_n);
            gb *= inv_n;
            ++step;
            double bc1 = 1.0 - std::pow(b1, static_cast<double>(step));
            double bc2 = 1.0 - std::pow(b2, static_cast<double>(step));
            for (int j = 0; j < d; ++j) {
                mw.v[j] = b1 * mw.v[j] + (1 - b1) * gw.v[j];
                vw.v[j] = b2 * vw.v[j] + (1 - b2) * gw.v[j] * gw.v[j];
                w.v[j] -= lr * (mw.v[j] / bc1) / (std::sqrt(vw.v[j] / bc2) + eps);
            }
            mb = b1 * mb + (1 - b1) * gb;
            vb = b2 * vb + (1 - b2) * gb * gb;
            b -= lr * (mb / bc1) / (std::sqrt(vb / bc2) + eps);
        }
    }

    std::vector<double> scores;
    std::vector<int> test_labels;
    for (int r : test_rows) {
        Tensor x = st.apply(embeddings[r]);
        scores.push_back(1.0 / (1.0 + std::exp(-(w.dot(x) + b))));
        test_labels.push_back(labels[r]);
    }

    ProbeResult out;
    out.report = classification_metrics(scores, test_labels);

    double norm = w.norm();
    out.direction.w = w;
    if (norm > 0) out.direction.w.scale_(1.0 / norm);
    out.direction.b = norm > 0 ? b / norm : b;
    out.direction.positive_class_label = 1;
    return out;
}

ProbeReport run_probe_regression(const std::vector<Tensor>& embeddings,
                                 const std::vector<double>& targets,
                                 const std::vector<int>& train_rows,
                                 const std::vector<int>& test_rows, std::uint64_t seed) {
    if (train_rows.empty() || test_rows.empty())
        throw InvalidParams("probe regression: empty split");
    auto [fit_rows, mon_rows] = split_70_30(train_rows, seed);
    (void)mon_rows;
    Standardizer st = Standardizer::fit(embeddings, fit_rows);

    const int d = static_cast<int>(embeddings[0].numel());
    Tensor w({d});
    double b = 0.0;
    const double lr = 1e-3;
    // per-sample SGD, 1000 epochs, seeded reshuffle each epoch
    std::vector<int> order = fit_rows;
    for (int epoch = 0; epoch < 1000; ++epoch) {
        Rng rng(derive_seed(seed, 71, static_cast<std::uint64_t>(epoch)));
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
            int j = static_cast<int>(rng.uniform_int(0, i));
            std::swap(order[i], order[j]);
        }
        for (int r : order) {
            Tensor x = st.apply(embeddings[r]);
            double resid = w.dot(x) + b - targets[r];
            w.axpy_(-lr * 2.0 * resid, x);
            b -= lr * 2.0 * resid;
        }
    }

    ProbeReport rep;
    double abs_sum = 0.0, sq_sum = 0.0;
    for (int r : test_rows) {
        Tensor x = st.apply(embeddings[r]);
        double e = w.dot(x) + b - targets[r];
        abs_sum += std::abs(e);
        sq_sum += e * e;
    }
    rep.mae = abs_sum / static_cast<double>(test_rows.size());
    rep.rmse = std::sqrt(sq_sum / static_cast<double>(test_rows.size()));
    return rep;
}

namespace {

// Cholesky solve of (A + ridge I) x = b for symmetric positive definite A.
std::vector<double> spd_solve(std::vector<double> a, std::vector<double> rhs, int d,
                              double ridge) {
    for (int i = 0; i < d; ++i) a[i * d + i] += ridge;
    // in-place Cholesky
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = a[i * d + j];
            for (int k = 0; k < j; ++k) s -= a[i * d + k] * a[j * d + k];
            if (i == j) {
                if (s <= 0.0) throw SingularCovariance("within-class scatter not positive definite");
                a[i * d + i] = std::sqrt(s);
            } else {
                a[i * d + j] = s / a[j * d + j];
            }
        }
    }
    // forward then backward substitution
    for (int i = 0; i < d; ++i) {
        double s = rhs[i];
        for (int k = 0; k < i; ++k) s -= a[i * d + k] * rhs[k];
        rhs[i] = s / a[i * d + i];
    }
    for (int i = d - 1; i >= 0; --i) {
        double s = rhs[i];
        for (int k = i + 1; k < d; ++k) s -= a[k * d + i] * rhs[k];
        rhs[i] = s / a[i * d + i];
    }
    return rhs;
}

}  // namespace

std::vector<std::array<double, 2>> lda_project(const std::vector<Tensor>& embeddings,
                                               const std::vector<int>& labels, double ridge) {
    const int n = static_cast<int>(embeddings.size());
    if (n < 4) throw InvalidParams("lda_project: too few samples");
    const int d = static_cast<int>(embeddings[0].numel());

    Tensor mu0({d}), mu1({d}), mu({d});
    int n0 = 0, n1 = 0;
    for (int i = 0; i < n; ++i) {
        mu.add_(embeddings[i]);
        if (labels[i] == 1) {
            mu1.add_(embeddings[i]);
            ++n1;
        } else {
            mu0.add_(embeddings[i]);
            ++n0;
        }
    }
    if (n0 == 0 || n1 == 0) throw DegenerateLabels("lda_project: both classes required");
    mu0.scale_(1.0 / n0);
    mu1.scale_(1.0 / n1);
    mu.scale_(1.0 / n);

    std::vector<double> sw(static_cast<std::size_t>(d) * d, 0.0);
    std::vector<Tensor> residuals;
    residuals.reserve(n);
    for (int i = 0; i < n; ++i) {
        Tensor r = embeddings[i];
        r.sub_(labels[i] == 1 ? mu1 : mu0);
        for (int a = 0; a < d; ++a)
            for (int b = 0; b <= a; ++b) {
                double v = r.v[a] * r.v[b] / n;
                sw[a * d + b] += v;
                if (a != b) sw[b * d + a] += v;
            }
        residuals.push_back(std::move(r));
    }

    Tensor diff = mu1;
    diff.sub_(mu0);
    auto a1v = spd_solve(sw, std::vector<double>(diff.v.begin(), diff.v.end()), d, ridge);
    Tensor a1({d});
    a1.v = a1v;
    double a1n = a1.norm();
    if (a1n <= 0) throw SingularCovariance("degenerate discriminant direction");
    a1.scale_(1.0 / a1n);

    // residuals orthogonal to axis 1, then power iteration for the lead PC
    for (auto& r : residuals) r.axpy_(-r.dot(a1), a1);
    Tensor a2({d});
    a2.v[0] = 1.0;
    a2.axpy_(-a2.dot(a1), a1);
    if (a2.norm() < 1e-9) {
        a2.fill(0.0);
        a2.v[std::min(1, d - 1)] = 1.0;
        a2.axpy_(-a2.dot(a1), a1);
    }
    a2.scale_(1.0 / a2.norm());
    for (int it = 0; it < 200; ++it) {
        Tensor next({d});
        for (const auto& r : residuals) next.axpy_(r.dot(a2), r);
        next.axpy_(-next.dot(a1), a1);
        double nn = next.norm();
        if (nn < 1e-14) break;
        next.scale_(1.0 / nn);
        a2 = next;
    }

    std::vector<std::array<double, 2>> coords(n);
    for (int i = 0; i < n; ++i) {
        Tensor c = embeddings[i];
        c.sub_(mu);
        coords[i] = {c.dot(a1), c.dot(a2)};
    }
    return coords;
}

}  // namespace ldae::evaluation
