#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ldae/latentops.hpp"
#include "ldae/tensor.hpp"

namespace ldae::evaluation {

struct ProbeReport {
    double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0, mcc = 0.0, roc_auc = 0.0;
    double mae = 0.0, rmse = 0.0;
};

struct SingularCovariance : std::runtime_error {
    explicit SingularCovariance(const std::string& m)
        : std::runtime_error("SingularCovariance: " + m) {}
};

// Mann-Whitney rank statistic with midrank tie correction.
double roc_auc_rank(const std::vector<double>& scores, const std::vector<int>& labels);

// Threshold-0.5 confusion metrics plus the rank AUC.
ProbeReport classification_metrics(const std::vector<double>& scores,
                                   const std::vector<int>& labels);

struct ProbeResult {
    ProbeReport report;
    latentops::DirectionVector direction;  // in standardized space
};

// Linear classifier on standardized embeddings: the train rows are split
// 70/30 (seeded) for fitting/monitoring, metrics are computed on test rows.
ProbeResult run_probe_classification(const std::vector<Tensor>& embeddings,
                                     const std::vector<int>& labels,
                                     const std::vector<int>& train_rows,
                                     const std::vector<int>& test_rows, std::uint64_t seed);

// Linear regressor via per-sample SGD on standardized embeddings.
ProbeReport run_probe_regression(const std::vector<Tensor>& embeddings,
                                 const std::vector<double>& targets,
                                 const std::vector<int>& train_rows,
                                 const std::vector<int>& test_rows, std::uint64_t seed);

// Axis 1: Fisher discriminant direction of S_w^-1 (mu1 - mu0); axis 2:
// leading principal component of within-class residuals orthogonal to axis 1.
std::vector<std::array<double, 2>> lda_project(const std::vector<Tensor>& embeddings,
                                               const std::vector<int>& labels,
                                               double ridge = 1e-3);

}  // namespace ldae::evaluation
