// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Supervised evaluations: logistic probes, k-sparse latent selection, the
// feature-absorption score against ground-truth parent features, and top-K
// sparse-probing accuracy.

#pragma once

#include "atm/common.hpp"
#include "atm/datagen.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace atm {

struct LogisticOptions {
    double l2_penalty = 1e-3;
    int iterations = 500;
    double step = 0.1;
};

struct LogisticProbe {
    VectorD weights;
    double bias = 0.0;

    int dim() const { return static_cast<int>(weights.size()); }
    VectorD decision(const MatrixD& x) const;
    std::vector<int> predict(const MatrixD& x) const;
};

/// Full-batch gradient descent on the L2-regularized mean logistic loss from
/// a zero initialization (the bias is not penalized). `seed` is accepted for
/// interface stability; the procedure itself is deterministic.
/// Throws Error when only one class is present or fewer than 10 rows are given.
LogisticProbe fit_logistic(const MatrixD& x, const std::vector<int>& y, const LogisticOptions& options = {},
                           std::uint64_t seed = 0);

double accuracy(const std::vector<int>& truth, const std::vector<int>& predicted);
/// F1 of the positive class; 0 when there are no true or predicted positives.
double f1_score(const std::vector<int>& truth, const std::vector<int>& predicted);

/// Latents ranked by |mean(f | y=1) - mean(f | y=0)| descending, ties to the
/// lower index; the first K.
std::vector<int> ksparse_select(const MatrixD& features, const std::vector<int>& labels, int k);

struct Split {
    std::vector<int> train;
    std::vector<int> test;
};

/// Seeded shuffle of `indices`; the first round(train_fraction * size) go to
/// train. Both halves are returned sorted.
Split split_indices(std::vector<int> indices, double train_fraction, std::uint64_t seed);

struct AbsorptionConfig {
    double tau_fs = 0.03;
    double tau_ps = 0.025;
    double tau_pa = 0.4;
    int k_max = 8;
    double train_fraction = 0.8;
    LogisticOptions probe;
};

/// Greedy growth along the k-sparse ranking: keep adding the next latent
/// while the F1 of a probe retrained on the selection improves by more than
/// tau_fs, up to k_max latents.
std::vector<int> main_latents(const MatrixD& features, const std::vector<int>& labels,
                              const AbsorptionConfig& config);

struct ParentAbsorption {
    int parent = -1;
    std::vector<int> main_latents;
    int positives = 0;
    int absorbed = 0;
    double score = 0.0;
    bool excluded = false;
    std::string note;
};

struct AbsorptionReport {
    std::vector<ParentAbsorption> per_parent;
    double mean = 0.0;  // unweighted over non-excluded parents
    std::vector<std::string> notes;
};

/// Absorption for one binary feature. `latents` are SAE codes (count x n),
/// `x` the activations (count x d), `w_dec` the decoder (d x n).
ParentAbsorption absorption_for_feature(const MatrixD& latents, const MatrixD& x, const MatrixD& w_dec,
                                        const std::vector<int>& labels, const Split& split,
                                        const AbsorptionConfig& config);

/// One task per parent feature of the dictionary, label = parent active in
/// `codes`; parents are visited in ascending index order.
AbsorptionReport absorption_score(const MatrixD& latents, const MatrixD& x, const MatrixD& w_dec,
                                  const CodeMatrix& codes, const GroundTruthDictionary& dict,
                                  const AbsorptionConfig& config, std::uint64_t seed);

struct ProbeTask {
    int feature = -1;
    double accuracy = 0.0;
    std::vector<int> selected;
    bool skipped = false;
    std::string reason;
};

struct SparseProbingReport {
    std::vector<ProbeTask> per_task;
    double mean_top1 = 0.0;  // mean over non-skipped tasks
};

struct SparseProbingConfig {
    int k = 1;
    double train_fraction = 0.8;
    double min_class_fraction = 0.05;
    LogisticOptions probe;
};

/// Class-balanced binary task: all minority-class rows plus an equal-size
/// seeded sample of the majority class, split train/test, top-K latents by
/// mean difference on train, probe on those latents, accuracy on test.
ProbeTask sparse_probe_task(const MatrixD& latents, const std::vector<int>& labels,
                            const SparseProbingConfig& config, std::uint64_t seed);

SparseProbingReport sparse_probe_accuracy(const MatrixD& latents, const CodeMatrix& codes,
                                          const GroundTruthDictionary& dict,
                                          const SparseProbingConfig& config, std::uint64_t seed);

/// labels[i] = 1 iff codes[i][feature] > 0.
std::vector<int> feature_labels(const CodeMatrix& codes, int feature);

}  // namespace atm
