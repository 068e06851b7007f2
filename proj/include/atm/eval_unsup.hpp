// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Unsupervised SAE metrics: reconstruction quality, sparsity, feature
// density, and downstream cross-entropy / KL scores measured through a
// seeded softmax head standing in for the host model.

#pragma once

#include "atm/common.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace atm {

struct ReconstructionMetrics {
    double mse = 0;                 // mean per-sample squared error
    double cosine = 0;              // mean per-sample cosine(x, x_hat)
    double explained_variance = 0;  // 1 - SSE / SS(x - mean x)
    double l2_ratio = 0;            // mean ||x_hat|| / ||x||
    int zero_norm_samples = 0;      // excluded from cosine and l2_ratio
};

/// Requires matching shapes and at least 2 samples.
ReconstructionMetrics reconstruction_metrics(const MatrixD& x, const MatrixD& x_hat);

struct SparsityMetrics {
    double l0_mean = 0;  // entries strictly > 0
    double l1_mean = 0;
};

SparsityMetrics sparsity_metrics(const MatrixD& features);

/// Log10-frequency bins [-6,-5), [-5,-4), ..., [-1,0]; frequencies below
/// 1e-6 (but nonzero) fall into the first bin.
inline constexpr int kDensityBins = 6;

/// Accumulates firing counts over a stream of feature batches.
class FeatureDensity {
public:
    explicit FeatureDensity(int n) : fired_(static_cast<std::size_t>(n), 0) {}
    void add(const MatrixD& features);

    std::int64_t samples() const { return samples_; }
    std::vector<double> frequencies() const;
    std::array<int, kDensityBins> histogram() const;
    int dead_count() const;
    /// Alive features firing on fewer than 1e-4 of samples.
    int rare_count() const;

private:
    std::vector<std::int64_t> fired_;
    std::int64_t samples_ = 0;
};

struct SyntheticHead {
    MatrixD w_head;  // V x d

    int classes() const { return static_cast<int>(w_head.rows()); }
    MatrixD logits(const MatrixD& x) const { return x * w_head.transpose(); }
    /// Per-sample argmax of the clean logits, ties to the lower class.
    std::vector<int> teacher_labels(const MatrixD& x) const;
};

SyntheticHead make_head(int d, int classes, std::uint64_t seed);

struct DownstreamScores {
    std::optional<double> ce_score;  // (H* - H0) / (H_orig - H0)
    std::optional<double> kl_score;  // 1 - KL* / KL0
    double h_orig = 0;
    double h_star = 0;
    double h_zero = 0;
    double kl_star = 0;
    double kl_zero = 0;
    std::string reason;  // why a score is absent
};

DownstreamScores downstream_scores(const SyntheticHead& head, const MatrixD& x, const MatrixD& x_hat,
                                   const std::vector<int>& teacher_labels);

/// Mean cross entropy of softmax(logits) against `labels`.
double mean_cross_entropy(const MatrixD& logits, const std::vector<int>& labels);
/// Mean KL(softmax(p_logits) || softmax(q_logits)) over rows.
double mean_kl(const MatrixD& p_logits, const MatrixD& q_logits);

}  // namespace atm
