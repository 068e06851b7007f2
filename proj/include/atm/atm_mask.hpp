// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Adaptive temporal masking.
//
// Per training step:
//   1. EMAs of each feature's mean |activation| and mean |dL_recon/df| are
//      updated from the batch (a third EMA, firing frequency, is kept for
//      diagnostics only).
//   2. importance_j = magnitude_ema_j * recon_ema_j
//   3. theta = mean(importance) + c * std(importance), with c raised during
//      periodic pruning phases.
//   4. p_j = clamp(1 - exp(-r (theta - importance_j) / theta), 0, 1) is the
//      probability that feature j is masked.
//   5. mask_j = 1{u_j > p_j}, then the `min_keep` most important features are
//      forced on.
// No masking happens during warmup.

#pragma once

#include "atm/common.hpp"
#include "atm/random.hpp"

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace atm {

struct ImportanceTracker {
    VectorF mag_ema;    // Magnitude EMA
    VectorF recon_ema;  // reconstruction-contribution EMA
    VectorF freq_ema;   // firing-frequency EMA, in [0, 1]
    float beta = 0.99f;
    std::uint64_t step = 0;

    int n() const { return static_cast<int>(mag_ema.size()); }
};

ImportanceTracker make_tracker(int n, float beta = 0.99f);

/// One EMA step from a batch of pre-mask features and their reconstruction
/// gradients (both B x n). Throws NumericError on non-finite input.
void update_tracker(ImportanceTracker& tracker, const MatrixF& features,
                    const MatrixF& recon_grad_features);

VectorD importance(const ImportanceTracker& tracker);

/// mean + c * population standard deviation.
double threshold(const VectorD& scores, double c);

/// Zero everywhere when theta <= 1e-12.
VectorD mask_probabilities(const VectorD& scores, double theta, double r);

/// Uniform draws are consumed in feature-index order.
VectorF sample_mask(const VectorD& p, const VectorD& scores, int min_keep, Rng& rng);

/// Indices of the `count` largest scores, ties to the lower index, in rank order.
std::vector<int> top_indices(const VectorD& scores, int count);

struct MaskSchedule {
    int warmup_steps = 1000;
    int prune_period = 1000;
    int prune_duration = 100;
    double c_base = 0.0;
    double c_prune = 1.0;
    double r = 0.5;
    int min_keep = 32;

    /// Throws ConfigError naming the first bad field.
    void validate(int n) const;
};

enum class Phase { Warmup, Normal, Pruning };

std::string_view phase_name(Phase phase);

struct PhaseState {
    Phase phase = Phase::Normal;
    double c_effective = 0.0;
};

/// Pruning windows are measured from the end of warmup.
PhaseState schedule_state(std::int64_t step, const MaskSchedule& schedule);

/// Deterministic inference-time mask: keep feature j iff p_j < 0.5, with
/// theta computed at c_base.
VectorF eval_mask(const ImportanceTracker& tracker, const MaskSchedule& schedule);

/// "ATMT" snapshot: magic, u32 version, u32 n, f32 beta, u64 step, then the
/// three EMA arrays as float32.
void save_tracker(const std::filesystem::path& path, const ImportanceTracker& tracker);
ImportanceTracker load_tracker(const std::filesystem::path& path);

}  // namespace atm
