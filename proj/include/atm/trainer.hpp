// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training loop: Adam with a linear learning-rate ramp, unit-norm decoder
// columns kept by gradient projection plus renormalization, and the ATM mask
// wired in per phase. Every random draw comes from a (seed, step) stream, so
// a run resumed from a checkpoint replays the uninterrupted run exactly.

#pragma once

#include "atm/atm_mask.hpp"
#include "atm/sae_model.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace atm {

enum class Arch { Atm, Vanilla, TopK, JumpRelu };

std::string_view arch_name(Arch arch);
/// Throws ConfigError("arch", ...) on unknown names.
Arch parse_arch(std::string_view name);

struct TrainConfig {
    Arch arch = Arch::Atm;
    int d = 64;
    int n = 256;
    double lr = 3e-4;
    int lr_warmup_steps = 1000;
    int total_steps = 5000;
    int batch_size = 256;
    double lambda_sparse = 1e-3;
    std::uint64_t seed = 0;
    MaskSchedule schedule;
    float beta = 0.99f;
    int topk_k = 32;
    double jumprelu_bandwidth = 1e-3;
    double jumprelu_init_theta = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int checkpoint_every = 1000;  // 0 disables periodic checkpoints

    /// Throws ConfigError naming the first invalid field.
    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct SaeModel {
    SaeParams<float> params;
    ActivationKind<float> kind;
};

SaeModel init_model(const TrainConfig& config);

struct AdamState {
    SaeGrads<float> m;
    SaeGrads<float> v;
    std::int64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

AdamState make_adam(const SaeModel& model, const TrainConfig& config);

/// Linear ramp from 0 at step 0 to config.lr at lr_warmup_steps, then flat.
double lr_at(std::int64_t step, const TrainConfig& config);

/// Bias-corrected Adam. A non-finite gradient throws NumericError before any
/// state is touched. JumpReLU thresholds are clamped at 0 after the update.
void adam_step(AdamState& state, SaeModel& model, const SaeGrads<float>& grads, double lr);

/// Removes from each decoder-gradient column its component along the
/// corresponding decoder column.
void project_decoder_gradient(const SaeParams<float>& params, SaeGrads<float>& grads);
/// Rescales every decoder column to unit norm.
void renormalize_decoder(SaeParams<float>& params);
double max_decoder_norm_error(const SaeParams<float>& params);

struct LogRow {
    std::int64_t step = 0;
    std::string phase;  // warmup | normal | pruning, or "none" for non-ATM archs
    double loss_total = 0;
    double loss_recon = 0;
    double loss_l1 = 0;
    double theta = 0;
    double masked_fraction = 0;
    double lr = 0;
    // In-memory diagnostics, not written to the CSV.
    int max_l0 = 0;
    double decoder_norm_error = 0;

    bool operator==(const LogRow&) const = default;
};

inline constexpr std::string_view kLogHeader =
    "step,phase,loss_total,loss_recon,loss_l1,theta,masked_fraction,lr";

void write_log_csv(const std::filesystem::path& path, const std::vector<LogRow>& rows);
std::string format_log_row(const LogRow& row);

struct TrainState {
    SaeModel model;
    ImportanceTracker tracker;
    AdamState adam;
    std::int64_t next_step = 0;
};

TrainState initial_state(const TrainConfig& config);

/// Checkpoint directory: params.atmp, tracker.atmt, adam.atma, checkpoint.json
/// (next step + config echo).
void save_checkpoint(const std::filesystem::path& dir, const TrainState& state,
                     const TrainConfig& config);
TrainState load_checkpoint(const std::filesystem::path& dir, const TrainConfig& config);

void save_adam(const std::filesystem::path& path, const AdamState& state);
AdamState load_adam(const std::filesystem::path& path);

class TrainingAborted : public NumericError {
public:
    TrainingAborted(std::int64_t step, const std::string& what)
        : NumericError("step " + std::to_string(step), what), step_(step) {}
    std::int64_t step() const noexcept { return step_; }

private:
    std::int64_t step_;
};

struct TrainOptions {
    /// Periodic checkpoints go here when non-empty.
    std::filesystem::path checkpoint_dir;
    /// Continue from this state instead of a fresh initialization.
    std::optional<TrainState> resume;
    std::function<void(const LogRow&, const SaeModel&)> on_step;
};

struct RunArtifacts {
    SaeModel model;
    ImportanceTracker tracker;
    AdamState adam;
    std::vector<LogRow> log;  // rows produced by this call
    TrainConfig config;
};

/// Throws TrainingAborted on a non-finite loss or gradient; the last periodic
/// checkpoint is left in place.
RunArtifacts train(const TrainConfig& config, const MatrixF& data, const TrainOptions& options = {});

}  // namespace atm
