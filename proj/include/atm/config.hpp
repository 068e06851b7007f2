// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: one flat JSON object whose keys cover data
// generation, training, the mask schedule and evaluation. Unknown keys are
// rejected; omitted keys take the defaults below (see README for the table).

#pragma once

#include "atm/datagen.hpp"
#include "atm/eval_probing.hpp"
#include "atm/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace atm {

struct DataConfig {
    int m = 48;
    int pairs = 8;
    int train_count = 65536;
    int test_count = 8192;
    double s_mean = 4.0;
    double noise_sigma = 0.0;
    int max_active = 0;
    BaseRates rates;
};

struct EvalConfig {
    int head_classes = 32;
    AbsorptionConfig absorption;
    SparseProbingConfig probing;
};

struct ExperimentConfig {
    std::string label;  // report column name; defaults to the arch name
    DataConfig data;
    TrainConfig train;  // train.d and train.seed double as the data dimension and seed
    EvalConfig eval;

    std::uint64_t seed() const { return train.seed; }
    std::string run_label() const;
    /// Throws ConfigError naming the first invalid key.
    void validate() const;
};

/// Strict parse: unknown keys and wrongly typed values throw ConfigError
/// naming the key.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& config);

/// Every accepted key, in documentation order.
std::vector<std::string> config_keys();

/// Git-style content hash of the canonical JSON form.
std::string config_hash(const ExperimentConfig& config);

}  // namespace atm
