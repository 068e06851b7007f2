// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// The metrics report written by `atm_sae eval` and the comparison table
// built from several of them.

#pragma once

#include "atm/eval_probing.hpp"
#include "atm/eval_unsup.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace atm {

inline constexpr int kReportSchemaVersion = 1;

struct UnsupReport {
    double mse = 0;
    double cosine = 0;
    double explained_variance = 0;
    double l2_ratio = 0;
    double l0_mean = 0;
    double l1_mean = 0;
    std::optional<double> ce_score;
    std::optional<double> kl_score;
    int dead_feature_count = 0;
    std::array<int, kDensityBins> density_histogram{};
    int rare_feature_count = 0;
    int zero_norm_samples = 0;
    std::string downstream_note;

    bool operator==(const UnsupReport&) const = default;
};

struct MetricsReport {
    int schema_version = kReportSchemaVersion;
    std::string label;
    std::string arch;
    std::string config_hash;
    std::string dataset_hash;
    std::uint64_t seed = 0;
    std::string timestamp;
    UnsupReport unsup;
    AbsorptionReport absorption;
    SparseProbingReport sparse_probing;
    nlohmann::json reference;  // published values for this arch, never compared against
};

nlohmann::json report_to_json(const MetricsReport& report);
/// Throws ConfigError on missing keys or a schema mismatch.
MetricsReport report_from_json(const nlohmann::json& j);

/// Published reference values (Gemma-2-2b, layer 12) for an architecture,
/// keyed like comparison_rows(); null for unknown archs.
nlohmann::json reference_values(std::string_view arch);

struct ComparisonRow {
    std::string metric;
    std::vector<std::optional<double>> values;
};

/// The nine headline metrics in table order: absorption, mse, cosine,
/// kl_score, ce_score, explained_variance, l0, l1, sparse_probing.
std::vector<std::string> comparison_metrics();
std::optional<double> metric_value(const MetricsReport& report, const std::string& metric);

/// CSV: header "metric,<label...>,<label> (reference)...", one row per metric,
/// columns in the order given. Throws ConfigError("reports", ...) when fewer
/// than two reports are given or their dataset hashes differ.
std::string comparison_csv(const std::vector<MetricsReport>& reports);

}  // namespace atm
