// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Commands behind the `atm_sae` executable. Each cmd_* function throws
// atm::Error subclasses; run_cli maps them onto exit codes.

#pragma once

#include "atm/config.hpp"
#include "atm/report.hpp"
#include "atm/trainer.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace atm {

enum ExitCode : int {
    kExitOk = 0,
    kExitInternal = 1,
    kExitUsage = 2,
    kExitIo = 3,
    kExitNumeric = 4,
};

/// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

namespace layout {
inline constexpr const char* kTrainData = "train.atmd";
inline constexpr const char* kTestData = "test.atmd";
inline constexpr const char* kTrainCodes = "train.atmc";
inline constexpr const char* kTestCodes = "test.atmc";
inline constexpr const char* kDatasetManifest = "dataset.json";
inline constexpr const char* kRunEcho = "run.json";
inline constexpr const char* kTrainLog = "train_log.csv";
inline constexpr const char* kCheckpointDir = "checkpoint";
}  // namespace layout

/// Hash over every dataset payload file, in a fixed order.
std::string dataset_hash(const std::filesystem::path& data_dir);

struct GenerateSummary {
    int d = 0;
    int m = 0;
    int train_count = 0;
    int test_count = 0;
    int implication_pairs = 0;
    std::string dataset_hash;
};

GenerateSummary cmd_generate(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// Writes `state` as the run's checkpoint together with the config echo and
/// training log.
void save_run(const std::filesystem::path& out_dir, const ExperimentConfig& config,
              const std::string& data_hash, const TrainState& state, const std::vector<LogRow>& log);

RunArtifacts cmd_train(const ExperimentConfig& config, const std::filesystem::path& data_dir,
                       const std::filesystem::path& out_dir,
                       const std::function<void(const LogRow&)>& progress = {});

/// Evaluates a run on the dataset's held-out split; the report timestamp is
/// left empty.
MetricsReport evaluate_run(const std::filesystem::path& run_dir, const std::filesystem::path& data_dir);

MetricsReport cmd_eval(const std::filesystem::path& run_dir, const std::filesystem::path& data_dir,
                       const std::filesystem::path& report_path);

void cmd_compare(const std::vector<std::filesystem::path>& reports, const std::filesystem::path& out_csv);

void write_report(const std::filesystem::path& path, const MetricsReport& report);
MetricsReport read_report(const std::filesystem::path& path);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace atm
