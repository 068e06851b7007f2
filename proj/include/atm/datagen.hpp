// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic activations from a known sparse dictionary whose atoms carry
// child => parent implications (a child feature never fires without its
// parent). The ground truth makes feature absorption measurable.

#pragma once

#include "atm/common.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace atm {

struct Implication {
    int child = 0;
    int parent = 0;
    bool operator==(const Implication&) const = default;
};

struct GroundTruthDictionary {
    MatrixD atoms;  // d x m, unit-norm columns
    std::vector<Implication> implications;
    std::vector<double> base_rates;
    std::uint64_t seed = 0;

    int dim() const { return static_cast<int>(atoms.rows()); }
    int atom_count() const { return static_cast<int>(atoms.cols()); }
    /// Distinct parent indices in ascending order.
    std::vector<int> parents() const;
};

/// Throws ConfigError if any invariant of the dictionary is violated.
void validate(const GroundTruthDictionary& dict);

struct BaseRates {
    double parent = 0.15;
    double child = 0.08;
    double other = 0.05;
};

GroundTruthDictionary build_dictionary(int d, int m, int pairs, std::uint64_t seed,
                                       const BaseRates& rates = {});

/// count x m nonnegative atom coefficients.
struct CodeMatrix {
    MatrixF codes;
    int count() const { return static_cast<int>(codes.rows()); }
    int atom_count() const { return static_cast<int>(codes.cols()); }
};

struct ActivationBatch {
    MatrixF data;  // count x d, row-major
    int count() const { return static_cast<int>(data.rows()); }
    int dim() const { return static_cast<int>(data.cols()); }
};

/// Expected number of active atoms per row after implication closure,
/// conditioned on the row being nonzero, when atom j fires independently
/// with probability `rates[j]`.
double expected_active_count(const GroundTruthDictionary& dict, const std::vector<double>& rates);

/// Scales the dictionary base rates (capped at 1) so that
/// expected_active_count(...) == s_mean.
std::vector<double> activation_rates(const GroundTruthDictionary& dict, double s_mean);

/// Each atom fires independently with its rescaled rate and a coefficient
/// uniform on [0.5, 2]; a firing child forces its parent on. Rows that end
/// up empty or with more than `max_active` atoms (0 = no cap) are redrawn.
/// Row i uses its own random stream, so the result is independent of
/// evaluation order.
CodeMatrix sample_codes(const GroundTruthDictionary& dict, int count, double s_mean,
                        std::uint64_t seed, int max_active = 0);

/// data = codes * atoms^T + N(0, noise_sigma^2) per entry.
ActivationBatch render_activations(const GroundTruthDictionary& dict, const CodeMatrix& codes,
                                   double noise_sigma, std::uint64_t seed);

struct LoadedDataset {
    ActivationBatch batch;
    GroundTruthDictionary dict;
    double noise_sigma = 0.0;
};

/// Binary payload ("ATMD") at `path`, metadata sidecar at metadata_path(path).
void save_dataset(const std::filesystem::path& path, const ActivationBatch& batch,
                  const GroundTruthDictionary& dict, double noise_sigma);
LoadedDataset load_dataset(const std::filesystem::path& path);
std::filesystem::path metadata_path(const std::filesystem::path& path);

/// Ground-truth codes ("ATMC"): magic, u32 version, u32 m, u64 count, float32 rows.
void save_codes(const std::filesystem::path& path, const CodeMatrix& codes);
CodeMatrix load_codes(const std::filesystem::path& path);

}  // namespace atm
