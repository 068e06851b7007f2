// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// A trained model prepared for evaluation. ATM runs use the deterministic
// inference mask derived from the final importance tracker; other
// architectures use an all-ones mask.

#pragma once

#include "atm/trainer.hpp"

namespace atm {

struct EvalModel {
    SaeModel model;
    VectorF mask;
};

EvalModel make_eval_model(SaeModel model, const TrainConfig& config, const ImportanceTracker& tracker);

struct Encoded {
    MatrixD latents;  // masked features, count x n
    MatrixD recon;    // count x d
};

/// Encodes in chunks of `chunk` rows.
Encoded encode(const EvalModel& eval, const MatrixF& x, int chunk = 4096);

}  // namespace atm
