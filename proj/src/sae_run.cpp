// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0

#include "atm/sae_run.hpp"

#include <algorithm>

namespace atm {

EvalModel make_eval_model(SaeModel model, const TrainConfig& config, const ImportanceTracker& tracker) {
    EvalModel out;
    const int n = model.params.n();
    out.mask = config.arch == Arch::Atm ? eval_mask(tracker, config.schedule) : VectorF::Ones(n);
    out.model = std::move(model);
    return out;
}

Encoded encode(const EvalModel& eval, const MatrixF& x, int chunk) {
    const auto count = x.rows();
    Encoded out;
    out.latents.resize(count, eval.model.params.n());
    out.recon.resize(count, eval.model.params.d());
    for (Eigen::Index start = 0; start < count; start += chunk) {
        const auto rows = std::min<Eigen::Index>(chunk, count - start);
        const MatrixF block = x.middleRows(start, rows);
        const auto tr = forward(eval.model.params, block, eval.model.kind, eval.mask);
        out.latents.middleRows(start, rows) = tr.masked_features.cast<double>();
        out.recon.middleRows(start, rows) = tr.recon.cast<double>();
    }
    return out;
}

}  // namespace atm
