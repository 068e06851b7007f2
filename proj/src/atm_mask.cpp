// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0

#include "atm/atm_mask.hpp"

#include "atm/binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace atm {

namespace {

constexpr char kTrackerMagic[] = "ATMT";
constexpr std::uint32_t kTrackerVersion = 1;
constexpr double kThetaFloor = 1e-12;

}  // namespace

ImportanceTracker make_tracker(int n, float beta) {
    if (n < 1) throw ConfigError("n", "must be >= 1");
    if (!(beta > 0.0f && beta < 1.0f)) throw ConfigError("beta", "must lie in (0, 1)");
    ImportanceTracker t;
    t.mag_ema = VectorF::Zero(n);
    t.recon_ema = VectorF::Zero(n);
    t.freq_ema = VectorF::Zero(n);
    t.beta = beta;
    return t;
}

void update_tracker(ImportanceTracker& tracker, const MatrixF& features,
                    const MatrixF& recon_grad_features) {
    const int n = tracker.n();
    if (features.cols() != n || recon_grad_features.cols() != n ||
        features.rows() != recon_grad_features.rows() || features.rows() < 1) {
        throw ShapeError("tracker update expects two B x " + std::to_string(n) + " matrices");
    }
    if (!features.allFinite()) throw NumericError("features", "non-finite tracker input");
    if (!recon_grad_features.allFinite()) throw NumericError("recon_grad_features", "non-finite tracker input");

    const double beta = tracker.beta;
    const double inv_b = 1.0 / static_cast<double>(features.rows());
    const VectorD mag = features.cast<double>().cwiseAbs().colwise().sum().transpose() * inv_b;
    const VectorD rec = recon_grad_features.cast<double>().cwiseAbs().colwise().sum().transpose() * inv_b;
    const VectorD freq = (features.array() > 0.0f).cast<double>().colwise().sum().transpose() * inv_b;
    for (int j = 0; j < n; ++j) {
        tracker.mag_ema(j) = static_cast<float>(beta * tracker.mag_ema(j) + (1.0 - beta) * mag(j));
        tracker.recon_ema(j) = static_cast<float>(beta * tracker.recon_ema(j) + (1.0 - beta) * rec(j));
        tracker.freq_ema(j) = static_cast<float>(beta * tracker.freq_ema(j) + (1.0 - beta) * freq(j));
    }
    ++tracker.step;
}

VectorD importance(const ImportanceTracker& tracker) {
    return tracker.mag_ema.cast<double>().cwiseProduct(tracker.recon_ema.cast<double>());
}

double threshold(const VectorD& scores, double c) {
    if (scores.size() == 0) throw ShapeError("threshold of an empty score vector");
    const double mean = scores.mean();
    const double var = (scores.array() - mean).square().mean();
    return mean + c * std::sqrt(var);
}

VectorD mask_probabilities(const VectorD& scores, double theta, double r) {
    if (!(r > 0.0)) throw ConfigError("r", "must be > 0");
    VectorD p = VectorD::Zero(scores.size());
    if (theta <= kThetaFloor) return p;
    for (Eigen::Index j = 0; j < scores.size(); ++j) {
        const double raw = 1.0 - std::exp(-r * (theta - scores(j)) / theta);
        p(j) = std::clamp(raw, 0.0, 1.0);
    }
    return p;
}

std::vector<int> top_indices(const VectorD& scores, int count) {
    const int n = static_cast<int>(scores.size());
    count = std::clamp(count, 0, n);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + count, order.end(), [&](int a, int b) {
        return scores(a) > scores(b) || (scores(a) == scores(b) && a < b);
    });
    order.resize(count);
    return order;
}

VectorF sample_mask(const VectorD& p, const VectorD& scores, int min_keep, Rng& rng) {
    if (p.size() != scores.size()) throw ShapeError("probabilities and scores differ in length");
    if (min_keep < 0 || min_keep > p.size()) throw ConfigError("min_keep", "must lie in [0, n]");
    VectorF mask(p.size());
    for (Eigen::Index j = 0; j < p.size(); ++j) mask(j) = rng.uniform() > p(j) ? 1.0f : 0.0f;
    for (int j : top_indices(scores, min_keep)) mask(j) = 1.0f;
    return mask;
}

void MaskSchedule::validate(int n) const {
    if (warmup_steps < 0) throw ConfigError("warmup_steps", "must be >= 0");
    if (prune_period < 1) throw ConfigError("prune_period", "must be >= 1");
    if (prune_duration < 1 || prune_duration >= prune_period) {
        throw ConfigError("prune_duration", "must satisfy 0 < prune_duration < prune_period");
    }
    if (!(c_prune > c_base)) throw ConfigError("c_prune", "must exceed c_base");
    if (!(r > 0.0)) throw ConfigError("r", "must be > 0");
    if (min_keep < 1 || min_keep > n) throw ConfigError("min_keep", "must lie in [1, n]");
}

std::string_view phase_name(Phase phase) {
    switch (phase) {
        case Phase::Warmup: return "warmup";
        case Phase::Pruning: return "pruning";
        case Phase::Normal: break;
    }
    return "normal";
}

PhaseState schedule_state(std::int64_t step, const MaskSchedule& schedule) {
    if (step < schedule.warmup_steps) return {Phase::Warmup, schedule.c_base};
    const auto offset = (step - schedule.warmup_steps) % schedule.prune_period;
    if (offset < schedule.prune_duration) return {Phase::Pruning, schedule.c_prune};
    return {Phase::Normal, schedule.c_base};
}

VectorF eval_mask(const ImportanceTracker& tracker, const MaskSchedule& schedule) {
    const VectorD scores = importance(tracker);
    const VectorD p = mask_probabilities(scores, threshold(scores, schedule.c_base), schedule.r);
    return (p.array() < 0.5).cast<float>();
}

void save_tracker(const std::filesystem::path& path, const ImportanceTracker& tracker) {
    ByteWriter w;
    w.magic(kTrackerMagic);
    w.u32(kTrackerVersion);
    w.u32(static_cast<std::uint32_t>(tracker.n()));
    w.f32(tracker.beta);
    w.u64(tracker.step);
    for (const auto* v : {&tracker.mag_ema, &tracker.recon_ema, &tracker.freq_ema}) {
        w.f32s({v->data(), static_cast<std::size_t>(v->size())});
    }
    w.save(path);
}

ImportanceTracker load_tracker(const std::filesystem::path& path) {
    auto r = ByteReader::from_file(path);
    r.expect_magic(kTrackerMagic);
    r.expect_version(kTrackerVersion);
    const auto n = static_cast<Eigen::Index>(r.u32());
    ImportanceTracker t;
    t.beta = r.f32();
    t.step = r.u64();
    for (auto* v : {&t.mag_ema, &t.recon_ema, &t.freq_ema}) {
        v->resize(n);
        r.f32s({v->data(), static_cast<std::size_t>(n)});
    }
    r.expect_end();
    return t;
}

}  // namespace atm
