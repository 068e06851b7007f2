// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0

#include "atm/eval_probing.hpp"

#include "atm/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace atm {

namespace {

MatrixD take_rows(const MatrixD& m, const std::vector<int>& rows) {
    MatrixD out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return out;
}

MatrixD take_cols(const MatrixD& m, const std::vector<int>& cols) {
    MatrixD out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
    return out;
}

std::vector<int> take(const std::vector<int>& v, const std::vector<int>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(v[static_cast<std::size_t>(i)]);
    return out;
}

double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double probe_f1(const MatrixD& features, const std::vector<int>& labels, const std::vector<int>& cols,
                const LogisticOptions& opts) {
    const MatrixD sub = take_cols(features, cols);
    const auto probe = fit_logistic(sub, labels, opts);
    return f1_score(labels, probe.predict(sub));
}

}  // namespace

VectorD LogisticProbe::decision(const MatrixD& x) const {
    return (x * weights).array() + bias;
}

std::vector<int> LogisticProbe::predict(const MatrixD& x) const {
    const VectorD z = decision(x);
    std::vector<int> out(static_cast<std::size_t>(z.size()));
    for (Eigen::Index i = 0; i < z.size(); ++i) out[static_cast<std::size_t>(i)] = z(i) > 0.0 ? 1 : 0;
    return out;
}

LogisticProbe fit_logistic(const MatrixD& x, const std::vector<int>& y, const LogisticOptions& options,
                           std::uint64_t /*seed*/) {
    if (static_cast<std::size_t>(x.rows()) != y.size()) throw ShapeError("label count mismatch");
    if (x.rows() < 10) throw Error("logistic probe needs at least 10 samples");
    const auto positives = std::count(y.begin(), y.end(), 1);
    if (positives == 0 || positives == static_cast<long>(y.size())) {
        throw Error("logistic probe needs both classes present");
    }
    const auto count = static_cast<double>(x.rows());
    VectorD target(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) target(i) = y[static_cast<std::size_t>(i)] ? 1.0 : 0.0;

    LogisticProbe probe;
    probe.weights = VectorD::Zero(x.cols());
    VectorD residual(x.rows());
    for (int it = 0; it < options.iterations; ++it) {
        const VectorD z = probe.decision(x);
        for (Eigen::Index i = 0; i < z.size(); ++i) residual(i) = sigmoid(z(i)) - target(i);
        const VectorD grad_w = x.transpose() * residual / count + options.l2_penalty * probe.weights;
        const double grad_b = residual.sum() / count;
        probe.weights -= options.step * grad_w;
        probe.bias -= options.step * grad_b;
    }
    return probe;
}

double accuracy(const std::vector<int>& truth, const std::vector<int>& predicted) {
    if (truth.size() != predicted.size() || truth.empty()) throw ShapeError("accuracy needs equal non-empty vectors");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hit += (truth[i] != 0) == (predicted[i] != 0) ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double f1_score(const std::vector<int>& truth, const std::vector<int>& predicted) {
    if (truth.size() != predicted.size()) throw ShapeError("f1 needs equal-length vectors");
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool t = truth[i] != 0;
        const bool p = predicted[i] != 0;
        tp += t && p;
        fp += !t && p;
        fn += t && !p;
    }
    if (tp == 0) return 0.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

std::vector<int> ksparse_select(const MatrixD& features, const std::vector<int>& labels, int k) {
    if (static_cast<std::size_t>(features.rows()) != labels.size()) throw ShapeError("label count mismatch");
    const int n = static_cast<int>(features.cols());
    if (k < 0 || k > n) throw ConfigError("k", "must lie in [0, n]");
    VectorD sum_pos = VectorD::Zero(n);
    VectorD sum_neg = VectorD::Zero(n);
    double n_pos = 0.0, n_neg = 0.0;
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        if (labels[static_cast<std::size_t>(i)]) {
            sum_pos += features.row(i).transpose();
            n_pos += 1.0;
        } else {
            sum_neg += features.row(i).transpose();
            n_neg += 1.0;
        }
    }
    VectorD gap(n);
    for (int j = 0; j < n; ++j) {
        const double mp = n_pos > 0 ? sum_pos(j) / n_pos : 0.0;
        const double mn = n_neg > 0 ? sum_neg(j) / n_neg : 0.0;
        gap(j) = std::abs(mp - mn);
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return gap(a) > gap(b); });
    order.resize(k);
    return order;
}

Split split_indices(std::vector<int> indices, double train_fraction, std::uint64_t seed) {
    Rng rng(seed, StreamTag::Split);
    for (std::size_t i = indices.size(); i > 1; --i) {
        std::swap(indices[i - 1], indices[rng.below(i)]);
    }
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(indices.size())));
    Split s;
    s.train.assign(indices.begin(), indices.begin() + static_cast<long>(n_train));
    s.test.assign(indices.begin() + static_cast<long>(n_train), indices.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

std::vector<int> main_latents(const MatrixD& features, const std::vector<int>& labels,
                              const AbsorptionConfig& config) {
    const int cap = std::min<int>(config.k_max, static_cast<int>(features.cols()));
    if (cap < 1) return {};
    const auto ranked = ksparse_select(features, labels, cap);
    std::vector<int> chosen{ranked[0]};
    double f1 = probe_f1(features, labels, chosen, config.probe);
    for (int k = 1; k < cap; ++k) {
        auto candidate = chosen;
        candidate.push_back(ranked[static_cast<std::size_t>(k)]);
        const double next = probe_f1(features, labels, candidate, config.probe);
        if (next - f1 <= config.tau_fs) break;
        chosen = std::move(candidate);
        f1 = next;
    }
    return chosen;
}

std::vector<int> feature_labels(const CodeMatrix& codes, int feature) {
    std::vector<int> y(static_cast<std::size_t>(codes.count()));
    for (int i = 0; i < codes.count(); ++i) y[static_cast<std::size_t>(i)] = codes.codes(i, feature) > 0.0f ? 1 : 0;
    return y;
}

ParentAbsorption absorption_for_feature(const MatrixD& latents, const MatrixD& x, const MatrixD& w_dec,
                                        const std::vector<int>& labels, const Split& split,
                                        const AbsorptionConfig& config) {
    ParentAbsorption out;
    const auto y_train = take(labels, split.train);
    out.main_latents = main_latents(take_rows(latents, split.train), y_train, config);
    const auto probe = fit_logistic(take_rows(x, split.train), y_train, config.probe);
    const VectorD& dir = probe.weights;
    const double dir_norm = dir.norm();

    // Per-latent alignment with the probe direction.
    const VectorD dec_dot = w_dec.transpose() * dir;
    const VectorD dec_norm = w_dec.colwise().norm().transpose();
    std::vector<char> is_main(static_cast<std::size_t>(latents.cols()), 0);
    for (int j : out.main_latents) is_main[static_cast<std::size_t>(j)] = 1;

    for (int i : split.test) {
        if (!labels[static_cast<std::size_t>(i)]) continue;
        ++out.positives;
        const bool main_fires = std::any_of(out.main_latents.begin(), out.main_latents.end(),
                                            [&](int j) { return latents(i, j) > 0.0; });
        if (main_fires) continue;
        const double total = x.row(i).dot(dir);
        if (!(total > 0.0) || !(dir_norm > 0.0)) continue;
        for (Eigen::Index j = 0; j < latents.cols(); ++j) {
            if (is_main[static_cast<std::size_t>(j)] || !(latents(i, j) > 0.0)) continue;
            const double cosine = dec_norm(j) > 0.0 ? dec_dot(j) / (dec_norm(j) * dir_norm) : 0.0;
            if (cosine < config.tau_ps) continue;
            if (latents(i, j) * dec_dot(j) / total >= config.tau_pa) {
                ++out.absorbed;
                break;
            }
        }
    }
    out.score = out.positives > 0 ? static_cast<double>(out.absorbed) / out.positives : 0.0;
    return out;
}

AbsorptionReport absorption_score(const MatrixD& latents, const MatrixD& x, const MatrixD& w_dec,
                                  const CodeMatrix& codes, const GroundTruthDictionary& dict,
                                  const AbsorptionConfig& config, std::uint64_t seed) {
    if (latents.rows() != x.rows() || codes.count() != x.rows()) throw ShapeError("row counts differ");
    const auto parents = dict.parents();
    if (parents.empty()) throw ConfigError("pairs", "absorption needs at least one implication pair");

    std::vector<int> all(static_cast<std::size_t>(x.rows()));
    std::iota(all.begin(), all.end(), 0);
    AbsorptionReport report;
    double sum = 0.0;
    int used = 0;
    for (int parent : parents) {
        const auto labels = feature_labels(codes, parent);
        const Split split = split_indices(all, config.train_fraction, derive_seed(seed, StreamTag::Split, parent));
        const auto train_pos = std::count_if(split.train.begin(), split.train.end(),
                                             [&](int i) { return labels[static_cast<std::size_t>(i)] != 0; });
        ParentAbsorption r;
        if (train_pos == 0 || train_pos == static_cast<long>(split.train.size())) {
            r.excluded = true;
            r.note = "single-class training split";
        } else {
            r = absorption_for_feature(latents, x, w_dec, labels, split, config);
            if (r.positives == 0) {
                r.excluded = true;
                r.note = "no positive test samples";
            }
        }
        r.parent = parent;
        if (r.excluded) {
            report.notes.push_back("parent " + std::to_string(parent) + " excluded: " + r.note);
        } else {
            sum += r.score;
            ++used;
        }
        report.per_parent.push_back(std::move(r));
    }
    report.mean = used > 0 ? sum / used : 0.0;
    return report;
}

ProbeTask sparse_probe_task(const MatrixD& latents, const std::vector<int>& labels,
                            const SparseProbingConfig& config, std::uint64_t seed) {
    ProbeTask task;
    std::vector<int> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(static_cast<int>(i));
    const double total = static_cast<double>(labels.size());
    const double minority = static_cast<double>(std::min(pos.size(), neg.size()));
    if (total == 0 || minority / total < config.min_class_fraction) {
        task.skipped = true;
        task.reason = "class balance below " + std::to_string(config.min_class_fraction);
        return task;
    }

    // Balance the classes by subsampling the majority.
    auto& major = pos.size() > neg.size() ? pos : neg;
    Rng rng(seed, StreamTag::Balance);
    for (std::size_t i = major.size(); i > 1; --i) std::swap(major[i - 1], major[rng.below(i)]);
    major.resize(static_cast<std::size_t>(minority));
    std::vector<int> rows = pos;
    rows.insert(rows.end(), neg.begin(), neg.end());
    std::sort(rows.begin(), rows.end());

    const Split split = split_indices(rows, config.train_fraction, seed);
    const MatrixD train_x = take_rows(latents, split.train);
    const auto train_y = take(labels, split.train);
    const auto test_y = take(labels, split.test);
    if (std::count(train_y.begin(), train_y.end(), 1) == 0 ||
        std::count(train_y.begin(), train_y.end(), 0) == 0 || split.test.empty()) {
        task.skipped = true;
        task.reason = "degenerate split";
        return task;
    }
    task.selected = ksparse_select(train_x, train_y, config.k);
    const auto probe = fit_logistic(take_cols(train_x, task.selected), train_y, config.probe);
    const MatrixD test_x = take_cols(take_rows(latents, split.test), task.selected);
    task.accuracy = accuracy(test_y, probe.predict(test_x));
    return task;
}

SparseProbingReport sparse_probe_accuracy(const MatrixD& latents, const CodeMatrix& codes,
                                          const GroundTruthDictionary& dict,
                                          const SparseProbingConfig& config, std::uint64_t seed) {
    if (latents.rows() != codes.count()) throw ShapeError("row counts differ");
    const auto parents = dict.parents();
    if (parents.empty()) throw ConfigError("pairs", "sparse probing needs at least one parent feature");
    SparseProbingReport report;
    double sum = 0.0;
    int used = 0;
    for (int parent : parents) {
        auto task = sparse_probe_task(latents, feature_labels(codes, parent), config,
                                      derive_seed(seed, StreamTag::Balance, parent));
        task.feature = parent;
        if (!task.skipped) {
            sum += task.accuracy;
            ++used;
        }
        report.per_task.push_back(std::move(task));
    }
    report.mean_top1 = used > 0 ? sum / used : 0.0;
    return report;
}

}  // namespace atm
