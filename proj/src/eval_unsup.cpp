// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0

#include "atm/eval_unsup.hpp"

#include "atm/random.hpp"

#include <algorithm>
#include <cmath>

namespace atm {

namespace {

VectorD log_softmax(const Eigen::Ref<const Eigen::RowVectorXd>& logits) {
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    return (logits.array() - lse).transpose();
}

}  // namespace

ReconstructionMetrics reconstruction_metrics(const MatrixD& x, const MatrixD& x_hat) {
    if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) {
        throw ShapeError("x and x_hat differ in shape");
    }
    if (x.rows() < 2) throw ShapeError("reconstruction metrics need at least 2 samples");

    ReconstructionMetrics out;
    const auto count = x.rows();
    const Eigen::RowVectorXd mean = x.colwise().mean();
    double sse = 0.0;
    double sst = 0.0;
    double cos_sum = 0.0;
    double ratio_sum = 0.0;
    for (Eigen::Index i = 0; i < count; ++i) {
        const double err = (x.row(i) - x_hat.row(i)).squaredNorm();
        sse += err;
        sst += (x.row(i) - mean).squaredNorm();
        const double nx = x.row(i).norm();
        const double nh = x_hat.row(i).norm();
        if (nx == 0.0) {
            ++out.zero_norm_samples;
            continue;
        }
        cos_sum += nh > 0.0 ? x.row(i).dot(x_hat.row(i)) / (nx * nh) : 0.0;
        ratio_sum += nh / nx;
    }
    const auto kept = static_cast<double>(count - out.zero_norm_samples);
    out.mse = sse / static_cast<double>(count);
    out.explained_variance = 1.0 - sse / sst;
    out.cosine = kept > 0 ? cos_sum / kept : 0.0;
    out.l2_ratio = kept > 0 ? ratio_sum / kept : 0.0;
    return out;
}

SparsityMetrics sparsity_metrics(const MatrixD& features) {
    if (features.rows() == 0) return {};
    const auto count = static_cast<double>(features.rows());
    return {static_cast<double>((features.array() > 0.0).count()) / count,
            features.cwiseAbs().sum() / count};
}

void FeatureDensity::add(const MatrixD& features) {
    if (features.cols() != static_cast<Eigen::Index>(fired_.size())) {
        throw ShapeError("feature batch width does not match density tracker");
    }
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        for (Eigen::Index j = 0; j < features.cols(); ++j) {
            if (features(i, j) > 0.0) ++fired_[static_cast<std::size_t>(j)];
        }
    }
    samples_ += features.rows();
}

std::vector<double> FeatureDensity::frequencies() const {
    std::vector<double> f(fired_.size(), 0.0);
    if (samples_ == 0) return f;
    for (std::size_t j = 0; j < f.size(); ++j) {
        f[j] = static_cast<double>(fired_[j]) / static_cast<double>(samples_);
    }
    return f;
}

std::array<int, kDensityBins> FeatureDensity::histogram() const {
    std::array<int, kDensityBins> h{};
    for (double f : frequencies()) {
        if (f <= 0.0) continue;
        const int bin = static_cast<int>(std::floor(std::log10(f))) + kDensityBins;
        h[static_cast<std::size_t>(std::clamp(bin, 0, kDensityBins - 1))] += 1;
    }
    return h;
}

int FeatureDensity::dead_count() const {
    return static_cast<int>(std::count(fired_.begin(), fired_.end(), 0));
}

int FeatureDensity::rare_count() const {
    int rare = 0;
    for (double f : frequencies()) rare += (f > 0.0 && f < 1e-4) ? 1 : 0;
    return rare;
}

std::vector<int> SyntheticHead::teacher_labels(const MatrixD& x) const {
    const MatrixD z = logits(x);
    std::vector<int> labels(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        Eigen::Index arg = 0;
        z.row(i).maxCoeff(&arg);  // first maximum wins
        labels[static_cast<std::size_t>(i)] = static_cast<int>(arg);
    }
    return labels;
}

SyntheticHead make_head(int d, int classes, std::uint64_t seed) {
    if (d < 1 || classes < 2) throw ConfigError("head_classes", "need d >= 1 and at least 2 classes");
    SyntheticHead head;
    head.w_head.resize(classes, d);
    for (int v = 0; v < classes; ++v) {
        Rng rng(seed, StreamTag::Head, static_cast<std::uint64_t>(v));
        for (int k = 0; k < d; ++k) head.w_head(v, k) = rng.normal();
    }
    return head;
}

double mean_cross_entropy(const MatrixD& logits, const std::vector<int>& labels) {
    if (static_cast<std::size_t>(logits.rows()) != labels.size()) throw ShapeError("label count mismatch");
    double total = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        total -= log_softmax(logits.row(i))(labels[static_cast<std::size_t>(i)]);
    }
    return total / static_cast<double>(logits.rows());
}

double mean_kl(const MatrixD& p_logits, const MatrixD& q_logits) {
    if (p_logits.rows() != q_logits.rows() || p_logits.cols() != q_logits.cols()) {
        throw ShapeError("logit shapes differ");
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < p_logits.rows(); ++i) {
        const VectorD lp = log_softmax(p_logits.row(i));
        const VectorD lq = log_softmax(q_logits.row(i));
        total += (lp.array().exp() * (lp - lq).array()).sum();
    }
    return total / static_cast<double>(p_logits.rows());
}

DownstreamScores downstream_scores(const SyntheticHead& head, const MatrixD& x, const MatrixD& x_hat,
                                   const std::vector<int>& teacher_labels) {
    if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) throw ShapeError("x and x_hat differ in shape");
    const MatrixD z_orig = head.logits(x);
    const MatrixD z_star = head.logits(x_hat);
    const MatrixD z_zero = head.logits(MatrixD::Zero(x.rows(), x.cols()));

    DownstreamScores s;
    s.h_orig = mean_cross_entropy(z_orig, teacher_labels);
    s.h_star = mean_cross_entropy(z_star, teacher_labels);
    s.h_zero = mean_cross_entropy(z_zero, teacher_labels);
    s.kl_star = mean_kl(z_orig, z_star);
    s.kl_zero = mean_kl(z_orig, z_zero);

    if (s.h_orig != s.h_zero) {
        s.ce_score = (s.h_star - s.h_zero) / (s.h_orig - s.h_zero);
    } else {
        s.reason = "H_orig equals H_0";
    }
    if (s.kl_zero > 0.0) {
        s.kl_score = 1.0 - s.kl_star / s.kl_zero;
    } else {
        if (!s.reason.empty()) s.reason += "; ";
        s.reason += "KL_0 is zero";
    }
    return s;
}

}  // namespace atm
