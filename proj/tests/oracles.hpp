// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used to check the library: plain
// per-sample loops over std::vector, sharing no code with src/.

#pragma once

#include "atm/sae_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace atm::oracle {

using Vec = std::vector<double>;
using Rows = std::vector<Vec>;

inline Rows rows_of(const MatrixD& m) {
    Rows out(static_cast<std::size_t>(m.rows()), Vec(static_cast<std::size_t>(m.cols())));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
    }
    return out;
}

/// Per-sample activation following the textual definitions.
inline Vec activate(const Vec& pre, const ActivationKind<double>& kind) {
    const std::size_t n = pre.size();
    Vec f(n, 0.0);
    if (const auto* t = std::get_if<TopK>(&kind)) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return std::max(pre[a], 0.0) > std::max(pre[b], 0.0);
        });
        for (std::size_t r = 0; r < static_cast<std::size_t>(t->k) && r < n; ++r) {
            f[order[r]] = std::max(pre[order[r]], 0.0);
        }
    } else if (const auto* j = std::get_if<JumpRelu<double>>(&kind)) {
        for (std::size_t i = 0; i < n; ++i) f[i] = pre[i] > j->theta(i) ? pre[i] : 0.0;
    } else {
        for (std::size_t i = 0; i < n; ++i) f[i] = std::max(pre[i], 0.0);
    }
    return f;
}

inline Vec preacts(const SaeParams<double>& p, const Vec& x) {
    Vec pre(static_cast<std::size_t>(p.n()));
    for (int j = 0; j < p.n(); ++j) {
        double s = p.b_enc(j);
        for (int k = 0; k < p.d(); ++k) s += p.w_enc(j, k) * x[k];
        pre[j] = s;
    }
    return pre;
}

/// mean ||x - D(E(x) * mask)||^2 + lambda * mean ||E(x) * mask||_1
inline double loss(const SaeParams<double>& p, const Rows& x, const ActivationKind<double>& kind, const Vec& mask,
                   double lambda) {
    double err = 0.0;
    double l1 = 0.0;
    for (const auto& xi : x) {
        const Vec f = activate(preacts(p, xi), kind);
        for (int k = 0; k < p.d(); ++k) {
            double r = p.b_dec(k);
            for (int j = 0; j < p.n(); ++j) r += p.w_dec(k, j) * f[j] * mask[j];
            err += (r - xi[k]) * (r - xi[k]);
        }
        for (int j = 0; j < p.n(); ++j) l1 += std::abs(f[j] * mask[j]);
    }
    const auto b = static_cast<double>(x.size());
    return err / b + lambda * l1 / b;
}

/// True when a step of size `h` in any parameter cannot change which
/// activation branch a sample takes.
inline bool stable_sample(const SaeParams<double>& p, const Vec& x, const ActivationKind<double>& kind,
                          double margin) {
    const Vec pre = preacts(p, x);
    for (double z : pre) {
        if (std::abs(z) < margin) return false;
    }
    if (const auto* j = std::get_if<JumpRelu<double>>(&kind)) {
        for (std::size_t i = 0; i < pre.size(); ++i) {
            if (std::abs(pre[i] - j->theta(i)) <= j->bandwidth) return false;
        }
    }
    if (const auto* t = std::get_if<TopK>(&kind)) {
        Vec pos;
        for (double z : pre) pos.push_back(std::max(z, 0.0));
        std::sort(pos.begin(), pos.end(), std::greater<>());
        const auto k = static_cast<std::size_t>(t->k);
        if (k < pos.size() && pos[k - 1] > 0.0 && pos[k - 1] - pos[k] < margin) return false;
    }
    return true;
}

struct TensorCheck {
    std::string name;
    double rel_error = 0.0;  // ||analytic - fd|| / max(||analytic||, ||fd||)
    double scale = 0.0;      // max(||analytic||, ||fd||)
};

/// Central differences of oracle::loss over every parameter entry, compared
/// against the analytic gradient for the same instance.
inline std::vector<TensorCheck> gradient_check(const SaeParams<double>& params, const MatrixD& batch,
                                               const ActivationKind<double>& kind, const VectorD& mask,
                                               double lambda, double h = 1e-5) {
    const auto analytic = loss_and_grads<double>(params, batch, kind, mask, lambda).grads;
    const Rows x = rows_of(batch);
    const Vec m(mask.data(), mask.data() + mask.size());

    std::vector<TensorCheck> out;
    const auto compare = [&](const std::string& name, const double* grad, double* value, Eigen::Index size,
                             const SaeParams<double>& p, const ActivationKind<double>& k) {
        double diff2 = 0.0;
        double a2 = 0.0;
        double f2 = 0.0;
        for (Eigen::Index i = 0; i < size; ++i) {
            const double saved = value[i];
            value[i] = saved + h;
            const double up = loss(p, x, k, m, lambda);
            value[i] = saved - h;
            const double down = loss(p, x, k, m, lambda);
            value[i] = saved;
            const double fd = (up - down) / (2.0 * h);
            diff2 += (grad[i] - fd) * (grad[i] - fd);
            a2 += grad[i] * grad[i];
            f2 += fd * fd;
        }
        const double scale = std::sqrt(std::max(a2, f2));
        out.push_back({name, scale > 0.0 ? std::sqrt(diff2) / scale : 0.0, scale});
    };

    SaeParams<double> p = params;
    ActivationKind<double> k = kind;
    compare("w_enc", analytic.w_enc.data(), p.w_enc.data(), p.w_enc.size(), p, k);
    compare("b_enc", analytic.b_enc.data(), p.b_enc.data(), p.b_enc.size(), p, k);
    compare("w_dec", analytic.w_dec.data(), p.w_dec.data(), p.w_dec.size(), p, k);
    compare("b_dec", analytic.b_dec.data(), p.b_dec.data(), p.b_dec.size(), p, k);
    return out;
}

struct Recon {
    double mse, cosine, ev, l2_ratio;
};

inline Recon reconstruction(const Rows& x, const Rows& xh) {
    const std::size_t b = x.size();
    const std::size_t d = x[0].size();
    Vec mean(d, 0.0);
    for (const auto& r : x) {
        for (std::size_t k = 0; k < d; ++k) mean[k] += r[k] / static_cast<double>(b);
    }
    double sse = 0, sst = 0, cos = 0, ratio = 0;
    int kept = 0;
    for (std::size_t i = 0; i < b; ++i) {
        double e = 0, t = 0, dot = 0, nx = 0, nh = 0;
        for (std::size_t k = 0; k < d; ++k) {
            e += (x[i][k] - xh[i][k]) * (x[i][k] - xh[i][k]);
            t += (x[i][k] - mean[k]) * (x[i][k] - mean[k]);
            dot += x[i][k] * xh[i][k];
            nx += x[i][k] * x[i][k];
            nh += xh[i][k] * xh[i][k];
        }
        sse += e;
        sst += t;
        if (nx == 0.0) continue;
        ++kept;
        cos += nh > 0.0 ? dot / std::sqrt(nx * nh) : 0.0;
        ratio += std::sqrt(nh) / std::sqrt(nx);
    }
    return {sse / static_cast<double>(b), kept ? cos / kept : 0.0, 1.0 - sse / sst, kept ? ratio / kept : 0.0};
}

inline std::pair<double, double> l0_l1(const Rows& f) {
    double l0 = 0, l1 = 0;
    for (const auto& r : f) {
        for (double v : r) {
            l0 += v > 0.0 ? 1.0 : 0.0;
            l1 += std::abs(v);
        }
    }
    return {l0 / static_cast<double>(f.size()), l1 / static_cast<double>(f.size())};
}

inline double f1(const std::vector<int>& truth, const std::vector<int>& pred) {
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == 1 && pred[i] == 1) ++tp;
        if (truth[i] == 0 && pred[i] == 1) ++fp;
        if (truth[i] == 1 && pred[i] == 0) ++fn;
    }
    if (tp == 0) return 0.0;
    const double precision = static_cast<double>(tp) / (tp + fp);
    const double recall = static_cast<double>(tp) / (tp + fn);
    return 2.0 * precision * recall / (precision + recall);
}

inline Vec softmax(const Vec& z) {
    const double mx = *std::max_element(z.begin(), z.end());
    Vec e(z.size());
    double s = 0;
    for (std::size_t i = 0; i < z.size(); ++i) s += (e[i] = std::exp(z[i] - mx));
    for (auto& v : e) v /= s;
    return e;
}

inline Vec head_logits(const Rows& w_head, const Vec& v) {
    Vec z(w_head.size(), 0.0);
    for (std::size_t c = 0; c < w_head.size(); ++c) {
        for (std::size_t k = 0; k < v.size(); ++k) z[c] += w_head[c][k] * v[k];
    }
    return z;
}

struct Downstream {
    std::optional<double> ce_score, kl_score;
};

inline Downstream downstream(const Rows& w_head, const Rows& x, const Rows& xh) {
    const std::size_t b = x.size();
    double h_orig = 0, h_star = 0, h_zero = 0, kl_star = 0, kl_zero = 0;
    for (std::size_t i = 0; i < b; ++i) {
        const Vec zo = head_logits(w_head, x[i]);
        const int label = static_cast<int>(std::max_element(zo.begin(), zo.end()) - zo.begin());
        const Vec po = softmax(zo);
        const Vec ps = softmax(head_logits(w_head, xh[i]));
        const Vec pz = softmax(Vec(w_head.size(), 0.0));
        h_orig -= std::log(po[label]);
        h_star -= std::log(ps[label]);
        h_zero -= std::log(pz[label]);
        for (std::size_t c = 0; c < po.size(); ++c) {
            kl_star += po[c] * (std::log(po[c]) - std::log(ps[c]));
            kl_zero += po[c] * (std::log(po[c]) - std::log(pz[c]));
        }
    }
    Downstream out;
    if (h_orig != h_zero) out.ce_score = (h_star - h_zero) / (h_orig - h_zero);
    if (kl_zero > 0) out.kl_score = 1.0 - kl_star / kl_zero;
    return out;
}

/// Population-sigma threshold computed with a two-pass loop.
inline double threshold(const Vec& s, double c) {
    double mean = 0;
    for (double v : s) mean += v;
    mean /= static_cast<double>(s.size());
    double var = 0;
    for (double v : s) var += (v - mean) * (v - mean);
    return mean + c * std::sqrt(var / static_cast<double>(s.size()));
}

}  // namespace atm::oracle
