// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0

#include "atm/sae_model.hpp"

#include "atm/binary_io.hpp"
#include "atm/random.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

namespace atm {

namespace {

constexpr char kParamsMagic[] = "ATMP";
constexpr std::uint32_t kParamsVersion = 1;

enum class KindTag : std::uint8_t { Relu = 0, TopK = 1, JumpRelu = 2 };

template <class T>
void keep_top_k(const T* in, T* out, int n, int k, std::vector<int>& order) {
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    const auto by_value = [&](int a, int b) {
        const T va = std::max(in[a], T(0));
        const T vb = std::max(in[b], T(0));
        return va > vb || (va == vb && a < b);
    };
    std::nth_element(order.begin(), order.begin() + (k - 1), order.end(), by_value);
    std::fill(out, out + n, T(0));
    for (int r = 0; r < k; ++r) out[order[r]] = std::max(in[order[r]], T(0));
}

template <class T>
void check_finite(const char* name, const Eigen::DenseBase<T>& m) {
    if (!m.allFinite()) throw NumericError(name, "non-finite gradient");
}

}  // namespace

template <class T>
void validate_kind(const ActivationKind<T>& kind, int n) {
    if (const auto* t = std::get_if<TopK>(&kind)) {
        if (t->k < 1 || t->k > n) throw ConfigError("topk_k", "must lie in [1, n]");
    } else if (const auto* j = std::get_if<JumpRelu<T>>(&kind)) {
        if (j->theta.size() != n) throw ConfigError("jumprelu_theta", "must have n entries");
        if ((j->theta.array() < T(0)).any() || !j->theta.allFinite()) {
            throw ConfigError("jumprelu_theta", "entries must be finite and >= 0");
        }
        if (!(j->bandwidth > T(0))) throw ConfigError("jumprelu_bandwidth", "must be > 0");
    }
}

SaeParams<float> init_params(int d, int n, std::uint64_t seed) {
    if (d < 1) throw ConfigError("d", "must be >= 1");
    if (n <= d) throw ConfigError("n", "latent width must exceed input dimension (n > d)");
    SaeParams<float> p;
    MatrixD dec(d, n);
    for (int j = 0; j < n; ++j) {
        Rng rng(seed, StreamTag::Init, static_cast<std::uint64_t>(j));
        for (int i = 0; i < d; ++i) dec(i, j) = rng.normal();
        dec.col(j).normalize();
    }
    p.w_dec = dec.cast<float>();
    p.w_enc = p.w_dec.transpose();
    p.b_enc = VectorF::Zero(n);
    p.b_dec = VectorF::Zero(d);
    return p;
}

template <class T>
Matrix<T> apply_activation(const Matrix<T>& preacts, const ActivationKind<T>& kind) {
    const auto rows = preacts.rows();
    const auto n = static_cast<int>(preacts.cols());
    if (std::holds_alternative<Relu>(kind)) {
        return preacts.cwiseMax(T(0));
    }
    Matrix<T> out(rows, n);
    if (const auto* t = std::get_if<TopK>(&kind)) {
        const int k = std::min(t->k, n);
        std::vector<int> order;
        for (Eigen::Index i = 0; i < rows; ++i) {
            keep_top_k(preacts.row(i).data(), out.row(i).data(), n, k, order);
        }
        return out;
    }
    const auto& jr = std::get<JumpRelu<T>>(kind);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (int j = 0; j < n; ++j) {
            const T z = preacts(i, j);
            out(i, j) = z > jr.theta(j) ? z : T(0);
        }
    }
    return out;
}

template <class T>
Matrix<T> decode(const SaeParams<T>& params, const Matrix<T>& codes) {
    Matrix<T> recon = codes * params.w_dec.transpose();
    recon.rowwise() += params.b_dec.transpose();
    return recon;
}

template <class T>
ForwardTrace<T> forward(const SaeParams<T>& params, const Matrix<T>& batch,
                        const ActivationKind<T>& kind, const Vector<T>& mask) {
    if (batch.cols() != params.d()) {
        throw ShapeError("batch has " + std::to_string(batch.cols()) + " columns, model expects d=" +
                         std::to_string(params.d()));
    }
    if (mask.size() != params.n()) {
        throw ShapeError("mask has " + std::to_string(mask.size()) + " entries, model has n=" +
                         std::to_string(params.n()));
    }
    ForwardTrace<T> tr;
    tr.preacts = batch * params.w_enc.transpose();
    tr.preacts.rowwise() += params.b_enc.transpose();
    tr.features = apply_activation(tr.preacts, kind);
    tr.masked_features = tr.features.array().rowwise() * mask.transpose().array();
    tr.recon = decode(params, tr.masked_features);
    const T scale = T(2) / static_cast<T>(batch.rows());
    tr.recon_grad_features = (scale * (tr.recon - batch)) * params.w_dec;
    return tr;
}

template <class T>
LossAndGrads<T> loss_and_grads(const SaeParams<T>& params, const Matrix<T>& batch,
                               const ActivationKind<T>& kind, const Vector<T>& mask,
                               T lambda_sparse) {
    if (!(lambda_sparse >= T(0))) throw ConfigError("lambda_sparse", "must be >= 0");
    LossAndGrads<T> out;
    out.trace = forward(params, batch, kind, mask);
    const auto& tr = out.trace;
    const T inv_b = T(1) / static_cast<T>(batch.rows());

    const Matrix<T> diff = tr.recon - batch;
    out.recon = diff.squaredNorm() * inv_b;
    out.l1 = tr.masked_features.cwiseAbs().sum() * inv_b;
    out.total = out.recon + lambda_sparse * out.l1;

    auto& g = out.grads;
    const Matrix<T> g_recon = (T(2) * inv_b) * diff;
    g.w_dec = g_recon.transpose() * tr.masked_features;
    g.b_dec = g_recon.colwise().sum().transpose();

    // Masked features are nonnegative, so d|y|/dy = 1 on the whole domain.
    Matrix<T> g_feat = tr.recon_grad_features.array() + lambda_sparse * inv_b;
    g_feat.array().rowwise() *= mask.transpose().array();

    Matrix<T> g_pre(g_feat.rows(), g_feat.cols());
    if (std::holds_alternative<Relu>(kind)) {
        g_pre = (tr.preacts.array() > T(0)).select(g_feat, T(0));
    } else if (std::holds_alternative<TopK>(kind)) {
        g_pre = (tr.features.array() > T(0)).select(g_feat, T(0));
    } else {
        const auto& jr = std::get<JumpRelu<T>>(kind);
        g.theta = Vector<T>::Zero(params.n());
        const T half = jr.bandwidth / T(2);
        for (Eigen::Index i = 0; i < g_pre.rows(); ++i) {
            for (Eigen::Index j = 0; j < g_pre.cols(); ++j) {
                const T z = tr.preacts(i, j);
                const T th = jr.theta(j);
                g_pre(i, j) = z > th ? g_feat(i, j) : T(0);
                if (std::abs(z - th) < half) g.theta(j) -= g_feat(i, j) * th / jr.bandwidth;
            }
        }
    }
    g.w_enc = g_pre.transpose() * batch;
    g.b_enc = g_pre.colwise().sum().transpose();

    check_finite("grad.w_enc", g.w_enc);
    check_finite("grad.b_enc", g.b_enc);
    check_finite("grad.w_dec", g.w_dec);
    check_finite("grad.b_dec", g.b_dec);
    check_finite("grad.theta", g.theta);
    return out;
}

void save_params(const std::filesystem::path& path, const SaeParams<float>& params,
                 const ActivationKind<float>& kind) {
    ByteWriter w;
    w.magic(kParamsMagic);
    w.u32(kParamsVersion);
    w.u32(static_cast<std::uint32_t>(params.d()));
    w.u32(static_cast<std::uint32_t>(params.n()));
    if (std::holds_alternative<Relu>(kind)) {
        w.u8(static_cast<std::uint8_t>(KindTag::Relu));
    } else if (const auto* t = std::get_if<TopK>(&kind)) {
        w.u8(static_cast<std::uint8_t>(KindTag::TopK));
        w.u32(static_cast<std::uint32_t>(t->k));
    } else {
        const auto& jr = std::get<JumpRelu<float>>(kind);
        w.u8(static_cast<std::uint8_t>(KindTag::JumpRelu));
        w.f32s({jr.theta.data(), static_cast<std::size_t>(jr.theta.size())});
    }
    const auto put = [&](const auto& m) { w.f32s({m.data(), static_cast<std::size_t>(m.size())}); };
    put(params.w_enc);
    put(params.b_enc);
    put(params.w_dec);
    put(params.b_dec);
    w.save(path);
}

LoadedParams load_params(const std::filesystem::path& path, float jumprelu_bandwidth) {
    auto r = ByteReader::from_file(path);
    r.expect_magic(kParamsMagic);
    r.expect_version(kParamsVersion);
    const auto d = static_cast<Eigen::Index>(r.u32());
    const auto n = static_cast<Eigen::Index>(r.u32());
    if (d < 1 || n <= d) throw FormatError(r.offset(), "invalid shape");
    const auto tag_at = r.offset();
    const auto tag = r.u8();
    LoadedParams out;
    switch (static_cast<KindTag>(tag)) {
        case KindTag::Relu:
            out.kind = Relu{};
            break;
        case KindTag::TopK:
            out.kind = TopK{static_cast<int>(r.u32())};
            break;
        case KindTag::JumpRelu: {
            JumpRelu<float> jr;
            jr.theta.resize(n);
            jr.bandwidth = jumprelu_bandwidth;
            r.f32s({jr.theta.data(), static_cast<std::size_t>(n)});
            out.kind = std::move(jr);
            break;
        }
        default:
            throw FormatError(tag_at, "unknown activation kind tag " + std::to_string(tag));
    }
    auto& p = out.params;
    p.w_enc.resize(n, d);
    p.b_enc.resize(n);
    p.w_dec.resize(d, n);
    p.b_dec.resize(d);
    const auto get = [&](auto& m) { r.f32s({m.data(), static_cast<std::size_t>(m.size())}); };
    get(p.w_enc);
    get(p.b_enc);
    get(p.w_dec);
    get(p.b_dec);
    r.expect_end();
    return out;
}

#define ATM_INSTANTIATE(T)                                                                        \
    template void validate_kind<T>(const ActivationKind<T>&, int);                               \
    template Matrix<T> apply_activation<T>(const Matrix<T>&, const ActivationKind<T>&);          \
    template Matrix<T> decode<T>(const SaeParams<T>&, const Matrix<T>&);                         \
    template ForwardTrace<T> forward<T>(const SaeParams<T>&, const Matrix<T>&,                   \
                                        const ActivationKind<T>&, const Vector<T>&);             \
    template LossAndGrads<T> loss_and_grads<T>(const SaeParams<T>&, const Matrix<T>&,            \
                                               const ActivationKind<T>&, const Vector<T>&, T);

ATM_INSTANTIATE(float)
ATM_INSTANTIATE(double)

#undef ATM_INSTANTIATE

}  // namespace atm
