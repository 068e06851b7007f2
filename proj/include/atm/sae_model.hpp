// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Sparse autoencoder parameters, the four activation variants, and analytic
// gradients of the masked objective
//
//   L = mean_i ||x_i - (f(x_i) * m) W_dec^T - b_dec||^2 + lambda * mean_i ||f(x_i) * m||_1
//   f(x) = act(x W_enc^T + b_enc)
//
// All math is templated on the scalar type: float for training, double for
// gradient checking. Explicit instantiations live in sae_model.cpp.

#pragma once

#include "atm/common.hpp"

#include <cstdint>
#include <filesystem>
#include <variant>

namespace atm {

struct Relu {};

struct TopK {
    int k = 1;
};

template <class T>
struct JumpRelu {
    Vector<T> theta;  // per-feature threshold, >= 0
    T bandwidth = T(0.001);
};

template <class T>
using ActivationKind = std::variant<Relu, TopK, JumpRelu<T>>;

template <class T>
struct SaeParams {
    Matrix<T> w_enc;  // n x d
    Vector<T> b_enc;  // n
    Matrix<T> w_dec;  // d x n, unit-norm columns
    Vector<T> b_dec;  // d

    int d() const { return static_cast<int>(w_dec.rows()); }
    int n() const { return static_cast<int>(w_dec.cols()); }

    template <class U>
    SaeParams<U> cast() const {
        return {w_enc.template cast<U>(), b_enc.template cast<U>(), w_dec.template cast<U>(),
                b_dec.template cast<U>()};
    }
};

template <class U, class T>
ActivationKind<U> cast_kind(const ActivationKind<T>& kind) {
    if (const auto* j = std::get_if<JumpRelu<T>>(&kind)) {
        return JumpRelu<U>{j->theta.template cast<U>(), static_cast<U>(j->bandwidth)};
    }
    if (const auto* t = std::get_if<TopK>(&kind)) return *t;
    return Relu{};
}

/// Throws ConfigError when `kind` is inconsistent with latent width `n`.
template <class T>
void validate_kind(const ActivationKind<T>& kind, int n);

template <class T>
struct ForwardTrace {
    Matrix<T> preacts;              // B x n
    Matrix<T> features;             // B x n, post-activation, pre-mask
    Matrix<T> masked_features;      // B x n
    Matrix<T> recon;                // B x d
    Matrix<T> recon_grad_features;  // B x n, dL_recon / d(decoder input)
};

template <class T>
struct SaeGrads {
    Matrix<T> w_enc;
    Vector<T> b_enc;
    Matrix<T> w_dec;
    Vector<T> b_dec;
    Vector<T> theta;  // empty unless the kind is JumpRelu
};

template <class T>
struct LossAndGrads {
    T total = 0;
    T recon = 0;
    T l1 = 0;
    SaeGrads<T> grads;
    ForwardTrace<T> trace;
};

/// Decoder columns drawn isotropically and unit-normalized; encoder tied to
/// the decoder transpose; zero biases. Requires n > d >= 1.
SaeParams<float> init_params(int d, int n, std::uint64_t seed);

template <class T>
Matrix<T> apply_activation(const Matrix<T>& preacts, const ActivationKind<T>& kind);

template <class T>
Matrix<T> decode(const SaeParams<T>& params, const Matrix<T>& codes);

template <class T>
ForwardTrace<T> forward(const SaeParams<T>& params, const Matrix<T>& batch,
                        const ActivationKind<T>& kind, const Vector<T>& mask);

/// TopK gradients flow only through kept positive entries. JumpReLU passes
/// kept values through unchanged and gives the thresholds a straight-through
/// rectangle pseudo-derivative -(theta/bandwidth) * 1{|z - theta| < bandwidth/2}.
/// Throws NumericError naming the first non-finite gradient tensor.
template <class T>
LossAndGrads<T> loss_and_grads(const SaeParams<T>& params, const Matrix<T>& batch,
                               const ActivationKind<T>& kind, const Vector<T>& mask,
                               T lambda_sparse);

struct LoadedParams {
    SaeParams<float> params;
    ActivationKind<float> kind;
};

/// "ATMP" file. JumpReLU bandwidth is not stored; load_params sets
/// `jumprelu_bandwidth`.
void save_params(const std::filesystem::path& path, const SaeParams<float>& params,
                 const ActivationKind<float>& kind);
LoadedParams load_params(const std::filesystem::path& path, float jumprelu_bandwidth = 0.001f);

}  // namespace atm
