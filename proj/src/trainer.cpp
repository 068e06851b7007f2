// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0

#include "atm/trainer.hpp"

#include "atm/binary_io.hpp"
#include "atm/random.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace atm {

namespace {

constexpr char kAdamMagic[] = "ATMA";
constexpr std::uint32_t kAdamVersion = 1;

// Moment tensors in file order.
template <class Fn>
void for_each_grad(const SaeGrads<float>& g, Fn&& fn) {
    fn(g.w_enc.data(), g.w_enc.size());
    fn(g.b_enc.data(), g.b_enc.size());
    fn(g.w_dec.data(), g.w_dec.size());
    fn(g.b_dec.data(), g.b_dec.size());
    fn(g.theta.data(), g.theta.size());
}

SaeGrads<float> zeros_like(const SaeModel& model) {
    const auto& p = model.params;
    SaeGrads<float> g;
    g.w_enc = MatrixF::Zero(p.w_enc.rows(), p.w_enc.cols());
    g.b_enc = VectorF::Zero(p.b_enc.size());
    g.w_dec = MatrixF::Zero(p.w_dec.rows(), p.w_dec.cols());
    g.b_dec = VectorF::Zero(p.b_dec.size());
    if (const auto* jr = std::get_if<JumpRelu<float>>(&model.kind)) g.theta = VectorF::Zero(jr->theta.size());
    return g;
}

void gather_rows(const MatrixF& data, std::int64_t step, const TrainConfig& c, MatrixF& batch) {
    Rng rng(c.seed, StreamTag::Batch, static_cast<std::uint64_t>(step));
    const auto count = static_cast<std::uint64_t>(data.rows());
    for (int i = 0; i < c.batch_size; ++i) {
        batch.row(i) = data.row(static_cast<Eigen::Index>(rng.below(count)));
    }
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

std::string_view arch_name(Arch arch) {
    switch (arch) {
        case Arch::Atm: return "atm";
        case Arch::Vanilla: return "vanilla";
        case Arch::TopK: return "topk";
        case Arch::JumpRelu: return "jumprelu";
    }
    return "atm";
}

Arch parse_arch(std::string_view name) {
    for (Arch a : {Arch::Atm, Arch::Vanilla, Arch::TopK, Arch::JumpRelu}) {
        if (arch_name(a) == name) return a;
    }
    throw ConfigError("arch", "unknown architecture '" + std::string(name) +
                                  "' (expected atm, vanilla, topk or jumprelu)");
}

void TrainConfig::validate() const {
    if (d < 1) throw ConfigError("d", "must be >= 1");
    if (n <= d) throw ConfigError("n", "must exceed d");
    if (!(lr > 0.0)) throw ConfigError("lr", "must be > 0");
    if (lr_warmup_steps < 0) throw ConfigError("lr_warmup_steps", "must be >= 0");
    if (total_steps <= lr_warmup_steps) throw ConfigError("total_steps", "must exceed lr_warmup_steps");
    if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
    if (!(lambda_sparse >= 0.0)) throw ConfigError("lambda_sparse", "must be >= 0");
    if (!(beta > 0.0f && beta < 1.0f)) throw ConfigError("beta", "must lie in (0, 1)");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1", "must lie in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2", "must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps", "must be > 0");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every", "must be >= 0");
    switch (arch) {
        case Arch::Atm: schedule.validate(n); break;
        case Arch::TopK:
            if (topk_k < 1 || topk_k > n) throw ConfigError("topk_k", "must lie in [1, n]");
            break;
        case Arch::JumpRelu:
            if (!(jumprelu_bandwidth > 0.0)) throw ConfigError("jumprelu_bandwidth", "must be > 0");
            if (!(jumprelu_init_theta >= 0.0)) throw ConfigError("jumprelu_init_theta", "must be >= 0");
            break;
        case Arch::Vanilla: break;
    }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{
        {"arch", arch_name(c.arch)},
        {"d", c.d},
        {"n", c.n},
        {"lr", c.lr},
        {"lr_warmup_steps", c.lr_warmup_steps},
        {"total_steps", c.total_steps},
        {"batch_size", c.batch_size},
        {"lambda_sparse", c.lambda_sparse},
        {"seed", c.seed},
        {"warmup_steps", c.schedule.warmup_steps},
        {"prune_period", c.schedule.prune_period},
        {"prune_duration", c.schedule.prune_duration},
        {"c_base", c.schedule.c_base},
        {"c_prune", c.schedule.c_prune},
        {"r", c.schedule.r},
        {"min_keep", c.schedule.min_keep},
        {"beta", c.beta},
        {"topk_k", c.topk_k},
        {"jumprelu_bandwidth", c.jumprelu_bandwidth},
        {"jumprelu_init_theta", c.jumprelu_init_theta},
        {"adam_beta1", c.adam_beta1},
        {"adam_beta2", c.adam_beta2},
        {"adam_eps", c.adam_eps},
        {"checkpoint_every", c.checkpoint_every},
    };
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.arch = parse_arch(j.at("arch").get<std::string>());
    j.at("d").get_to(c.d);
    j.at("n").get_to(c.n);
    j.at("lr").get_to(c.lr);
    j.at("lr_warmup_steps").get_to(c.lr_warmup_steps);
    j.at("total_steps").get_to(c.total_steps);
    j.at("batch_size").get_to(c.batch_size);
    j.at("lambda_sparse").get_to(c.lambda_sparse);
    j.at("seed").get_to(c.seed);
    j.at("warmup_steps").get_to(c.schedule.warmup_steps);
    j.at("prune_period").get_to(c.schedule.prune_period);
    j.at("prune_duration").get_to(c.schedule.prune_duration);
    j.at("c_base").get_to(c.schedule.c_base);
    j.at("c_prune").get_to(c.schedule.c_prune);
    j.at("r").get_to(c.schedule.r);
    j.at("min_keep").get_to(c.schedule.min_keep);
    j.at("beta").get_to(c.beta);
    j.at("topk_k").get_to(c.topk_k);
    j.at("jumprelu_bandwidth").get_to(c.jumprelu_bandwidth);
    j.at("jumprelu_init_theta").get_to(c.jumprelu_init_theta);
    j.at("adam_beta1").get_to(c.adam_beta1);
    j.at("adam_beta2").get_to(c.adam_beta2);
    j.at("adam_eps").get_to(c.adam_eps);
    j.at("checkpoint_every").get_to(c.checkpoint_every);
}

SaeModel init_model(const TrainConfig& config) {
    SaeModel model;
    model.params = init_params(config.d, config.n, config.seed);
    switch (config.arch) {
        case Arch::Atm:
        case Arch::Vanilla: model.kind = Relu{}; break;
        case Arch::TopK: model.kind = TopK{config.topk_k}; break;
        case Arch::JumpRelu:
            model.kind = JumpRelu<float>{VectorF::Constant(config.n, static_cast<float>(config.jumprelu_init_theta)),
                                         static_cast<float>(config.jumprelu_bandwidth)};
            break;
    }
    return model;
}

AdamState make_adam(const SaeModel& model, const TrainConfig& config) {
    AdamState s;
    s.m = zeros_like(model);
    s.v = zeros_like(model);
    s.beta1 = config.adam_beta1;
    s.beta2 = config.adam_beta2;
    s.eps = config.adam_eps;
    return s;
}

double lr_at(std::int64_t step, const TrainConfig& config) {
    if (config.lr_warmup_steps <= 0 || step >= config.lr_warmup_steps) return config.lr;
    return config.lr * static_cast<double>(step) / static_cast<double>(config.lr_warmup_steps);
}

void adam_step(AdamState& state, SaeModel& model, const SaeGrads<float>& grads, double lr) {
    const std::array<std::pair<const char*, bool>, 5> finite{{
        {"grad.w_enc", grads.w_enc.allFinite()},
        {"grad.b_enc", grads.b_enc.allFinite()},
        {"grad.w_dec", grads.w_dec.allFinite()},
        {"grad.b_dec", grads.b_dec.allFinite()},
        {"grad.theta", grads.theta.allFinite()},
    }};
    for (const auto& [name, ok] : finite) {
        if (!ok) throw NumericError(name, "non-finite gradient passed to Adam");
    }

    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    const float b1 = static_cast<float>(state.beta1);
    const float b2 = static_cast<float>(state.beta2);
    const float step_size = static_cast<float>(lr / bc1);
    const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
    const float eps = static_cast<float>(state.eps);

    const auto update = [&](auto& param, auto& m, auto& v, const auto& grad) {
        float* pp = param.data();
        float* pm = m.data();
        float* pv = v.data();
        const float* pg = grad.data();
        for (Eigen::Index k = 0; k < param.size(); ++k) {
            pm[k] = b1 * pm[k] + (1.0f - b1) * pg[k];
            pv[k] = b2 * pv[k] + (1.0f - b2) * pg[k] * pg[k];
            pp[k] -= step_size * pm[k] / (std::sqrt(pv[k]) * inv_sqrt_bc2 + eps);
        }
    };
    auto& p = model.params;
    update(p.w_enc, state.m.w_enc, state.v.w_enc, grads.w_enc);
    update(p.b_enc, state.m.b_enc, state.v.b_enc, grads.b_enc);
    update(p.w_dec, state.m.w_dec, state.v.w_dec, grads.w_dec);
    update(p.b_dec, state.m.b_dec, state.v.b_dec, grads.b_dec);
    if (auto* jr = std::get_if<JumpRelu<float>>(&model.kind)) {
        update(jr->theta, state.m.theta, state.v.theta, grads.theta);
        jr->theta = jr->theta.cwiseMax(0.0f);
    }
}

void project_decoder_gradient(const SaeParams<float>& params, SaeGrads<float>& grads) {
    const VectorF norms2 = params.w_dec.colwise().squaredNorm().transpose();
    if ((norms2.array() <= 0.0f).any()) throw NumericError("w_dec", "zero-norm decoder column");
    const VectorF coef = grads.w_dec.cwiseProduct(params.w_dec).colwise().sum().transpose().cwiseQuotient(norms2);
    grads.w_dec -= params.w_dec * coef.asDiagonal();
}

void renormalize_decoder(SaeParams<float>& params) {
    for (Eigen::Index j = 0; j < params.w_dec.cols(); ++j) {
        const double norm = params.w_dec.col(j).cast<double>().norm();
        if (!(norm > 0.0) || !std::isfinite(norm)) throw NumericError("w_dec", "degenerate decoder column " + std::to_string(j));
        params.w_dec.col(j) = (params.w_dec.col(j).cast<double>() / norm).cast<float>();
    }
}

double max_decoder_norm_error(const SaeParams<float>& params) {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < params.w_dec.cols(); ++j) {
        worst = std::max(worst, std::abs(params.w_dec.col(j).cast<double>().norm() - 1.0));
    }
    return worst;
}

std::string format_log_row(const LogRow& r) {
    return std::to_string(r.step) + ',' + r.phase + ',' + fmt_double(r.loss_total) + ',' +
           fmt_double(r.loss_recon) + ',' + fmt_double(r.loss_l1) + ',' + fmt_double(r.theta) + ',' +
           fmt_double(r.masked_fraction) + ',' + fmt_double(r.lr);
}

void write_log_csv(const std::filesystem::path& path, const std::vector<LogRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << kLogHeader << '\n';
    for (const auto& r : rows) out << format_log_row(r) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

TrainState initial_state(const TrainConfig& config) {
    TrainState s;
    s.model = init_model(config);
    s.tracker = make_tracker(config.n, config.beta);
    s.adam = make_adam(s.model, config);
    return s;
}

void save_adam(const std::filesystem::path& path, const AdamState& state) {
    ByteWriter w;
    w.magic(kAdamMagic);
    w.u32(kAdamVersion);
    w.u64(static_cast<std::uint64_t>(state.t));
    w.f64(state.beta1);
    w.f64(state.beta2);
    w.f64(state.eps);
    for (auto* g : {&state.m, &state.v}) {
        for_each_grad(*g, [&](const float* p, Eigen::Index size) {
            w.u64(static_cast<std::uint64_t>(size));
            w.f32s({p, static_cast<std::size_t>(size)});
        });
    }
    w.save(path);
}

AdamState load_adam(const std::filesystem::path& path) {
    auto r = ByteReader::from_file(path);
    r.expect_magic(kAdamMagic);
    r.expect_version(kAdamVersion);
    AdamState s;
    s.t = static_cast<std::int64_t>(r.u64());
    s.beta1 = r.f64();
    s.beta2 = r.f64();
    s.eps = r.f64();
    for (auto* g : {&s.m, &s.v}) {
        std::array<std::uint64_t, 5> sizes{};
        std::array<std::vector<float>, 5> blobs;
        for (int k = 0; k < 5; ++k) {
            sizes[k] = r.u64();
            blobs[k].resize(sizes[k]);
            r.f32s(blobs[k]);
        }
        g->w_enc = Eigen::Map<VectorF>(blobs[0].data(), static_cast<Eigen::Index>(sizes[0]));
        g->b_enc = Eigen::Map<VectorF>(blobs[1].data(), static_cast<Eigen::Index>(sizes[1]));
        g->w_dec = Eigen::Map<VectorF>(blobs[2].data(), static_cast<Eigen::Index>(sizes[2]));
        g->b_dec = Eigen::Map<VectorF>(blobs[3].data(), static_cast<Eigen::Index>(sizes[3]));
        g->theta = Eigen::Map<VectorF>(blobs[4].data(), static_cast<Eigen::Index>(sizes[4]));
    }
    r.expect_end();
    return s;
}

void save_checkpoint(const std::filesystem::path& dir, const TrainState& state, const TrainConfig& config) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    save_params(dir / "params.atmp", state.model.params, state.model.kind);
    save_tracker(dir / "tracker.atmt", state.tracker);
    save_adam(dir / "adam.atma", state.adam);
    nlohmann::json meta{{"next_step", state.next_step}, {"train_config", config}};
    const auto path = dir / "checkpoint.json";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << meta.dump(2) << '\n';
}

TrainState load_checkpoint(const std::filesystem::path& dir, const TrainConfig& config) {
    TrainState s;
    auto loaded = load_params(dir / "params.atmp", static_cast<float>(config.jumprelu_bandwidth));
    s.model.params = std::move(loaded.params);
    s.model.kind = std::move(loaded.kind);
    s.tracker = load_tracker(dir / "tracker.atmt");
    s.adam = load_adam(dir / "adam.atma");

    const auto reshape = [](SaeGrads<float>& g, const SaeParams<float>& p) {
        g.w_enc = Eigen::Map<MatrixF>(g.w_enc.data(), p.w_enc.rows(), p.w_enc.cols()).eval();
        g.w_dec = Eigen::Map<MatrixF>(g.w_dec.data(), p.w_dec.rows(), p.w_dec.cols()).eval();
    };
    const auto& p = s.model.params;
    if (s.adam.m.w_enc.size() != p.w_enc.size() || s.adam.m.w_dec.size() != p.w_dec.size()) {
        throw FormatError(0, "Adam state does not match parameter shapes in " + dir.string());
    }
    reshape(s.adam.m, p);
    reshape(s.adam.v, p);

    std::ifstream in(dir / "checkpoint.json");
    if (!in) throw IoError("cannot open " + (dir / "checkpoint.json").string());
    nlohmann::json meta;
    try {
        in >> meta;
        s.next_step = meta.at("next_step").get<std::int64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad checkpoint.json: " + std::string(e.what()));
    }
    return s;
}

RunArtifacts train(const TrainConfig& config, const MatrixF& data, const TrainOptions& options) {
    config.validate();
    if (data.cols() != config.d) {
        throw ConfigError("d", "dataset has dimension " + std::to_string(data.cols()) + ", config says " +
                                   std::to_string(config.d));
    }
    if (data.rows() < 1) throw ConfigError("dataset", "empty");

    TrainState state = options.resume ? *options.resume : initial_state(config);
    const bool masked = config.arch == Arch::Atm;
    const float lambda = static_cast<float>(config.lambda_sparse);
    MatrixF batch(config.batch_size, config.d);
    VectorF mask = VectorF::Ones(config.n);

    RunArtifacts out;
    out.config = config;
    out.log.reserve(static_cast<std::size_t>(std::max<std::int64_t>(0, config.total_steps - state.next_step)));

    for (std::int64_t step = state.next_step; step < config.total_steps; ++step) {
        gather_rows(data, step, config, batch);

        LogRow row;
        row.step = step;
        row.phase = "none";
        mask.setOnes();
        if (masked) {
            const PhaseState ps = schedule_state(step, config.schedule);
            const VectorD scores = importance(state.tracker);
            row.theta = threshold(scores, ps.c_effective);
            row.phase = phase_name(ps.phase);
            if (ps.phase != Phase::Warmup) {
                const VectorD p = mask_probabilities(scores, row.theta, config.schedule.r);
                Rng rng(config.seed, StreamTag::Mask, static_cast<std::uint64_t>(step));
                mask = sample_mask(p, scores, config.schedule.min_keep, rng);
            }
        }
        row.masked_fraction = 1.0 - static_cast<double>(mask.sum()) / static_cast<double>(config.n);

        LossAndGrads<float> lg;
        try {
            lg = loss_and_grads(state.model.params, batch, state.model.kind, mask, lambda);
        } catch (const NumericError& e) {
            throw TrainingAborted(step, e.what());
        }
        if (!std::isfinite(lg.total)) throw TrainingAborted(step, "non-finite loss");
        row.loss_total = lg.total;
        row.loss_recon = lg.recon;
        row.loss_l1 = lg.l1;
        row.lr = lr_at(step, config);
        row.max_l0 = static_cast<int>((lg.trace.masked_features.array() > 0.0f).rowwise().count().maxCoeff());

        if (masked) update_tracker(state.tracker, lg.trace.features, lg.trace.recon_grad_features);
        project_decoder_gradient(state.model.params, lg.grads);
        adam_step(state.adam, state.model, lg.grads, row.lr);
        renormalize_decoder(state.model.params);
        row.decoder_norm_error = max_decoder_norm_error(state.model.params);
        state.next_step = step + 1;

        if (options.on_step) options.on_step(row, state.model);
        out.log.push_back(std::move(row));

        if (!options.checkpoint_dir.empty() && config.checkpoint_every > 0 &&
            state.next_step % config.checkpoint_every == 0) {
            save_checkpoint(options.checkpoint_dir, state, config);
        }
    }

    out.model = std::move(state.model);
    out.tracker = std::move(state.tracker);
    out.adam = std::move(state.adam);
    return out;
}

}  // namespace atm
