// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0

#include "atm/datagen.hpp"
#include "atm/trainer.hpp"
#include "support.hpp"

#include <catch_amalgamated.hpp>
#include <nlohmann/json.hpp>

#include <sstream>

using namespace atm;

namespace {

MatrixF toy_data(int d, int m, int count, std::uint64_t seed) {
    const auto dict = build_dictionary(d, m, m / 4, seed);
    return render_activations(dict, sample_codes(dict, count, 2.0, seed), 0.0, seed).data;
}

TrainConfig toy_config(Arch arch) {
    TrainConfig c;
    c.arch = arch;
    c.d = 8;
    c.n = 24;
    c.lr = 1e-2;
    c.lr_warmup_steps = 20;
    c.total_steps = 240;
    c.batch_size = 32;
    c.lambda_sparse = 0.05;
    c.seed = 3;
    c.schedule.warmup_steps = 40;
    c.schedule.prune_period = 50;
    c.schedule.prune_duration = 10;
    c.schedule.min_keep = 4;
    c.schedule.r = 2.0;
    c.topk_k = 3;
    c.checkpoint_every = 60;
    return c;
}

SaeGrads<float> zero_grads(const SaeModel& m) {
    const auto& p = m.params;
    SaeGrads<float> g{MatrixF::Zero(p.w_enc.rows(), p.w_enc.cols()), VectorF::Zero(p.n()),
                      MatrixF::Zero(p.w_dec.rows(), p.w_dec.cols()), VectorF::Zero(p.d()), VectorF()};
    if (const auto* jr = std::get_if<JumpRelu<float>>(&m.kind)) g.theta = VectorF::Zero(jr->theta.size());
    return g;
}

}  // namespace

TEST_CASE("learning-rate ramp") {
    TrainConfig c;
    CHECK(lr_at(0, c) == 0.0);
    CHECK(lr_at(1000, c) == c.lr);
    CHECK(lr_at(500, c) == Catch::Approx(1.5e-4).epsilon(1e-12));
    CHECK(lr_at(4000, c) == c.lr);
    c.lr_warmup_steps = 0;
    CHECK(lr_at(0, c) == c.lr);
}

TEST_CASE("adam with zero gradients leaves params unchanged") {
    TrainConfig c = toy_config(Arch::JumpRelu);
    SaeModel model = init_model(c);
    const SaeModel before = model;
    AdamState adam = make_adam(model, c);
    adam_step(adam, model, zero_grads(model), 1e-2);
    CHECK(adam.t == 1);
    CHECK(model.params.w_enc == before.params.w_enc);
    CHECK(model.params.w_dec == before.params.w_dec);
    CHECK(std::get<JumpRelu<float>>(model.kind).theta == std::get<JumpRelu<float>>(before.kind).theta);
}

TEST_CASE("adam first step moves by lr") {
    TrainConfig c = toy_config(Arch::Vanilla);
    c.d = 1;
    c.n = 2;
    SaeModel model = init_model(c);
    model.params.w_enc(0, 0) = 0.0f;
    AdamState adam = make_adam(model, c);
    auto g = zero_grads(model);
    g.w_enc(0, 0) = 1.0f;
    adam_step(adam, model, g, 1e-3);
    // m_hat = 1, v_hat = 1: update = -lr / (1 + eps).
    CHECK(model.params.w_enc(0, 0) == Catch::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-5));
    CHECK(model.params.w_enc(1, 0) == init_model(c).params.w_enc(1, 0));
}

TEST_CASE("adam rejects non-finite gradients without mutating state") {
    TrainConfig c = toy_config(Arch::Vanilla);
    SaeModel model = init_model(c);
    const SaeModel before = model;
    AdamState adam = make_adam(model, c);
    auto g = zero_grads(model);
    g.w_enc(0, 0) = 1.0f;
    g.b_dec(2) = std::numeric_limits<float>::quiet_NaN();
    try {
        adam_step(adam, model, g, 1e-3);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(e.tensor() == "grad.b_dec");
    }
    CHECK(adam.t == 0);
    CHECK(adam.m.w_enc.isZero());
    CHECK(model.params.w_enc == before.params.w_enc);
}

TEST_CASE("decoder gradient projection") {
    SaeParams<float> p = init_params(4, 6, 9);
    SaeGrads<float> g{MatrixF::Zero(6, 4), VectorF::Zero(6), MatrixF::Zero(4, 6), VectorF::Zero(4), VectorF()};
    g.w_dec.col(0) = 3.0f * p.w_dec.col(0);
    VectorF ortho = VectorF::Zero(4);
    ortho(0) = -p.w_dec(1, 1);
    ortho(1) = p.w_dec(0, 1);
    g.w_dec.col(1) = ortho;
    project_decoder_gradient(p, g);
    CHECK(g.w_dec.col(0).norm() < 1e-6f);
    CHECK((g.w_dec.col(1) - ortho).norm() < 1e-6f);

    p.w_dec.col(2).setZero();
    CHECK_THROWS_AS(project_decoder_gradient(p, g), NumericError);
}

TEST_CASE("renormalization restores unit columns") {
    SaeParams<float> p = init_params(5, 9, 1);
    p.w_dec *= 3.0f;
    p.w_dec.col(4) *= 0.01f;
    CHECK(max_decoder_norm_error(p) > 0.5);
    renormalize_decoder(p);
    CHECK(max_decoder_norm_error(p) < 1e-6);
}

TEST_CASE("training contracts per architecture") {
    const MatrixF data = toy_data(8, 12, 2000, 5);
    for (Arch arch : {Arch::Atm, Arch::Vanilla, Arch::TopK, Arch::JumpRelu}) {
        INFO(arch_name(arch));
        const TrainConfig c = toy_config(arch);
        double worst_norm = 0.0;
        int worst_l0 = 0;
        TrainOptions opts;
        opts.on_step = [&](const LogRow& row, const SaeModel& model) {
            worst_norm = std::max(worst_norm, max_decoder_norm_error(model.params));
            worst_l0 = std::max(worst_l0, row.max_l0);
        };
        const auto run = train(c, data, opts);
        REQUIRE(run.log.size() == static_cast<std::size_t>(c.total_steps));
        CHECK(worst_norm < 1e-6);
        for (std::size_t i = 0; i < run.log.size(); ++i) {
            const auto& row = run.log[i];
            CHECK(row.step == static_cast<std::int64_t>(i));
            CHECK(std::isfinite(row.loss_total));
            CHECK(row.loss_total == Catch::Approx(row.loss_recon + c.lambda_sparse * row.loss_l1).epsilon(1e-5));
            if (arch != Arch::Atm) {
                CHECK(row.phase == "none");
                CHECK(row.masked_fraction == 0.0);
            } else if (row.step < c.schedule.warmup_steps) {
                CHECK(row.phase == "warmup");
                CHECK(row.masked_fraction == 0.0);
            }
        }
        if (arch == Arch::TopK) CHECK(worst_l0 <= c.topk_k);
        CHECK(run.log.back().loss_recon < run.log.front().loss_recon);
    }
}

TEST_CASE("training is bitwise deterministic") {
    const MatrixF data = toy_data(8, 12, 1000, 6);
    for (Arch arch : {Arch::Atm, Arch::JumpRelu}) {
        const TrainConfig c = toy_config(arch);
        const auto a = train(c, data);
        const auto b = train(c, data);
        CHECK(a.log == b.log);
        CHECK(a.model.params.w_enc == b.model.params.w_enc);
        CHECK(a.model.params.w_dec == b.model.params.w_dec);
        CHECK(a.tracker.mag_ema == b.tracker.mag_ema);
    }
}

TEST_CASE("resuming from a checkpoint replays the uninterrupted run") {
    test::TempDir dir("resume");
    const MatrixF data = toy_data(8, 12, 1000, 7);
    for (Arch arch : {Arch::Atm, Arch::JumpRelu}) {
        TrainConfig full = toy_config(arch);
        const auto reference = train(full, data);

        TrainConfig first = full;
        first.total_steps = 130;
        TrainOptions opts;
        opts.checkpoint_dir = dir / "ckpt";
        const auto part = train(first, data, opts);
        save_checkpoint(dir / "ckpt", TrainState{part.model, part.tracker, part.adam, 130}, first);

        TrainOptions resume;
        resume.resume = load_checkpoint(dir / "ckpt", full);
        REQUIRE(resume.resume->next_step == 130);
        const auto rest = train(full, data, resume);
        REQUIRE(rest.log.size() == reference.log.size() - 130);
        for (std::size_t i = 0; i < rest.log.size(); ++i) CHECK(rest.log[i] == reference.log[130 + i]);
        CHECK(rest.model.params.w_enc == reference.model.params.w_enc);
        CHECK(rest.model.params.w_dec == reference.model.params.w_dec);
    }
}

TEST_CASE("pruning phases mask at least as much as their neighbours") {
    const MatrixF data = toy_data(8, 12, 2000, 8);
    int holds = 0;
    int transitions = 0;
    for (std::uint64_t seed : {1, 2, 3}) {
        TrainConfig c = toy_config(Arch::Atm);
        c.seed = seed;
        c.total_steps = 400;
        const auto run = train(c, data);
        const auto& s = c.schedule;
        for (int start = s.warmup_steps; start + s.prune_period <= c.total_steps; start += s.prune_period) {
            double prune = 0.0;
            double normal = 0.0;
            for (int k = 0; k < s.prune_period; ++k) {
                const auto& row = run.log[static_cast<std::size_t>(start + k)];
                (row.phase == "pruning" ? prune : normal) += row.masked_fraction;
            }
            prune /= s.prune_duration;
            normal /= (s.prune_period - s.prune_duration);
            holds += prune >= normal ? 1 : 0;
            ++transitions;
        }
    }
    CHECK(holds * 2 > transitions);
}

TEST_CASE("vanilla reconstruction loss falls steadily without sparsity") {
    const auto dict = build_dictionary(16, 12, 3, 4);
    const MatrixF data = render_activations(dict, sample_codes(dict, 8000, 3.0, 4), 0.0, 4).data;
    TrainConfig c;
    c.arch = Arch::Vanilla;
    c.d = 16;
    c.n = 48;
    c.lr = 3e-3;
    c.lr_warmup_steps = 100;
    c.total_steps = 2000;
    c.batch_size = 128;
    c.lambda_sparse = 0.0;
    const auto run = train(c, data);
    std::vector<double> windows;
    for (std::size_t w = 0; w < run.log.size() / 100; ++w) {
        double sum = 0.0;
        for (std::size_t i = 0; i < 100; ++i) sum += run.log[w * 100 + i].loss_recon;
        windows.push_back(sum / 100.0);
    }
    for (std::size_t w = 1; w < windows.size(); ++w) CHECK(windows[w] < windows[w - 1]);
    CHECK(run.log.back().loss_recon < 0.01 * run.log.front().loss_recon);
}

TEST_CASE("non-finite data aborts with the step index and keeps the last checkpoint") {
    test::TempDir dir("abort");
    MatrixF data = toy_data(8, 12, 50, 9);
    TrainConfig c = toy_config(Arch::Vanilla);
    c.checkpoint_every = 1;
    c.batch_size = 1;
    // Batch rows come from per-step streams; find the first step drawing row 0.
    std::int64_t first = -1;
    for (std::int64_t step = 0; step < c.total_steps && first < 0; ++step) {
        Rng rng(c.seed, StreamTag::Batch, static_cast<std::uint64_t>(step));
        if (rng.below(50) == 0) first = step;
    }
    REQUIRE(first > 0);
    data(0, 3) = std::numeric_limits<float>::quiet_NaN();
    TrainOptions opts;
    opts.checkpoint_dir = dir / "ckpt";
    try {
        train(c, data, opts);
        FAIL("expected TrainingAborted");
    } catch (const TrainingAborted& e) {
        CHECK(e.step() == first);
    }
    const auto kept = load_checkpoint(dir / "ckpt", c);
    CHECK(kept.next_step == first);
}

TEST_CASE("config validation") {
    const auto field = [](TrainConfig c) {
        try {
            c.validate();
        } catch (const ConfigError& e) {
            return e.field();
        }
        return std::string();
    };
    TrainConfig ok;
    CHECK(field(ok).empty());
    TrainConfig topk = ok;
    topk.arch = Arch::TopK;
    topk.topk_k = 300;
    CHECK(field(topk) == "topk_k");
    TrainConfig steps = ok;
    steps.total_steps = steps.lr_warmup_steps;
    CHECK(field(steps) == "total_steps");
    TrainConfig batch = ok;
    batch.batch_size = 0;
    CHECK(field(batch) == "batch_size");
    CHECK_THROWS_AS(parse_arch("relu"), ConfigError);

    const MatrixF wrong = MatrixF::Zero(10, 5);
    CHECK_THROWS_AS(train(toy_config(Arch::Vanilla), wrong), ConfigError);
}

TEST_CASE("config json round-trip") {
    TrainConfig c = toy_config(Arch::JumpRelu);
    c.adam_eps = 1e-7;
    const nlohmann::json j = c;
    const TrainConfig back = j.get<TrainConfig>();
    CHECK(nlohmann::json(back) == j);
    CHECK(back.arch == Arch::JumpRelu);
    CHECK(back.schedule.r == c.schedule.r);
}

TEST_CASE("log csv layout") {
    test::TempDir dir("csv");
    LogRow row;
    row.step = 7;
    row.phase = "pruning";
    row.loss_total = 1.5;
    row.loss_recon = 1.25;
    row.loss_l1 = 5;
    row.theta = 0.125;
    row.masked_fraction = 0.25;
    row.lr = 3e-4;
    write_log_csv(dir / "log.csv", {row, row});
    std::istringstream in(test::slurp(dir / "log.csv"));
    std::string line;
    std::getline(in, line);
    CHECK(line == kLogHeader);
    std::getline(in, line);
    CHECK(line == "7,pruning,1.5,1.25,5,0.125,0.25,0.0003");
    CHECK(format_log_row(row) == line);
}

TEST_CASE("checkpoint files round-trip") {
    test::TempDir dir("ckpt");
    const MatrixF data = toy_data(8, 12, 500, 10);
    TrainConfig c = toy_config(Arch::TopK);
    c.total_steps = 50;
    const auto run = train(c, data);
    const TrainState state{run.model, run.tracker, run.adam, 50};
    save_checkpoint(dir.path(), state, c);
    const auto back = load_checkpoint(dir.path(), c);
    CHECK(back.next_step == 50);
    CHECK(back.model.params.w_dec == state.model.params.w_dec);
    CHECK(std::get<TopK>(back.model.kind).k == 3);
    CHECK(back.adam.t == state.adam.t);
    CHECK(back.adam.m.w_enc == state.adam.m.w_enc);
    CHECK(back.adam.v.w_dec == state.adam.v.w_dec);
    CHECK(back.tracker.step == state.tracker.step);
}
