// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0

#include "atm/cli.hpp"

#include "atm/content_hash.hpp"
#include "atm/datagen.hpp"
#include "atm/eval_probing.hpp"
#include "atm/eval_unsup.hpp"
#include "atm/random.hpp"
#include "atm/sae_run.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <ctime>
#include <fstream>
#include <ostream>

namespace atm {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void require_file(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw IoError("missing artifact " + path.string());
}

json read_json(const fs::path& path) {
    require_file(path);
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(e.byte, path.string() + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << text;
        if (!out.flush()) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

MatrixD to_double(const MatrixF& m) { return m.cast<double>(); }

}  // namespace

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e)) return kExitIo;
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return kExitUsage;
    return kExitInternal;
}

std::string dataset_hash(const fs::path& data_dir) {
    std::vector<fs::path> files;
    for (const char* name : {layout::kTrainData, layout::kTestData}) {
        files.push_back(data_dir / name);
        files.push_back(metadata_path(data_dir / name));
    }
    files.push_back(data_dir / layout::kTrainCodes);
    files.push_back(data_dir / layout::kTestCodes);
    for (const auto& f : files) require_file(f);
    return hash_files(files);
}

GenerateSummary cmd_generate(const ExperimentConfig& config, const fs::path& out_dir) {
    config.validate();
    make_dir(out_dir);
    const auto& dc = config.data;
    const std::uint64_t seed = config.seed();
    const auto dict = build_dictionary(config.train.d, dc.m, dc.pairs, seed, dc.rates);

    const auto write_split = [&](const char* data_name, const char* codes_name, int count, std::uint64_t counter) {
        const auto codes =
            sample_codes(dict, count, dc.s_mean, derive_seed(seed, StreamTag::Codes, counter), dc.max_active);
        const auto batch =
            render_activations(dict, codes, dc.noise_sigma, derive_seed(seed, StreamTag::Noise, counter));
        save_dataset(out_dir / data_name, batch, dict, dc.noise_sigma);
        save_codes(out_dir / codes_name, codes);
    };
    write_split(layout::kTrainData, layout::kTrainCodes, dc.train_count, 0);
    write_split(layout::kTestData, layout::kTestCodes, dc.test_count, 1);

    GenerateSummary s;
    s.d = config.train.d;
    s.m = dc.m;
    s.train_count = dc.train_count;
    s.test_count = dc.test_count;
    s.implication_pairs = static_cast<int>(dict.implications.size());
    s.dataset_hash = dataset_hash(out_dir);

    const json manifest{{"config", config_to_json(config)},
                        {"config_hash", config_hash(config)},
                        {"dataset_hash", s.dataset_hash},
                        {"summary",
                         {{"d", s.d},
                          {"m", s.m},
                          {"train_count", s.train_count},
                          {"test_count", s.test_count},
                          {"implication_pairs", s.implication_pairs}}}};
    write_text(out_dir / layout::kDatasetManifest, manifest.dump(2) + "\n");
    return s;
}

void save_run(const fs::path& out_dir, const ExperimentConfig& config, const std::string& data_hash,
              const TrainState& state, const std::vector<LogRow>& log) {
    make_dir(out_dir);
    save_checkpoint(out_dir / layout::kCheckpointDir, state, config.train);
    write_log_csv(out_dir / layout::kTrainLog, log);
    const json echo{{"config", config_to_json(config)},
                    {"config_hash", config_hash(config)},
                    {"dataset_hash", data_hash}};
    write_text(out_dir / layout::kRunEcho, echo.dump(2) + "\n");
}

RunArtifacts cmd_train(const ExperimentConfig& config, const fs::path& data_dir, const fs::path& out_dir,
                       const std::function<void(const LogRow&)>& progress) {
    config.validate();
    const std::string data_hash = dataset_hash(data_dir);
    const auto data = load_dataset(data_dir / layout::kTrainData);
    if (data.batch.dim() != config.train.d) {
        throw ConfigError("d", "dataset has dimension " + std::to_string(data.batch.dim()) + ", config says " +
                                   std::to_string(config.train.d));
    }
    make_dir(out_dir);
    TrainOptions options;
    options.checkpoint_dir = out_dir / layout::kCheckpointDir;
    if (progress) options.on_step = [&](const LogRow& row, const SaeModel&) { progress(row); };
    auto run = train(config.train, data.batch.data, options);

    TrainState final_state{run.model, run.tracker, run.adam, config.train.total_steps};
    save_run(out_dir, config, data_hash, final_state, run.log);
    return run;
}

MetricsReport evaluate_run(const fs::path& run_dir, const fs::path& data_dir) {
    const json echo = read_json(run_dir / layout::kRunEcho);
    ExperimentConfig config;
    std::string run_hash;
    try {
        config = parse_config(echo.at("config"));
        run_hash = echo.at("dataset_hash").get<std::string>();
    } catch (const json::exception& e) {
        throw FormatError(0, (run_dir / layout::kRunEcho).string() + ": " + e.what());
    }
    const fs::path ckpt = run_dir / layout::kCheckpointDir;
    for (const char* f : {"params.atmp", "tracker.atmt", "adam.atma", "checkpoint.json"}) require_file(ckpt / f);

    const std::string data_hash = dataset_hash(data_dir);
    if (data_hash != run_hash) {
        throw ConfigError("dataset_hash", "run was trained on dataset " + run_hash + " but " + data_dir.string() +
                                              " hashes to " + data_hash);
    }

    const TrainState state = load_checkpoint(ckpt, config.train);
    const auto test = load_dataset(data_dir / layout::kTestData);
    const auto codes = load_codes(data_dir / layout::kTestCodes);
    if (test.batch.dim() != state.model.params.d()) throw ConfigError("d", "dataset and model dimensions differ");
    if (codes.codes.rows() != test.batch.data.rows()) throw FormatError(0, "test codes and activations differ in count");

    const EvalModel model = make_eval_model(state.model, config.train, state.tracker);
    const Encoded enc = encode(model, test.batch.data);
    const MatrixD x = to_double(test.batch.data);
    const std::uint64_t seed = config.seed();

    MetricsReport r;
    r.label = config.run_label();
    r.arch = std::string(arch_name(config.train.arch));
    r.config_hash = config_hash(config);
    r.dataset_hash = data_hash;
    r.seed = seed;
    r.reference = reference_values(r.arch);

    const auto rec = reconstruction_metrics(x, enc.recon);
    const auto sp = sparsity_metrics(enc.latents);
    FeatureDensity density(state.model.params.n());
    density.add(enc.latents);
    const auto head = make_head(x.cols(), config.eval.head_classes, derive_seed(seed, StreamTag::Head, 0));
    const auto ds = downstream_scores(head, x, enc.recon, head.teacher_labels(x));

    auto& u = r.unsup;
    u.mse = rec.mse;
    u.cosine = rec.cosine;
    u.explained_variance = rec.explained_variance;
    u.l2_ratio = rec.l2_ratio;
    u.zero_norm_samples = rec.zero_norm_samples;
    u.l0_mean = sp.l0_mean;
    u.l1_mean = sp.l1_mean;
    u.ce_score = ds.ce_score;
    u.kl_score = ds.kl_score;
    u.downstream_note = ds.reason;
    u.dead_feature_count = density.dead_count();
    u.density_histogram = density.histogram();
    u.rare_feature_count = density.rare_count();

    const MatrixD w_dec = state.model.params.w_dec.cast<double>();
    r.absorption = absorption_score(enc.latents, x, w_dec, codes, test.dict, config.eval.absorption,
                                    derive_seed(seed, StreamTag::Split, 0));
    r.sparse_probing = sparse_probe_accuracy(enc.latents, codes, test.dict, config.eval.probing,
                                             derive_seed(seed, StreamTag::Split, 1));
    return r;
}

void write_report(const fs::path& path, const MetricsReport& report) {
    if (path.has_parent_path()) make_dir(path.parent_path());
    write_text(path, report_to_json(report).dump(2) + "\n");
}

MetricsReport read_report(const fs::path& path) { return report_from_json(read_json(path)); }

MetricsReport cmd_eval(const fs::path& run_dir, const fs::path& data_dir, const fs::path& report_path) {
    MetricsReport r = evaluate_run(run_dir, data_dir);
    r.timestamp = utc_timestamp();
    write_report(report_path, r);
    return r;
}

void cmd_compare(const std::vector<fs::path>& reports, const fs::path& out_csv) {
    if (reports.size() < 2) throw ConfigError("reports", "compare needs at least two reports");
    std::vector<MetricsReport> loaded;
    loaded.reserve(reports.size());
    for (const auto& p : reports) loaded.push_back(read_report(p));
    const std::string csv = comparison_csv(loaded);
    if (out_csv.has_parent_path()) make_dir(out_csv.parent_path());
    write_text(out_csv, csv);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Adaptive Temporal Masking sparse autoencoders: generate, train, eval, compare", "atm_sae"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    bool quiet = false;
    app.add_option("--config", config_path, "JSON experiment config");
    auto* seed_opt = app.add_option("--seed", seed, "Override the config seed");
    app.add_flag("--quiet", quiet, "Suppress progress output");

    std::string out_dir;
    std::string data_dir;
    std::string run_dir;
    std::string report_path;
    std::vector<std::string> report_paths;

    auto* gen = app.add_subcommand("generate", "Generate the synthetic train/test dataset");
    gen->add_option("--out", out_dir, "Output dataset directory")->required();
    gen->fallthrough();

    auto* tr = app.add_subcommand("train", "Train an SAE on a generated dataset");
    tr->add_option("--data", data_dir, "Dataset directory")->required();
    tr->add_option("--out", out_dir, "Run directory")->required();
    tr->fallthrough();

    auto* ev = app.add_subcommand("eval", "Evaluate a trained run on the held-out split");
    ev->add_option("--run", run_dir, "Run directory")->required();
    ev->add_option("--data", data_dir, "Dataset directory")->required();
    ev->add_option("--report", report_path, "Output report JSON")->required();
    ev->fallthrough();

    auto* cmp = app.add_subcommand("compare", "Tabulate several reports as CSV");
    cmp->add_option("reports", report_paths, "Report JSON files, one column each")->required();
    cmp->add_option("--out", out_dir, "Output CSV path")->required();
    cmp->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
    }

    const auto load = [&]() {
        if (config_path.empty()) throw ConfigError("--config", "required for this command");
        ExperimentConfig c = load_config(config_path);
        if (seed_opt->count() > 0) c.train.seed = seed;
        c.validate();
        return c;
    };

    try {
        if (gen->parsed()) {
            const auto s = cmd_generate(load(), out_dir);
            if (!quiet) {
                out << "generated d=" << s.d << " m=" << s.m << " train=" << s.train_count
                    << " test=" << s.test_count << " implication_pairs=" << s.implication_pairs
                    << " dataset_hash=" << s.dataset_hash << '\n';
            }
        } else if (tr->parsed()) {
            const ExperimentConfig c = load();
            const std::int64_t every = std::max(1, c.train.total_steps / 10);
            std::function<void(const LogRow&)> progress;
            if (!quiet) {
                progress = [&](const LogRow& row) {
                    if ((row.step + 1) % every == 0 || row.step + 1 == c.train.total_steps) {
                        out << "step " << row.step + 1 << '/' << c.train.total_steps << " phase=" << row.phase
                            << " loss=" << row.loss_total << " recon=" << row.loss_recon << '\n';
                    }
                };
            }
            cmd_train(c, data_dir, out_dir, progress);
            if (!quiet) out << "wrote run to " << out_dir << '\n';
        } else if (ev->parsed()) {
            const auto r = cmd_eval(run_dir, data_dir, report_path);
            if (!quiet) {
                out << r.label << ": ev=" << r.unsup.explained_variance << " mse=" << r.unsup.mse
                    << " l0=" << r.unsup.l0_mean << " absorption=" << r.absorption.mean
                    << " sparse_probing=" << r.sparse_probing.mean_top1 << '\n';
            }
        } else if (cmp->parsed()) {
            std::vector<fs::path> paths(report_paths.begin(), report_paths.end());
            cmd_compare(paths, out_dir);
            if (!quiet) out << "wrote " << out_dir << '\n';
        }
    } catch (const TrainingAborted& e) {
        err << "error: training aborted at step " << e.step() << ": " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return kExitOk;
}

}  // namespace atm
