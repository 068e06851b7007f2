// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0

#include "atm/config.hpp"
#include "atm/report.hpp"
#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <sstream>

using namespace atm;
using nlohmann::json;

namespace {

std::string config_error_field(const json& j) {
    try {
        parse_config(j);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return {};
}

MetricsReport sample_report(const std::string& label, const std::string& arch, const std::string& data_hash) {
    MetricsReport r;
    r.label = label;
    r.arch = arch;
    r.config_hash = "c0ffee";
    r.dataset_hash = data_hash;
    r.seed = 7;
    r.timestamp = "2026-01-01T00:00:00Z";
    r.unsup.mse = 0.125;
    r.unsup.cosine = 0.96875;
    r.unsup.explained_variance = 0.9;
    r.unsup.l2_ratio = 0.98;
    r.unsup.l0_mean = 12.5;
    r.unsup.l1_mean = 3.25;
    r.unsup.ce_score = 0.99;
    r.unsup.dead_feature_count = 3;
    r.unsup.density_histogram = {1, 2, 3, 4, 5, 6};
    r.unsup.rare_feature_count = 2;
    r.unsup.downstream_note = "kl degenerate";
    ParentAbsorption p;
    p.parent = 4;
    p.main_latents = {3, 9};
    p.positives = 20;
    p.absorbed = 1;
    p.score = 0.05;
    r.absorption.per_parent.push_back(p);
    ParentAbsorption q;
    q.parent = 6;
    q.excluded = true;
    q.note = "no positive test samples";
    r.absorption.per_parent.push_back(q);
    r.absorption.notes = {"parent 6 excluded: no positive test samples"};
    r.absorption.mean = 0.05;
    ProbeTask t;
    t.feature = 4;
    t.accuracy = 0.75;
    t.selected = {3};
    r.sparse_probing.per_task.push_back(t);
    r.sparse_probing.mean_top1 = 0.75;
    r.reference = reference_values(arch);
    return r;
}

}  // namespace

TEST_CASE("empty config yields documented defaults") {
    const auto c = parse_config(json::object());
    CHECK(c.train.arch == Arch::Atm);
    CHECK(c.train.d == 64);
    CHECK(c.data.m == 48);
    CHECK(c.train.n == 256);
    CHECK(c.train.beta == 0.99f);
    CHECK(c.train.schedule.min_keep >= 1);
    CHECK(c.eval.absorption.tau_fs == 0.03);
    CHECK(c.eval.absorption.tau_ps == 0.025);
    CHECK(c.eval.absorption.tau_pa == 0.4);
    CHECK(c.run_label() == "atm");
}

TEST_CASE("strict parsing names the offending key") {
    CHECK(config_error_field({{"beta_typo", 0.9}}) == "beta_typo");
    CHECK(config_error_field({{"lr", "fast"}}) == "lr");
    CHECK(config_error_field({{"n", 2.5}}) == "n");
    CHECK(config_error_field({{"arch", "dense"}}) == "arch");
    CHECK(config_error_field({{"arch", "topk"}, {"d", 8}, {"n", 16}, {"topk_k", 17}}) == "topk_k");
    CHECK(config_error_field({{"pairs", 30}}) == "pairs");
    CHECK(config_error_field({{"k_max", 9}}) == "k_max");
    CHECK(config_error_field(json::array()) == "<root>");
}

TEST_CASE("config json round trip and hash") {
    json j{{"arch", "jumprelu"}, {"seed", 11}, {"lr", 1e-3}, {"rate_child", 0.02}, {"label", "jr"}};
    const auto c = parse_config(j);
    const auto echo = config_to_json(c);
    CHECK(echo.size() == config_keys().size());
    const auto again = parse_config(echo);
    CHECK(config_to_json(again) == echo);
    CHECK(config_hash(again) == config_hash(c));
    CHECK(config_hash(c).size() == 40);
    j["seed"] = 12;
    CHECK(config_hash(parse_config(j)) != config_hash(c));
}

TEST_CASE("config file loading") {
    test::TempDir dir("cfg");
    test::spit(dir / "good.json", R"({"arch": "vanilla", "lambda_sparse": 0.3})");
    CHECK(load_config(dir / "good.json").train.lambda_sparse == 0.3);
    test::spit(dir / "bad.json", "{\"arch\": ");
    CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
    CHECK_THROWS_AS(load_config(dir / "absent.json"), IoError);
}

TEST_CASE("report json round trip is lossless") {
    const auto r = sample_report("atm-run", "atm", "abc");
    const json j = report_to_json(r);
    CHECK(j.at("schema_version") == kReportSchemaVersion);
    const auto back = report_from_json(j);
    CHECK(report_to_json(back) == j);
    CHECK(back.unsup == r.unsup);
    CHECK_FALSE(back.unsup.kl_score.has_value());
    CHECK(back.absorption.per_parent.size() == 2);
    CHECK(back.absorption.per_parent[0].main_latents == std::vector<int>{3, 9});
    CHECK(back.absorption.per_parent[1].excluded);
    CHECK(back.sparse_probing.per_task[0].selected == std::vector<int>{3});
    CHECK(json::parse(j.dump()) == j);
}

TEST_CASE("report schema mismatch is rejected") {
    json j = report_to_json(sample_report("a", "atm", "h"));
    j["schema_version"] = kReportSchemaVersion + 1;
    try {
        report_from_json(j);
        FAIL("accepted a foreign schema");
    } catch (const ConfigError& e) {
        CHECK(e.field() == "schema_version");
    }
}

TEST_CASE("reference table values") {
    // Metric order: absorption, mse, cosine, kl, ce, ev, l0, l1, sparse probing.
    const std::map<std::string, std::vector<double>> table{
        {"atm", {0.0068, 0.5508, 0.9727, 0.9965, 0.9967, 0.9102, 3280, 1704, 0.7161}},
        {"topk", {0.1402, 2.53125, 0.875, 0.9565, 0.9556, 0.6016, 40, 366, 0.7698}},
        {"jumprelu", {0.0114, 1.6719, 0.9297, 0.9945, 0.9951, 0.7344, 2666, 4832, 0.7154}},
        {"vanilla", {0.0161, 0.0898, 0.9961, 0.9996, 1.0, 0.9844, 8724, 12544, 0.6379}},
    };
    const auto metrics = comparison_metrics();
    for (const auto& [arch, values] : table) {
        const json ref = reference_values(arch);
        for (std::size_t i = 0; i < metrics.size(); ++i) CHECK(ref.at(metrics[i]).get<double>() == values[i]);
    }
    CHECK(reference_values("other").is_null());
}

TEST_CASE("comparison csv layout") {
    const std::vector<MetricsReport> reports{sample_report("atm", "atm", "h"), sample_report("base", "vanilla", "h"),
                                             sample_report("k", "topk", "h"), sample_report("jr", "jumprelu", "h")};
    const auto csv = comparison_csv(reports);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "metric,atm,base,k,jr,atm (reference),base (reference),k (reference),jr (reference)");
    std::vector<std::string> names;
    while (std::getline(in, line)) {
        names.push_back(line.substr(0, line.find(',')));
        CHECK(std::count(line.begin(), line.end(), ',') == 8);
    }
    CHECK(names == comparison_metrics());
    CHECK(names.size() == 9);
    CHECK(csv.find("\nkl_score,,,,,0.9965,0.9996,0.9565,0.9945\n") != std::string::npos);
    CHECK(csv.find("\nmse,0.125,0.125,0.125,0.125,0.5508,0.0898,2.53125,1.6719\n") != std::string::npos);

    const std::vector<MetricsReport> swapped{reports[1], reports[0]};
    std::istringstream in2(comparison_csv(swapped));
    std::getline(in2, line);
    CHECK(line.rfind("metric,base,atm,", 0) == 0);
}

TEST_CASE("comparison csv refuses bad input") {
    const auto a = sample_report("a", "atm", "h1");
    try {
        comparison_csv({a});
        FAIL("accepted a single report");
    } catch (const ConfigError& e) {
        CHECK(e.field() == "reports");
    }
    try {
        comparison_csv({a, sample_report("b", "topk", "h2")});
        FAIL("accepted mixed datasets");
    } catch (const ConfigError& e) {
        CHECK(e.field() == "dataset_hash");
    }
}
