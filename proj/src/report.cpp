// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0

#include "atm/report.hpp"

#include "atm/common.hpp"

#include <cstdio>

namespace atm {

namespace {

using json = nlohmann::json;

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

std::string csv_number(const std::optional<double>& v) {
    if (!v) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", *v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

}  // namespace

json report_to_json(const MetricsReport& r) {
    json j;
    j["schema_version"] = r.schema_version;
    j["run"] = {{"label", r.label},
                {"arch", r.arch},
                {"config_hash", r.config_hash},
                {"dataset_hash", r.dataset_hash},
                {"seed", r.seed}};
    j["timestamp"] = r.timestamp;
    const auto& u = r.unsup;
    j["unsup"] = {{"mse", u.mse},
                  {"cosine", u.cosine},
                  {"explained_variance", u.explained_variance},
                  {"l2_ratio", u.l2_ratio},
                  {"l0_mean", u.l0_mean},
                  {"l1_mean", u.l1_mean},
                  {"ce_score", opt(u.ce_score)},
                  {"kl_score", opt(u.kl_score)},
                  {"dead_feature_count", u.dead_feature_count},
                  {"density_histogram", u.density_histogram},
                  {"rare_feature_count", u.rare_feature_count},
                  {"zero_norm_samples", u.zero_norm_samples},
                  {"downstream_note", u.downstream_note}};
    json parents = json::array();
    for (const auto& p : r.absorption.per_parent) {
        parents.push_back({{"parent", p.parent},
                           {"main_latents", p.main_latents},
                           {"positives", p.positives},
                           {"absorbed", p.absorbed},
                           {"score", p.score},
                           {"excluded", p.excluded},
                           {"note", p.note}});
    }
    j["absorption"] = {{"mean", r.absorption.mean}, {"per_parent", parents}, {"notes", r.absorption.notes}};
    json tasks = json::array();
    for (const auto& t : r.sparse_probing.per_task) {
        tasks.push_back({{"feature", t.feature},
                         {"accuracy", t.accuracy},
                         {"selected", t.selected},
                         {"skipped", t.skipped},
                         {"reason", t.reason}});
    }
    j["sparse_probing"] = {{"mean_top1", r.sparse_probing.mean_top1}, {"per_task", tasks}};
    j["reference"] = r.reference;
    return j;
}

MetricsReport report_from_json(const json& j) {
    MetricsReport r;
    try {
        r.schema_version = j.at("schema_version").get<int>();
        if (r.schema_version != kReportSchemaVersion) {
            throw ConfigError("schema_version", "unsupported report schema " + std::to_string(r.schema_version));
        }
        const auto& run = j.at("run");
        r.label = run.at("label").get<std::string>();
        r.arch = run.at("arch").get<std::string>();
        r.config_hash = run.at("config_hash").get<std::string>();
        r.dataset_hash = run.at("dataset_hash").get<std::string>();
        r.seed = run.at("seed").get<std::uint64_t>();
        r.timestamp = j.at("timestamp").get<std::string>();
        const auto& u = j.at("unsup");
        r.unsup.mse = u.at("mse").get<double>();
        r.unsup.cosine = u.at("cosine").get<double>();
        r.unsup.explained_variance = u.at("explained_variance").get<double>();
        r.unsup.l2_ratio = u.at("l2_ratio").get<double>();
        r.unsup.l0_mean = u.at("l0_mean").get<double>();
        r.unsup.l1_mean = u.at("l1_mean").get<double>();
        r.unsup.ce_score = opt_from(u.at("ce_score"));
        r.unsup.kl_score = opt_from(u.at("kl_score"));
        r.unsup.dead_feature_count = u.at("dead_feature_count").get<int>();
        r.unsup.density_histogram = u.at("density_histogram").get<std::array<int, kDensityBins>>();
        r.unsup.rare_feature_count = u.at("rare_feature_count").get<int>();
        r.unsup.zero_norm_samples = u.at("zero_norm_samples").get<int>();
        r.unsup.downstream_note = u.at("downstream_note").get<std::string>();
        const auto& a = j.at("absorption");
        r.absorption.mean = a.at("mean").get<double>();
        r.absorption.notes = a.at("notes").get<std::vector<std::string>>();
        for (const auto& p : a.at("per_parent")) {
            ParentAbsorption pa;
            pa.parent = p.at("parent").get<int>();
            pa.main_latents = p.at("main_latents").get<std::vector<int>>();
            pa.positives = p.at("positives").get<int>();
            pa.absorbed = p.at("absorbed").get<int>();
            pa.score = p.at("score").get<double>();
            pa.excluded = p.at("excluded").get<bool>();
            pa.note = p.at("note").get<std::string>();
            r.absorption.per_parent.push_back(std::move(pa));
        }
        const auto& s = j.at("sparse_probing");
        r.sparse_probing.mean_top1 = s.at("mean_top1").get<double>();
        for (const auto& t : s.at("per_task")) {
            ProbeTask task;
            task.feature = t.at("feature").get<int>();
            task.accuracy = t.at("accuracy").get<double>();
            task.selected = t.at("selected").get<std::vector<int>>();
            task.skipped = t.at("skipped").get<bool>();
            task.reason = t.at("reason").get<std::string>();
            r.sparse_probing.per_task.push_back(std::move(task));
        }
        r.reference = j.value("reference", json(nullptr));
    } catch (const json::exception& e) {
        throw ConfigError("report", e.what());
    }
    return r;
}

json reference_values(std::string_view arch) {
    const auto row = [](double absorption, double mse, double cosine, double kl, double ce, double ev,
                        double l0, double l1, double probing) {
        return json{{"absorption", absorption}, {"mse", mse},   {"cosine", cosine},
                    {"kl_score", kl},           {"ce_score", ce}, {"explained_variance", ev},
                    {"l0", l0},                 {"l1", l1},       {"sparse_probing", probing}};
    };
    if (arch == "atm") return row(0.0068, 0.5508, 0.9727, 0.9965, 0.9967, 0.9102, 3280, 1704, 0.7161);
    if (arch == "topk") return row(0.1402, 2.53125, 0.875, 0.9565, 0.9556, 0.6016, 40, 366, 0.7698);
    if (arch == "jumprelu") return row(0.0114, 1.6719, 0.9297, 0.9945, 0.9951, 0.7344, 2666, 4832, 0.7154);
    if (arch == "vanilla") return row(0.0161, 0.0898, 0.9961, 0.9996, 1.0, 0.9844, 8724, 12544, 0.6379);
    return nullptr;
}

std::vector<std::string> comparison_metrics() {
    return {"absorption", "mse", "cosine", "kl_score", "ce_score", "explained_variance", "l0", "l1",
            "sparse_probing"};
}

std::optional<double> metric_value(const MetricsReport& r, const std::string& metric) {
    if (metric == "absorption") return r.absorption.mean;
    if (metric == "mse") return r.unsup.mse;
    if (metric == "cosine") return r.unsup.cosine;
    if (metric == "kl_score") return r.unsup.kl_score;
    if (metric == "ce_score") return r.unsup.ce_score;
    if (metric == "explained_variance") return r.unsup.explained_variance;
    if (metric == "l0") return r.unsup.l0_mean;
    if (metric == "l1") return r.unsup.l1_mean;
    if (metric == "sparse_probing") return r.sparse_probing.mean_top1;
    return std::nullopt;
}

std::string comparison_csv(const std::vector<MetricsReport>& reports) {
    if (reports.size() < 2) throw ConfigError("reports", "compare needs at least two reports");
    for (const auto& r : reports) {
        if (r.dataset_hash != reports.front().dataset_hash) {
            throw ConfigError("dataset_hash", "reports were computed on different datasets (" +
                                                  reports.front().dataset_hash + " vs " + r.dataset_hash + ")");
        }
    }
    std::string out = "metric";
    for (const auto& r : reports) out += ',' + csv_field(r.label);
    for (const auto& r : reports) out += ',' + csv_field(r.label + " (reference)");
    out += '\n';
    for (const auto& metric : comparison_metrics()) {
        out += metric;
        for (const auto& r : reports) out += ',' + csv_number(metric_value(r, metric));
        for (const auto& r : reports) {
            std::optional<double> ref;
            if (r.reference.is_object() && r.reference.contains(metric)) ref = r.reference.at(metric).get<double>();
            out += ',' + csv_number(ref);
        }
        out += '\n';
    }
    return out;
}

}  // namespace atm
