// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0

#include "atm/config.hpp"

#include "atm/content_hash.hpp"

#include <fstream>
#include <functional>
#include <limits>

namespace atm {

namespace {

using json = nlohmann::json;

struct Field {
    const char* key;
    std::function<void(ExperimentConfig&, const json&)> read;
    std::function<json(const ExperimentConfig&)> write;
};

int as_int(const char* key, const json& v) {
    if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
        throw ConfigError(key, "integer out of range");
    }
    return static_cast<int>(x);
}

double as_double(const char* key, const json& v) {
    if (!v.is_number()) throw ConfigError(key, "expected a number");
    return v.get<double>();
}

std::uint64_t as_u64(const char* key, const json& v) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw ConfigError(key, "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

std::string as_string(const char* key, const json& v) {
    if (!v.is_string()) throw ConfigError(key, "expected a string");
    return v.get<std::string>();
}

#define ATM_INT(KEY, MEMBER)                                                              \
    Field {                                                                               \
        KEY, [](ExperimentConfig& c, const json& v) { c.MEMBER = as_int(KEY, v); },       \
            [](const ExperimentConfig& c) { return json(c.MEMBER); }                      \
    }
#define ATM_REAL(KEY, MEMBER)                                                             \
    Field {                                                                               \
        KEY, [](ExperimentConfig& c, const json& v) { c.MEMBER = as_double(KEY, v); },    \
            [](const ExperimentConfig& c) { return json(c.MEMBER); }                      \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        {"label", [](ExperimentConfig& c, const json& v) { c.label = as_string("label", v); },
         [](const ExperimentConfig& c) { return json(c.label); }},
        {"seed", [](ExperimentConfig& c, const json& v) { c.train.seed = as_u64("seed", v); },
         [](const ExperimentConfig& c) { return json(c.train.seed); }},
        // data
        ATM_INT("d", train.d),
        ATM_INT("m", data.m),
        ATM_INT("pairs", data.pairs),
        ATM_INT("train_count", data.train_count),
        ATM_INT("test_count", data.test_count),
        ATM_REAL("s_mean", data.s_mean),
        ATM_REAL("noise_sigma", data.noise_sigma),
        ATM_INT("max_active", data.max_active),
        ATM_REAL("rate_parent", data.rates.parent),
        ATM_REAL("rate_child", data.rates.child),
        ATM_REAL("rate_other", data.rates.other),
        // training
        {"arch", [](ExperimentConfig& c, const json& v) { c.train.arch = parse_arch(as_string("arch", v)); },
         [](const ExperimentConfig& c) { return json(std::string(arch_name(c.train.arch))); }},
        ATM_INT("n", train.n),
        ATM_REAL("lr", train.lr),
        ATM_INT("lr_warmup_steps", train.lr_warmup_steps),
        ATM_INT("total_steps", train.total_steps),
        ATM_INT("batch_size", train.batch_size),
        ATM_REAL("lambda_sparse", train.lambda_sparse),
        ATM_INT("topk_k", train.topk_k),
        ATM_REAL("jumprelu_bandwidth", train.jumprelu_bandwidth),
        ATM_REAL("jumprelu_init_theta", train.jumprelu_init_theta),
        ATM_REAL("adam_beta1", train.adam_beta1),
        ATM_REAL("adam_beta2", train.adam_beta2),
        ATM_REAL("adam_eps", train.adam_eps),
        ATM_INT("checkpoint_every", train.checkpoint_every),
        // mask schedule
        {"beta", [](ExperimentConfig& c, const json& v) { c.train.beta = static_cast<float>(as_double("beta", v)); },
         [](const ExperimentConfig& c) { return json(static_cast<double>(c.train.beta)); }},
        ATM_INT("warmup_steps", train.schedule.warmup_steps),
        ATM_INT("prune_period", train.schedule.prune_period),
        ATM_INT("prune_duration", train.schedule.prune_duration),
        ATM_REAL("c_base", train.schedule.c_base),
        ATM_REAL("c_prune", train.schedule.c_prune),
        ATM_REAL("r", train.schedule.r),
        ATM_INT("min_keep", train.schedule.min_keep),
        // evaluation
        ATM_INT("head_classes", eval.head_classes),
        ATM_REAL("tau_fs", eval.absorption.tau_fs),
        ATM_REAL("tau_ps", eval.absorption.tau_ps),
        ATM_REAL("tau_pa", eval.absorption.tau_pa),
        ATM_INT("k_max", eval.absorption.k_max),
        ATM_INT("probe_k", eval.probing.k),
        ATM_REAL("probe_l2", eval.absorption.probe.l2_penalty),
        ATM_INT("probe_iterations", eval.absorption.probe.iterations),
        ATM_REAL("probe_step", eval.absorption.probe.step),
        ATM_REAL("probe_train_fraction", eval.absorption.train_fraction),
    };
    return table;
}

#undef ATM_INT
#undef ATM_REAL

}  // namespace

std::string ExperimentConfig::run_label() const {
    return label.empty() ? std::string(arch_name(train.arch)) : label;
}

void ExperimentConfig::validate() const {
    if (train.d < 2) throw ConfigError("d", "must be >= 2");
    if (data.m < 1) throw ConfigError("m", "must be >= 1");
    if (data.pairs < 0 || 2 * data.pairs > data.m) throw ConfigError("pairs", "must satisfy 0 <= pairs <= m/2");
    if (data.train_count < 1) throw ConfigError("train_count", "must be >= 1");
    if (data.test_count < 10) throw ConfigError("test_count", "must be >= 10");
    if (!(data.s_mean >= 1.0) || data.s_mean > data.m) throw ConfigError("s_mean", "must lie in [1, m]");
    if (!(data.noise_sigma >= 0.0)) throw ConfigError("noise_sigma", "must be >= 0");
    if (data.max_active < 0) throw ConfigError("max_active", "must be >= 0");
    for (const auto& [key, v] : {std::pair{"rate_parent", data.rates.parent},
                                 std::pair{"rate_child", data.rates.child},
                                 std::pair{"rate_other", data.rates.other}}) {
        if (!(v > 0.0 && v < 1.0)) throw ConfigError(key, "must lie in (0, 1)");
    }
    train.validate();
    if (eval.head_classes < 2) throw ConfigError("head_classes", "must be >= 2");
    const auto& a = eval.absorption;
    if (!(a.tau_fs >= 0.0)) throw ConfigError("tau_fs", "must be >= 0");
    if (!(a.tau_ps >= -1.0 && a.tau_ps <= 1.0)) throw ConfigError("tau_ps", "must lie in [-1, 1]");
    if (!(a.tau_pa > 0.0)) throw ConfigError("tau_pa", "must be > 0");
    if (a.k_max < 1 || a.k_max > 8) throw ConfigError("k_max", "must lie in [1, 8]");
    if (eval.probing.k < 1 || eval.probing.k > train.n) throw ConfigError("probe_k", "must lie in [1, n]");
    if (!(a.probe.l2_penalty >= 0.0)) throw ConfigError("probe_l2", "must be >= 0");
    if (a.probe.iterations < 1) throw ConfigError("probe_iterations", "must be >= 1");
    if (!(a.probe.step > 0.0)) throw ConfigError("probe_step", "must be > 0");
    if (!(a.train_fraction > 0.0 && a.train_fraction < 1.0)) {
        throw ConfigError("probe_train_fraction", "must lie in (0, 1)");
    }
}

ExperimentConfig parse_config(const json& j) {
    if (!j.is_object()) throw ConfigError("<root>", "config must be a JSON object");
    ExperimentConfig c;
    for (const auto& [key, value] : j.items()) {
        const auto& table = fields();
        const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
        if (it == table.end()) throw ConfigError(key, "unknown config key");
        it->read(c, value);
    }
    // Probe settings are shared by absorption and sparse probing.
    c.eval.probing.probe = c.eval.absorption.probe;
    c.eval.probing.train_fraction = c.eval.absorption.train_fraction;
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string(), std::string("malformed JSON: ") + e.what());
    }
    return parse_config(j);
}

json config_to_json(const ExperimentConfig& config) {
    json j = json::object();
    for (const auto& f : fields()) j[f.key] = f.write(config);
    return j;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& f : fields()) keys.emplace_back(f.key);
    return keys;
}

std::string config_hash(const ExperimentConfig& config) {
    return git_blob_hash(config_to_json(config).dump());
}

}  // namespace atm
