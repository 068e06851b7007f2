// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0

#include "atm/datagen.hpp"

#include "atm/binary_io.hpp"
#include "atm/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <utility>

namespace atm {

namespace {

constexpr char kDataMagic[] = "ATMD";
constexpr char kCodesMagic[] = "ATMC";
constexpr std::uint32_t kFormatVersion = 1;
constexpr double kCoefLo = 0.5;
constexpr double kCoefHi = 2.0;

// For each atom, itself plus every atom that (transitively) implies it.
std::vector<std::vector<int>> implying_sets(const GroundTruthDictionary& dict) {
    const int m = dict.atom_count();
    std::vector<std::vector<int>> children(m);
    for (const auto& imp : dict.implications) children[imp.parent].push_back(imp.child);
    std::vector<std::vector<int>> out(m);
    for (int j = 0; j < m; ++j) {
        std::vector<char> seen(m, 0);
        std::vector<int> stack{j};
        seen[j] = 1;
        while (!stack.empty()) {
            const int k = stack.back();
            stack.pop_back();
            out[j].push_back(k);
            for (int c : children[k]) {
                if (!seen[c]) {
                    seen[c] = 1;
                    stack.push_back(c);
                }
            }
        }
    }
    return out;
}

// Applies child => parent until nothing changes. Newly activated parents get
// a fresh coefficient from `rng`.
void close_implications(const std::vector<Implication>& imps, float* row, Rng& rng) {
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& imp : imps) {
            if (row[imp.child] > 0.0f && !(row[imp.parent] > 0.0f)) {
                row[imp.parent] = static_cast<float>(rng.uniform(kCoefLo, kCoefHi));
                changed = true;
            }
        }
    }
}

bool has_cycle(int m, const std::vector<Implication>& imps) {
    std::vector<std::vector<int>> adj(m);
    for (const auto& imp : imps) adj[imp.child].push_back(imp.parent);
    std::vector<int> state(m, 0);  // 0 new, 1 on stack, 2 done
    for (int start = 0; start < m; ++start) {
        if (state[start]) continue;
        std::vector<std::pair<int, std::size_t>> stack{{start, 0}};
        state[start] = 1;
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < adj[node].size()) {
                const int to = adj[node][next++];
                if (state[to] == 1) return true;
                if (state[to] == 0) {
                    state[to] = 1;
                    stack.emplace_back(to, 0);
                }
            } else {
                state[node] = 2;
                stack.pop_back();
            }
        }
    }
    return false;
}

}  // namespace

std::vector<int> GroundTruthDictionary::parents() const {
    std::set<int> s;
    for (const auto& imp : implications) s.insert(imp.parent);
    return {s.begin(), s.end()};
}

void validate(const GroundTruthDictionary& dict) {
    const int d = dict.dim();
    const int m = dict.atom_count();
    if (d < 1 || m < 1) throw ConfigError("atoms", "dictionary must be non-empty");
    for (int j = 0; j < m; ++j) {
        if (std::abs(dict.atoms.col(j).norm() - 1.0) > 1e-9) {
            throw ConfigError("atoms", "column " + std::to_string(j) + " is not unit norm");
        }
    }
    if (static_cast<int>(dict.base_rates.size()) != m) {
        throw ConfigError("base_rates", "expected " + std::to_string(m) + " entries");
    }
    for (double r : dict.base_rates) {
        if (!(r > 0.0 && r < 1.0)) throw ConfigError("base_rates", "entries must lie in (0, 1)");
    }
    std::set<std::pair<int, int>> seen;
    for (const auto& imp : dict.implications) {
        if (imp.child < 0 || imp.child >= m || imp.parent < 0 || imp.parent >= m) {
            throw ConfigError("implications", "index out of range");
        }
        if (imp.child == imp.parent) throw ConfigError("implications", "self implication");
        if (!seen.insert({imp.child, imp.parent}).second) {
            throw ConfigError("implications", "duplicate pair");
        }
    }
    if (has_cycle(m, dict.implications)) throw ConfigError("implications", "graph has a cycle");
}

GroundTruthDictionary build_dictionary(int d, int m, int pairs, std::uint64_t seed,
                                       const BaseRates& rates) {
    if (d < 2) throw ConfigError("d", "must be >= 2");
    if (m < 1) throw ConfigError("m", "must be >= 1");
    if (pairs < 0 || 2 * pairs > m) throw ConfigError("pairs", "must satisfy 0 <= pairs <= m/2");

    GroundTruthDictionary dict;
    dict.seed = seed;
    dict.atoms.resize(d, m);
    for (int j = 0; j < m; ++j) {
        Rng rng(seed, StreamTag::Atoms, static_cast<std::uint64_t>(j));
        for (int i = 0; i < d; ++i) dict.atoms(i, j) = rng.normal();
        dict.atoms.col(j).normalize();
    }

    // Fisher-Yates; the first `pairs` indices become parents, the next
    // `pairs` their children.
    std::vector<int> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed, StreamTag::Pairs);
    for (int i = m - 1; i > 0; --i) {
        std::swap(perm[i], perm[rng.below(static_cast<std::uint64_t>(i) + 1)]);
    }
    dict.base_rates.assign(m, rates.other);
    for (int p = 0; p < pairs; ++p) {
        const int parent = perm[p];
        const int child = perm[pairs + p];
        dict.implications.push_back({child, parent});
        dict.base_rates[parent] = rates.parent;
        dict.base_rates[child] = rates.child;
    }
    return dict;
}

double expected_active_count(const GroundTruthDictionary& dict, const std::vector<double>& rates) {
    const auto sets = implying_sets(dict);
    double total = 0.0;
    double p_empty = 1.0;
    for (std::size_t j = 0; j < rates.size(); ++j) {
        double p_off = 1.0;
        for (int k : sets[j]) p_off *= 1.0 - rates[k];
        total += 1.0 - p_off;
        p_empty *= 1.0 - rates[j];
    }
    return total / (1.0 - p_empty);
}

std::vector<double> activation_rates(const GroundTruthDictionary& dict, double s_mean) {
    const int m = dict.atom_count();
    if (!(s_mean >= 1.0)) throw ConfigError("s_mean", "must be >= 1");
    if (s_mean > m) throw ConfigError("s_mean", "cannot exceed the atom count");

    const auto scaled = [&](double alpha) {
        std::vector<double> q(m);
        for (int j = 0; j < m; ++j) q[j] = std::min(1.0, alpha * dict.base_rates[j]);
        return q;
    };
    const double rate_sum = std::accumulate(dict.base_rates.begin(), dict.base_rates.end(), 0.0);
    const double rate_min = *std::min_element(dict.base_rates.begin(), dict.base_rates.end());
    // The lower end keeps P(nonzero row) large enough that redraws stay cheap.
    double lo = 1e-3 / rate_sum;
    double hi = 1.0 / rate_min;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (expected_active_count(dict, scaled(mid)) < s_mean) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return scaled(0.5 * (lo + hi));
}

CodeMatrix sample_codes(const GroundTruthDictionary& dict, int count, double s_mean,
                        std::uint64_t seed, int max_active) {
    if (count < 1) throw ConfigError("count", "must be >= 1");
    const int m = dict.atom_count();
    const int cap = max_active > 0 ? max_active : m;
    const auto q = activation_rates(dict, s_mean);

    CodeMatrix out;
    out.codes = MatrixF::Zero(count, m);
    for (int i = 0; i < count; ++i) {
        Rng rng(seed, StreamTag::Codes, static_cast<std::uint64_t>(i));
        float* row = out.codes.row(i).data();
        for (;;) {
            std::fill(row, row + m, 0.0f);
            for (int j = 0; j < m; ++j) {
                if (rng.uniform() < q[j]) row[j] = static_cast<float>(rng.uniform(kCoefLo, kCoefHi));
            }
            close_implications(dict.implications, row, rng);
            const int active = static_cast<int>(std::count_if(row, row + m, [](float c) { return c > 0.0f; }));
            if (active >= 1 && active <= cap) break;
        }
    }
    return out;
}

ActivationBatch render_activations(const GroundTruthDictionary& dict, const CodeMatrix& codes,
                                   double noise_sigma, std::uint64_t seed) {
    if (codes.atom_count() != dict.atom_count()) {
        throw ShapeError("codes have " + std::to_string(codes.atom_count()) + " columns, dictionary has " +
                         std::to_string(dict.atom_count()) + " atoms");
    }
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma", "must be >= 0");
    const MatrixD clean = codes.codes.cast<double>() * dict.atoms.transpose();
    ActivationBatch batch;
    batch.data.resize(clean.rows(), clean.cols());
    for (Eigen::Index i = 0; i < clean.rows(); ++i) {
        Rng rng(seed, StreamTag::Noise, static_cast<std::uint64_t>(i));
        for (Eigen::Index k = 0; k < clean.cols(); ++k) {
            const double noise = noise_sigma > 0.0 ? noise_sigma * rng.normal() : 0.0;
            batch.data(i, k) = static_cast<float>(clean(i, k) + noise);
        }
    }
    return batch;
}

std::filesystem::path metadata_path(const std::filesystem::path& path) {
    auto p = path;
    p += ".json";
    return p;
}

void save_dataset(const std::filesystem::path& path, const ActivationBatch& batch,
                  const GroundTruthDictionary& dict, double noise_sigma) {
    if (batch.dim() != dict.dim()) throw ShapeError("batch dim does not match dictionary dim");
    ByteWriter w;
    w.magic(kDataMagic);
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(batch.dim()));
    w.u64(static_cast<std::uint64_t>(batch.count()));
    w.f32s({batch.data.data(), static_cast<std::size_t>(batch.data.size())});
    w.save(path);

    nlohmann::json meta;
    meta["format"] = "ATMD";
    meta["version"] = kFormatVersion;
    meta["d"] = dict.dim();
    meta["m"] = dict.atom_count();
    std::vector<double> atoms;
    atoms.reserve(static_cast<std::size_t>(dict.atoms.size()));
    for (int i = 0; i < dict.dim(); ++i)
        for (int j = 0; j < dict.atom_count(); ++j) atoms.push_back(dict.atoms(i, j));
    meta["atoms"] = atoms;
    auto imps = nlohmann::json::array();
    for (const auto& imp : dict.implications) imps.push_back({{"child", imp.child}, {"parent", imp.parent}});
    meta["implications"] = imps;
    meta["base_rates"] = dict.base_rates;
    meta["seed"] = dict.seed;
    meta["noise_sigma"] = noise_sigma;

    std::ofstream out(metadata_path(path));
    if (!out) throw IoError("cannot write " + metadata_path(path).string());
    out << meta.dump(2) << '\n';
}

LoadedDataset load_dataset(const std::filesystem::path& path) {
    auto r = ByteReader::from_file(path);
    r.expect_magic(kDataMagic);
    r.expect_version(kFormatVersion);
    const auto d = r.u32();
    const auto count = r.u64();
    if (d == 0) throw FormatError(8, "dimension is zero");
    if (count == 0) throw FormatError(12, "sample count is zero");
    const std::uint64_t expected = count * d * sizeof(float);
    const std::uint64_t actual = r.size() - r.offset();
    if (expected != actual) {
        throw FormatError(r.offset(), "payload length mismatch: expected " + std::to_string(expected) +
                                          " bytes, found " + std::to_string(actual));
    }
    LoadedDataset out;
    out.batch.data.resize(static_cast<Eigen::Index>(count), d);
    r.f32s({out.batch.data.data(), static_cast<std::size_t>(out.batch.data.size())});
    if (!out.batch.data.allFinite()) throw NumericError("data", "non-finite activation in " + path.string());

    nlohmann::json meta;
    {
        std::ifstream in(metadata_path(path));
        if (!in) throw IoError("cannot open " + metadata_path(path).string());
        try {
            in >> meta;
        } catch (const nlohmann::json::exception& e) {
            throw IoError("bad metadata " + metadata_path(path).string() + ": " + e.what());
        }
    }
    try {
        const int md = meta.at("d").get<int>();
        const int mm = meta.at("m").get<int>();
        if (md != static_cast<int>(d)) throw ConfigError("d", "metadata disagrees with payload");
        const auto atoms = meta.at("atoms").get<std::vector<double>>();
        if (atoms.size() != static_cast<std::size_t>(md) * mm) throw ConfigError("atoms", "wrong length");
        out.dict.atoms.resize(md, mm);
        for (int i = 0; i < md; ++i)
            for (int j = 0; j < mm; ++j) out.dict.atoms(i, j) = atoms[static_cast<std::size_t>(i) * mm + j];
        for (const auto& imp : meta.at("implications")) {
            out.dict.implications.push_back({imp.at("child").get<int>(), imp.at("parent").get<int>()});
        }
        out.dict.base_rates = meta.at("base_rates").get<std::vector<double>>();
        out.dict.seed = meta.at("seed").get<std::uint64_t>();
        out.noise_sigma = meta.at("noise_sigma").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("metadata", e.what());
    }
    validate(out.dict);
    return out;
}

void save_codes(const std::filesystem::path& path, const CodeMatrix& codes) {
    ByteWriter w;
    w.magic(kCodesMagic);
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(codes.atom_count()));
    w.u64(static_cast<std::uint64_t>(codes.count()));
    w.f32s({codes.codes.data(), static_cast<std::size_t>(codes.codes.size())});
    w.save(path);
}

CodeMatrix load_codes(const std::filesystem::path& path) {
    auto r = ByteReader::from_file(path);
    r.expect_magic(kCodesMagic);
    r.expect_version(kFormatVersion);
    const auto m = r.u32();
    const auto count = r.u64();
    const std::uint64_t expected = count * m * sizeof(float);
    const std::uint64_t actual = r.size() - r.offset();
    if (expected != actual) {
        throw FormatError(r.offset(), "payload length mismatch: expected " + std::to_string(expected) +
                                          " bytes, found " + std::to_string(actual));
    }
    CodeMatrix out;
    out.codes.resize(static_cast<Eigen::Index>(count), m);
    r.f32s({out.codes.data(), static_cast<std::size_t>(out.codes.size())});
    return out;
}

}  // namespace atm
