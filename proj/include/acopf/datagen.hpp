// Supervised dataset generation: perturb the base load uniformly, solve
// ACOPF, discard failed solves, and persist features/targets/labels with a
// manifest. Draw-solve units are keyed by draw index and merged in index
// order, so results are identical for any worker count.
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "acopf/common.hpp"
#include "acopf/grid.hpp"
#include "acopf/opf.hpp"
#include "acopf/power_flow.hpp"

namespace acopf {

struct SamplerConfig {
    double perturbation = 0.1;  // load half-width delta
    int n_target = 1;
    std::uint64_t seed = 0;
    long max_attempts = 0;  // 0: derived as 4 * n_target

    void check() const {
        if (perturbation < 0.0 || perturbation >= 1.0)
            throw Error("perturbation must lie in [0, 1)");
        if (n_target < 1) throw Error("n_target must be at least 1");
    }
    long attempts_cap() const {
        return max_attempts > 0 ? max_attempts : 4L * n_target;
    }
};

struct Sample {
    std::vector<double> features;  // [P^L per bus, Q^L per bus], p.u.
    std::vector<double> targets;   // [P^G non-slack gens, V at their buses], p.u.
    ActiveSetVector active_labels;
    double true_cost = 0.0;  // $/hr
};

struct DatasetManifest {
    std::string case_name;
    double perturbation = 0.0;
    std::uint64_t seed = 0;
    long attempts = 0;
    long solved = 0;
    double convergence_rate = 0.0;
    std::string layout = "e2e-v1";
    int n_target = 0;
    int feature_dim = 0, target_dim = 0, label_dim = 0;
};

struct Dataset {
    std::vector<Sample> samples;
    DatasetManifest manifest;
};

inline Network sample_load(const Network& base, double perturbation, Rng& draw) {
    Network net = base;
    for (Bus& b : net.buses) {
        b.p_load = draw.uniform((1.0 - perturbation) * b.p_load,
                                (1.0 + perturbation) * b.p_load);
        b.q_load = draw.uniform((1.0 - perturbation) * b.q_load,
                                (1.0 + perturbation) * b.q_load);
    }
    return net;
}

namespace detail {

struct DrawResult {
    bool solved = false;
    Sample sample;
};

inline DrawResult run_draw(const Network& base, const NetworkIndex& idx,
                           const SamplerConfig& cfg, const OpfOptions& opf_opts,
                           long index) {
    Rng rng = Rng::for_draw(cfg.seed, static_cast<std::uint64_t>(index));
    Network net = sample_load(base, cfg.perturbation, rng);
    AdmittanceMatrix adm = build_admittance(net, idx);
    OpfSolution sol = solve_acopf(net, idx, adm, opf_opts);
    DrawResult res;
    if (!sol.converged) return res;
    res.solved = true;
    Sample& s = res.sample;
    const int nb = idx.n_bus();
    s.features.reserve(2 * nb);
    for (const Bus& b : net.buses) s.features.push_back(b.p_load);
    for (const Bus& b : net.buses) s.features.push_back(b.q_load);
    SetpointProfile sp = setpoints_from_solution(net, idx, sol);
    s.targets.reserve(sp.p_gen.size() + sp.v_gen.size());
    s.targets.insert(s.targets.end(), sp.p_gen.begin(), sp.p_gen.end());
    s.targets.insert(s.targets.end(), sp.v_gen.begin(), sp.v_gen.end());
    s.active_labels = extract_active_set(net, sol, opf_opts.active_eps);
    s.true_cost = sol.objective;
    return res;
}

}  // namespace detail

inline Dataset generate_dataset(const Network& base, const SamplerConfig& cfg,
                                const OpfOptions& opf_opts = {},
                                int n_threads = 1) {
    cfg.check();
    NetworkIndex idx(base);
    const long cap = cfg.attempts_cap();
    if (n_threads < 1) n_threads = 1;

    std::vector<detail::DrawResult> results;
    long produced = 0;  // indices evaluated so far
    long solved_prefix = 0;
    long stop_index = -1;  // first index at which n_target is reached

    while (produced < cap && stop_index < 0) {
        long chunk = std::min<long>(cap - produced,
                                    std::max(64L, 8L * n_threads));
        results.resize(produced + chunk);
        if (n_threads == 1) {
            for (long i = produced; i < produced + chunk; ++i)
                results[i] = detail::run_draw(base, idx, cfg, opf_opts, i);
        } else {
            std::atomic<long> next(produced);
            auto worker = [&]() {
                for (;;) {
                    long i = next.fetch_add(1);
                    if (i >= produced + chunk) return;
                    results[i] = detail::run_draw(base, idx, cfg, opf_opts, i);
                }
            };
            std::vector<std::thread> pool;
            for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
            for (std::thread& t : pool) t.join();
        }
        for (long i = produced; i < produced + chunk; ++i) {
            if (results[i].solved && ++solved_prefix == cfg.n_target) {
                stop_index = i;
                break;
            }
        }
        produced += chunk;
    }

    Dataset ds;
    long attempts = stop_index >= 0 ? stop_index + 1 : std::min(produced, cap);
    for (long i = 0; i < attempts; ++i)
        if (results[i].solved) ds.samples.push_back(std::move(results[i].sample));

    DatasetManifest& m = ds.manifest;
    m.case_name = base.name;
    m.perturbation = cfg.perturbation;
    m.seed = cfg.seed;
    m.attempts = attempts;
    m.solved = static_cast<long>(ds.samples.size());
    m.convergence_rate =
        attempts > 0 ? static_cast<double>(m.solved) / attempts : 0.0;
    m.n_target = cfg.n_target;
    m.feature_dim = 2 * idx.n_bus();
    m.target_dim = 2 * static_cast<int>(idx.non_slack_gens().size());
    m.label_dim = 2 * idx.n_gen() + 2 * idx.n_bus();
    return ds;
}

inline std::pair<Dataset, Dataset> split_dataset(const Dataset& ds,
                                                 double test_fraction,
                                                 std::uint64_t seed) {
    if (test_fraction <= 0.0 || test_fraction >= 1.0)
        throw Error("test_fraction must lie in (0, 1)");
    const std::size_t n = ds.samples.size();
    const auto n_train = static_cast<std::size_t>(
        std::llround(static_cast<double>(n) * (1.0 - test_fraction)));
    if (n_train == 0 || n_train == n)
        throw TooSmall("split would leave an empty side");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    std::pair<Dataset, Dataset> out;
    out.first.manifest = ds.manifest;
    out.second.manifest = ds.manifest;
    for (std::size_t i = 0; i < n; ++i) {
        (i < n_train ? out.first : out.second)
            .samples.push_back(ds.samples[order[i]]);
    }
    out.first.manifest.solved = static_cast<long>(out.first.samples.size());
    out.second.manifest.solved = static_cast<long>(out.second.samples.size());
    return out;
}

namespace detail {

inline std::string dataset_csv_header(const DatasetManifest& m) {
    std::string h;
    for (int i = 0; i < m.feature_dim; ++i)
        h += "f_" + std::to_string(i) + ",";
    for (int i = 0; i < m.target_dim; ++i)
        h += "t_" + std::to_string(i) + ",";
    for (int i = 0; i < m.label_dim; ++i)
        h += "a_" + std::to_string(i) + ",";
    h += "cost";
    return h;
}

}  // namespace detail

inline void save_dataset(const Dataset& ds, const std::string& path) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw IoError("cannot create dataset directory " + path);

    nlohmann::json j;
    const DatasetManifest& m = ds.manifest;
    j["format_version"] = 1;
    j["case"] = m.case_name;
    j["perturbation"] = m.perturbation;
    j["seed"] = m.seed;
    j["attempts"] = m.attempts;
    j["solved"] = m.solved;
    j["convergence_rate"] = m.convergence_rate;
    j["layout"] = m.layout;
    j["n_target"] = m.n_target;
    j["feature_dim"] = m.feature_dim;
    j["target_dim"] = m.target_dim;
    j["label_dim"] = m.label_dim;
    {
        std::ofstream f(fs::path(path) / "manifest.json", std::ios::binary);
        if (!f) throw IoError("cannot write manifest.json under " + path);
        f << j.dump(2) << "\n";
    }

    std::ofstream f(fs::path(path) / "samples.csv", std::ios::binary);
    if (!f) throw IoError("cannot write samples.csv under " + path);
    f << detail::dataset_csv_header(m) << "\n";
    for (const Sample& s : ds.samples) {
        std::string line;
        for (double v : s.features) line += format_double(v) + ",";
        for (double v : s.targets) line += format_double(v) + ",";
        for (std::uint8_t b : s.active_labels.bits)
            line += (b ? "1," : "0,");
        line += format_double(s.true_cost);
        f << line << "\n";
    }
    if (!f.good()) throw IoError("write failure under " + path);
}

inline Dataset load_dataset(const std::string& path) {
    namespace fs = std::filesystem;
    std::ifstream mf(fs::path(path) / "manifest.json", std::ios::binary);
    if (!mf) throw IoError("cannot open " + path + "/manifest.json");
    nlohmann::json j;
    try {
        mf >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad manifest.json under " + path + ": " + e.what());
    }
    if (!j.contains("format_version") || j["format_version"] != 1)
        throw FormatVersionMismatch("unsupported dataset format version in " +
                                    path);
    Dataset ds;
    DatasetManifest& m = ds.manifest;
    m.case_name = j.value("case", std::string());
    m.perturbation = j.value("perturbation", 0.0);
    m.seed = j.value("seed", std::uint64_t(0));
    m.attempts = j.value("attempts", 0L);
    m.solved = j.value("solved", 0L);
    m.convergence_rate = j.value("convergence_rate", 0.0);
    m.layout = j.value("layout", std::string());
    m.n_target = j.value("n_target", 0);
    m.feature_dim = j.value("feature_dim", 0);
    m.target_dim = j.value("target_dim", 0);
    m.label_dim = j.value("label_dim", 0);

    std::ifstream f(fs::path(path) / "samples.csv", std::ios::binary);
    if (!f) throw IoError("cannot open " + path + "/samples.csv");
    std::string header;
    std::getline(f, header);
    if (!header.empty() && header.back() == '\r') header.pop_back();
    if (header != detail::dataset_csv_header(m))
        throw FormatVersionMismatch("samples.csv header does not match the "
                                    "manifest layout in " + path);
    const int n_cols = m.feature_dim + m.target_dim + m.label_dim + 1;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        Sample s;
        std::stringstream ss(line);
        std::string cell;
        int col = 0;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str())
                throw IoError("bad numeric cell '" + cell + "' in " + path);
            if (col < m.feature_dim)
                s.features.push_back(v);
            else if (col < m.feature_dim + m.target_dim)
                s.targets.push_back(v);
            else if (col < m.feature_dim + m.target_dim + m.label_dim)
                s.active_labels.bits.push_back(v != 0.0);
            else
                s.true_cost = v;
            ++col;
        }
        if (col != n_cols)
            throw FormatVersionMismatch("row width does not match manifest in " +
                                        path);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace acopf
