#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "acopf/datagen.hpp"
#include "acopf/matpower.hpp"
#include "acopf/opf.hpp"

using namespace acopf;
namespace fs = std::filesystem;

namespace {

std::string data_path(const std::string& name) {
    return std::string(ACOPF_DATA_DIR) + "/" + name;
}

const Network& case30() {
    static Network net = parse_matpower_file(data_path("case30.m"));
    return net;
}

bool samples_equal(const Sample& a, const Sample& b) {
    return a.features == b.features && a.targets == b.targets &&
           a.active_labels == b.active_labels && a.true_cost == b.true_cost;
}

bool datasets_equal(const Dataset& a, const Dataset& b) {
    if (a.samples.size() != b.samples.size()) return false;
    for (std::size_t i = 0; i < a.samples.size(); ++i)
        if (!samples_equal(a.samples[i], b.samples[i])) return false;
    const DatasetManifest &m = a.manifest, &n = b.manifest;
    return m.case_name == n.case_name && m.perturbation == n.perturbation &&
           m.seed == n.seed && m.attempts == n.attempts &&
           m.solved == n.solved && m.convergence_rate == n.convergence_rate &&
           m.layout == n.layout && m.n_target == n.n_target &&
           m.feature_dim == n.feature_dim && m.target_dim == n.target_dim &&
           m.label_dim == n.label_dim;
}

const Dataset& shared100() {
    static Dataset ds = [] {
        SamplerConfig cfg;
        cfg.perturbation = 0.1;
        cfg.n_target = 100;
        cfg.seed = 42;
        return generate_dataset(case30(), cfg);
    }();
    return ds;
}

fs::path fresh_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("acopf-test-" + tag);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("zero perturbation reproduces the base loads") {
    Rng rng(9);
    Network net = sample_load(case30(), 0.0, rng);
    for (std::size_t i = 0; i < net.buses.size(); ++i) {
        CHECK(net.buses[i].p_load == case30().buses[i].p_load);
        CHECK(net.buses[i].q_load == case30().buses[i].q_load);
    }
}

TEST_CASE("zero loads stay exactly zero under perturbation") {
    Rng rng(10);
    Network net = sample_load(case30(), 0.3, rng);
    for (std::size_t i = 0; i < net.buses.size(); ++i)
        if (case30().buses[i].p_load == 0.0) CHECK(net.buses[i].p_load == 0.0);
}

TEST_CASE("sampled loads stay inside the perturbation band") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        Network net = sample_load(case30(), 0.1, rng);
        for (std::size_t i = 0; i < net.buses.size(); ++i) {
            double base = case30().buses[i].p_load;
            CHECK(net.buses[i].p_load >= 0.9 * base - 1e-15);
            CHECK(net.buses[i].p_load <= 1.1 * base + 1e-15);
            double qbase = case30().buses[i].q_load;
            CHECK(net.buses[i].q_load >= std::min(0.9 * qbase, 1.1 * qbase) - 1e-15);
            CHECK(net.buses[i].q_load <= std::max(0.9 * qbase, 1.1 * qbase) + 1e-15);
        }
    }
}

TEST_CASE("load sampler is unbiased") {
    Network base = case30();
    base.buses[2].p_load = 1.0;
    Rng rng(123);
    double sum = 0.0, sumsq = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        Network net = sample_load(base, 0.1, rng);
        sum += net.buses[2].p_load;
        sumsq += net.buses[2].p_load * net.buses[2].p_load;
    }
    double mean = sum / n;
    double var = sumsq / n - mean * mean;
    double width = 0.2;
    double se = width / std::sqrt(12.0) / std::sqrt(double(n));
    CHECK(std::abs(mean - 1.0) < 3.0 * se);
    double expected_var = width * width / 12.0;
    CHECK(var == Catch::Approx(expected_var).epsilon(0.2));
}

TEST_CASE("generation succeeds and recounts attempts") {
    SamplerConfig cfg;
    cfg.perturbation = 0.1;
    cfg.n_target = 10;
    cfg.seed = 7;
    Dataset ds = generate_dataset(case30(), cfg);
    REQUIRE(ds.samples.size() == 10);
    CHECK(ds.manifest.solved == 10);
    CHECK(ds.manifest.attempts >= 10);
    CHECK(ds.manifest.convergence_rate ==
          Catch::Approx(double(ds.manifest.solved) / ds.manifest.attempts));
    CHECK(ds.manifest.case_name == "case30");
    CHECK(ds.manifest.layout == "e2e-v1");
    CHECK(ds.manifest.feature_dim == 60);
    CHECK(ds.manifest.target_dim == 10);
    CHECK(ds.manifest.label_dim == 72);
    for (const Sample& s : ds.samples) {
        CHECK(s.features.size() == 60);
        CHECK(s.targets.size() == 10);
        CHECK(s.active_labels.size() == 72);
        CHECK(s.true_cost > 0.0);
    }
}

TEST_CASE("generation is deterministic across worker counts") {
    SamplerConfig cfg;
    cfg.perturbation = 0.1;
    cfg.n_target = 12;
    cfg.seed = 42;
    Dataset a = generate_dataset(case30(), cfg, {}, 1);
    Dataset b = generate_dataset(case30(), cfg, {}, 3);
    Dataset c = generate_dataset(case30(), cfg, {}, 8);
    CHECK(datasets_equal(a, b));
    CHECK(datasets_equal(a, c));
}

TEST_CASE("exhaustion keeps the partial dataset") {
    SamplerConfig cfg;
    cfg.perturbation = 0.1;
    cfg.n_target = 5;
    cfg.seed = 1;
    cfg.max_attempts = 6;
    OpfOptions opts;
    opts.max_iter = 1;  // nothing can converge
    Dataset ds = generate_dataset(case30(), cfg, opts);
    CHECK(ds.samples.empty());
    CHECK(ds.manifest.attempts == 6);
    CHECK(ds.manifest.solved == 0);
    CHECK(ds.manifest.convergence_rate == 0.0);
}

TEST_CASE("datasets round-trip bit exactly through disk") {
    Dataset ds = shared100();
    fs::path dir = fresh_dir("roundtrip");
    save_dataset(ds, dir.string());
    Dataset back = load_dataset(dir.string());
    CHECK(datasets_equal(ds, back));

    // A second save of the loaded dataset must produce identical bytes.
    fs::path dir2 = fresh_dir("roundtrip2");
    save_dataset(back, dir2.string());
    for (const char* fnm : {"manifest.json", "samples.csv"}) {
        std::ifstream f1(dir / fnm, std::ios::binary);
        std::ifstream f2(dir2 / fnm, std::ios::binary);
        std::stringstream s1, s2;
        s1 << f1.rdbuf();
        s2 << f2.rdbuf();
        INFO(fnm);
        CHECK(s1.str() == s2.str());
    }
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("empty datasets load back as empty") {
    SamplerConfig cfg;
    cfg.n_target = 2;
    cfg.seed = 3;
    cfg.max_attempts = 3;
    OpfOptions opts;
    opts.max_iter = 1;
    Dataset ds = generate_dataset(case30(), cfg, opts);
    REQUIRE(ds.samples.empty());
    fs::path dir = fresh_dir("empty");
    save_dataset(ds, dir.string());
    Dataset back = load_dataset(dir.string());
    CHECK(back.samples.empty());
    CHECK(back.manifest.attempts == 3);
    fs::remove_all(dir);
}

TEST_CASE("tampered artifacts are rejected") {
    SamplerConfig cfg;
    cfg.n_target = 3;
    cfg.seed = 5;
    Dataset ds = generate_dataset(case30(), cfg);
    fs::path dir = fresh_dir("tampered");
    save_dataset(ds, dir.string());

    SECTION("header renamed") {
        std::ifstream in(dir / "samples.csv", std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        in.close();
        std::string text = buf.str();
        text.replace(0, 3, "x_0");
        std::ofstream out(dir / "samples.csv", std::ios::binary);
        out << text;
        out.close();
        CHECK_THROWS_AS(load_dataset(dir.string()), FormatVersionMismatch);
    }
    SECTION("format version bumped") {
        std::ifstream in(dir / "manifest.json", std::ios::binary);
        nlohmann::json j;
        in >> j;
        in.close();
        j["format_version"] = 2;
        std::ofstream out(dir / "manifest.json", std::ios::binary);
        out << j.dump(2) << "\n";
        out.close();
        CHECK_THROWS_AS(load_dataset(dir.string()), FormatVersionMismatch);
    }
    SECTION("missing directory names the path") {
        fs::remove_all(dir);
        try {
            load_dataset(dir.string());
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find(dir.string()) != std::string::npos);
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("ninety ten split partitions the dataset") {
    const Dataset& ds = shared100();
    auto [train, test] = split_dataset(ds, 0.1, 99);
    CHECK(train.samples.size() == 90);
    CHECK(test.samples.size() == 10);
    CHECK(train.manifest.solved == 90);
    CHECK(test.manifest.solved == 10);

    // Every original sample appears exactly once across the two halves.
    std::vector<double> costs;
    for (const Sample& s : train.samples) costs.push_back(s.true_cost);
    for (const Sample& s : test.samples) costs.push_back(s.true_cost);
    std::vector<double> orig;
    for (const Sample& s : ds.samples) orig.push_back(s.true_cost);
    std::sort(costs.begin(), costs.end());
    std::sort(orig.begin(), orig.end());
    CHECK(costs == orig);

    auto [train2, test2] = split_dataset(ds, 0.1, 99);
    CHECK(datasets_equal(train, train2));
    CHECK(datasets_equal(test, test2));

    auto [train3, test3] = split_dataset(ds, 0.1, 100);
    bool same = datasets_equal(test, test3);
    CHECK_FALSE(same);
}

TEST_CASE("degenerate splits are rejected") {
    const Dataset& ds = shared100();
    CHECK_THROWS_AS(split_dataset(ds, -0.1, 1), Error);
    CHECK_THROWS_AS(split_dataset(ds, 1.5, 1), Error);

    Dataset tiny;
    tiny.manifest = ds.manifest;
    tiny.samples = {ds.samples[0]};
    tiny.manifest.solved = 1;
    CHECK_THROWS_AS(split_dataset(tiny, 0.1, 1), TooSmall);
}

TEST_CASE("stored labels are consistent with re-solves") {
    const Dataset& ds = shared100();
    const Network& base = case30();
    NetworkIndex idx(base);
    AdmittanceMatrix adm = build_admittance(base, idx);
    OpfOptions opts;
    int nb = idx.n_bus();
    int matches = 0, total = 0;
    for (const Sample& s : ds.samples) {
        Network inst = base;
        for (int i = 0; i < nb; ++i) {
            inst.buses[i].p_load = s.features[i];
            inst.buses[i].q_load = s.features[nb + i];
        }
        SetpointProfile sp = SetpointProfile::from_case(inst, idx);
        std::size_t gt = sp.p_gen.size();
        for (std::size_t k = 0; k < gt; ++k) {
            sp.p_gen[k] = s.targets[k];
            sp.v_gen[k] = s.targets[gt + k];
        }
        WarmStartHint hint =
            warm_start_from_active_set(inst, s.active_labels, sp);
        OpfSolution sol = solve_acopf(inst, idx, adm, opts, &hint);
        if (!sol.converged) continue;
        ++total;
        if (extract_active_set(inst, sol, opts.active_eps) == s.active_labels)
            ++matches;
    }
    REQUIRE(total >= 95);
    CHECK(double(matches) / total >= 0.99);
}
