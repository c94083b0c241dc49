// Release gate: one test case per acceptance criterion, each printing a
// single PASS/FAIL line plus the measured numbers it is judged on.
#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "acopf/admittance.hpp"
#include "acopf/datagen.hpp"
#include "acopf/experiments.hpp"
#include "acopf/grid.hpp"
#include "acopf/matpower.hpp"
#include "acopf/neural.hpp"
#include "acopf/opf.hpp"
#include "acopf/power_flow.hpp"

using namespace acopf;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string data_path(const std::string& name) {
    return std::string(ACOPF_DATA_DIR) + "/" + name;
}

const Network& case30() {
    static Network net = parse_matpower_file(data_path("case30.m"));
    return net;
}

const Network& case118() {
    static Network net = parse_matpower_file(data_path("case118.m"));
    return net;
}

struct Stopwatch {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(
                   std::chrono::steady_clock::now() - t0)
            .count();
    }
};

void announce(int k, const std::string& name, bool pass) {
    std::cout << "[acceptance] C" << k << " " << name << ": "
              << (pass ? "PASS" : "FAIL") << std::endl;
}

void note(int k, const std::string& text) {
    std::cout << "[acceptance] C" << k << " " << text << std::endl;
}

double power_imbalance(const Network& net, const NetworkIndex& idx,
                       const SetpointProfile& sp,
                       const PowerFlowSolution& sol) {
    double p = sol.p_slack;
    double q = 0.0;
    for (std::size_t g = 0; g < net.generators.size(); ++g) q += sol.q_gen[g];
    for (std::size_t k = 0; k < idx.non_slack_gens().size(); ++k)
        p += sp.p_gen[k];
    for (int i = 0; i < idx.n_bus(); ++i) {
        p -= sp.p_load[i];
        q -= sp.q_load[i];
        double v2 = sol.state.v_mag[i] * sol.state.v_mag[i];
        p -= v2 * net.buses[i].g_shunt;
        q += v2 * net.buses[i].b_shunt;
    }
    for (const auto& flow : sol.branch_flows) {
        p -= (flow.from_end + flow.to_end).real();
        q -= (flow.from_end + flow.to_end).imag();
    }
    return std::max(std::abs(p), std::abs(q));
}

// Shared corpus for criteria 4 and 6 through 8; generated once, timed.
struct Corpus {
    Dataset ds;
    double seconds = 0.0;
};

const Corpus& corpus() {
    static Corpus c = [] {
        SamplerConfig cfg;
        cfg.perturbation = 0.1;
        cfg.n_target = 5000;
        cfg.seed = 2024;
        Stopwatch sw;
        Corpus out;
        out.ds = generate_dataset(case30(), cfg);
        out.seconds = sw.seconds();
        return out;
    }();
    return c;
}

Generator make_gen(int bus, double p_max, double c1, double q_range = 2.0) {
    Generator g;
    g.bus_id = bus;
    g.p_min = 0.0;
    g.p_max = p_max;
    g.q_min = -q_range;
    g.q_max = q_range;
    g.v_setpoint = 1.0;
    g.cost.coefficients = {c1, 0.0};
    return g;
}

Network merit_order_pair() {
    Network net;
    net.name = "pair";
    Bus b1;
    b1.id = 1;
    b1.kind = BusKind::Slack;
    Bus b2;
    b2.id = 2;
    b2.kind = BusKind::PV;
    b2.p_load = 1.0;
    net.buses = {b1, b2};
    net.generators = {make_gen(1, 2.0, 50.0), make_gen(2, 0.4, 10.0)};
    Branch br;
    br.from_bus = 1;
    br.to_bus = 2;
    br.x = 0.1;
    net.branches = {br};
    return net;
}

Network triangle_case() {
    Network net;
    net.name = "triangle";
    for (int id : {1, 2, 3}) {
        Bus b;
        b.id = id;
        b.kind = id == 1 ? BusKind::Slack : (id == 2 ? BusKind::PV : BusKind::PQ);
        net.buses.push_back(b);
    }
    net.buses[2].p_load = 1.0;
    net.buses[2].q_load = 0.2;
    net.generators = {make_gen(1, 3.0, 50.0), make_gen(2, 3.0, 10.0)};
    auto mk = [](int f, int t, double r, double x, double rate) {
        Branch br;
        br.from_bus = f;
        br.to_bus = t;
        br.r = r;
        br.x = x;
        br.rate_mva = rate;
        return br;
    };
    net.branches = {mk(1, 2, 0.02, 0.10, 0.0), mk(1, 3, 0.03, 0.15, 0.0),
                    mk(2, 3, 0.02, 0.12, 60.0)};
    return net;
}

struct TriangleScan {
    double cost = 1e18;
    double p1 = 0.0, p2 = 0.0, v2 = 1.0;
    Eigen::VectorXd v_mag, v_ang;
    std::vector<double> q_gen;
};

TriangleScan scan_triangle(const Network& net) {
    NetworkIndex idx(net);
    AdmittanceMatrix adm = build_admittance(net, idx);
    SetpointProfile sp = SetpointProfile::from_case(net, idx);
    const Generator& g1 = net.generators[0];
    const Generator& g2 = net.generators[1];
    double cap = net.branches[2].rate_mva / net.base_mva;

    TriangleScan best;
    auto probe = [&](double p2, double v2, TriangleScan* out) {
        sp.p_gen[0] = p2;
        sp.v_gen[0] = v2;
        PowerFlowSolution pf = solve_newton(net, idx, adm, sp);
        if (!pf.converged) return false;
        double p1 = pf.p_slack;
        double tol = 1e-9;
        if (p1 < g1.p_min - tol || p1 > g1.p_max + tol) return false;
        if (pf.q_gen[0] < g1.q_min - tol || pf.q_gen[0] > g1.q_max + tol)
            return false;
        if (pf.q_gen[1] < g2.q_min - tol || pf.q_gen[1] > g2.q_max + tol)
            return false;
        for (int i = 0; i < idx.n_bus(); ++i) {
            const Bus& b = net.buses[i];
            if (pf.state.v_mag[i] < b.v_min - tol ||
                pf.state.v_mag[i] > b.v_max + tol)
                return false;
        }
        double s_from = std::abs(pf.branch_flows[2].from_end);
        double s_to = std::abs(pf.branch_flows[2].to_end);
        if (std::max(s_from, s_to) > cap + tol) return false;
        out->cost = g1.cost.eval(p1) + g2.cost.eval(p2);
        out->p1 = p1;
        out->p2 = p2;
        out->v2 = v2;
        out->v_mag = pf.state.v_mag;
        out->v_ang = pf.state.v_ang;
        out->q_gen = pf.q_gen;
        return true;
    };

    // Cost falls as the cheap unit picks up output, so for a fixed voltage
    // the optimum sits on the upper feasibility boundary in p2.
    auto boundary = [&](double v2, TriangleScan* out) {
        if (!probe(g2.p_min, v2, out)) return false;
        TriangleScan cand;
        if (probe(g2.p_max, v2, &cand)) {
            *out = cand;
            return true;
        }
        double lo = g2.p_min, hi = g2.p_max;
        while (hi - lo > 1e-11) {
            double mid = 0.5 * (lo + hi);
            if (probe(mid, v2, &cand)) {
                lo = mid;
                *out = cand;
            } else {
                hi = mid;
            }
        }
        return true;
    };

    double lo_v = net.buses[1].v_min, hi_v = net.buses[1].v_max;
    const int steps = 64;
    for (int round = 0; round < 5; ++round) {
        for (int j = 0; j <= steps; ++j) {
            TriangleScan cand;
            if (boundary(lo_v + (hi_v - lo_v) * j / steps, &cand) &&
                cand.cost < best.cost)
                best = cand;
        }
        double span_v = (hi_v - lo_v) / steps * 2.0;
        lo_v = std::max(net.buses[1].v_min, best.v2 - span_v);
        hi_v = std::min(net.buses[1].v_max, best.v2 + span_v);
    }
    return best;
}

ActiveSetVector bits_from_values(const Network& net, const std::vector<double>& p,
                                 const std::vector<double>& q,
                                 const Eigen::VectorXd& v, double tol) {
    NetworkIndex idx(net);
    int ng = idx.n_gen(), nb = idx.n_bus();
    ActiveSetVector as;
    as.bits.assign(2 * ng + 2 * nb, 0);
    auto near = [tol](double x, double lb, double ub) {
        return std::min(x - lb, ub - x) <= tol * std::max(1.0, ub - lb);
    };
    for (int g = 0; g < ng; ++g) {
        as.bits[g] = near(p[g], net.generators[g].p_min, net.generators[g].p_max);
        as.bits[ng + g] =
            near(q[g], net.generators[g].q_min, net.generators[g].q_max);
    }
    for (int i = 0; i < nb; ++i)
        as.bits[2 * ng + i] = near(v[i], net.buses[i].v_min, net.buses[i].v_max);
    return as;
}

Dataset first_n(const Dataset& ds, std::size_t n) {
    Dataset out;
    out.manifest = ds.manifest;
    out.samples.assign(ds.samples.begin(),
                       ds.samples.begin() + static_cast<long>(n));
    return out;
}

// Subprocess plumbing for the determinism criterion.

const fs::path& scratch_dir() {
    static fs::path dir = [] {
        fs::path p = fs::temp_directory_path() /
                     ("acopf-acceptance-" + std::to_string(::getpid()));
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    static int counter = 0;
    fs::path log = scratch_dir() / ("cli" + std::to_string(counter++) + ".log");
    std::string cmd = std::string(ACOPF_CLI_PATH) + " " + args + " >" +
                      log.string() + " 2>&1";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("C1 power-flow correctness") {
    bool pass = true;
    for (const Network* net : {&case30(), &case118()}) {
        NetworkIndex idx(*net);
        AdmittanceMatrix adm = build_admittance(*net, idx);
        SetpointProfile sp = SetpointProfile::from_case(*net, idx);
        Stopwatch sw;
        PowerFlowSolution sol = solve_newton(*net, idx, adm, sp);
        double sec = sw.seconds();
        double imbalance = power_imbalance(*net, idx, sp, sol);
        note(1, net->name + ": iters=" + std::to_string(sol.iterations) +
                    " mismatch=" + format_double(sol.max_mismatch) +
                    " imbalance=" + format_double(imbalance) +
                    " seconds=" + format_double(sec));
        pass = pass && sol.converged && sol.iterations <= 10 &&
               sol.max_mismatch <= 1e-8 && imbalance <= 1e-7 && sec < 1.0;
    }
    announce(1, "power-flow correctness", pass);
    CHECK(pass);
}

TEST_CASE("C2 acopf oracle equivalence") {
    Stopwatch sw;
    bool pass = true;

    Network pair = merit_order_pair();
    OpfSolution pair_sol = solve_acopf(pair);
    double hand_cost = 50.0 * 0.6 + 10.0 * 0.4;
    bool pair_ok = pair_sol.converged &&
                   std::abs(pair_sol.objective - hand_cost) / hand_cost < 1e-4 &&
                   extract_active_set(pair, pair_sol, 1e-5).to_string() ==
                       "01000000";
    pass = pass && pair_ok;

    Network tri = triangle_case();
    OpfSolution tri_sol = solve_acopf(tri);
    TriangleScan ref = scan_triangle(tri);
    bool tri_ok = tri_sol.converged && ref.cost < 1e17 &&
                  std::abs(tri_sol.objective - ref.cost) / ref.cost < 1e-4;
    if (tri_ok) {
        ActiveSetVector expected =
            bits_from_values(tri, {ref.p1, ref.p2}, ref.q_gen, ref.v_mag, 1e-3);
        tri_ok = extract_active_set(tri, tri_sol, 1e-5) == expected;
    }
    pass = pass && tri_ok;

    double sec = sw.seconds();
    note(2, std::string("pair_ok=") + (pair_ok ? "1" : "0") +
                " triangle_ok=" + (tri_ok ? "1" : "0") +
                " seconds=" + format_double(sec));
    pass = pass && sec < 10.0;
    announce(2, "acopf oracle equivalence", pass);
    CHECK(pass);
}

TEST_CASE("C3 solver feasibility property") {
    const Network& base = case30();
    NetworkIndex idx(base);
    AdmittanceMatrix adm = build_admittance(base, idx);
    Rng rng(77);
    int converged = 0, legal = 0, attempts = 0;
    while (converged < 100 && attempts < 160) {
        ++attempts;
        Network inst = sample_load(base, 0.1, rng);
        OpfSolution sol = solve_acopf(inst, idx, adm, {});
        if (!sol.converged) continue;
        ++converged;
        LegalityReport rep = check_legality(
            inst, idx, adm, setpoints_from_solution(inst, idx, sol), 1e-6);
        if (rep.legal) ++legal;
    }
    note(3, "converged=" + std::to_string(converged) +
                " legal=" + std::to_string(legal) +
                " attempts=" + std::to_string(attempts));
    bool pass = converged == 100 && legal == 100;
    announce(3, "solver feasibility property", pass);
    CHECK(pass);
}

TEST_CASE("C4 dataset generation") {
    const Corpus& c = corpus();
    double rate = c.ds.manifest.convergence_rate;
    note(4, "solved=" + std::to_string(c.ds.manifest.solved) + "/" +
                std::to_string(c.ds.manifest.n_target) +
                " attempts=" + std::to_string(c.ds.manifest.attempts) +
                " convergence_rate=" + format_double(rate) +
                " seconds=" + format_double(c.seconds));
    bool pass = c.ds.manifest.solved == 5000 && rate >= 0.60 && rate <= 1.00 &&
                c.seconds < 7200.0;
    announce(4, "dataset generation", pass);
    CHECK(pass);
}

// Central differences are invalid within a step of a relu or hinge kink, so
// draws landing a pre-activation or prediction inside that band are replaced
// by a fresh seed.
static bool fd_safe(const nn::MlpModel& m, const Eigen::MatrixXd& x,
                    nn::LossKind kind, const nn::BoundsSpec& bounds) {
    const double margin = 1e-3;
    nn::detail::ForwardCache cache;
    Eigen::MatrixXd z = nn::detail::forward_std(m, x, &cache);
    if (m.config.activation == nn::Activation::ReLU)
        for (std::size_t k = 0; k + 1 < cache.zs.size(); ++k)
            if (cache.zs[k].cwiseAbs().minCoeff() < margin) return false;
    if (kind == nn::LossKind::MsePenalty)
        for (int c = 0; c < z.cols(); ++c)
            for (int r = 0; r < z.rows(); ++r)
                if (std::abs(z(r, c) - bounds.lower[c]) < margin ||
                    std::abs(z(r, c) - bounds.upper[c]) < margin)
                    return false;
    return true;
}

TEST_CASE("C5 gradient fidelity") {
    Stopwatch sw;
    double worst = 0.0;
    const double h = 1e-5;
    for (int instance = 0; instance < 20; ++instance) {
        int combo = instance % 12;
        nn::LossKind kind =
            combo < 6 ? nn::LossKind::MsePenalty : nn::LossKind::Bce;
        nn::Activation act = (combo % 6) < 3 ? nn::Activation::ReLU
                                             : nn::Activation::Tanh;
        int depth = combo % 3 + 1;

        nn::MlpConfig mc;
        mc.input_dim = 4;
        mc.hidden_layers.assign(depth, 6);
        mc.output_dim = 3;
        mc.activation = act;
        mc.output_head = kind == nn::LossKind::Bce ? nn::OutputHead::Sigmoid
                                                   : nn::OutputHead::Linear;
        nn::MlpModel model;
        Eigen::MatrixXd x(5, 4), y(5, 3);
        nn::BoundsSpec bounds;
        double lambda = 0.0;
        for (int seed = 300 + instance;; seed += 977) {
            model = nn::init_model(mc, seed);
            Rng rng(900 + seed);
            for (int r = 0; r < 5; ++r)
                for (int c = 0; c < 4; ++c) x(r, c) = rng.uniform(-1.0, 1.0);
            if (kind == nn::LossKind::Bce) {
                for (int r = 0; r < 5; ++r)
                    for (int c = 0; c < 3; ++c)
                        y(r, c) = rng.uniform01() < 0.5 ? 0.0 : 1.0;
            } else {
                for (int r = 0; r < 5; ++r)
                    for (int c = 0; c < 3; ++c) y(r, c) = rng.uniform(-1.0, 1.0);
                bounds.lower.assign(3, -0.4);
                bounds.upper.assign(3, 0.4);
                lambda = 7.0;
            }
            if (fd_safe(model, x, kind, bounds)) break;
        }
        auto loss_of = [&](const nn::MlpModel& m) {
            Eigen::MatrixXd z = nn::detail::forward_std(m, x);
            if (kind == nn::LossKind::Bce)
                return nn::loss_bce(nn::detail::sigmoid(z), y).loss;
            return nn::loss_mse_penalty(z, y, bounds, lambda).loss;
        };

        nn::detail::ForwardCache cache;
        Eigen::MatrixXd z = nn::detail::forward_std(model, x, &cache);
        nn::LossValue lv = kind == nn::LossKind::Bce
                               ? nn::loss_bce(nn::detail::sigmoid(z), y)
                               : nn::loss_mse_penalty(z, y, bounds, lambda);
        nn::Gradients g = nn::backward(model, cache, lv.grad);

        for (int k = 0; k < model.n_layers(); ++k) {
            for (int r = 0; r < model.weights[k].rows(); ++r)
                for (int c = 0; c < model.weights[k].cols(); ++c) {
                    nn::MlpModel mp = model, mm = model;
                    mp.weights[k](r, c) += h;
                    mm.weights[k](r, c) -= h;
                    double fd = (loss_of(mp) - loss_of(mm)) / (2 * h);
                    worst = std::max(worst, std::abs(fd - g.dw[k](r, c)) /
                                                std::max(1.0, std::abs(fd)));
                }
            for (int r = 0; r < model.biases[k].size(); ++r) {
                nn::MlpModel mp = model, mm = model;
                mp.biases[k](r) += h;
                mm.biases[k](r) -= h;
                double fd = (loss_of(mp) - loss_of(mm)) / (2 * h);
                worst = std::max(worst, std::abs(fd - g.db[k](r)) /
                                            std::max(1.0, std::abs(fd)));
            }
        }
    }
    double sec = sw.seconds();
    note(5, "worst_rel_error=" + format_double(worst) +
                " seconds=" + format_double(sec));
    bool pass = worst <= 1e-4 && sec < 60.0;
    announce(5, "gradient fidelity", pass);
    CHECK(pass);
}

TEST_CASE("C6 constraint prediction") {
    GridSearchSpace space;
    space.hidden_layer_options = {{256}};
    space.activation_options = {nn::Activation::ReLU, nn::Activation::Tanh};
    space.penalty_options = {false};
    space.base.max_epochs = 500;

    Stopwatch sw;
    ConstraintReport rep = run_constraint_prediction(corpus().ds, space);
    double sec = sw.seconds();
    note(6, "best=" + rep.best_config_id +
                " accuracy=" + format_double(rep.elementwise_accuracy) +
                " seconds=" + format_double(sec));
    bool pass = rep.best_index >= 0 && rep.elementwise_accuracy >= 0.95 &&
                sec < 3600.0;
    announce(6, "constraint prediction", pass);
    CHECK(pass);
}

TEST_CASE("C7 end-to-end prediction") {
    GridSearchSpace space;
    space.hidden_layer_options = {{256}, {256, 256}};
    space.activation_options = {nn::Activation::ReLU, nn::Activation::Tanh};
    space.penalty_options = {true, false};
    space.base.max_epochs = 600;

    Stopwatch sw;
    EndToEndReport rep = run_end_to_end(corpus().ds, case30(), space);
    double sec = sw.seconds();
    note(7, "best=" + rep.best_config_id +
                " legality_rate=" + format_double(rep.legality_rate) +
                " avg_cost_deviation=" + format_double(rep.avg_cost_deviation) +
                " seconds=" + format_double(sec));
    bool pass = rep.best_index >= 0 && rep.legality_rate >= 0.30 &&
                std::isfinite(rep.avg_cost_deviation) &&
                rep.avg_cost_deviation <= 0.01 && sec < 7200.0;
    announce(7, "end-to-end prediction", pass);
    CHECK(pass);
}

TEST_CASE("C8 warm-start with oracle active sets") {
    auto [train, held_out] = split_dataset(corpus().ds, 0.1, 99);
    Dataset sub = first_n(held_out, 100);
    WarmStartReport rep = run_warm_start_benchmark(sub, case30(), nullptr);
    int regressions = 0;
    for (const WarmStartInstance& inst : rep.instances)
        regressions += inst.regression ? 1 : 0;
    note(8, "paired=" + std::to_string(rep.paired) +
                " fraction_improved=" + format_double(rep.fraction_improved) +
                " mean_iteration_ratio=" +
                format_double(rep.mean_iteration_ratio) +
                " regressions=" + std::to_string(regressions));
    bool pass = rep.paired == 100 && rep.fraction_improved >= 0.70 &&
                regressions == 0;
    announce(8, "warm-start with oracle active sets", pass);
    CHECK(pass);
}

TEST_CASE("C9 determinism") {
    bool pass = true;
    std::vector<fs::path> runs;
    for (const char* tag : {"a", "b"}) {
        fs::path root = scratch_dir() / (std::string("det-") + tag);
        fs::create_directories(root);
        json cfg;
        cfg["version"] = 1;
        cfg["case"] = data_path("case30.m");
        cfg["perturbation"] = 0.1;
        cfg["n_target"] = 25;
        cfg["seed"] = 123;
        cfg["dataset"] = (root / "ds").string();
        cfg["out"] = (root / "out").string();
        cfg["grid"] = {{"hidden", json::array({json::array({16})})},
                       {"activations", json::array({"relu"})},
                       {"penalty", json::array({false})}};
        cfg["seeds"] = json::array({1});
        cfg["train"] = {{"max_epochs", 40}, {"batch_size", 16}};
        fs::path cfg_path = root / "config.json";
        std::ofstream(cfg_path) << cfg.dump(2);

        std::string base = " --config " + cfg_path.string() + " --threads 1";
        pass = pass && run_cli("generate" + base) == 0;
        pass = pass && run_cli("train" + base + " --task e2e") == 0;
        pass = pass && run_cli("train" + base + " --task constraints") == 0;
        pass = pass &&
               run_cli("bench-warmstart" + base + " --oracle-labels --limit 5") ==
                   0;
        runs.push_back(root);
    }
    REQUIRE(runs.size() == 2);
    int compared = 0;
    if (pass) {
        for (const char* rel :
             {"ds/manifest.json", "ds/samples.csv",
              "out/report-case30-e2e-seeds1.json",
              "out/report-case30-e2e-seeds1.csv",
              "out/model-case30-e2e-best.json",
              "out/report-case30-constraints-seeds1.json",
              "out/report-case30-constraints-seeds1.csv",
              "out/model-case30-constraints-best.json",
              "out/report-case30-warmstart-seed123.json",
              "out/report-case30-warmstart-seed123.csv"}) {
            ++compared;
            fs::path a = runs[0] / rel, b = runs[1] / rel;
            bool same = fs::exists(a) && fs::exists(b) && slurp(a) == slurp(b);
            if (!same) note(9, std::string("mismatch: ") + rel);
            pass = pass && same;
        }
    }
    note(9, "files_compared=" + std::to_string(compared));
    announce(9, "determinism", pass);
    CHECK(pass);
}

TEST_CASE("C10 parser round-trip") {
    bool pass = true;
    for (const char* name : {"case30.m", "case118.m"}) {
        Network first = parse_matpower_file(data_path(name));
        Network second =
            parse_matpower_case(serialize_case(first), std::string(name));
        bool same = networks_equal(first, second, 0.0);
        note(10, std::string(name) + std::string(" identical=") +
                     (same ? "1" : "0"));
        pass = pass && same;
    }
    announce(10, "parser round-trip", pass);
    CHECK(pass);
}
