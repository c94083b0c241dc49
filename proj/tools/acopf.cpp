// Command-line entry point for the ACOPF learning pipeline: case validation,
// PF/OPF solves, dataset generation, model training, warm-start benchmarking,
// and report summarization. Logging goes to stderr; data goes to stdout or
// files. Exit codes: 0 success, 1 domain failure, 2 usage/config error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "acopf/common.hpp"
#include "acopf/datagen.hpp"
#include "acopf/experiments.hpp"
#include "acopf/grid.hpp"
#include "acopf/matpower.hpp"
#include "acopf/neural.hpp"
#include "acopf/opf.hpp"
#include "acopf/power_flow.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct GlobalFlags {
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 1;
    std::string out;
    bool out_set = false;
};

struct CliConfig {
    std::string case_path;
    std::string dataset_dir = "dataset";
    std::string out_dir = "out";
    acopf::SamplerConfig sampler;
    acopf::OpfOptions opf;
    acopf::GridSearchSpace space;
};

double get_or(const json& j, const char* key, double fallback) {
    return j.contains(key) ? j[key].get<double>() : fallback;
}

CliConfig load_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw acopf::IoError("cannot open config file " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw acopf::IoError("bad config JSON in " + path + ": " + e.what());
    }
    if (!j.contains("version") || j["version"] != 1)
        throw acopf::FormatVersionMismatch(
            "config " + path + " must declare \"version\": 1");
    CliConfig cfg;
    if (!j.contains("case"))
        throw acopf::IoError("config " + path + " must name a \"case\" file");
    cfg.case_path = j["case"].get<std::string>();
    if (!fs::exists(cfg.case_path))
        throw acopf::IoError("case file does not exist: " + cfg.case_path);
    cfg.dataset_dir = j.value("dataset", cfg.dataset_dir);
    cfg.out_dir = j.value("out", cfg.out_dir);

    cfg.sampler.perturbation = get_or(j, "perturbation", 0.1);
    cfg.sampler.n_target = j.value("n_target", 100);
    cfg.sampler.seed = j.value("seed", std::uint64_t(1));
    cfg.sampler.max_attempts = j.value("max_attempts", 0L);

    if (j.contains("opf")) {
        const json& o = j["opf"];
        cfg.opf.kkt_tol = get_or(o, "kkt_tol", cfg.opf.kkt_tol);
        cfg.opf.max_iter = o.value("max_iter", cfg.opf.max_iter);
        cfg.opf.barrier_reduction =
            get_or(o, "barrier_reduction", cfg.opf.barrier_reduction);
        cfg.opf.step_fraction =
            get_or(o, "step_fraction", cfg.opf.step_fraction);
        cfg.opf.active_eps = get_or(o, "active_eps", cfg.opf.active_eps);
    }

    acopf::nn::TrainConfig& tb = cfg.space.base;
    if (j.contains("train")) {
        const json& t = j["train"];
        tb.learning_rate = get_or(t, "learning_rate", tb.learning_rate);
        tb.max_epochs = t.value("max_epochs", tb.max_epochs);
        tb.batch_size = t.value("batch_size", tb.batch_size);
        tb.penalty_weight = get_or(t, "penalty_weight", tb.penalty_weight);
        tb.early_stop.window = t.value("early_stop_window",
                                       tb.early_stop.window);
        tb.early_stop.min_rel_improvement =
            get_or(t, "min_rel_improvement",
                   tb.early_stop.min_rel_improvement);
    }
    tb.seed = cfg.sampler.seed;

    cfg.space.hidden_layer_options = {{128}, {256}, {512},
                                      {128, 128}, {256, 256}, {512, 512}};
    cfg.space.activation_options = {acopf::nn::Activation::ReLU,
                                    acopf::nn::Activation::Tanh};
    cfg.space.penalty_options = {true, false};
    if (j.contains("grid")) {
        const json& g = j["grid"];
        if (g.contains("hidden"))
            cfg.space.hidden_layer_options =
                g["hidden"].get<std::vector<std::vector<int>>>();
        if (g.contains("activations")) {
            cfg.space.activation_options.clear();
            for (const auto& a : g["activations"]) {
                std::string name = a.get<std::string>();
                if (name == "relu")
                    cfg.space.activation_options.push_back(
                        acopf::nn::Activation::ReLU);
                else if (name == "tanh")
                    cfg.space.activation_options.push_back(
                        acopf::nn::Activation::Tanh);
                else
                    throw acopf::IoError("unknown activation \"" + name +
                                         "\" in " + path);
            }
        }
        if (g.contains("penalty"))
            cfg.space.penalty_options = g["penalty"].get<std::vector<bool>>();
    }
    if (j.contains("seeds"))
        cfg.space.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    cfg.space.legality_tol_rel =
        get_or(j, "legality_tol_rel", cfg.space.legality_tol_rel);
    return cfg;
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw acopf::IoError("cannot write " + path.string());
    f << text;
    if (!f.good()) throw acopf::IoError("write failure for " + path.string());
}

std::string seeds_tag(const std::vector<std::uint64_t>& seeds) {
    std::string tag;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (i) tag += "-";
        tag += std::to_string(seeds[i]);
    }
    return tag;
}

json pf_solution_json(const acopf::Network& net,
                      const acopf::PowerFlowSolution& sol) {
    json j;
    j["mode"] = "pf";
    j["converged"] = sol.converged;
    j["iterations"] = sol.iterations;
    j["max_mismatch"] = sol.max_mismatch;
    j["v_mag"] = std::vector<double>(sol.state.v_mag.begin(),
                                     sol.state.v_mag.end());
    j["v_ang"] = std::vector<double>(sol.state.v_ang.begin(),
                                     sol.state.v_ang.end());
    j["q_gen"] = sol.q_gen;
    j["p_slack"] = sol.p_slack;
    j["base_mva"] = net.base_mva;
    return j;
}

json opf_solution_json(const acopf::Network& net, const acopf::OpfSolution& sol,
                       const acopf::OpfOptions& opts) {
    json j;
    j["mode"] = "opf";
    j["converged"] = sol.converged;
    j["iterations"] = sol.iterations;
    j["kkt_residual"] = sol.kkt_residual;
    j["objective"] = sol.objective;
    j["v_mag"] = std::vector<double>(sol.state.v_mag.begin(),
                                     sol.state.v_mag.end());
    j["v_ang"] = std::vector<double>(sol.state.v_ang.begin(),
                                     sol.state.v_ang.end());
    j["p_gen"] = sol.p_gen;
    j["q_gen"] = sol.q_gen;
    j["base_mva"] = net.base_mva;
    if (sol.converged)
        j["active_set"] =
            acopf::extract_active_set(net, sol, opts.active_eps).to_string();
    return j;
}

int cmd_validate(const std::string& case_path) {
    acopf::Network net = acopf::parse_matpower_file(case_path);
    std::cerr << "[info] " << case_path << ": ok\n";
    json j;
    j["case"] = net.name;
    j["buses"] = net.buses.size();
    j["generators"] = net.generators.size();
    j["branches"] = net.branches.size();
    j["base_mva"] = net.base_mva;
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_solve(const std::string& case_path, const std::string& mode,
              const acopf::OpfOptions& opf_opts,
              const acopf::PowerFlowOptions& pf_opts) {
    acopf::Network net = acopf::parse_matpower_file(case_path);
    if (mode == "pf") {
        acopf::NetworkIndex idx(net);
        acopf::AdmittanceMatrix adm = acopf::build_admittance(net, idx);
        acopf::SetpointProfile sp = acopf::SetpointProfile::from_case(net, idx);
        acopf::PowerFlowSolution sol =
            acopf::solve_newton(net, idx, adm, sp, pf_opts);
        std::cout << pf_solution_json(net, sol).dump(2) << "\n";
        if (!sol.converged) {
            std::cerr << "[error] power flow diverged after " << sol.iterations
                      << " iterations, mismatch " << sol.max_mismatch << "\n";
            return 1;
        }
        return 0;
    }
    acopf::OpfSolution sol = acopf::solve_acopf(net, opf_opts);
    std::cout << opf_solution_json(net, sol, opf_opts).dump(2) << "\n";
    if (!sol.converged) {
        std::cerr << "[error] interior point did not converge: residual "
                  << sol.kkt_residual << " after " << sol.iterations
                  << " iterations\n";
        return 1;
    }
    return 0;
}

int cmd_generate(const CliConfig& cfg, const GlobalFlags& flags) {
    acopf::Network net = acopf::parse_matpower_file(cfg.case_path);
    acopf::SamplerConfig sampler = cfg.sampler;
    if (flags.seed_set) sampler.seed = flags.seed;
    std::string dir = flags.out_set ? flags.out : cfg.dataset_dir;
    std::cerr << "[info] generating " << sampler.n_target << " samples from "
              << net.name << " at delta=" << sampler.perturbation
              << " seed=" << sampler.seed << " threads=" << flags.threads
              << "\n";
    acopf::Dataset ds =
        acopf::generate_dataset(net, sampler, cfg.opf, flags.threads);
    acopf::save_dataset(ds, dir);
    json summary;
    summary["dataset"] = dir;
    summary["attempts"] = ds.manifest.attempts;
    summary["solved"] = ds.manifest.solved;
    summary["convergence_rate"] = ds.manifest.convergence_rate;
    std::cout << summary.dump(2) << "\n";
    if (ds.manifest.solved < ds.manifest.n_target) {
        std::cerr << "[error] exhausted " << ds.manifest.attempts
                  << " attempts with only " << ds.manifest.solved << "/"
                  << ds.manifest.n_target << " solved; partial dataset kept\n";
        return 1;
    }
    return 0;
}

int cmd_train(const CliConfig& cfg, const GlobalFlags& flags,
              const std::string& task) {
    acopf::Network net = acopf::parse_matpower_file(cfg.case_path);
    acopf::Dataset ds = acopf::load_dataset(cfg.dataset_dir);
    acopf::GridSearchSpace space = cfg.space;
    if (flags.seed_set) space.base.seed = flags.seed;
    std::string out = flags.out_set ? flags.out : cfg.out_dir;
    fs::create_directories(out);
    std::string tag = net.name + "-" + task + "-seeds" + seeds_tag(space.seeds);

    if (task == "e2e") {
        acopf::EndToEndReport rep = acopf::run_end_to_end(ds, net, space);
        write_text_file(fs::path(out) / ("report-" + tag + ".json"),
                        acopf::report_to_json(rep).dump(2) + "\n");
        write_text_file(fs::path(out) / ("report-" + tag + ".csv"),
                        acopf::report_to_csv(rep));
        if (rep.best_index < 0) {
            std::cerr << "[error] every configuration failed\n";
            return 1;
        }
        acopf::nn::save_model(
            rep.best_model,
            (fs::path(out) / ("model-" + net.name + "-e2e-best.json"))
                .string());
        std::cerr << "[info] best config " << rep.best_config_id
                  << " legality=" << rep.legality_rate
                  << " cost_deviation=" << rep.avg_cost_deviation << "\n";
        return 0;
    }
    acopf::ConstraintReport rep = acopf::run_constraint_prediction(ds, space);
    write_text_file(fs::path(out) / ("report-" + tag + ".json"),
                    acopf::report_to_json(rep).dump(2) + "\n");
    write_text_file(fs::path(out) / ("report-" + tag + ".csv"),
                    acopf::report_to_csv(rep));
    if (rep.best_index < 0) {
        std::cerr << "[error] every configuration failed\n";
        return 1;
    }
    acopf::nn::save_model(
        rep.best_model,
        (fs::path(out) / ("model-" + net.name + "-constraints-best.json"))
            .string());
    std::cerr << "[info] best config " << rep.best_config_id
              << " accuracy=" << rep.elementwise_accuracy << "\n";
    return 0;
}

int cmd_bench_warmstart(const CliConfig& cfg, const GlobalFlags& flags,
                        const std::string& model_path, bool oracle_labels,
                        long limit) {
    acopf::Network net = acopf::parse_matpower_file(cfg.case_path);
    acopf::Dataset ds = acopf::load_dataset(cfg.dataset_dir);
    if (limit > 0 && static_cast<std::size_t>(limit) < ds.samples.size())
        ds.samples.resize(static_cast<std::size_t>(limit));
    acopf::nn::MlpModel model;
    const acopf::nn::MlpModel* model_ptr = nullptr;
    if (!oracle_labels) {
        model = acopf::nn::load_model(model_path);
        model_ptr = &model;
    }
    acopf::WarmStartReport rep =
        acopf::run_warm_start_benchmark(ds, net, model_ptr, cfg.opf);
    std::string out = flags.out_set ? flags.out : cfg.out_dir;
    fs::create_directories(out);
    std::string tag = net.name + "-warmstart-seed" +
                      std::to_string(cfg.sampler.seed);
    write_text_file(fs::path(out) / ("report-" + tag + ".json"),
                    acopf::report_to_json(rep).dump(2) + "\n");
    write_text_file(fs::path(out) / ("report-" + tag + ".csv"),
                    acopf::report_to_csv(rep));
    double cold_s = 0, warm_s = 0;
    for (const acopf::WarmStartInstance& inst : rep.instances) {
        cold_s += inst.cold_seconds;
        warm_s += inst.warm_seconds;
    }
    std::cerr << "[info] paired=" << rep.paired << " errors=" << rep.errors
              << " fraction_improved=" << rep.fraction_improved
              << " mean_iteration_ratio=" << rep.mean_iteration_ratio
              << " cold_wall_s=" << cold_s << " warm_wall_s=" << warm_s << "\n";
    if (rep.paired == 0) {
        std::cerr << "[error] no instance pairs completed\n";
        return 1;
    }
    return 0;
}

int cmd_report(const std::string& report_path, const std::string& csv_out) {
    std::ifstream f(report_path, std::ios::binary);
    if (!f) throw acopf::IoError("cannot open report " + report_path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw acopf::IoError("bad report JSON in " + report_path + ": " +
                             e.what());
    }
    std::string task = j.value("task", std::string("unknown"));
    std::cout << "task: " << task << "\n";
    if (j.contains("case"))
        std::cout << "case: " << j["case"].get<std::string>() << "\n";
    if (j.contains("best_config"))
        std::cout << "best config: " << j["best_config"].get<std::string>()
                  << "\n";
    for (const char* key : {"legality_rate", "avg_cost_deviation",
                            "elementwise_accuracy", "fraction_improved",
                            "mean_iteration_ratio"})
        if (j.contains(key))
            std::cout << key << ": " << j[key].dump() << "\n";
    if (j.contains("table"))
        std::cout << "configurations: " << j["table"].size() << "\n";
    if (j.contains("instances"))
        std::cout << "instances: " << j["instances"].size() << "\n";
    if (!csv_out.empty()) {
        std::string csv = "key,value\n";
        for (const char* key : {"legality_rate", "avg_cost_deviation",
                                "elementwise_accuracy", "fraction_improved",
                                "mean_iteration_ratio"})
            if (j.contains(key)) csv += std::string(key) + "," + j[key].dump() + "\n";
        write_text_file(csv_out, csv);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AC optimal power flow learning pipeline"};
    app.require_subcommand(1);
    // Global flags may trail the subcommand name.
    app.fallthrough();

    GlobalFlags flags;
    app.add_option("--seed", flags.seed, "Master seed override")
        ->each([&flags](const std::string&) { flags.seed_set = true; });
    app.add_option("--threads", flags.threads, "Worker threads")
        ->check(CLI::PositiveNumber);
    app.add_option("--out", flags.out, "Output directory/file override")
        ->each([&flags](const std::string&) { flags.out_set = true; });

    std::string case_path, config_path, mode = "pf", task = "e2e";
    std::string model_path, report_path, csv_out;
    bool oracle_labels = false;
    long limit = 0;
    acopf::OpfOptions opf_opts;
    acopf::PowerFlowOptions pf_opts;

    CLI::App* validate = app.add_subcommand("validate", "Parse and check a case");
    validate->add_option("case", case_path, "MATPOWER case file")->required();

    CLI::App* solve = app.add_subcommand("solve", "Run a PF or OPF solve");
    solve->add_option("case", case_path, "MATPOWER case file")->required();
    solve->add_option("--mode", mode, "pf or opf")
        ->check(CLI::IsMember({"pf", "opf"}));
    solve->add_option("--tol", pf_opts.tol, "PF mismatch tolerance");
    solve->add_option("--pf-max-iter", pf_opts.max_iter, "PF iteration cap");
    solve->add_option("--kkt-tol", opf_opts.kkt_tol, "OPF KKT tolerance");
    solve->add_option("--max-iter", opf_opts.max_iter, "OPF iteration cap");

    CLI::App* generate = app.add_subcommand("generate", "Generate a dataset");
    generate->add_option("--config", config_path, "Experiment config JSON")
        ->required();

    CLI::App* train = app.add_subcommand("train", "Grid-search training");
    train->add_option("--config", config_path, "Experiment config JSON")
        ->required();
    train->add_option("--task", task, "e2e or constraints")
        ->check(CLI::IsMember({"e2e", "constraints"}));

    CLI::App* bench = app.add_subcommand("bench-warmstart",
                                         "Paired cold/warm benchmark");
    bench->add_option("--config", config_path, "Experiment config JSON")
        ->required();
    bench->add_option("--model", model_path, "Trained constraint model JSON");
    bench->add_flag("--oracle-labels", oracle_labels,
                    "Use stored labels instead of model predictions");
    bench->add_option("--limit", limit, "Use only the first N samples");

    CLI::App* report = app.add_subcommand("report", "Summarize a report JSON");
    report->add_option("report", report_path, "Report JSON file")->required();
    report->add_option("--csv", csv_out, "Also write a summary CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "[usage] " << e.what() << "\n";
        std::cerr << app.help();
        return 2;
    }

    try {
        if (app.got_subcommand(validate)) return cmd_validate(case_path);
        if (app.got_subcommand(solve))
            return cmd_solve(case_path, mode, opf_opts, pf_opts);
        if (app.got_subcommand(generate))
            return cmd_generate(load_config(config_path), flags);
        if (app.got_subcommand(train))
            return cmd_train(load_config(config_path), flags, task);
        if (app.got_subcommand(bench)) {
            if (!oracle_labels && model_path.empty()) {
                std::cerr << "[usage] bench-warmstart needs --model or "
                             "--oracle-labels\n";
                return 2;
            }
            return cmd_bench_warmstart(load_config(config_path), flags,
                                       model_path, oracle_labels, limit);
        }
        if (app.got_subcommand(report)) return cmd_report(report_path, csv_out);
    } catch (const acopf::IoError& e) {
        std::cerr << "[error] " << e.what() << "\n";
        return 2;
    } catch (const acopf::FormatVersionMismatch& e) {
        std::cerr << "[error] " << e.what() << "\n";
        return 2;
    } catch (const acopf::Error& e) {
        std::cerr << "[error] " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "[error] " << e.what() << "\n";
        return 1;
    }
    return 2;
}
