// Experiment drivers: end-to-end setpoint regression, active-constraint
// classification, and the paired cold/warm interior-point benchmark, plus the
// evaluation metrics and grid search shared by all three.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "acopf/common.hpp"
#include "acopf/datagen.hpp"
#include "acopf/grid.hpp"
#include "acopf/neural.hpp"
#include "acopf/opf.hpp"
#include "acopf/power_flow.hpp"

namespace acopf {

inline double metric_legality_rate(const std::vector<LegalityReport>& reports) {
    if (reports.empty()) throw EmptyInput("legality rate of zero grids");
    std::size_t legal = 0;
    for (const LegalityReport& r : reports) legal += r.legal ? 1 : 0;
    return static_cast<double>(legal) / static_cast<double>(reports.size());
}

inline double metric_cost_deviation(const std::vector<double>& pred_costs,
                                    const std::vector<double>& true_costs) {
    if (pred_costs.size() != true_costs.size())
        throw ShapeMismatch("cost deviation: length mismatch");
    if (pred_costs.empty()) throw EmptyInput("cost deviation of zero grids");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred_costs.size(); ++i) {
        if (true_costs[i] <= 0.0)
            throw NonPositiveTrueCost("true cost must be positive");
        sum += std::abs(1.0 - pred_costs[i] / true_costs[i]);
    }
    return sum / static_cast<double>(pred_costs.size());
}

inline double metric_elementwise_accuracy(const Eigen::MatrixXd& pred,
                                          const Eigen::MatrixXd& labels) {
    if (pred.rows() != labels.rows() || pred.cols() != labels.cols())
        throw ShapeMismatch("elementwise accuracy: shape mismatch");
    if (pred.size() == 0) throw EmptyInput("elementwise accuracy of nothing");
    long match = 0;
    for (Eigen::Index r = 0; r < pred.rows(); ++r)
        for (Eigen::Index c = 0; c < pred.cols(); ++c)
            match += (pred(r, c) > 0.5) == (labels(r, c) > 0.5) ? 1 : 0;
    return static_cast<double>(match) / static_cast<double>(pred.size());
}

struct GridSearchSpace {
    std::vector<std::vector<int>> hidden_layer_options;
    std::vector<nn::Activation> activation_options;
    std::vector<bool> penalty_options;  // lambda on/off (regression only)
    nn::TrainConfig base;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    double legality_tol_rel = 1e-4;
    double val_fraction = 0.1;  // carved from the train split for early stop

    std::size_t size() const {
        return hidden_layer_options.size() * activation_options.size() *
               penalty_options.size();
    }
    void check() const {
        if (size() == 0 || seeds.empty())
            throw EmptyInput("empty grid-search space");
    }
};

struct ConfigResult {
    std::string config_id;
    std::vector<int> hidden;
    nn::Activation activation = nn::Activation::ReLU;
    bool penalty = false;
    std::vector<double> legality_per_seed, cost_dev_per_seed, accuracy_per_seed;
    double mean_legality = std::numeric_limits<double>::quiet_NaN();
    double mean_cost_deviation = std::numeric_limits<double>::quiet_NaN();
    double mean_accuracy = std::numeric_limits<double>::quiet_NaN();
    std::string error;
};

struct EndToEndReport {
    std::string case_name;
    std::vector<std::uint64_t> seeds;
    double legality_rate = 0.0;
    double avg_cost_deviation = std::numeric_limits<double>::quiet_NaN();
    std::vector<ConfigResult> table;
    int best_index = -1;
    std::string best_config_id;
    nn::MlpModel best_model;  // first-seed model of the best configuration
};

struct ConstraintReport {
    std::string case_name;
    std::vector<std::uint64_t> seeds;
    double elementwise_accuracy = 0.0;
    std::vector<double> per_constraint_accuracy;
    std::vector<ConfigResult> table;
    int best_index = -1;
    std::string best_config_id;
    nn::MlpModel best_model;
};

struct WarmStartInstance {
    int index = -1;
    int cold_iters = 0, warm_iters = 0;
    double cold_objective = 0.0, warm_objective = 0.0;
    double cold_seconds = 0.0, warm_seconds = 0.0;
    bool paired = false;
    bool improved = false;
    bool regression = false;
    std::string error;
};

struct WarmStartReport {
    std::string case_name;
    std::vector<WarmStartInstance> instances;
    int paired = 0;
    int errors = 0;
    double fraction_improved = std::numeric_limits<double>::quiet_NaN();
    double mean_iteration_ratio = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline std::string activation_name(nn::Activation a) {
    return a == nn::Activation::ReLU ? "relu" : "tanh";
}

inline std::string config_id(const std::vector<int>& hidden, nn::Activation act,
                             bool penalty) {
    std::string id = "h";
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        if (i) id += "x";
        id += std::to_string(hidden[i]);
    }
    id += "-" + activation_name(act) + "-pen" + (penalty ? "1" : "0");
    return id;
}

inline Eigen::MatrixXd feature_matrix(const Dataset& ds) {
    const Eigen::Index n = static_cast<Eigen::Index>(ds.samples.size());
    Eigen::MatrixXd x(n, ds.manifest.feature_dim);
    for (Eigen::Index r = 0; r < n; ++r)
        for (int c = 0; c < ds.manifest.feature_dim; ++c)
            x(r, c) = ds.samples[r].features[c];
    return x;
}

inline Eigen::MatrixXd target_matrix(const Dataset& ds) {
    const Eigen::Index n = static_cast<Eigen::Index>(ds.samples.size());
    Eigen::MatrixXd y(n, ds.manifest.target_dim);
    for (Eigen::Index r = 0; r < n; ++r)
        for (int c = 0; c < ds.manifest.target_dim; ++c)
            y(r, c) = ds.samples[r].targets[c];
    return y;
}

inline Eigen::MatrixXd label_matrix(const Dataset& ds) {
    const Eigen::Index n = static_cast<Eigen::Index>(ds.samples.size());
    Eigen::MatrixXd y(n, ds.manifest.label_dim);
    for (Eigen::Index r = 0; r < n; ++r)
        for (int c = 0; c < ds.manifest.label_dim; ++c)
            y(r, c) = ds.samples[r].active_labels.bits[c] ? 1.0 : 0.0;
    return y;
}

inline Network network_with_loads(const Network& base,
                                  const std::vector<double>& features) {
    Network net = base;
    const std::size_t nb = net.buses.size();
    for (std::size_t i = 0; i < nb; ++i) {
        net.buses[i].p_load = features[i];
        net.buses[i].q_load = features[nb + i];
    }
    return net;
}

inline double mean_or_nan(const std::vector<double>& v) {
    double sum = 0.0;
    int n = 0;
    for (double x : v)
        if (std::isfinite(x)) {
            sum += x;
            ++n;
        }
    return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

// BoundsSpec for the regression targets: generator P limits then voltage
// limits of the generators' buses.
inline nn::BoundsSpec target_bounds(const Network& net, const NetworkIndex& idx) {
    nn::BoundsSpec b;
    for (int g : idx.non_slack_gens()) {
        b.lower.push_back(net.generators[g].p_min);
        b.upper.push_back(net.generators[g].p_max);
    }
    for (int g : idx.non_slack_gens()) {
        const Bus& bus = net.buses[idx.gen_bus(g)];
        b.lower.push_back(bus.v_min);
        b.upper.push_back(bus.v_max);
    }
    return b;
}

struct SplitMatrices {
    Eigen::MatrixXd x_fit, y_fit, x_val, y_val, x_test, y_test;
    Dataset test;
};

// 90/10 train/test split, then a validation slice carved from the train side.
inline SplitMatrices split_for_training(const Dataset& ds, bool labels,
                                        const GridSearchSpace& space) {
    auto [train, test] = split_dataset(ds, 0.1, space.base.seed);
    Dataset fit = train, val = test;
    try {
        std::tie(fit, val) = split_dataset(train, space.val_fraction,
                                           space.base.seed + 1);
    } catch (const TooSmall&) {
        // Tiny datasets validate on the test side instead.
    }
    SplitMatrices m;
    m.x_fit = feature_matrix(fit);
    m.x_val = feature_matrix(val);
    m.x_test = feature_matrix(test);
    if (labels) {
        m.y_fit = label_matrix(fit);
        m.y_val = label_matrix(val);
        m.y_test = label_matrix(test);
    } else {
        m.y_fit = target_matrix(fit);
        m.y_val = target_matrix(val);
        m.y_test = target_matrix(test);
    }
    m.test = std::move(test);
    return m;
}

}  // namespace detail

// Trains every configuration in the space on the 90% split, predicts
// setpoints for the held-out 10%, and scores each prediction by running a
// power flow and checking all operating limits.
inline EndToEndReport run_end_to_end(const Dataset& ds, const Network& net,
                                     const GridSearchSpace& space) {
    space.check();
    if (ds.samples.empty()) throw EmptyInput("end-to-end on empty dataset");
    NetworkIndex idx(net);
    if (ds.manifest.feature_dim != 2 * idx.n_bus() ||
        ds.manifest.target_dim !=
            2 * static_cast<int>(idx.non_slack_gens().size()))
        throw ShapeMismatch("dataset layout does not match the network");

    detail::SplitMatrices m = detail::split_for_training(ds, false, space);
    nn::BoundsSpec bounds = detail::target_bounds(net, idx);
    AdmittanceMatrix adm = build_admittance(net, idx);
    const int gt = static_cast<int>(idx.non_slack_gens().size());

    EndToEndReport report;
    report.case_name = net.name;
    report.seeds = space.seeds;
    double best_legality = -1.0, best_cost_dev = 0.0;

    for (const auto& hidden : space.hidden_layer_options)
        for (nn::Activation act : space.activation_options)
            for (bool penalty : space.penalty_options) {
                ConfigResult row;
                row.config_id = detail::config_id(hidden, act, penalty);
                row.hidden = hidden;
                row.activation = act;
                row.penalty = penalty;
                nn::MlpModel first_seed_model;
                try {
                    for (std::uint64_t seed : space.seeds) {
                        nn::MlpConfig mc;
                        mc.input_dim = ds.manifest.feature_dim;
                        mc.hidden_layers = hidden;
                        mc.output_dim = ds.manifest.target_dim;
                        mc.activation = act;
                        mc.output_head = nn::OutputHead::Linear;
                        nn::TrainConfig tc = space.base;
                        tc.seed = seed;
                        if (!penalty) tc.penalty_weight = 0.0;
                        nn::LossSpec ls;
                        ls.kind = nn::LossKind::MsePenalty;
                        ls.bounds = bounds;
                        nn::TrainResult tr =
                            nn::train(nn::init_model(mc, seed), m.x_fit,
                                      m.y_fit, m.x_val, m.y_val, ls, tc);
                        if (seed == space.seeds.front())
                            first_seed_model = tr.model;

                        Eigen::MatrixXd pred = nn::forward(tr.model, m.x_test);
                        std::vector<LegalityReport> reports;
                        std::vector<double> pred_costs, true_costs;
                        for (Eigen::Index r = 0; r < pred.rows(); ++r) {
                            const Sample& s =
                                m.test.samples[static_cast<std::size_t>(r)];
                            Network inst =
                                detail::network_with_loads(net, s.features);
                            SetpointProfile sp;
                            for (int c = 0; c < gt; ++c)
                                sp.p_gen.push_back(pred(r, c));
                            for (int c = 0; c < gt; ++c)
                                sp.v_gen.push_back(pred(r, gt + c));
                            for (const Bus& b : inst.buses) {
                                sp.p_load.push_back(b.p_load);
                                sp.q_load.push_back(b.q_load);
                            }
                            PowerFlowSolution pf;
                            LegalityReport lr =
                                check_legality(inst, idx, adm, sp,
                                               space.legality_tol_rel, &pf);
                            reports.push_back(lr);
                            if (lr.legal) {
                                std::vector<double> p_full =
                                    recover_p_gen(inst, idx, sp, pf);
                                pred_costs.push_back(
                                    evaluate_cost(inst.generators, p_full));
                                true_costs.push_back(s.true_cost);
                            }
                        }
                        row.legality_per_seed.push_back(
                            metric_legality_rate(reports));
                        double dev = std::numeric_limits<double>::quiet_NaN();
                        if (!pred_costs.empty())
                            dev = metric_cost_deviation(pred_costs, true_costs);
                        row.cost_dev_per_seed.push_back(dev);
                    }
                    row.mean_legality = detail::mean_or_nan(row.legality_per_seed);
                    row.mean_cost_deviation =
                        detail::mean_or_nan(row.cost_dev_per_seed);
                } catch (const std::exception& e) {
                    row.error = e.what();
                }
                report.table.push_back(row);
                if (row.error.empty()) {
                    double dev = std::isnan(row.mean_cost_deviation)
                                     ? std::numeric_limits<double>::infinity()
                                     : row.mean_cost_deviation;
                    bool better = row.mean_legality > best_legality ||
                                  (row.mean_legality == best_legality &&
                                   dev < best_cost_dev);
                    if (better) {
                        best_legality = row.mean_legality;
                        best_cost_dev = dev;
                        report.best_index =
                            static_cast<int>(report.table.size()) - 1;
                        report.best_config_id = row.config_id;
                        report.best_model = first_seed_model;
                    }
                }
            }

    if (report.best_index >= 0) {
        report.legality_rate = report.table[report.best_index].mean_legality;
        report.avg_cost_deviation =
            report.table[report.best_index].mean_cost_deviation;
    }
    return report;
}

// Same protocol with a sigmoid head and BCE on the active-set labels.
inline ConstraintReport run_constraint_prediction(const Dataset& ds,
                                                  const GridSearchSpace& space) {
    space.check();
    if (ds.samples.empty())
        throw EmptyInput("constraint prediction on empty dataset");

    detail::SplitMatrices m = detail::split_for_training(ds, true, space);
    ConstraintReport report;
    report.case_name = ds.manifest.case_name;
    report.seeds = space.seeds;
    double best_acc = -1.0;

    for (const auto& hidden : space.hidden_layer_options)
        for (nn::Activation act : space.activation_options)
            for (bool penalty : space.penalty_options) {
                ConfigResult row;
                row.config_id = detail::config_id(hidden, act, penalty);
                row.hidden = hidden;
                row.activation = act;
                row.penalty = penalty;
                nn::MlpModel first_seed_model;
                std::vector<Eigen::VectorXd> col_acc_per_seed;
                try {
                    for (std::uint64_t seed : space.seeds) {
                        nn::MlpConfig mc;
                        mc.input_dim = ds.manifest.feature_dim;
                        mc.hidden_layers = hidden;
                        mc.output_dim = ds.manifest.label_dim;
                        mc.activation = act;
                        mc.output_head = nn::OutputHead::Sigmoid;
                        nn::TrainConfig tc = space.base;
                        tc.seed = seed;
                        nn::LossSpec ls;
                        ls.kind = nn::LossKind::Bce;
                        nn::TrainResult tr =
                            nn::train(nn::init_model(mc, seed), m.x_fit,
                                      m.y_fit, m.x_val, m.y_val, ls, tc);
                        if (seed == space.seeds.front())
                            first_seed_model = tr.model;
                        Eigen::MatrixXd pred = nn::forward(tr.model, m.x_test);
                        row.accuracy_per_seed.push_back(
                            metric_elementwise_accuracy(pred, m.y_test));
                        Eigen::VectorXd col_acc(pred.cols());
                        for (Eigen::Index c = 0; c < pred.cols(); ++c)
                            col_acc[c] = metric_elementwise_accuracy(
                                pred.col(c), m.y_test.col(c));
                        col_acc_per_seed.push_back(col_acc);
                    }
                    row.mean_accuracy = detail::mean_or_nan(row.accuracy_per_seed);
                } catch (const std::exception& e) {
                    row.error = e.what();
                }
                report.table.push_back(row);
                if (row.error.empty() && row.mean_accuracy > best_acc) {
                    best_acc = row.mean_accuracy;
                    report.best_index = static_cast<int>(report.table.size()) - 1;
                    report.best_config_id = row.config_id;
                    report.best_model = first_seed_model;
                    report.per_constraint_accuracy.assign(
                        static_cast<std::size_t>(ds.manifest.label_dim), 0.0);
                    for (const Eigen::VectorXd& ca : col_acc_per_seed)
                        for (Eigen::Index c = 0; c < ca.size(); ++c)
                            report.per_constraint_accuracy[c] +=
                                ca[c] / col_acc_per_seed.size();
                }
            }

    if (report.best_index >= 0)
        report.elementwise_accuracy = report.table[report.best_index].mean_accuracy;
    return report;
}

// Paired cold/warm benchmark. A null model benchmarks the stored labels
// (oracle active sets) instead of predictions.
inline WarmStartReport run_warm_start_benchmark(const Dataset& ds,
                                                const Network& net,
                                                const nn::MlpModel* model,
                                                const OpfOptions& opts = {}) {
    if (ds.samples.empty()) throw EmptyInput("warm-start benchmark on nothing");
    NetworkIndex idx(net);
    AdmittanceMatrix adm = build_admittance(net, idx);
    SetpointProfile base_sp = SetpointProfile::from_case(net, idx);

    WarmStartReport report;
    report.case_name = net.name;
    double ratio_sum = 0.0;
    int improved = 0;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& s = ds.samples[i];
        WarmStartInstance inst;
        inst.index = static_cast<int>(i);
        try {
            Network grid = detail::network_with_loads(net, s.features);
            ActiveSetVector bits = s.active_labels;
            if (model) {
                Eigen::MatrixXd x(1, static_cast<Eigen::Index>(s.features.size()));
                for (std::size_t c = 0; c < s.features.size(); ++c)
                    x(0, static_cast<Eigen::Index>(c)) = s.features[c];
                Eigen::MatrixXd prob = nn::forward(*model, x);
                bits.bits.assign(static_cast<std::size_t>(prob.cols()), 0);
                for (Eigen::Index c = 0; c < prob.cols(); ++c)
                    bits.bits[static_cast<std::size_t>(c)] = prob(0, c) > 0.5;
            }
            namespace chr = std::chrono;
            auto t0 = chr::steady_clock::now();
            OpfSolution cold = solve_acopf(grid, idx, adm, opts);
            auto t1 = chr::steady_clock::now();
            WarmStartHint hint = warm_start_from_active_set(grid, bits, base_sp);
            auto t2 = chr::steady_clock::now();
            OpfSolution warm = solve_acopf(grid, idx, adm, opts, &hint);
            auto t3 = chr::steady_clock::now();
            inst.cold_seconds = chr::duration<double>(t1 - t0).count();
            inst.warm_seconds = chr::duration<double>(t3 - t2).count();
            inst.cold_iters = cold.iterations;
            inst.warm_iters = warm.iterations;
            inst.cold_objective = cold.objective;
            inst.warm_objective = warm.objective;
            if (!cold.converged || !warm.converged) {
                inst.error = !cold.converged ? "cold solve did not converge"
                                             : "warm solve did not converge";
            } else {
                inst.paired = true;
                inst.improved = warm.iterations <= cold.iterations;
                inst.regression =
                    warm.objective - cold.objective >
                    1e-4 * std::max(1.0, std::abs(cold.objective));
            }
        } catch (const std::exception& e) {
            inst.error = e.what();
        }
        if (inst.paired) {
            ++report.paired;
            improved += inst.improved ? 1 : 0;
            ratio_sum += inst.cold_iters > 0
                             ? static_cast<double>(inst.warm_iters) /
                                   inst.cold_iters
                             : 1.0;
        } else {
            ++report.errors;
        }
        report.instances.push_back(std::move(inst));
    }
    if (report.paired > 0) {
        report.fraction_improved =
            static_cast<double>(improved) / report.paired;
        report.mean_iteration_ratio = ratio_sum / report.paired;
    }
    return report;
}

// Report serialization: full tables as JSON, summary rows as CSV.

namespace detail {

inline nlohmann::json config_row_json(const ConfigResult& row) {
    nlohmann::json j;
    j["config_id"] = row.config_id;
    j["hidden"] = row.hidden;
    j["activation"] = activation_name(row.activation);
    j["penalty"] = row.penalty;
    if (!row.legality_per_seed.empty())
        j["legality_per_seed"] = row.legality_per_seed;
    if (!row.cost_dev_per_seed.empty())
        j["cost_deviation_per_seed"] = row.cost_dev_per_seed;
    if (!row.accuracy_per_seed.empty())
        j["accuracy_per_seed"] = row.accuracy_per_seed;
    if (std::isfinite(row.mean_legality)) j["mean_legality"] = row.mean_legality;
    if (std::isfinite(row.mean_cost_deviation))
        j["mean_cost_deviation"] = row.mean_cost_deviation;
    if (std::isfinite(row.mean_accuracy)) j["mean_accuracy"] = row.mean_accuracy;
    if (!row.error.empty()) j["error"] = row.error;
    return j;
}

}  // namespace detail

inline nlohmann::json report_to_json(const EndToEndReport& rep) {
    nlohmann::json j;
    j["task"] = "e2e";
    j["case"] = rep.case_name;
    j["seeds"] = rep.seeds;
    j["legality_rate"] = rep.legality_rate;
    if (std::isfinite(rep.avg_cost_deviation))
        j["avg_cost_deviation"] = rep.avg_cost_deviation;
    j["best_config"] = rep.best_config_id;
    j["table"] = nlohmann::json::array();
    for (const ConfigResult& row : rep.table)
        j["table"].push_back(detail::config_row_json(row));
    return j;
}

inline nlohmann::json report_to_json(const ConstraintReport& rep) {
    nlohmann::json j;
    j["task"] = "constraints";
    j["case"] = rep.case_name;
    j["seeds"] = rep.seeds;
    j["elementwise_accuracy"] = rep.elementwise_accuracy;
    j["per_constraint_accuracy"] = rep.per_constraint_accuracy;
    j["best_config"] = rep.best_config_id;
    j["table"] = nlohmann::json::array();
    for (const ConfigResult& row : rep.table)
        j["table"].push_back(detail::config_row_json(row));
    return j;
}

// Wall times stay in the in-memory report only: persisted reports must be
// byte-identical across reruns with equal seeds.
inline nlohmann::json report_to_json(const WarmStartReport& rep) {
    nlohmann::json j;
    j["task"] = "warmstart";
    j["case"] = rep.case_name;
    j["paired"] = rep.paired;
    j["errors"] = rep.errors;
    if (std::isfinite(rep.fraction_improved))
        j["fraction_improved"] = rep.fraction_improved;
    if (std::isfinite(rep.mean_iteration_ratio))
        j["mean_iteration_ratio"] = rep.mean_iteration_ratio;
    j["instances"] = nlohmann::json::array();
    for (const WarmStartInstance& inst : rep.instances) {
        nlohmann::json r;
        r["index"] = inst.index;
        r["cold_iters"] = inst.cold_iters;
        r["warm_iters"] = inst.warm_iters;
        r["cold_objective"] = inst.cold_objective;
        r["warm_objective"] = inst.warm_objective;
        r["paired"] = inst.paired;
        r["improved"] = inst.improved;
        r["regression"] = inst.regression;
        if (!inst.error.empty()) r["error"] = inst.error;
        j["instances"].push_back(r);
    }
    return j;
}

inline std::string report_to_csv(const EndToEndReport& rep) {
    std::string csv = "config_id,activation,penalty,mean_legality,"
                      "mean_cost_deviation,error\n";
    for (const ConfigResult& row : rep.table) {
        csv += row.config_id + "," + detail::activation_name(row.activation) +
               "," + (row.penalty ? "1" : "0") + "," +
               format_double(row.mean_legality) + "," +
               format_double(row.mean_cost_deviation) + "," + row.error + "\n";
    }
    return csv;
}

inline std::string report_to_csv(const ConstraintReport& rep) {
    std::string csv = "config_id,activation,penalty,mean_accuracy,error\n";
    for (const ConfigResult& row : rep.table) {
        csv += row.config_id + "," + detail::activation_name(row.activation) +
               "," + (row.penalty ? "1" : "0") + "," +
               format_double(row.mean_accuracy) + "," + row.error + "\n";
    }
    return csv;
}

inline std::string report_to_csv(const WarmStartReport& rep) {
    std::string csv =
        "index,cold_iters,warm_iters,cold_objective,warm_objective,"
        "improved,regression,error\n";
    for (const WarmStartInstance& inst : rep.instances) {
        csv += std::to_string(inst.index) + "," +
               std::to_string(inst.cold_iters) + "," +
               std::to_string(inst.warm_iters) + "," +
               format_double(inst.cold_objective) + "," +
               format_double(inst.warm_objective) + "," +
               (inst.improved ? "1" : "0") + "," +
               (inst.regression ? "1" : "0") + "," + inst.error + "\n";
    }
    return csv;
}

}  // namespace acopf
