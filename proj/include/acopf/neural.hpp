// Dense MLP stack: initialization, forward, reverse-mode gradients, Adam,
// and the two training losses (MSE with linear bound-violation penalty for
// setpoint regression, BCE for multi-label active-set classification).
//
// Rows are samples. Layer k maps activations A (batch x in) to
// Z = A * W_k' + b_k' with W_k of shape (out x in). Inputs and regression
// targets are z-scored with training-set statistics stored on the model;
// the bound penalty is evaluated in physical units through that mapping.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "acopf/common.hpp"

namespace acopf::nn {

enum class Activation { ReLU, Tanh };
enum class OutputHead { Linear, Sigmoid };

struct MlpConfig {
    int input_dim = 0;
    std::vector<int> hidden_layers;
    int output_dim = 0;
    Activation activation = Activation::ReLU;
    OutputHead output_head = OutputHead::Linear;

    void check() const {
        if (input_dim < 1 || output_dim < 1)
            throw Error("mlp dimensions must be positive");
        if (hidden_layers.empty() || hidden_layers.size() > 3)
            throw Error("hidden_layers length must be 1..3");
        for (int w : hidden_layers)
            if (w < 1) throw Error("hidden widths must be positive");
    }
    std::vector<int> dims() const {
        std::vector<int> d;
        d.push_back(input_dim);
        d.insert(d.end(), hidden_layers.begin(), hidden_layers.end());
        d.push_back(output_dim);
        return d;
    }
};

struct MlpModel {
    MlpConfig config;
    std::vector<Eigen::MatrixXd> weights;  // (out x in) per layer
    std::vector<Eigen::VectorXd> biases;
    Eigen::VectorXd x_mean, x_std;  // input standardization
    Eigen::VectorXd y_mean, y_std;  // target standardization (identity for BCE)
    std::map<std::string, std::string> metadata;

    int n_layers() const { return static_cast<int>(weights.size()); }
};

inline MlpModel init_model(const MlpConfig& cfg, std::uint64_t seed) {
    cfg.check();
    MlpModel model;
    model.config = cfg;
    Rng rng(seed);
    std::vector<int> d = cfg.dims();
    for (std::size_t k = 0; k + 1 < d.size(); ++k) {
        int fan_in = d[k], fan_out = d[k + 1];
        double limit = std::sqrt(6.0 / (fan_in + fan_out));
        Eigen::MatrixXd w(fan_out, fan_in);
        for (int r = 0; r < fan_out; ++r)
            for (int c = 0; c < fan_in; ++c) w(r, c) = rng.uniform(-limit, limit);
        model.weights.push_back(std::move(w));
        model.biases.push_back(Eigen::VectorXd::Zero(fan_out));
    }
    model.x_mean = Eigen::VectorXd::Zero(cfg.input_dim);
    model.x_std = Eigen::VectorXd::Ones(cfg.input_dim);
    model.y_mean = Eigen::VectorXd::Zero(cfg.output_dim);
    model.y_std = Eigen::VectorXd::Ones(cfg.output_dim);
    return model;
}

namespace detail {

inline Eigen::MatrixXd apply_activation(const Eigen::MatrixXd& z,
                                        Activation act) {
    if (act == Activation::ReLU) return z.cwiseMax(0.0);
    return z.array().tanh().matrix();
}

inline Eigen::MatrixXd activation_deriv(const Eigen::MatrixXd& z,
                                        Activation act) {
    if (act == Activation::ReLU)
        return (z.array() > 0.0).cast<double>().matrix();
    return (1.0 - z.array().tanh().square()).matrix();
}

// Clamped away from {0,1} so saturated logits still yield probabilities
// strictly inside the open interval.
inline Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) {
    const double eps = 1e-15;
    return (1.0 / (1.0 + (-z.array()).exp())).min(1.0 - eps).max(eps).matrix();
}

struct ForwardCache {
    std::vector<Eigen::MatrixXd> inputs;  // per-layer input activations
    std::vector<Eigen::MatrixXd> zs;      // per-layer affine outputs
};

// Standardized-space affine chain; returns the final affine output (no head).
inline Eigen::MatrixXd forward_std(const MlpModel& model,
                                   const Eigen::MatrixXd& x_std,
                                   ForwardCache* cache = nullptr) {
    if (x_std.cols() != model.config.input_dim)
        throw ShapeMismatch("forward: input width != input_dim");
    Eigen::MatrixXd a = x_std;
    const int nl = model.n_layers();
    for (int k = 0; k < nl; ++k) {
        if (cache) cache->inputs.push_back(a);
        Eigen::MatrixXd z =
            (a * model.weights[k].transpose()).rowwise() +
            model.biases[k].transpose();
        if (cache) cache->zs.push_back(z);
        a = (k + 1 < nl) ? apply_activation(z, model.config.activation)
                         : std::move(z);
    }
    return a;
}

}  // namespace detail

namespace detail {

inline Eigen::MatrixXd standardize(const Eigen::MatrixXd& x,
                                   const Eigen::VectorXd& mean,
                                   const Eigen::VectorXd& std) {
    Eigen::MatrixXd out = x;
    out.rowwise() -= mean.transpose();
    for (int c = 0; c < out.cols(); ++c) out.col(c) /= std[c];
    return out;
}

inline Eigen::MatrixXd unstandardize(const Eigen::MatrixXd& x,
                                     const Eigen::VectorXd& mean,
                                     const Eigen::VectorXd& std) {
    Eigen::MatrixXd out = x;
    for (int c = 0; c < out.cols(); ++c) out.col(c) *= std[c];
    out.rowwise() += mean.transpose();
    return out;
}

}  // namespace detail

// Physical-unit prediction: standardizes inputs, runs the chain, applies the
// output head (a linear head maps back to target units; a sigmoid head
// returns probabilities).
inline Eigen::MatrixXd forward(const MlpModel& model, const Eigen::MatrixXd& x) {
    if (x.cols() != model.config.input_dim)
        throw ShapeMismatch("forward: input width != input_dim");
    Eigen::MatrixXd z = detail::forward_std(
        model, detail::standardize(x, model.x_mean, model.x_std));
    if (model.config.output_head == OutputHead::Sigmoid)
        return detail::sigmoid(z);
    return detail::unstandardize(z, model.y_mean, model.y_std);
}

struct Gradients {
    std::vector<Eigen::MatrixXd> dw;
    std::vector<Eigen::VectorXd> db;
};

// Reverse-mode gradients; upstream is dLoss/d(final affine output).
inline Gradients backward(const MlpModel& model,
                          const detail::ForwardCache& cache,
                          const Eigen::MatrixXd& upstream) {
    const int nl = model.n_layers();
    if (static_cast<int>(cache.zs.size()) != nl)
        throw ShapeMismatch("backward: cache does not match model depth");
    if (upstream.rows() != cache.zs.back().rows() ||
        upstream.cols() != cache.zs.back().cols())
        throw ShapeMismatch("backward: upstream shape != final output shape");
    Gradients g;
    g.dw.resize(nl);
    g.db.resize(nl);
    Eigen::MatrixXd dz = upstream;
    for (int k = nl - 1; k >= 0; --k) {
        g.dw[k] = dz.transpose() * cache.inputs[k];
        g.db[k] = dz.colwise().sum();
        if (k > 0) {
            Eigen::MatrixXd da = dz * model.weights[k];
            dz = da.cwiseProduct(
                detail::activation_deriv(cache.zs[k - 1],
                                         model.config.activation));
        }
    }
    return g;
}

inline Gradients backward(const MlpModel& model, const Eigen::MatrixXd& x_std,
                          const Eigen::MatrixXd& upstream) {
    detail::ForwardCache cache;
    detail::forward_std(model, x_std, &cache);
    return backward(model, cache, upstream);
}

// Optional per-output-dimension operating bounds in target units.
struct BoundsSpec {
    std::vector<double> lower, upper;

    static BoundsSpec unbounded(int dim) {
        BoundsSpec b;
        b.lower.assign(dim, -std::numeric_limits<double>::infinity());
        b.upper.assign(dim, std::numeric_limits<double>::infinity());
        return b;
    }
};

struct LossValue {
    double loss = 0.0;
    Eigen::MatrixXd grad;  // wrt the final affine output
};

// MSE plus linear penalty on bound violations. pred/target live in model
// output space; out_scale/out_offset map predictions to physical units for
// the penalty (identity when absent).
inline LossValue loss_mse_penalty(const Eigen::MatrixXd& pred,
                                  const Eigen::MatrixXd& target,
                                  const BoundsSpec& bounds, double lambda,
                                  const Eigen::VectorXd* out_scale = nullptr,
                                  const Eigen::VectorXd* out_offset = nullptr) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw ShapeMismatch("loss_mse_penalty: pred/target shapes differ");
    if (static_cast<int>(bounds.lower.size()) != pred.cols() ||
        static_cast<int>(bounds.upper.size()) != pred.cols())
        throw ShapeMismatch("loss_mse_penalty: bounds width != output width");
    const double count = static_cast<double>(pred.size());
    LossValue out;
    Eigen::MatrixXd diff = pred - target;
    out.loss = diff.squaredNorm() / count;
    out.grad = 2.0 * diff / count;
    if (lambda <= 0.0) return out;
    for (int c = 0; c < pred.cols(); ++c) {
        double scale = out_scale ? (*out_scale)[c] : 1.0;
        double offset = out_offset ? (*out_offset)[c] : 0.0;
        double lo = bounds.lower[c], hi = bounds.upper[c];
        for (int r = 0; r < pred.rows(); ++r) {
            double phys = pred(r, c) * scale + offset;
            if (phys > hi) {
                out.loss += lambda * (phys - hi) / count;
                out.grad(r, c) += lambda * scale / count;
            } else if (phys < lo) {
                out.loss += lambda * (lo - phys) / count;
                out.grad(r, c) -= lambda * scale / count;
            }
        }
    }
    return out;
}

// Binary cross-entropy over sigmoid probabilities; gradient is taken wrt the
// pre-sigmoid logits, so the sigmoid derivative is folded in.
inline LossValue loss_bce(const Eigen::MatrixXd& prob,
                          const Eigen::MatrixXd& labels) {
    if (prob.rows() != labels.rows() || prob.cols() != labels.cols())
        throw ShapeMismatch("loss_bce: prob/label shapes differ");
    const double count = static_cast<double>(prob.size());
    const double eps = 1e-12;
    Eigen::ArrayXXd p = prob.array().min(1.0 - eps).max(eps);
    LossValue out;
    out.loss = -((labels.array() * p.log()) +
                 ((1.0 - labels.array()) * (1.0 - p).log()))
                    .sum() /
               count;
    out.grad = (prob - labels) / count;
    return out;
}

struct AdamState {
    std::vector<Eigen::MatrixXd> m_w, v_w;
    std::vector<Eigen::VectorXd> m_b, v_b;
    long step = 0;

    static AdamState for_model(const MlpModel& model) {
        AdamState s;
        for (int k = 0; k < model.n_layers(); ++k) {
            s.m_w.push_back(Eigen::MatrixXd::Zero(model.weights[k].rows(),
                                                  model.weights[k].cols()));
            s.v_w.push_back(Eigen::MatrixXd::Zero(model.weights[k].rows(),
                                                  model.weights[k].cols()));
            s.m_b.push_back(Eigen::VectorXd::Zero(model.biases[k].size()));
            s.v_b.push_back(Eigen::VectorXd::Zero(model.biases[k].size()));
        }
        return s;
    }
};

inline void adam_step(MlpModel& model, const Gradients& grads, AdamState& state,
                      double lr) {
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    state.step += 1;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (int k = 0; k < model.n_layers(); ++k) {
        state.m_w[k] = beta1 * state.m_w[k] + (1.0 - beta1) * grads.dw[k];
        state.v_w[k] =
            beta2 * state.v_w[k] +
            (1.0 - beta2) * grads.dw[k].cwiseProduct(grads.dw[k]);
        model.weights[k].array() -=
            lr * (state.m_w[k].array() / bc1) /
            ((state.v_w[k].array() / bc2).sqrt() + eps);
        state.m_b[k] = beta1 * state.m_b[k] + (1.0 - beta1) * grads.db[k];
        state.v_b[k] =
            beta2 * state.v_b[k] +
            (1.0 - beta2) * grads.db[k].cwiseProduct(grads.db[k]);
        model.biases[k].array() -=
            lr * (state.m_b[k].array() / bc1) /
            ((state.v_b[k].array() / bc2).sqrt() + eps);
    }
}

struct EarlyStop {
    int window = 50;
    double min_rel_improvement = 1e-5;
};

struct TrainConfig {
    double learning_rate = 0.001;
    int max_epochs = 2000;
    int batch_size = 128;
    double penalty_weight = 100.0;
    EarlyStop early_stop;
    std::uint64_t seed = 0;

    void check() const {
        if (learning_rate <= 0.0) throw Error("learning_rate must be positive");
        if (max_epochs < 1) throw Error("max_epochs must be at least 1");
        if (batch_size < 1) throw Error("batch_size must be at least 1");
    }
};

enum class LossKind { MsePenalty, Bce };

struct LossSpec {
    LossKind kind = LossKind::MsePenalty;
    BoundsSpec bounds;  // physical-unit bounds, used by MsePenalty only
};

struct EpochStats {
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    MlpModel model;  // best-validation snapshot
    std::vector<EpochStats> history;
    int best_epoch = -1;
    double best_val_loss = std::numeric_limits<double>::infinity();
    bool diverged = false;
};

// Mini-batch Adam training with seeded in-epoch shuffling, early stopping on
// the validation loss, and best-validation snapshotting. Divergence (a
// non-finite loss) stops training and is flagged; the history up to the
// failing epoch is returned.
inline TrainResult train(const MlpModel& init, const Eigen::MatrixXd& x_train,
                         const Eigen::MatrixXd& y_train,
                         const Eigen::MatrixXd& x_val,
                         const Eigen::MatrixXd& y_val, const LossSpec& loss,
                         const TrainConfig& cfg) {
    cfg.check();
    if (x_train.rows() == 0 || x_val.rows() == 0)
        throw EmptyInput("train: empty train or validation set");
    if (x_train.cols() != init.config.input_dim ||
        y_train.cols() != init.config.output_dim ||
        x_val.cols() != x_train.cols() || y_val.cols() != y_train.cols())
        throw ShapeMismatch("train: data does not match model dimensions");
    if (y_train.rows() != x_train.rows() || y_val.rows() != x_val.rows())
        throw ShapeMismatch("train: feature/target row counts differ");
    if (loss.kind == LossKind::MsePenalty &&
        (static_cast<int>(loss.bounds.lower.size()) != y_train.cols() ||
         static_cast<int>(loss.bounds.upper.size()) != y_train.cols()))
        throw ShapeMismatch("train: bounds width != target width");

    MlpModel model = init;
    const int n = static_cast<int>(x_train.rows());
    const int in_dim = init.config.input_dim;
    const int out_dim = init.config.output_dim;

    // Standardization statistics from the training set; zero-variance
    // dimensions pass through unscaled.
    model.x_mean = x_train.colwise().mean();
    model.x_std.resize(in_dim);
    for (int c = 0; c < in_dim; ++c) {
        double var =
            (x_train.col(c).array() - model.x_mean[c]).square().sum() / n;
        model.x_std[c] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    if (loss.kind == LossKind::MsePenalty) {
        model.y_mean = y_train.colwise().mean();
        model.y_std.resize(out_dim);
        for (int c = 0; c < out_dim; ++c) {
            double var =
                (y_train.col(c).array() - model.y_mean[c]).square().sum() / n;
            model.y_std[c] = var > 1e-24 ? std::sqrt(var) : 1.0;
        }
    } else {
        model.y_mean = Eigen::VectorXd::Zero(out_dim);
        model.y_std = Eigen::VectorXd::Ones(out_dim);
    }

    Eigen::MatrixXd xtr = detail::standardize(x_train, model.x_mean, model.x_std);
    Eigen::MatrixXd xval = detail::standardize(x_val, model.x_mean, model.x_std);
    Eigen::MatrixXd ytr =
        loss.kind == LossKind::MsePenalty
            ? detail::standardize(y_train, model.y_mean, model.y_std)
            : y_train;
    Eigen::MatrixXd yval =
        loss.kind == LossKind::MsePenalty
            ? detail::standardize(y_val, model.y_mean, model.y_std)
            : y_val;

    auto eval_loss = [&](const Eigen::MatrixXd& z, const Eigen::MatrixXd& y) {
        if (loss.kind == LossKind::Bce)
            return loss_bce(detail::sigmoid(z), y);
        return loss_mse_penalty(z, y, loss.bounds, cfg.penalty_weight,
                                &model.y_std, &model.y_mean);
    };

    TrainResult result;
    result.model = model;
    AdamState adam = AdamState::for_model(model);
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    int epoch = 0;
    for (; epoch < cfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (int start = 0; start < n; start += cfg.batch_size) {
            int bsz = std::min(cfg.batch_size, n - start);
            Eigen::MatrixXd xb(bsz, in_dim), yb(bsz, out_dim);
            for (int r = 0; r < bsz; ++r) {
                xb.row(r) = xtr.row(static_cast<Eigen::Index>(order[start + r]));
                yb.row(r) = ytr.row(static_cast<Eigen::Index>(order[start + r]));
            }
            detail::ForwardCache cache;
            Eigen::MatrixXd z = detail::forward_std(model, xb, &cache);
            LossValue lv = eval_loss(z, yb);
            epoch_loss += lv.loss * bsz;
            Gradients grads = backward(model, cache, lv.grad);
            adam_step(model, grads, adam, cfg.learning_rate);
        }
        EpochStats stats;
        stats.train_loss = epoch_loss / n;
        stats.val_loss = eval_loss(detail::forward_std(model, xval), yval).loss;
        result.history.push_back(stats);
        if (!std::isfinite(stats.train_loss) || !std::isfinite(stats.val_loss)) {
            result.diverged = true;
            break;
        }
        if (stats.val_loss <
            result.best_val_loss *
                (1.0 - cfg.early_stop.min_rel_improvement)) {
            result.best_val_loss = stats.val_loss;
            result.best_epoch = epoch;
            result.model = model;
        }
        if (epoch - result.best_epoch >= cfg.early_stop.window) break;
    }
    result.model.metadata["epochs_run"] =
        std::to_string(result.history.size());
    result.model.metadata["best_epoch"] = std::to_string(result.best_epoch);
    result.model.metadata["best_val_loss"] =
        format_double(result.best_val_loss);
    result.model.metadata["seed"] = std::to_string(cfg.seed);
    result.model.metadata["threads"] = "1";
    result.model.metadata["diverged"] = result.diverged ? "1" : "0";
    return result;
}

inline void save_model(const MlpModel& model, const std::string& path) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["config"]["input_dim"] = model.config.input_dim;
    j["config"]["hidden_layers"] = model.config.hidden_layers;
    j["config"]["output_dim"] = model.config.output_dim;
    j["config"]["activation"] =
        model.config.activation == Activation::ReLU ? "relu" : "tanh";
    j["config"]["output_head"] =
        model.config.output_head == OutputHead::Linear ? "linear" : "sigmoid";
    auto vec_to_json = [](const Eigen::VectorXd& v) {
        std::vector<double> out(v.data(), v.data() + v.size());
        return out;
    };
    for (int k = 0; k < model.n_layers(); ++k) {
        nlohmann::json layer;
        std::vector<std::vector<double>> w(model.weights[k].rows());
        for (int r = 0; r < model.weights[k].rows(); ++r) {
            w[r].assign(model.weights[k].row(r).begin(),
                        model.weights[k].row(r).end());
        }
        layer["weight"] = w;
        layer["bias"] = vec_to_json(model.biases[k]);
        j["layers"].push_back(layer);
    }
    j["normalization"]["x_mean"] = vec_to_json(model.x_mean);
    j["normalization"]["x_std"] = vec_to_json(model.x_std);
    j["normalization"]["y_mean"] = vec_to_json(model.y_mean);
    j["normalization"]["y_std"] = vec_to_json(model.y_std);
    j["metadata"] = model.metadata;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write model file " + path);
    f << j.dump(2) << "\n";
    if (!f.good()) throw IoError("write failure for " + path);
}

inline MlpModel load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open model file " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad model file " + path + ": " + e.what());
    }
    if (!j.contains("format_version") || j["format_version"] != 1)
        throw FormatVersionMismatch("unsupported model format version in " +
                                    path);
    MlpModel model;
    model.config.input_dim = j["config"]["input_dim"];
    model.config.hidden_layers =
        j["config"]["hidden_layers"].get<std::vector<int>>();
    model.config.output_dim = j["config"]["output_dim"];
    model.config.activation = j["config"]["activation"] == "relu"
                                  ? Activation::ReLU
                                  : Activation::Tanh;
    model.config.output_head = j["config"]["output_head"] == "linear"
                                   ? OutputHead::Linear
                                   : OutputHead::Sigmoid;
    auto vec_from_json = [](const nlohmann::json& a) {
        std::vector<double> v = a.get<std::vector<double>>();
        return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                                 static_cast<Eigen::Index>(
                                                     v.size()))
            .eval();
    };
    for (const auto& layer : j["layers"]) {
        auto w = layer["weight"].get<std::vector<std::vector<double>>>();
        Eigen::MatrixXd wm(w.size(), w.empty() ? 0 : w[0].size());
        for (std::size_t r = 0; r < w.size(); ++r)
            for (std::size_t c = 0; c < w[r].size(); ++c) wm(r, c) = w[r][c];
        model.weights.push_back(std::move(wm));
        model.biases.push_back(vec_from_json(layer["bias"]));
    }
    model.x_mean = vec_from_json(j["normalization"]["x_mean"]);
    model.x_std = vec_from_json(j["normalization"]["x_std"]);
    model.y_mean = vec_from_json(j["normalization"]["y_mean"]);
    model.y_std = vec_from_json(j["normalization"]["y_std"]);
    if (j.contains("metadata"))
        model.metadata =
            j["metadata"].get<std::map<std::string, std::string>>();
    return model;
}

}  // namespace acopf::nn
