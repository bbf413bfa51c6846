#include "gfcsim/pinn.hpp"

#include "gfcsim/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

namespace gfc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::size_t TrainingSet::sample_count() const {
    std::size_t n = 0;
    for (const auto& t : trajectories) {
        n += t.size();
    }
    return n;
}

std::array<double, 2> target_dq(const Trajectory& traj, std::size_t k) {
    const DQ0 dq = ab0_to_dq0(AlphaBeta0{traj.targets_ab[k][0], traj.targets_ab[k][1], 0.0},
                              traj.theta[k]);
    return {dq.d, dq.q};
}

// ---------------------------------------------------------------------------
// Network

Mlp Mlp::xavier(const std::vector<int>& sizes, std::uint64_t seed) {
    Mlp net = zeros(sizes);
    std::mt19937_64 rng(seed);
    for (auto& w : net.weights) {
        const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                w(r, c) = dist(rng);
            }
        }
    }
    return net;
}

Mlp Mlp::zeros(const std::vector<int>& sizes) {
    if (sizes.size() < 2) {
        throw Error(ErrorCode::kShapeMismatch, "a network needs at least an input and an output size");
    }
    Mlp net;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        if (sizes[l] < 1 || sizes[l + 1] < 1) {
            throw Error(ErrorCode::kShapeMismatch, "layer sizes must be positive");
        }
        net.weights.push_back(MatrixXd::Zero(sizes[l + 1], sizes[l]));
        net.biases.push_back(VectorXd::Zero(sizes[l + 1]));
    }
    return net;
}

std::vector<int> Mlp::sizes() const {
    std::vector<int> s{input_size()};
    for (const auto& w : weights) {
        s.push_back(static_cast<int>(w.rows()));
    }
    return s;
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        n += weights[l].size() + biases[l].size();
    }
    return n;
}

void Mlp::check() const {
    if (weights.empty() || weights.size() != biases.size()) {
        throw Error(ErrorCode::kShapeMismatch, "network has no layers or mismatched biases");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (biases[l].size() != weights[l].rows()) {
            throw Error(ErrorCode::kShapeMismatch, "bias length does not match layer output");
        }
        if (l > 0 && weights[l].cols() != weights[l - 1].rows()) {
            throw Error(ErrorCode::kShapeMismatch, "layer inputs do not match previous outputs");
        }
    }
}

namespace {

void sigmoid_inplace(MatrixXd& z) { z = (1.0 + (-z.array()).exp()).inverse().matrix(); }

}  // namespace

MatrixXd forward(const Mlp& net, const MatrixXd& x, ForwardCache* cache) {
    if (x.rows() != net.input_size()) {
        throw Error(ErrorCode::kShapeMismatch, "input has " + std::to_string(x.rows()) +
                                                   " features, network expects " +
                                                   std::to_string(net.input_size()));
    }
    const std::size_t n_layers = net.weights.size();
    if (cache) {
        cache->activations.assign(n_layers + 1, MatrixXd());
        cache->activations[0] = x;
    }
    MatrixXd a = x;
    for (std::size_t l = 0; l < n_layers; ++l) {
        MatrixXd z = net.weights[l] * a;
        z.colwise() += net.biases[l];
        if (l + 1 < n_layers) {
            sigmoid_inplace(z);
        }
        a = std::move(z);
        if (cache) {
            cache->activations[l + 1] = a;
        }
    }
    return a;
}

Gradients Gradients::zeros_like(const Mlp& net) {
    Gradients g;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        g.weights.push_back(MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
        g.biases.push_back(VectorXd::Zero(net.biases[l].size()));
    }
    return g;
}

// ---------------------------------------------------------------------------
// Losses

double loss_mse(const MatrixXd& pred, const MatrixXd& target) {
    if (pred.size() == 0) {
        throw Error(ErrorCode::kEmptyBatch, "MSE of an empty batch");
    }
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
        throw Error(ErrorCode::kShapeMismatch, "prediction and target shapes differ");
    }
    return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

double loss_physics(const MatrixXd& pred, double dt) {
    if (pred.cols() < 2) {
        throw Error(ErrorCode::kTrajectoryTooShort, "physics loss needs at least two samples");
    }
    const Eigen::Index n = pred.cols() - 1;
    const MatrixXd r = (pred.rightCols(n) - pred.leftCols(n)) / dt + pred.leftCols(n);
    return r.cwiseAbs().sum() / static_cast<double>(r.size());
}

namespace {

double current_excess(const FeatureVector& x, double i_peak) {
    const double i = std::sqrt(x[kFeatIdM] * x[kFeatIdM] + x[kFeatIqM] * x[kFeatIqM] +
                               x[kFeatI0M] * x[kFeatI0M]);
    return std::max(0.0, i - 1.2 * i_peak);
}

}  // namespace

double loss_current(const std::vector<FeatureVector>& batch, double i_peak) {
    if (batch.empty()) {
        return 0.0;
    }
    double s = 0.0;
    for (const auto& x : batch) {
        s += current_excess(x, i_peak);
    }
    return s / static_cast<double>(batch.size());
}

double loss_rocof(const std::vector<FeatureVector>& batch) {
    if (batch.empty()) {
        return 0.0;
    }
    double s = 0.0;
    for (const auto& x : batch) {
        s += std::abs(x[kFeatRocof]);
    }
    return s / static_cast<double>(batch.size());
}

double loss_rocov(const std::vector<FeatureVector>& batch) {
    if (batch.empty()) {
        return 0.0;
    }
    double s = 0.0;
    for (const auto& x : batch) {
        s += std::abs(x[kFeatRocov]);
    }
    return s / static_cast<double>(batch.size());
}

double total_loss(const LossComponents& c, const LossWeights& w) {
    return c.mse + w.pde * c.physics + w.current * c.current + w.rocof * c.rocof +
           w.rocov * c.rocov;
}

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

LossComponents evaluate_loss(const Mlp& net, const Batch& batch, const LossConfig& cfg,
                             Gradients* grad) {
    const Eigen::Index n = batch.x.cols();
    if (n == 0) {
        throw Error(ErrorCode::kEmptyBatch, "empty training batch");
    }
    if (batch.y.cols() != n || batch.y.rows() != net.output_size() ||
        batch.current_excess.size() != n || batch.rocof.size() != n || batch.rocov.size() != n) {
        throw Error(ErrorCode::kShapeMismatch, "batch arrays have inconsistent sizes");
    }
    ForwardCache cache;
    const MatrixXd out = forward(net, batch.x, grad ? &cache : nullptr);
    const MatrixXd err = out - batch.y;
    const double n_entries = static_cast<double>(err.size());

    LossComponents c;
    c.current = batch.current_excess.mean();
    c.rocof = batch.rocof.cwiseAbs().mean();
    c.rocov = batch.rocov.cwiseAbs().mean();

    VectorXd weight = VectorXd::Ones(n);
    if (cfg.mode == PenaltyMode::kReweight) {
        weight.array() += cfg.lambdas.current * batch.current_excess.array() / cfg.i_peak +
                          cfg.lambdas.rocof * batch.rocof.array().abs() +
                          cfg.lambdas.rocov * batch.rocov.array().abs();
    }
    const MatrixXd werr = err * weight.asDiagonal();
    c.mse = (werr.cwiseProduct(err)).sum() / n_entries;

    MatrixXd d_out;
    if (grad) {
        d_out = (2.0 / n_entries) * werr;
    }

    const std::size_t n_pairs = batch.pairs.size();
    if (n_pairs > 0) {
        const double scale = 1.0 / static_cast<double>(n_pairs * out.rows());
        double acc = 0.0;
        for (const auto& [k0, k1] : batch.pairs) {
            for (Eigen::Index r = 0; r < out.rows(); ++r) {
                const auto ri = static_cast<std::size_t>(r);
                const double a = ri < 2 ? cfg.physics_scale[ri] : 1.0;
                const double y0 = a * out(r, k0) + (ri < 2 ? cfg.physics_offset[ri] : 0.0);
                const double res = a * (out(r, k1) - out(r, k0)) / cfg.dt + y0;
                acc += std::abs(res);
                if (grad) {
                    const double g = cfg.lambdas.pde * scale * a * sign(res);
                    d_out(r, k1) += g / cfg.dt;
                    d_out(r, k0) += g * (1.0 - 1.0 / cfg.dt);
                }
            }
        }
        c.physics = acc * scale;
    }
    c.total = total_loss(c, cfg.lambdas);

    if (grad) {
        if (grad->weights.size() != net.weights.size()) {
            *grad = Gradients::zeros_like(net);
        }
        MatrixXd delta = std::move(d_out);
        for (std::size_t l = net.weights.size(); l-- > 0;) {
            const MatrixXd& a_in = cache.activations[l];
            grad->weights[l].noalias() = delta * a_in.transpose();
            grad->biases[l] = delta.rowwise().sum();
            if (l > 0) {
                MatrixXd back = net.weights[l].transpose() * delta;
                delta = back.cwiseProduct((a_in.array() * (1.0 - a_in.array())).matrix());
            }
        }
    }
    return c;
}

// ---------------------------------------------------------------------------
// Optimizer

AdamState AdamState::for_model(const Mlp& net) {
    AdamState s;
    s.m = Gradients::zeros_like(net);
    s.v = Gradients::zeros_like(net);
    return s;
}

void adam_step(Mlp& net, const Gradients& grad, AdamState& s, const AdamConfig& cfg, double lr) {
    if (s.m.weights.size() != net.weights.size()) {
        s = AdamState::for_model(net);
    }
    ++s.t;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.t));
    auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
    };
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        update(net.weights[l], grad.weights[l], s.m.weights[l], s.v.weights[l]);
        update(net.biases[l], grad.biases[l], s.m.biases[l], s.v.biases[l]);
    }
}

// ---------------------------------------------------------------------------
// Model

FeatureVector PinnModel::normalize(const FeatureVector& x) const {
    FeatureVector z{};
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        z[i] = (x[i] - feature_mean[i]) / feature_std[i];
    }
    return z;
}

FeatureVector PinnModel::denormalize(const FeatureVector& z) const {
    FeatureVector x{};
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        x[i] = z[i] * feature_std[i] + feature_mean[i];
    }
    return x;
}

std::array<double, 2> PinnModel::predict_dq(const FeatureVector& x) const {
    VectorXd a(static_cast<Eigen::Index>(kFeatureCount));
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        a(static_cast<Eigen::Index>(i)) = (x[i] - feature_mean[i]) / feature_std[i];
    }
    const std::size_t n_layers = net.weights.size();
    for (std::size_t l = 0; l < n_layers; ++l) {
        VectorXd z = net.biases[l];
        z.noalias() += net.weights[l] * a;
        if (l + 1 < n_layers) {
            z = (1.0 + (-z.array()).exp()).inverse().matrix();
        }
        a = std::move(z);
    }
    return {a(0) * target_std[0] + target_mean[0], a(1) * target_std[1] + target_mean[1]};
}

void PinnModel::check() const {
    try {
        net.check();
    } catch (const Error& e) {
        throw Error(ErrorCode::kCorruptModel, e.what());
    }
    if (net.input_size() != static_cast<int>(kFeatureCount) || net.output_size() != 2) {
        throw Error(ErrorCode::kCorruptModel, "model must map 18 features to 2 outputs");
    }
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        if (!(feature_std[i] > 0.0) || !std::isfinite(feature_mean[i])) {
            throw Error(ErrorCode::kCorruptModel, "feature statistics must be finite with std > 0");
        }
    }
    for (std::size_t i = 0; i < 2; ++i) {
        if (!(target_std[i] > 0.0) || !std::isfinite(target_mean[i])) {
            throw Error(ErrorCode::kCorruptModel, "target statistics must be finite with std > 0");
        }
    }
}

namespace {

using nlohmann::json;

const char* kFormatName = "gfcsim-pinn";

const char* penalty_name(PenaltyMode m) { return m == PenaltyMode::kLiteral ? "literal" : "reweight"; }

}  // namespace

void save_model(const PinnModel& model, const std::string& path) {
    model.check();
    json j;
    j["format"] = kFormatName;
    j["version"] = kModelFormatVersion;
    j["sizes"] = model.net.sizes();
    json layers = json::array();
    for (std::size_t l = 0; l < model.net.weights.size(); ++l) {
        const MatrixXd& w = model.net.weights[l];
        std::vector<double> row_major;
        row_major.reserve(static_cast<std::size_t>(w.size()));
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                row_major.push_back(w(r, c));
            }
        }
        const VectorXd& b = model.net.biases[l];
        layers.push_back({{"rows", w.rows()},
                          {"cols", w.cols()},
                          {"weights", row_major},
                          {"bias", std::vector<double>(b.data(), b.data() + b.size())}});
    }
    j["layers"] = layers;
    j["feature_names"] = std::vector<std::string>(kFeatureNames.begin(), kFeatureNames.end());
    j["feature_mean"] = model.feature_mean;
    j["feature_std"] = model.feature_std;
    j["target_mean"] = model.target_mean;
    j["target_std"] = model.target_std;
    j["output_frame"] = "dq";
    j["lambda"] = {{"pde", model.lambdas.pde},
                   {"current", model.lambdas.current},
                   {"rocof", model.lambdas.rocof},
                   {"rocov", model.lambdas.rocov}};
    j["penalty_mode"] = penalty_name(model.penalty_mode);
    j["i_peak"] = model.i_peak;
    const TrainingMeta& m = model.meta;
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    j["training"] = {{"iterations", m.iterations},
                     {"seed", m.seed},
                     {"train_samples", m.train_samples},
                     {"heldout_samples", m.heldout_samples},
                     {"train_trajectories", m.train_trajectories},
                     {"heldout_trajectories", m.heldout_trajectories},
                     {"final_train_mse", num(m.final_train_mse)},
                     {"final_heldout_mse", num(m.final_heldout_mse)},
                     {"final_total", num(m.final_total)}};

    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::kIo, "cannot open '" + path + "' for writing");
    }
    out << j.dump(1) << '\n';
    if (!out) {
        throw Error(ErrorCode::kIo, "failed writing '" + path + "'");
    }
}

PinnModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::kIo, "cannot open model file '" + path + "'");
    }
    PinnModel model;
    try {
        const json j = json::parse(in);
        if (j.at("format").get<std::string>() != kFormatName) {
            throw Error(ErrorCode::kCorruptModel, "'" + path + "' is not a PINN model file");
        }
        const int version = j.at("version").get<int>();
        if (version != kModelFormatVersion) {
            throw Error(ErrorCode::kCorruptModel,
                        "model file version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kModelFormatVersion) + ")");
        }
        if (j.value("output_frame", std::string("dq")) != "dq") {
            throw Error(ErrorCode::kCorruptModel, "unsupported output frame");
        }
        const auto sizes = j.at("sizes").get<std::vector<int>>();
        const auto& layers = j.at("layers");
        if (sizes.size() < 2 || layers.size() != sizes.size() - 1) {
            throw Error(ErrorCode::kCorruptModel, "layer list does not match the declared sizes");
        }
        model.net = Mlp::zeros(sizes);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& layer = layers[l];
            const auto rows = layer.at("rows").get<Eigen::Index>();
            const auto cols = layer.at("cols").get<Eigen::Index>();
            const auto w = layer.at("weights").get<std::vector<double>>();
            const auto b = layer.at("bias").get<std::vector<double>>();
            if (rows != sizes[l + 1] || cols != sizes[l] ||
                w.size() != static_cast<std::size_t>(rows * cols) ||
                b.size() != static_cast<std::size_t>(rows)) {
                throw Error(ErrorCode::kCorruptModel,
                            "layer " + std::to_string(l) + " has the wrong shape");
            }
            for (Eigen::Index r = 0; r < rows; ++r) {
                for (Eigen::Index c = 0; c < cols; ++c) {
                    model.net.weights[l](r, c) = w[static_cast<std::size_t>(r * cols + c)];
                }
                model.net.biases[l](r) = b[static_cast<std::size_t>(r)];
            }
        }
        model.feature_mean = j.at("feature_mean").get<FeatureVector>();
        model.feature_std = j.at("feature_std").get<FeatureVector>();
        model.target_mean = j.at("target_mean").get<std::array<double, 2>>();
        model.target_std = j.at("target_std").get<std::array<double, 2>>();
        const auto& lam = j.at("lambda");
        model.lambdas = LossWeights{lam.at("pde").get<double>(), lam.at("current").get<double>(),
                                    lam.at("rocof").get<double>(), lam.at("rocov").get<double>()};
        const std::string mode = j.value("penalty_mode", std::string("literal"));
        if (mode != "literal" && mode != "reweight") {
            throw Error(ErrorCode::kCorruptModel, "unknown penalty mode '" + mode + "'");
        }
        model.penalty_mode = mode == "literal" ? PenaltyMode::kLiteral : PenaltyMode::kReweight;
        model.i_peak = j.at("i_peak").get<double>();
        if (j.contains("training")) {
            const auto& t = j["training"];
            auto num = [&](const char* key) {
                return t.contains(key) && t[key].is_number() ? t[key].get<double>()
                                                            : std::numeric_limits<double>::quiet_NaN();
            };
            model.meta.iterations = t.value("iterations", 0);
            model.meta.seed = t.value("seed", std::uint64_t{0});
            model.meta.train_samples = t.value("train_samples", std::size_t{0});
            model.meta.heldout_samples = t.value("heldout_samples", std::size_t{0});
            model.meta.train_trajectories = t.value("train_trajectories", std::size_t{0});
            model.meta.heldout_trajectories = t.value("heldout_trajectories", std::size_t{0});
            model.meta.final_train_mse = num("final_train_mse");
            model.meta.final_heldout_mse = num("final_heldout_mse");
            model.meta.final_total = num("final_total");
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::kCorruptModel, "malformed model file '" + path + "': " + e.what());
    }
    model.check();
    return model;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Split {
    std::vector<const Trajectory*> train;
    std::vector<const Trajectory*> heldout;
};

Split split_by_scenario(const TrainingSet& data, double fraction, std::uint64_t seed) {
    std::vector<std::string> scenarios;
    std::set<std::string> seen;
    for (const auto& t : data.trajectories) {
        if (seen.insert(t.scenario_id).second) {
            scenarios.push_back(t.scenario_id);
        }
    }
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::shuffle(scenarios.begin(), scenarios.end(), rng);
    std::size_t n_hold = 0;
    if (scenarios.size() >= 2 && fraction > 0.0) {
        n_hold = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * scenarios.size())));
        n_hold = std::min(n_hold, scenarios.size() - 1);
    }
    const std::set<std::string> held(scenarios.begin(), scenarios.begin() + static_cast<long>(n_hold));
    Split s;
    for (const auto& t : data.trajectories) {
        if (t.size() == 0) {
            continue;
        }
        (held.count(t.scenario_id) ? s.heldout : s.train).push_back(&t);
    }
    return s;
}

struct Segment {
    const Trajectory* traj;
    std::size_t begin;
    std::size_t end;
};

Batch make_batch(const std::vector<Segment>& segs, const PinnModel& model) {
    std::size_t n = 0;
    for (const auto& s : segs) {
        n += s.end - s.begin;
    }
    Batch b;
    b.x.resize(static_cast<Eigen::Index>(kFeatureCount), static_cast<Eigen::Index>(n));
    b.y.resize(2, static_cast<Eigen::Index>(n));
    b.current_excess.resize(static_cast<Eigen::Index>(n));
    b.rocof.resize(static_cast<Eigen::Index>(n));
    b.rocov.resize(static_cast<Eigen::Index>(n));
    int col = 0;
    for (const auto& s : segs) {
        for (std::size_t k = s.begin; k < s.end; ++k, ++col) {
            const FeatureVector& x = s.traj->features[k];
            for (std::size_t i = 0; i < kFeatureCount; ++i) {
                b.x(static_cast<Eigen::Index>(i), col) = (x[i] - model.feature_mean[i]) / model.feature_std[i];
            }
            const auto y = target_dq(*s.traj, k);
            b.y(0, col) = (y[0] - model.target_mean[0]) / model.target_std[0];
            b.y(1, col) = (y[1] - model.target_mean[1]) / model.target_std[1];
            b.current_excess(col) = current_excess(x, model.i_peak);
            b.rocof(col) = x[kFeatRocof];
            b.rocov(col) = x[kFeatRocov];
            if (k > s.begin) {
                b.pairs.emplace_back(col - 1, col);
            }
        }
    }
    return b;
}

void fit_statistics(const std::vector<const Trajectory*>& train, PinnModel& model) {
    std::array<double, kFeatureCount> sum{}, sq{};
    std::array<double, 2> ysum{}, ysq{};
    double n = 0.0;
    for (const Trajectory* t : train) {
        for (std::size_t k = 0; k < t->size(); ++k) {
            for (std::size_t i = 0; i < kFeatureCount; ++i) {
                sum[i] += t->features[k][i];
            }
            const auto y = target_dq(*t, k);
            ysum[0] += y[0];
            ysum[1] += y[1];
            n += 1.0;
        }
    }
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        model.feature_mean[i] = sum[i] / n;
    }
    model.target_mean = {ysum[0] / n, ysum[1] / n};
    for (const Trajectory* t : train) {
        for (std::size_t k = 0; k < t->size(); ++k) {
            for (std::size_t i = 0; i < kFeatureCount; ++i) {
                const double d = t->features[k][i] - model.feature_mean[i];
                sq[i] += d * d;
            }
            const auto y = target_dq(*t, k);
            ysq[0] += (y[0] - model.target_mean[0]) * (y[0] - model.target_mean[0]);
            ysq[1] += (y[1] - model.target_mean[1]) * (y[1] - model.target_mean[1]);
        }
    }
    auto finish = [](double var, double mean) {
        const double s = std::sqrt(var);
        return s > 1e-9 * (1.0 + std::abs(mean)) ? s : 1.0;
    };
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        model.feature_std[i] = finish(sq[i] / n, model.feature_mean[i]);
    }
    model.target_std = {finish(ysq[0] / n, model.target_mean[0]), finish(ysq[1] / n, model.target_mean[1])};
}

double dataset_mse(const Mlp& net, const std::vector<Batch>& batches) {
    double acc = 0.0;
    double n = 0.0;
    for (const auto& b : batches) {
        const MatrixXd out = forward(net, b.x);
        acc += (out - b.y).squaredNorm();
        n += static_cast<double>(out.size());
    }
    return n > 0.0 ? acc / n : std::numeric_limits<double>::quiet_NaN();
}

std::vector<Batch> whole_trajectories(const std::vector<const Trajectory*>& trajs, const PinnModel& model) {
    std::vector<Batch> out;
    for (const Trajectory* t : trajs) {
        out.push_back(make_batch({Segment{t, 0, t->size()}}, model));
    }
    return out;
}

}  // namespace

TrainResult train(const TrainingSet& data, const TrainConfig& cfg,
                  const std::function<void(const TrainLogRow&)>& progress) {
    if (data.sample_count() == 0) {
        throw Error(ErrorCode::kEmptyBatch, "training set is empty");
    }
    if (cfg.iterations < 1 || cfg.batches < 1 || cfg.window < 2 || !(cfg.adam.lr > 0.0) ||
        cfg.holdout_fraction < 0.0 || cfg.holdout_fraction >= 1.0) {
        throw Error(ErrorCode::kConfig, "invalid training configuration");
    }
    for (const auto& t : data.trajectories) {
        if (t.features.size() != t.size() || t.targets_ab.size() != t.size() || t.theta.size() != t.size()) {
            throw Error(ErrorCode::kShapeMismatch, "trajectory arrays have different lengths");
        }
    }

    const Split split = split_by_scenario(data, cfg.holdout_fraction, cfg.seed);
    if (split.train.empty()) {
        throw Error(ErrorCode::kEmptyBatch, "no training trajectories after the held-out split");
    }

    TrainResult result;
    PinnModel& model = result.model;
    std::vector<int> sizes{static_cast<int>(kFeatureCount)};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(2);
    model.net = Mlp::xavier(sizes, cfg.seed);
    model.lambdas = cfg.lambdas;
    model.penalty_mode = cfg.penalty_mode;
    model.i_peak = cfg.i_peak > 0.0 ? cfg.i_peak : ConverterParams{}.rated_peak_current();
    fit_statistics(split.train, model);

    // Windows of consecutive samples dealt into fixed minibatches.
    std::vector<Segment> windows;
    for (const Trajectory* t : split.train) {
        for (std::size_t b = 0; b < t->size(); b += static_cast<std::size_t>(cfg.window)) {
            windows.push_back({t, b, std::min(t->size(), b + static_cast<std::size_t>(cfg.window))});
        }
    }
    std::mt19937_64 rng(cfg.seed + 1);
    std::shuffle(windows.begin(), windows.end(), rng);
    const std::size_t n_batches = std::min<std::size_t>(static_cast<std::size_t>(cfg.batches), windows.size());
    std::vector<std::vector<Segment>> groups(n_batches);
    for (std::size_t w = 0; w < windows.size(); ++w) {
        groups[w % n_batches].push_back(windows[w]);
    }
    std::vector<Batch> batches;
    for (const auto& g : groups) {
        batches.push_back(make_batch(g, model));
    }
    const std::vector<Batch> heldout = whole_trajectories(split.heldout, model);

    LossConfig loss_cfg;
    loss_cfg.lambdas = cfg.lambdas;
    loss_cfg.mode = cfg.penalty_mode;
    loss_cfg.dt = data.sample_period;
    loss_cfg.i_peak = model.i_peak;
    if (cfg.physics_units == PhysicsUnits::kPerUnit) {
        const double v_base = cfg.voltage_base > 0.0 ? cfg.voltage_base : ConverterParams{}.nominal_phase_peak();
        for (std::size_t r = 0; r < 2; ++r) {
            loss_cfg.physics_scale[r] = model.target_std[r] / v_base;
            loss_cfg.physics_offset[r] = model.target_mean[r] / v_base;
        }
    }

    AdamState adam = AdamState::for_model(model.net);
    Gradients grad = Gradients::zeros_like(model.net);
    const double lr_min = cfg.adam.lr * cfg.lr_final_fraction;
    for (int it = 0; it < cfg.iterations; ++it) {
        const Batch& batch = batches[static_cast<std::size_t>(it) % n_batches];
        TrainLogRow row;
        row.iteration = it + 1;
        row.loss = evaluate_loss(model.net, batch, loss_cfg, &grad);
        if (!std::isfinite(row.loss.total)) {
            throw Error(ErrorCode::kDiverged,
                        "training loss became non-finite at iteration " + std::to_string(it + 1));
        }
        const double progress_frac = cfg.iterations > 1 ? static_cast<double>(it) / (cfg.iterations - 1) : 1.0;
        const double lr = lr_min + 0.5 * (cfg.adam.lr - lr_min) * (1.0 + std::cos(std::numbers::pi * progress_frac));
        adam_step(model.net, grad, adam, cfg.adam, lr);
        if (!heldout.empty() && cfg.heldout_every > 0 && (it + 1) % cfg.heldout_every == 0) {
            row.heldout_mse = dataset_mse(model.net, heldout);
        }
        result.log.push_back(row);
        if (progress) {
            progress(row);
        }
    }

    const std::vector<Batch> train_whole = whole_trajectories(split.train, model);
    model.meta.iterations = cfg.iterations;
    model.meta.seed = cfg.seed;
    model.meta.train_trajectories = split.train.size();
    model.meta.heldout_trajectories = split.heldout.size();
    for (const Trajectory* t : split.train) {
        model.meta.train_samples += t->size();
    }
    for (const Trajectory* t : split.heldout) {
        model.meta.heldout_samples += t->size();
    }
    model.meta.final_train_mse = dataset_mse(model.net, train_whole);
    model.meta.final_heldout_mse = heldout.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                   : dataset_mse(model.net, heldout);
    model.meta.final_total = result.log.back().loss.total;
    return result;
}

void write_train_log_csv(const std::vector<TrainLogRow>& log, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) {
        throw Error(ErrorCode::kIo, "cannot open '" + path + "' for writing");
    }
    std::fprintf(f, "iteration,mse,physics,current,rocof,rocov,total,heldout_mse\n");
    for (const auto& r : log) {
        std::fprintf(f, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,", r.iteration, r.loss.mse, r.loss.physics,
                     r.loss.current, r.loss.rocof, r.loss.rocov, r.loss.total);
        if (std::isfinite(r.heldout_mse)) {
            std::fprintf(f, "%.17g", r.heldout_mse);
        }
        std::fprintf(f, "\n");
    }
    if (std::fclose(f) != 0) {
        throw Error(ErrorCode::kIo, "failed writing '" + path + "'");
    }
}

// ---------------------------------------------------------------------------
// Closed loop

PinnStep pinn_controller_step(const PinnModel& model, const Measurements& meas, const DQ0& v_pcc_dq,
                              double theta, double omega, const DQ0& v_ref, double rocof,
                              double rocov, double v_dc_ref) {
    PinnStep s;
    s.features = assemble_features(meas, omega, v_ref, v_pcc_dq, rocof, rocov);
    const auto y = model.predict_dq(s.features);
    s.v_star_dq = DQ0{y[0], y[1], 0.0, theta};
    s.v_s_ab_ref = dq0_to_ab0(s.v_star_dq, theta);
    s.modulation = modulation(s.v_s_ab_ref, v_dc_ref);
    return s;
}

PinnController::PinnController(std::shared_ptr<const PinnModel> model, ConverterParams params,
                               ControlGains gains, DroopOptions options)
    : DroopController(params, gains, options), model_(std::move(model)) {
    if (!model_) {
        throw Error(ErrorCode::kConfig, "PINN controller needs a model");
    }
    model_->check();
}

InnerLoopOutput PinnController::inner_loop(const Measurements&, const DQ0&,
                                           const FeatureVector& features, const ControlGains&,
                                           double) {
    const auto y = model_->predict_dq(features);
    InnerLoopOutput out;
    out.v_star = DQ0{y[0], y[1], 0.0, 0.0};
    return out;
}

}  // namespace gfc
