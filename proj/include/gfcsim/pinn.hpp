#pragma once

// Physics-informed MLP that stands in for the AC voltage and current loops:
// features, network, composite loss, Adam training, model files and the
// closed-loop adapter.

#include "gfcsim/controllers.hpp"
#include "gfcsim/features.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace gfc {

// ---------------------------------------------------------------------------
// Data

// One GFC's samples from one run, uniformly spaced in time. Targets are the
// teacher's switching-voltage reference in alpha-beta; theta is the droop
// angle it was produced at.
struct Trajectory {
    std::string scenario_id;
    std::string gfc;
    std::vector<double> time;
    std::vector<FeatureVector> features;
    std::vector<std::array<double, 2>> targets_ab;
    std::vector<double> theta;

    std::size_t size() const { return time.size(); }
};

struct TrainingSet {
    std::vector<Trajectory> trajectories;
    double sample_period = 0.01;

    std::size_t sample_count() const;
};

// Teacher target in the rotating frame of the sample.
std::array<double, 2> target_dq(const Trajectory& traj, std::size_t k);

// ---------------------------------------------------------------------------
// Network

struct Mlp {
    std::vector<Eigen::MatrixXd> weights;  // weights[l]: out x in
    std::vector<Eigen::VectorXd> biases;

    // Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases.
    static Mlp xavier(const std::vector<int>& sizes, std::uint64_t seed);
    static Mlp zeros(const std::vector<int>& sizes);

    std::vector<int> sizes() const;
    int input_size() const { return static_cast<int>(weights.front().cols()); }
    int output_size() const { return static_cast<int>(weights.back().rows()); }
    std::size_t parameter_count() const;
    // Throws Error(kShapeMismatch) if consecutive layers do not chain.
    void check() const;
};

// activations[0] is the input, activations[l] the output of hidden layer l,
// the last entry the linear output.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> activations;
};

// Batched forward pass over the columns of x. Sigmoid hidden layers, linear
// output. Throws Error(kShapeMismatch).
Eigen::MatrixXd forward(const Mlp& net, const Eigen::MatrixXd& x, ForwardCache* cache = nullptr);

struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    static Gradients zeros_like(const Mlp& net);
};

// ---------------------------------------------------------------------------
// Losses

struct LossWeights {
    double pde = 0.1;
    double current = 1.0;
    double rocof = 0.1;
    double rocov = 0.1;
};

enum class PenaltyMode {
    kLiteral,   // constraint terms are logged and added but carry no gradient
    kReweight,  // each sample's squared error is scaled by 1 + its penalty
};

struct LossComponents {
    double mse{};
    double physics{};
    double current{};
    double rocof{};
    double rocov{};
    double total{};
};

// Mean of squared entries of pred - target. Throws Error(kEmptyBatch) or
// Error(kShapeMismatch).
double loss_mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);
// Mean over components and consecutive columns of |(y[k+1] - y[k]) / dt + y[k]|.
// Throws Error(kTrajectoryTooShort) with fewer than two columns.
double loss_physics(const Eigen::MatrixXd& pred, double dt);
// Mean of max(0, |i_dq0| - 1.2 i_peak) over the output-current features.
double loss_current(const std::vector<FeatureVector>& batch, double i_peak);
double loss_rocof(const std::vector<FeatureVector>& batch);
double loss_rocov(const std::vector<FeatureVector>& batch);
double total_loss(const LossComponents& c, const LossWeights& w);

// A training batch in normalized units. Columns are samples; `pairs` lists
// column indices (k, k + 1) of time-adjacent samples of one trajectory.
struct Batch {
    Eigen::MatrixXd x;
    Eigen::MatrixXd y;
    Eigen::VectorXd current_excess;  // A, max(0, |i| - 1.2 i_peak)
    Eigen::VectorXd rocof;
    Eigen::VectorXd rocov;
    std::vector<std::pair<int, int>> pairs;
};

struct LossConfig {
    LossWeights lambdas{};
    PenaltyMode mode = PenaltyMode::kLiteral;
    double dt = 0.01;
    double i_peak = 1.0;
    // The physics residual is evaluated on y * physics_scale + physics_offset
    // per output row, e.g. the de-normalized prediction in per unit.
    std::array<double, 2> physics_scale{1.0, 1.0};
    std::array<double, 2> physics_offset{0.0, 0.0};
};

// Loss components of the batch and, if grad is given, their exact gradient
// with respect to every weight and bias.
LossComponents evaluate_loss(const Mlp& net, const Batch& batch, const LossConfig& cfg,
                             Gradients* grad = nullptr);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Gradients m;
    Gradients v;
    long t = 0;

    static AdamState for_model(const Mlp& net);
};

// One bias-corrected Adam update with learning rate `lr`; advances state.t.
void adam_step(Mlp& net, const Gradients& grad, AdamState& state, const AdamConfig& cfg, double lr);

// ---------------------------------------------------------------------------
// Model

struct TrainingMeta {
    int iterations{};
    std::uint64_t seed{};
    std::size_t train_samples{};
    std::size_t heldout_samples{};
    std::size_t train_trajectories{};
    std::size_t heldout_trajectories{};
    double final_train_mse = std::numeric_limits<double>::quiet_NaN();
    double final_heldout_mse = std::numeric_limits<double>::quiet_NaN();
    double final_total = std::numeric_limits<double>::quiet_NaN();
};

struct PinnModel {
    Mlp net;
    FeatureVector feature_mean{};
    FeatureVector feature_std{};
    std::array<double, 2> target_mean{};
    std::array<double, 2> target_std{};
    LossWeights lambdas{};
    PenaltyMode penalty_mode = PenaltyMode::kLiteral;
    double i_peak{};
    TrainingMeta meta{};

    FeatureVector normalize(const FeatureVector& x) const;
    FeatureVector denormalize(const FeatureVector& z) const;
    // Rotating-frame switching-voltage reference for raw features.
    std::array<double, 2> predict_dq(const FeatureVector& x) const;
    // Throws Error(kCorruptModel) on inconsistent shapes or statistics.
    void check() const;
};

inline constexpr int kModelFormatVersion = 1;

void save_model(const PinnModel& model, const std::string& path);
// Throws Error(kCorruptModel) on a malformed file or version mismatch, and
// Error(kIo) if the file cannot be read.
PinnModel load_model(const std::string& path);

// ---------------------------------------------------------------------------
// Training

enum class PhysicsUnits {
    kPerUnit,     // de-normalized prediction over the voltage base
    kNormalized,  // the network's normalized output
};

struct TrainConfig {
    int iterations = 6000;
    AdamConfig adam{};
    // Cosine decay of the learning rate to lr * lr_final_fraction.
    double lr_final_fraction = 0.01;
    std::vector<int> hidden{128, 128, 128};
    std::uint64_t seed = 1;
    // Training samples are cut into windows of consecutive samples, which
    // are dealt into a fixed set of minibatches visited cyclically.
    int batches = 100;
    int window = 50;
    double holdout_fraction = 0.2;
    int heldout_every = 100;
    LossWeights lambdas{};
    PenaltyMode penalty_mode = PenaltyMode::kLiteral;
    double i_peak = 0.0;  // 0: rated peak current of the default converter
    PhysicsUnits physics_units = PhysicsUnits::kPerUnit;
    double voltage_base = 0.0;  // V, 0: nominal phase peak of the default converter
};

struct TrainLogRow {
    int iteration{};
    LossComponents loss{};
    double heldout_mse = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
    PinnModel model;
    std::vector<TrainLogRow> log;
};

// Throws Error(kEmptyBatch) on an empty set and Error(kDiverged) if the loss
// becomes non-finite.
TrainResult train(const TrainingSet& data, const TrainConfig& cfg,
                  const std::function<void(const TrainLogRow&)>& progress = {});

void write_train_log_csv(const std::vector<TrainLogRow>& log, const std::string& path);

// ---------------------------------------------------------------------------
// Closed loop

struct PinnStep {
    FeatureVector features{};
    DQ0 v_star_dq{};
    AlphaBeta0 v_s_ab_ref{};
    AlphaBeta0 modulation{};
};

// Feature assembly, inference and modulation for one sample. DC voltage
// control is left to the caller.
PinnStep pinn_controller_step(const PinnModel& model, const Measurements& meas, const DQ0& v_pcc_dq,
                              double theta, double omega, const DQ0& v_ref, double rocof,
                              double rocov, double v_dc_ref);

// Droop and DC voltage control stay classical; the network replaces the AC
// voltage control, current limitation and current control.
class PinnController : public DroopController {
public:
    PinnController(std::shared_ptr<const PinnModel> model, ConverterParams params,
                   ControlGains gains, DroopOptions options = {});

protected:
    InnerLoopOutput inner_loop(const Measurements& meas, const DQ0& v_ref,
                               const FeatureVector& features, const ControlGains& gains,
                               double dt) override;

private:
    std::shared_ptr<const PinnModel> model_;
};

}  // namespace gfc
