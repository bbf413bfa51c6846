#include "gfcsim/error.hpp"
#include "gfcsim/pinn.hpp"

#include <doctest.h>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace gfc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::string temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "gfcsim-tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

Batch random_batch(std::mt19937_64& rng, int n, int in, int out) {
    std::normal_distribution<double> z(0.0, 1.0);
    Batch b;
    b.x = MatrixXd(in, n);
    b.y = MatrixXd(out, n);
    for (Eigen::Index i = 0; i < b.x.size(); ++i) b.x(i) = z(rng);
    for (Eigen::Index i = 0; i < b.y.size(); ++i) b.y(i) = z(rng);
    b.current_excess = VectorXd::Zero(n);
    b.rocof = VectorXd::Zero(n);
    b.rocov = VectorXd::Zero(n);
    for (int k = 0; k + 1 < n; ++k) b.pairs.emplace_back(k, k + 1);
    return b;
}

// Central finite difference of the total loss for every parameter, compared
// with the analytic gradient as a relative error over the whole vector.
double gradient_error(Mlp net, const Batch& batch, const LossConfig& cfg) {
    Gradients g;
    evaluate_loss(net, batch, cfg, &g);
    const double eps = 1e-5;
    double diff2 = 0.0;
    double norm2 = 0.0;
    auto probe = [&](double& p, double analytic) {
        const double keep = p;
        p = keep + eps;
        const double up = evaluate_loss(net, batch, cfg).total;
        p = keep - eps;
        const double down = evaluate_loss(net, batch, cfg).total;
        p = keep;
        const double fd = (up - down) / (2 * eps);
        diff2 += (fd - analytic) * (fd - analytic);
        norm2 += fd * fd;
    };
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        for (Eigen::Index i = 0; i < net.weights[l].size(); ++i) probe(net.weights[l](i), g.weights[l](i));
        for (Eigen::Index i = 0; i < net.biases[l].size(); ++i) probe(net.biases[l](i), g.biases[l](i));
    }
    return std::sqrt(diff2 / norm2);
}

PinnModel small_model(std::uint64_t seed) {
    PinnModel m;
    m.net = Mlp::xavier({18, 6, 6, 2}, seed);
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
        m.feature_mean[f] = 10.0 * f - 40.0;
        m.feature_std[f] = 1.0 + 0.5 * f;
    }
    m.target_mean = {800.0, -20.0};
    m.target_std = {40.0, 15.0};
    m.i_peak = 408.25;
    return m;
}

}  // namespace

TEST_CASE("forward pass") {
    const Mlp zero = Mlp::zeros({18, 128, 128, 128, 2});
    CHECK(zero.parameter_count() == 18 * 128 + 128 + 2 * (128 * 128 + 128) + 128 * 2 + 2);
    std::mt19937_64 rng(1);
    const MatrixXd x = MatrixXd::Random(18, 5);
    CHECK(forward(zero, x).cwiseAbs().maxCoeff() == 0.0);

    // One hidden unit at zero pre-activation contributes sigma(0) = 0.5.
    Mlp one = Mlp::zeros({3, 1, 1});
    one.weights[1](0, 0) = 4.0;
    one.biases[1](0) = 1.0;
    CHECK(forward(one, MatrixXd::Random(3, 1))(0, 0) == doctest::Approx(3.0));

    const Mlp net = Mlp::xavier({18, 7, 5, 2}, 3);
    const MatrixXd y = forward(net, x);
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
        VectorXd h = x.col(k);
        for (std::size_t l = 0; l < net.weights.size(); ++l) {
            VectorXd z(net.weights[l].rows());
            for (Eigen::Index r = 0; r < z.size(); ++r) {
                double s = net.biases[l](r);
                for (Eigen::Index c = 0; c < h.size(); ++c) s += net.weights[l](r, c) * h(c);
                z(r) = l + 1 < net.weights.size() ? 1.0 / (1.0 + std::exp(-s)) : s;
            }
            h = z;
        }
        CHECK(std::abs(h(0) - y(0, k)) < 1e-12);
        CHECK(std::abs(h(1) - y(1, k)) < 1e-12);
    }

    CHECK_THROWS_AS(forward(net, MatrixXd::Random(17, 2)), Error);
}

TEST_CASE("mse loss") {
    MatrixXd p(2, 3);
    p << 1, 2, 3, 4, 5, 6;
    CHECK(loss_mse(p, p) == 0.0);
    MatrixXd t = MatrixXd::Zero(2, 1);
    MatrixXd q(2, 1);
    q << 1, 0;
    CHECK(loss_mse(q, t) == 0.5);
    MatrixXd r = MatrixXd::Random(2, 7);
    MatrixXd z = MatrixXd::Zero(2, 7);
    CHECK(loss_mse(2.0 * r, z) == doctest::Approx(4.0 * loss_mse(r, z)));
    CHECK_THROWS_AS(loss_mse(MatrixXd(2, 0), MatrixXd(2, 0)), Error);
}

TEST_CASE("physics loss") {
    const double dt = 0.01;
    CHECK(loss_physics(MatrixXd::Zero(2, 10), dt) == 0.0);
    CHECK(loss_physics(MatrixXd::Constant(2, 10, -3.0), dt) == doctest::Approx(3.0));
    MatrixXd e(2, 100);
    for (int k = 0; k < 100; ++k) {
        e(0, k) = std::exp(-k * dt);
        e(1, k) = 2.0 * std::exp(-k * dt);
    }
    CHECK(loss_physics(e, dt) < dt);
    try {
        loss_physics(MatrixXd::Zero(2, 1), dt);
        FAIL("expected an error");
    } catch (const Error& err) {
        CHECK(err.code() == ErrorCode::kTrajectoryTooShort);
    }
}

TEST_CASE("constraint penalties") {
    const double i_peak = 400.0;
    std::vector<FeatureVector> batch(2);
    CHECK(loss_current(batch, i_peak) == 0.0);
    batch[0][kFeatIdM] = 1.3 * i_peak * 0.6;
    batch[0][kFeatIqM] = 1.3 * i_peak * 0.8;
    CHECK(loss_current({batch[0]}, i_peak) == doctest::Approx(0.1 * i_peak));
    batch[1][kFeatIdM] = 1.2 * i_peak;
    CHECK(loss_current({batch[1]}, i_peak) == 0.0);

    std::vector<FeatureVector> rates(2);
    CHECK(loss_rocof(rates) == 0.0);
    rates[0][kFeatRocof] = 0.02;
    rates[1][kFeatRocof] = -0.02;
    CHECK(loss_rocof(rates) == doctest::Approx(0.02));
    rates[0][kFeatRocof] = -0.02;
    rates[1][kFeatRocof] = 0.02;
    CHECK(loss_rocof(rates) == doctest::Approx(0.02));
    rates[0][kFeatRocov] = 0.5;
    CHECK(loss_rocov(rates) == doctest::Approx(0.25));
}

TEST_CASE("total loss") {
    const LossComponents ones{1, 1, 1, 1, 1, 0};
    CHECK(total_loss(ones, LossWeights{}) == doctest::Approx(2.3));
    CHECK(total_loss(ones, LossWeights{0, 0, 0, 0}) == 1.0);
    LossWeights w;
    const double base = total_loss(ones, w);
    w.rocov += 0.1;
    CHECK(total_loss(ones, w) > base);
}

TEST_CASE("all loss components are non-negative") {
    std::mt19937_64 rng(9);
    const Mlp net = Mlp::xavier({18, 5, 5, 2}, 9);
    for (int n = 0; n < 20; ++n) {
        Batch b = random_batch(rng, 12, 18, 2);
        b.current_excess = VectorXd::Random(12).cwiseAbs();
        b.rocof = VectorXd::Random(12);
        b.rocov = VectorXd::Random(12);
        const LossComponents c = evaluate_loss(net, b, LossConfig{});
        REQUIRE(c.mse >= 0.0);
        REQUIRE(c.physics >= 0.0);
        REQUIRE(c.current >= 0.0);
        REQUIRE(c.rocof >= 0.0);
        REQUIRE(c.rocov >= 0.0);
        LossConfig none;
        none.lambdas = {0, 0, 0, 0};
        REQUIRE(evaluate_loss(net, b, none).total == c.mse);
    }
}

TEST_CASE("backward matches finite differences") {
    std::mt19937_64 rng(21);
    const Mlp net = Mlp::xavier({18, 4, 4, 4, 2}, 21);
    LossConfig cfg;
    cfg.lambdas = {0.1, 1.0, 0.1, 0.1};
    Batch b = random_batch(rng, 4, 18, 2);
    CHECK(gradient_error(net, b, cfg) < 1e-5);

    cfg.mode = PenaltyMode::kReweight;
    cfg.i_peak = 1.0;
    b.current_excess = VectorXd::Random(4).cwiseAbs();
    b.rocof = VectorXd::Random(4);
    CHECK(gradient_error(net, b, cfg) < 1e-5);

    cfg.physics_scale = {0.05, 0.02};
    cfg.physics_offset = {1.0, 0.1};
    CHECK(gradient_error(net, b, cfg) < 1e-5);
}

TEST_CASE("gradient properties") {
    std::mt19937_64 rng(4);
    const Mlp net = Mlp::xavier({18, 4, 4, 4, 2}, 4);
    Batch b = random_batch(rng, 6, 18, 2);
    b.pairs.clear();
    LossConfig cfg;
    cfg.lambdas.pde = 0.0;

    Batch exact = b;
    exact.y = forward(net, b.x);
    Gradients g;
    evaluate_loss(net, exact, cfg, &g);
    double norm = 0.0;
    for (const auto& w : g.weights) norm += w.squaredNorm();
    CHECK(norm == 0.0);

    Gradients g1;
    evaluate_loss(net, b, cfg, &g1);
    Batch doubled = b;
    doubled.y = forward(net, b.x) - 2.0 * (forward(net, b.x) - b.y);
    Gradients g2;
    evaluate_loss(net, doubled, cfg, &g2);
    for (std::size_t l = 0; l < g1.weights.size(); ++l) {
        CHECK((g2.weights[l] - 2.0 * g1.weights[l]).norm() < 1e-12 * (1.0 + g1.weights[l].norm()));
    }
}

TEST_CASE("adam") {
    Mlp net = Mlp::xavier({3, 2, 1}, 2);
    const Mlp start = net;
    AdamState s = AdamState::for_model(net);
    Gradients zero = Gradients::zeros_like(net);
    adam_step(net, zero, s, AdamConfig{}, 1e-3);
    CHECK((net.weights[0] - start.weights[0]).norm() == 0.0);

    Mlp a = start;
    AdamState sa = AdamState::for_model(a);
    Gradients ones = Gradients::zeros_like(a);
    for (auto& w : ones.weights) w.setOnes();
    for (auto& b : ones.biases) b.setOnes();
    adam_step(a, ones, sa, AdamConfig{}, 1e-3);
    CHECK(a.weights[0](0, 0) - start.weights[0](0, 0) == doctest::Approx(-9.99999e-4).epsilon(1e-6));
    const double after_one = a.weights[1](0, 0);
    adam_step(a, ones, sa, AdamConfig{}, 1e-3);
    CHECK(a.weights[1](0, 0) < after_one);
    CHECK(after_one < start.weights[1](0, 0));
}

TEST_CASE("normalization round trip") {
    const PinnModel m = small_model(5);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    for (int n = 0; n < 100; ++n) {
        FeatureVector x;
        for (double& v : x) v = u(rng);
        const FeatureVector y = m.denormalize(m.normalize(x));
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            REQUIRE(std::abs(y[f] - x[f]) <= 1e-12 * std::max(1.0, std::abs(x[f])));
        }
    }
}

TEST_CASE("model files") {
    PinnModel m = small_model(6);
    m.meta.iterations = 12;
    m.meta.final_train_mse = 0.25;
    const std::string path = temp_path("model.json");
    save_model(m, path);
    const PinnModel back = load_model(path);
    FeatureVector x{};
    for (std::size_t f = 0; f < kFeatureCount; ++f) x[f] = 3.0 * f + 0.125;
    const auto a = m.predict_dq(x);
    const auto b = back.predict_dq(x);
    CHECK(a[0] == b[0]);
    CHECK(a[1] == b[1]);
    for (std::size_t l = 0; l < m.net.weights.size(); ++l) {
        CHECK(m.net.weights[l] == back.net.weights[l]);
        CHECK(m.net.biases[l] == back.net.biases[l]);
    }
    CHECK(back.feature_std == m.feature_std);
    CHECK(back.meta.iterations == 12);
    CHECK(std::isnan(back.meta.final_heldout_mse));

    nlohmann::json j;
    std::ifstream(path) >> j;
    nlohmann::json bad = j;
    bad["layers"][1]["cols"] = 5;
    std::ofstream(temp_path("bad_shape.json")) << bad.dump();
    try {
        load_model(temp_path("bad_shape.json"));
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kCorruptModel);
    }

    bad = j;
    bad["version"] = 99;
    std::ofstream(temp_path("bad_version.json")) << bad.dump();
    try {
        load_model(temp_path("bad_version.json"));
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kCorruptModel);
        CHECK(std::string(e.what()).find("version") != std::string::npos);
    }

    CHECK_THROWS_AS(load_model(temp_path("missing.json")), Error);
}

TEST_CASE("controller step is deterministic") {
    const PinnModel m = small_model(7);
    Measurements meas;
    meas.v_dq = {810.0, 3.0, 0.0, 0.0};
    meas.i_dq = {200.0, -15.0, 0.0, 0.0};
    meas.i_s_dq = {205.0, 60.0, 0.0, 0.0};
    meas.p = 2.4e5;
    meas.q = 1e4;
    const DQ0 vpcc{805.0, 1.0, 0.0, 0.0};
    const DQ0 vref{816.5, 0.0, 0.0, 0.0};
    const PinnStep a = pinn_controller_step(m, meas, vpcc, 0.3, 314.0, vref, 0.01, 0.02, 2440.0);
    const PinnStep b = pinn_controller_step(m, meas, vpcc, 0.3, 314.0, vref, 0.01, 0.02, 2440.0);
    CHECK(a.modulation == b.modulation);
    const auto dq = m.predict_dq(a.features);
    CHECK(a.v_star_dq.d == dq[0]);
    CHECK(a.modulation.alpha ==
          doctest::Approx(2.0 / 2440.0 * (dq[0] * std::cos(0.3) - dq[1] * std::sin(0.3))).epsilon(1e-14));
}

TEST_CASE("training fits a constant target") {
    TrainingSet set;
    std::mt19937_64 rng(8);
    std::normal_distribution<double> z(0.0, 1.0);
    for (int s = 0; s < 5; ++s) {
        Trajectory t;
        t.scenario_id = "run" + std::to_string(s);
        t.gfc = "GFC1";
        for (int k = 0; k < 60; ++k) {
            t.time.push_back(0.01 * k);
            FeatureVector x;
            for (double& v : x) v = z(rng);
            t.features.push_back(x);
            const double th = 314.159 * 0.01 * k;
            const AlphaBeta0 ab = dq0_to_ab0(DQ0{800.0, -25.0, 0.0, 0.0}, th);
            t.targets_ab.push_back({ab.alpha, ab.beta});
            t.theta.push_back(th);
        }
        set.trajectories.push_back(t);
    }
    TrainConfig cfg;
    cfg.iterations = 400;
    cfg.hidden = {8};
    cfg.batches = 4;
    cfg.window = 20;
    cfg.lambdas.pde = 0.0;
    cfg.adam.lr = 1e-2;
    const TrainResult r = train(set, cfg);
    CHECK(r.log.size() == 400);
    CHECK(r.model.meta.final_train_mse < 1e-3);
    CHECK(r.model.meta.heldout_trajectories == 1);
    const auto y = r.model.predict_dq(set.trajectories[0].features[10]);
    CHECK(y[0] == doctest::Approx(800.0).epsilon(1e-4));
    CHECK(y[1] == doctest::Approx(-25.0).epsilon(1e-3));

    const TrainResult again = train(set, cfg);
    for (std::size_t i = 0; i < r.log.size(); ++i) {
        REQUIRE(r.log[i].loss.total == again.log[i].loss.total);
    }

    const std::string log = temp_path("train_log.csv");
    write_train_log_csv(r.log, log);
    std::ifstream in(log);
    std::string header;
    std::getline(in, header);
    CHECK(header == "iteration,mse,physics,current,rocof,rocov,total,heldout_mse");
}

TEST_CASE("training rejects bad input") {
    CHECK_THROWS_AS(train(TrainingSet{}, TrainConfig{}), Error);
}
