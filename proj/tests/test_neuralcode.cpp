#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "test_util.hpp"

using namespace chronode;
using testutil::fd_grad;
using testutil::random_tensor;
using testutil::rel_err;

namespace {

Batch make_batch(const NeuralCodeModel& model, const std::vector<Real>& times, Rng& rng) {
    Batch b;
    b.times = times;
    for (std::size_t i = 0; i < times.size(); ++i)
        b.targets.push_back(random_tensor(model.state_dim(), 1, rng, -1, 1));
    return b;
}

TimeSeries tiny_spiral(int n) { return gen_spiral(n, 3.0, Tensor::column({2.0, 0.0})); }

}  // namespace

TEST_CASE("window_batch copies the right slice") {
    TimeSeries ts = tiny_spiral(12);
    Batch b = window_batch(ts, 3, 4);
    REQUIRE(b.times.size() == 4);
    CHECK(b.times[0] == ts.times[3]);
    CHECK(b.times[3] == ts.times[6]);
    CHECK(max_abs_diff(b.targets[2], ts.observation(5)) == 0.0);
}

TEST_CASE("forward loss vanishes on targets generated by the model itself") {
    Rng rng(9);
    NeuralCodeModel model = NeuralCodeModel::make(2, 6, Activation::Tanh, rng);
    std::vector<Real> times{0.0, 0.4, 0.9, 1.5};
    Tensor h0 = random_tensor(2, 1, rng, -1, 1);

    Batch b;
    b.times = times;
    {
        Tape tape;
        ParamBinding bind(tape);
        Trajectory traj =
            solve_ivp(dynamics_field(bind, model.dynamics), tape.leaf(h0), times, model.solver);
        for (const Var& s : traj.states) b.targets.push_back(s.value());
    }
    Tape tape;
    ParamBinding bind(tape);
    CHECK(code_forward_loss(bind, model, b).value()(0, 0) < 1e-28);
}

TEST_CASE("forward loss matches a hand-assembled reference") {
    Rng rng(10);
    NeuralCodeModel model = NeuralCodeModel::make(2, 5, Activation::Tanh, rng);
    Batch b = make_batch(model, {0.0, 0.5, 1.0}, rng);

    auto plain_field = [&](const Tensor& y, Real t) {
        Tape t2;
        ParamBinding b2(t2);
        return forward_mlp(b2, model.dynamics, t2.leaf(y), t).value();
    };
    std::vector<Tensor> states = integrate_rk4(plain_field, b.targets[0], b.times, 10);
    Real expect = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
        Tensor diff = sub(states[i], b.targets[i]);
        Real s = 0.0;
        for (int k = 0; k < diff.size(); ++k) s += diff[k] * diff[k];
        expect += s / diff.size();
    }
    expect /= states.size();

    Tape tape;
    ParamBinding bind(tape);
    CHECK(code_forward_loss(bind, model, b).value()(0, 0) == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("total loss is the exact sum of the forward and backward terms") {
    Rng rng(11);
    NeuralCodeModel model = NeuralCodeModel::make(3, 6, Activation::Tanh, rng);
    Batch b = make_batch(model, {0.0, 0.3, 0.8, 1.1}, rng);
    Tape tape;
    ParamBinding bind(tape);
    Real fwd = code_forward_loss(bind, model, b).value()(0, 0);
    Real bwd = code_backward_loss(bind, model, b).value()(0, 0);
    Real total = code_total_loss(bind, model, b).value()(0, 0);
    CHECK(total == Catch::Approx(fwd + bwd).epsilon(1e-14));
}

TEST_CASE("total loss gradient matches finite differences") {
    Rng rng(12);
    NeuralCodeModel model = NeuralCodeModel::make(2, 4, Activation::Tanh, rng);
    model.solver.substeps = 4;
    Batch b = make_batch(model, {0.0, 0.5, 1.0}, rng);
    auto eval = [&]() {
        Tape tape;
        ParamBinding bind(tape);
        return code_total_loss(bind, model, b).value()(0, 0);
    };
    Tape tape;
    ParamBinding bind(tape);
    backward(code_total_loss(bind, model, b));
    for (Tensor* p : model.parameters())
        CHECK(rel_err(bind.grad_of(*p), fd_grad(*p, eval)) < 1e-4);
}

TEST_CASE("training lowers the loss on a short spiral") {
    TimeSeries ts = tiny_spiral(10);
    Rng rng(13);
    NeuralCodeModel model = NeuralCodeModel::make(2, 16, Activation::Tanh, rng);
    TrainConfig cfg;
    cfg.max_iter = 60;
    cfg.lr = 5e-3;
    cfg.seq_len = 10;  // the whole series, so every iteration sees one window
    cfg.loss_log_every = 1;
    TrainResult r = train_neural_code(model, ts, cfg);
    REQUIRE(r.history.size() == 60);
    CHECK(r.history.back().total < 0.5 * r.history.front().total);
    // Both terms are present and consistent.
    for (const LossRecord& rec : r.history) {
        CHECK(std::isfinite(rec.backward_mse));
        CHECK(rec.total == Catch::Approx(rec.forward_mse + rec.backward_mse).epsilon(1e-12));
    }
}

TEST_CASE("the forward-only variant trains without a backward term") {
    TimeSeries ts = tiny_spiral(10);
    Rng rng(14);
    NeuralCodeModel model = NeuralCodeModel::make(2, 16, Activation::Tanh, rng);
    TrainConfig cfg;
    cfg.max_iter = 40;
    cfg.lr = 5e-3;
    cfg.seq_len = 10;
    cfg.loss_log_every = 1;
    TrainResult r = train_neural_ode(model, ts, cfg);
    for (const LossRecord& rec : r.history) {
        CHECK(!std::isfinite(rec.backward_mse));
        CHECK(rec.total == rec.forward_mse);
    }
    CHECK(r.history.back().total < r.history.front().total);
}

TEST_CASE("identical config and seed reproduce the loss history bit for bit") {
    TimeSeries ts = tiny_spiral(14);
    TrainConfig cfg;
    cfg.max_iter = 15;
    cfg.seq_len = 8;
    cfg.seed = 21;
    cfg.loss_log_every = 1;
    auto run = [&]() {
        Rng rng(100);
        NeuralCodeModel model = NeuralCodeModel::make(2, 8, Activation::Tanh, rng);
        return train_neural_code(model, ts, cfg);
    };
    TrainResult a = run(), b = run();
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].forward_mse == b.history[i].forward_mse);
        CHECK(a.history[i].backward_mse == b.history[i].backward_mse);
        CHECK(a.history[i].total == b.history[i].total);
    }
}

TEST_CASE("training validates inputs") {
    TimeSeries ts = tiny_spiral(6);
    Rng rng(15);
    NeuralCodeModel model = NeuralCodeModel::make(2, 4, Activation::Tanh, rng);
    TrainConfig cfg;
    cfg.seq_len = 10;
    CHECK_THROWS_AS(train_neural_code(model, ts, cfg), DimensionError);
    NeuralCodeModel wrong_dim = NeuralCodeModel::make(3, 4, Activation::Tanh, rng);
    cfg.seq_len = 4;
    CHECK_THROWS_AS(train_neural_code(wrong_dim, ts, cfg), DimensionError);
}

TEST_CASE("prediction wrappers") {
    Rng rng(16);
    NeuralCodeModel model = NeuralCodeModel::make(2, 6, Activation::Tanh, rng);
    Tensor h0 = random_tensor(2, 1, rng, -1, 1);

    SECTION("future then past round trip") {
        model.solver.substeps = 100;
        PredictedPath fwd = predict_future(model, h0, {0.0, 0.5, 1.0});
        REQUIRE(fwd.states.size() == 3);
        PredictedPath bwd = predict_past(model, fwd.states.back(), {1.0, 0.5, 0.0});
        CHECK(max_abs_diff(bwd.states.back(), h0) < 1e-8);
        CHECK(max_abs_diff(bwd.states[1], fwd.states[1]) < 1e-8);
    }
    SECTION("a minimal two-point grid works") {
        PredictedPath p = predict_future(model, h0, {0.0, 0.25});
        REQUIRE(p.states.size() == 2);
        CHECK(max_abs_diff(p.states.front(), h0) == 0.0);
        CHECK(p.states.back().all_finite());
    }
    SECTION("zero dynamics predicts a constant") {
        for (Tensor* p : model.parameters()) *p = Tensor::zeros(p->rows(), p->cols());
        PredictedPath p = predict_future(model, h0, {0.0, 1.0, 2.0});
        for (const Tensor& s : p.states) CHECK(max_abs_diff(s, h0) == 0.0);
    }
}

TEST_CASE("loss history file format") {
    std::vector<LossRecord> hist{
        {0, 0.5, 0.25, 0.75},
        {20, 0.125, std::numeric_limits<Real>::quiet_NaN(), 0.125},
    };
    std::string path = "loss_history_test.csv";
    write_loss_history(hist, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "iteration,forward_mse,backward_mse,total");
    std::getline(in, line);
    CHECK(line == "0,0.5,0.25,0.75");
    std::getline(in, line);
    CHECK(line == "20,0.125,,0.125");
    in.close();
    std::remove(path.c_str());
}
