#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"

using namespace chronode;
using testutil::fd_grad;
using testutil::random_tensor;
using testutil::rel_err;

namespace {

void zero_params(DynamicsNet& net) {
    for (Tensor* p : net.parameters()) *p = Tensor::zeros(p->rows(), p->cols());
}

}  // namespace

TEST_CASE("forward_mlp with all-zero params and tanh gives zero output") {
    Rng rng(1);
    DynamicsNet net = DynamicsNet::make(3, {5}, Activation::Tanh, rng);
    zero_params(net);
    Tape tape;
    ParamBinding bind(tape);
    Var out = forward_mlp(bind, net, tape.leaf(Tensor::column({1, 2, 3})), 0.7);
    for (int i = 0; i < out.value().size(); ++i) CHECK(out.value()[i] == 0.0);
}

TEST_CASE("forward_mlp with identity activations is the composed linear map") {
    Rng rng(2);
    DynamicsNet net = DynamicsNet::make(2, {3, 3}, Activation::Identity, rng);
    Tensor x = Tensor::column({0.4, -0.9});
    Real t = 0.25;
    Tape tape;
    ParamBinding bind(tape);
    Var out = forward_mlp(bind, net, tape.leaf(x), t);

    // Hand linear algebra: W_out(W1(W_in [x;t] + b_in) + b1) + b_out
    Tensor xt(3, 1);
    xt(0, 0) = x(0, 0);
    xt(1, 0) = x(1, 0);
    xt(2, 0) = t;
    Tensor h = add(matmul(net.input.W, xt), net.input.b);
    h = add(matmul(net.hidden[0].W, h), net.hidden[0].b);
    h = add(matmul(net.output.W, h), net.output.b);
    CHECK(max_abs_diff(out.value(), h) < 1e-14);
}

TEST_CASE("forward_mlp gradient matches finite differences for every layer") {
    Rng rng(3);
    DynamicsNet net = DynamicsNet::make(2, {4}, Activation::Tanh, rng);
    Tensor x = random_tensor(2, 1, rng, -1, 1);
    Tensor target = Tensor::zeros(2, 1);
    auto eval = [&]() {
        Tape tape;
        ParamBinding bind(tape);
        return mse(forward_mlp(bind, net, tape.leaf(x), 0.3), target).value()(0, 0);
    };
    Tape tape;
    ParamBinding bind(tape);
    backward(mse(forward_mlp(bind, net, tape.leaf(x), 0.3), target));
    for (Tensor* p : net.parameters()) {
        Tensor analytic = bind.grad_of(*p);
        CHECK(rel_err(analytic, fd_grad(*p, eval)) < 1e-5);
    }
}

TEST_CASE("forward_mlp rejects wrong state width") {
    Rng rng(4);
    DynamicsNet net = DynamicsNet::make(2, {4}, Activation::Tanh, rng);
    Tape tape;
    ParamBinding bind(tape);
    CHECK_THROWS_AS(forward_mlp(bind, net, tape.leaf(Tensor::column({1, 2, 3})), 0.0),
                    DimensionError);
}

TEST_CASE("output_layer") {
    Tape tape;
    ParamBinding bind(tape);
    SECTION("identity with W=I, b=0 passes through") {
        LayerParams lp{Tensor::identity(3), Tensor::zeros(3, 1), Activation::Identity};
        Tensor h = Tensor::column({1, -2, 0.5});
        Var out = output_layer(bind, lp, tape.leaf(h));
        CHECK(max_abs_diff(out.value(), h) == 0.0);
    }
    SECTION("sigmoid of zero params is 0.5") {
        LayerParams lp{Tensor::zeros(2, 3), Tensor::zeros(2, 1), Activation::Sigmoid};
        Var out = output_layer(bind, lp, tape.leaf(Tensor::zeros(3, 1)));
        CHECK(out.value()(0, 0) == 0.5);
        CHECK(out.value()(1, 0) == 0.5);
    }
    SECTION("gradient check") {
        Rng rng(5);
        LayerParams lp = LayerParams::init(2, 3, Activation::Sigmoid, rng);
        Tensor h = random_tensor(3, 1, rng);
        Tensor target = random_tensor(2, 1, rng);
        auto eval = [&]() {
            Tape t2;
            ParamBinding b2(t2);
            return mse(output_layer(b2, lp, t2.leaf(h)), target).value()(0, 0);
        };
        Tape t1;
        ParamBinding b1(t1);
        backward(mse(output_layer(b1, lp, t1.leaf(h)), target));
        CHECK(rel_err(b1.grad_of(lp.W), fd_grad(lp.W, eval)) < 1e-5);
    }
}

TEST_CASE("glorot init") {
    SECTION("same seed gives identical tensors") {
        Rng r1(17), r2(17);
        Tensor a = glorot_uniform(6, 8, r1);
        Tensor b = glorot_uniform(6, 8, r2);
        CHECK(max_abs_diff(a, b) == 0.0);
    }
    SECTION("entries bounded by the Glorot limit") {
        Rng rng(18);
        Tensor a = glorot_uniform(10, 20, rng);
        Real limit = std::sqrt(6.0 / 30.0);
        for (int i = 0; i < a.size(); ++i) CHECK(std::abs(a[i]) <= limit);
    }
    SECTION("mean over 10^4 draws near zero") {
        Rng rng(19);
        Tensor a = glorot_uniform(100, 100, rng);
        Real mean = 0.0;
        for (int i = 0; i < a.size(); ++i) mean += a[i];
        mean /= a.size();
        CHECK(std::abs(mean) < 0.02);
    }
}

TEST_CASE("adam") {
    SECTION("zero gradient is a fixed point") {
        Tensor p{{1.0, -2.0}};
        Tensor before = p;
        std::vector<Tensor*> params{&p};
        AdamState st = AdamState::init(params, 0.01);
        adam_step(params, {Tensor::zeros(1, 2)}, st);
        CHECK(max_abs_diff(p, before) == 0.0);
    }
    SECTION("first step moves by about lr in the negative gradient sign") {
        Tensor p{{1.0, 1.0}};
        std::vector<Tensor*> params{&p};
        AdamState st = AdamState::init(params, 0.001);
        Tensor g{{0.5, -0.3}};
        adam_step(params, {g}, st);
        CHECK(std::abs((1.0 - p(0, 0)) - 0.001) < 1e-6 * 0.001 + 1e-9);
        CHECK(std::abs((p(0, 1) - 1.0) - 0.001) < 1e-6 * 0.001 + 1e-9);
    }
    SECTION("1-D quadratic loss decreases monotonically for 100 steps") {
        Tensor p(1, 1, 3.0);
        std::vector<Tensor*> params{&p};
        AdamState st = AdamState::init(params, 0.01);
        Real prev = p(0, 0) * p(0, 0);
        for (int i = 0; i < 100; ++i) {
            Tensor g(1, 1, 2.0 * p(0, 0));
            adam_step(params, {g}, st);
            Real loss = p(0, 0) * p(0, 0);
            CHECK(loss < prev);
            prev = loss;
        }
    }
    SECTION("shape mismatch rejected") {
        Tensor p(2, 2);
        std::vector<Tensor*> params{&p};
        AdamState st = AdamState::init(params, 0.01);
        CHECK_THROWS_AS(adam_step(params, {Tensor(2, 3)}, st), DimensionError);
    }
}

TEST_CASE("architecture presets conform") {
    Rng rng(20);
    SECTION("spiral preset is 2 -> 50 (tanh) -> 2") {
        DynamicsNet net = spiral_dynamics(rng);
        CHECK(net.input.W.rows() == 50);
        CHECK(net.input.W.cols() == 3);  // d + 1 time coordinate
        CHECK(net.input.act == Activation::Tanh);
        CHECK(net.hidden.empty());
        CHECK(net.output.W.rows() == 2);
        CHECK(net.output.W.cols() == 50);
        // Parameter count is a pure function of (d, n): n(d+1) + n + dn + d.
        CHECK(net.param_count() == 50 * 3 + 50 + 2 * 50 + 2);
    }
    SECTION("real-data preset is d -> 256 (elu) -> d") {
        DynamicsNet net = real_data_dynamics(4, rng);
        CHECK(net.input.W.rows() == 256);
        CHECK(net.input.W.cols() == 5);
        CHECK(net.input.act == Activation::Elu);
        CHECK(net.output.W.rows() == 4);
        CHECK(net.param_count() == 256 * 5 + 256 + 4 * 256 + 4);
    }
}

TEST_CASE("empirical Lipschitz quotient never exceeds the layer-norm product") {
    Rng rng(21);
    for (Activation act : {Activation::Tanh, Activation::Elu}) {
        DynamicsNet net = DynamicsNet::make(3, {8}, act, rng);
        Real bound = lipschitz_bound(net);
        Tape tape;
        ParamBinding bind(tape);
        for (int trial = 0; trial < 1000; ++trial) {
            Tensor h1 = random_tensor(3, 1, rng, -3, 3);
            Tensor h2 = random_tensor(3, 1, rng, -3, 3);
            Real t = rng.uniform(0, 1);
            Tensor f1 = forward_mlp(bind, net, tape.leaf(h1), t).value();
            Tensor f2 = forward_mlp(bind, net, tape.leaf(h2), t).value();
            Real num = frobenius_norm(sub(f1, f2));
            Real den = frobenius_norm(sub(h1, h2));
            if (den == 0.0) continue;
            REQUIRE(num / den <= bound * (1.0 + 1e-12));
        }
    }
}
