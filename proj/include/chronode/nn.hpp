#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "chronode/autograd.hpp"

namespace chronode {

// Glorot-uniform draw, scale sqrt(6 / (fan_in + fan_out)). fan_in = cols,
// fan_out = rows for a rows x cols weight applied as W * x.
inline Tensor glorot_uniform(int rows, int cols, Rng& rng) {
    Tensor t(rows, cols);
    Real limit = std::sqrt(6.0 / (rows + cols));
    for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
    return t;
}

struct LayerParams {
    Tensor W;  // out x in
    Tensor b;  // out x 1
    Activation act = Activation::Identity;

    static LayerParams init(int out, int in, Activation act, Rng& rng) {
        return {glorot_uniform(out, in, rng), Tensor::zeros(out, 1), act};
    }

    int out_dim() const { return W.rows(); }
    int in_dim() const { return W.cols(); }
};

// act(W x + b), bias broadcast across batch columns.
inline Var apply_layer(ParamBinding& bind, const LayerParams& layer, const Var& x) {
    Var lin = add(matmul(bind(layer.W), x), bind(layer.b));
    if (layer.act == Activation::Identity) return lin;
    return activation(lin, layer.act);
}

// The learned vector field f_theta. Time is appended to the state as one
// extra input coordinate, so the input layer is width state_dim + 1 and the
// output layer maps back to state_dim.
struct DynamicsNet {
    LayerParams input;                 // n x (d+1)
    std::vector<LayerParams> hidden;   // n x n each
    LayerParams output;                // d x n, identity

    int state_dim() const { return output.out_dim(); }

    // widths: hidden layer sizes, at least one. All hidden layers share act.
    static DynamicsNet make(int state_dim, const std::vector<int>& widths, Activation act,
                            Rng& rng) {
        if (widths.empty()) throw ContractError("DynamicsNet: need at least one hidden width");
        DynamicsNet net;
        net.input = LayerParams::init(widths[0], state_dim + 1, act, rng);
        for (std::size_t i = 1; i < widths.size(); ++i)
            net.hidden.push_back(LayerParams::init(widths[i], widths[i - 1], act, rng));
        net.output = LayerParams::init(state_dim, widths.back(), Activation::Identity, rng);
        return net;
    }

    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> ps{&input.W, &input.b};
        for (auto& l : hidden) {
            ps.push_back(&l.W);
            ps.push_back(&l.b);
        }
        ps.push_back(&output.W);
        ps.push_back(&output.b);
        return ps;
    }

    std::vector<std::pair<std::string, Tensor*>> named_parameters(const std::string& prefix) {
        std::vector<std::pair<std::string, Tensor*>> ps{{prefix + ".in.W", &input.W},
                                                        {prefix + ".in.b", &input.b}};
        for (std::size_t i = 0; i < hidden.size(); ++i) {
            ps.emplace_back(prefix + ".h" + std::to_string(i) + ".W", &hidden[i].W);
            ps.emplace_back(prefix + ".h" + std::to_string(i) + ".b", &hidden[i].b);
        }
        ps.emplace_back(prefix + ".out.W", &output.W);
        ps.emplace_back(prefix + ".out.b", &output.b);
        return ps;
    }

    int param_count() const {
        int n = input.W.size() + input.b.size() + output.W.size() + output.b.size();
        for (const auto& l : hidden) n += l.W.size() + l.b.size();
        return n;
    }
};

// Spiral preset: 2 -> 50 (tanh) -> 2.
inline DynamicsNet spiral_dynamics(Rng& rng) {
    return DynamicsNet::make(2, {50}, Activation::Tanh, rng);
}

// Real-data preset: d -> 256 (elu) -> d.
inline DynamicsNet real_data_dynamics(int d, Rng& rng) {
    return DynamicsNet::make(d, {256}, Activation::Elu, rng);
}

// Evaluates f_theta(state, t). state must be a state_dim column vector.
inline Var forward_mlp(ParamBinding& bind, const DynamicsNet& net, const Var& state, Real t) {
    if (state.rows() != net.state_dim() || state.cols() != 1)
        throw DimensionError("forward_mlp: state is " + state.value().shape_str() +
                             ", expected " + std::to_string(net.state_dim()) + "x1");
    Var tv = bind.tape().leaf(Tensor(1, 1, t));
    Var h = apply_layer(bind, net.input, concat_rows(state, tv));
    for (const auto& layer : net.hidden) h = apply_layer(bind, layer, h);
    return apply_layer(bind, net.output, h);
}

inline Var output_layer(ParamBinding& bind, const LayerParams& layer, const Var& h) {
    return apply_layer(bind, layer, h);
}

// Upper bound on the Lipschitz constant of the net in its state argument:
// product of layer spectral norms (tanh/elu/sigmoid/identity slopes <= 1).
// The time column of the input layer does not enter the state quotient, so
// it is dropped before taking the norm.
inline Real lipschitz_bound(const DynamicsNet& net) {
    Tensor in_state(net.input.W.rows(), net.input.W.cols() - 1);
    for (int i = 0; i < in_state.rows(); ++i)
        for (int j = 0; j < in_state.cols(); ++j) in_state(i, j) = net.input.W(i, j);
    Real k = spectral_norm(in_state);
    for (const auto& l : net.hidden) k *= spectral_norm(l.W);
    k *= spectral_norm(net.output.W);
    return k;
}

struct AdamState {
    Real lr = 1e-3;
    Real beta1 = 0.9;
    Real beta2 = 0.999;
    Real eps = 1e-8;
    long step_count = 0;
    std::vector<Tensor> m, v;

    static AdamState init(const std::vector<Tensor*>& params, Real lr) {
        AdamState s;
        s.lr = lr;
        for (const Tensor* p : params) {
            s.m.push_back(Tensor::zeros(p->rows(), p->cols()));
            s.v.push_back(Tensor::zeros(p->rows(), p->cols()));
        }
        return s;
    }
};

// In-place bias-corrected Adam update. grads are left untouched.
inline void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                      AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw DimensionError("adam_step: parameter/gradient count mismatch");
    state.step_count += 1;
    Real bc1 = 1.0 - std::pow(state.beta1, static_cast<Real>(state.step_count));
    Real bc2 = 1.0 - std::pow(state.beta2, static_cast<Real>(state.step_count));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = grads[k];
        require_same_shape(p, g, "adam_step");
        Tensor& m = state.m[k];
        Tensor& v = state.v[k];
        for (int i = 0; i < p.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            Real mh = m[i] / bc1;
            Real vh = v[i] / bc2;
            p[i] -= state.lr * mh / (std::sqrt(vh) + state.eps);
        }
    }
}

}  // namespace chronode
