#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "chronode/neuralcode.hpp"

namespace chronode {

enum class CellKind { Rnn, Gru, Lstm };
enum class Family { OdeRnn, CodeRnn, CodeBiRnn };

struct ArchSpec {
    Family family;
    CellKind cell;
    int hidden_dim = 16;
    int state_dim = 1;        // d, observation width
    int dynamics_hidden = 32; // width of the dynamics net hidden layer
    Activation dynamics_act = Activation::Tanh;
};

// Model spec strings for the nine hybrid variants: <family>-<cell>.
inline const std::vector<std::string>& arch_spec_names() {
    static const std::vector<std::string> names{
        "ode-rnn",      "ode-gru",      "ode-lstm",     "code-rnn",    "code-gru",
        "code-lstm",    "code-birnn",   "code-bigru",   "code-bilstm"};
    return names;
}

inline std::pair<Family, CellKind> parse_arch_spec(const std::string& s) {
    auto cell_of = [](const std::string& c) {
        if (c == "rnn") return CellKind::Rnn;
        if (c == "gru") return CellKind::Gru;
        if (c == "lstm") return CellKind::Lstm;
        throw ConfigError("unknown cell '" + c + "'");
    };
    if (s.rfind("ode-", 0) == 0) return {Family::OdeRnn, cell_of(s.substr(4))};
    // "code-birnn-gru" style aliases are accepted next to the short names.
    if (s.rfind("code-birnn-", 0) == 0) return {Family::CodeBiRnn, cell_of(s.substr(11))};
    if (s.rfind("code-bi", 0) == 0) return {Family::CodeBiRnn, cell_of(s.substr(7))};
    if (s.rfind("code-", 0) == 0) return {Family::CodeRnn, cell_of(s.substr(5))};
    std::string all;
    for (const auto& n : arch_spec_names()) all += (all.empty() ? "" : ", ") + n;
    throw ConfigError("unknown model '" + s + "'; valid: " + all);
}

// Gate parameters for one cell. state_width is the width of the state the
// cell consumes (n for unidirectional cells, 2n for the CODE-RNN merge).
struct CellParams {
    CellKind kind;
    int hidden = 0;       // n
    int input = 0;        // d
    int state_width = 0;  // sw

    // rnn: Ws, Ux, b. gru: gate z (Wz,Uz,bz), reset r over the state
    // (Wr sw x sw, Ur sw x d, br sw x 1), candidate (Wc,Uc,bc). lstm: gates
    // i, f, o and candidate g. Ws doubles as the GRU state projection when
    // sw != n.
    Tensor Ws, Ux, b;
    Tensor Wz, Uz, bz;
    Tensor Wr, Ur, br;
    Tensor Wc, Uc, bc;
    Tensor Wi, Ui, bi, Wf, Uf, bf, Wo, Uo, bo, Wg, Ug, bg;

    static CellParams init(CellKind kind, int hidden, int input, int state_width, Rng& rng) {
        CellParams p;
        p.kind = kind;
        p.hidden = hidden;
        p.input = input;
        p.state_width = state_width;
        auto g = [&](int r, int c) { return glorot_uniform(r, c, rng); };
        auto z = [](int r) { return Tensor::zeros(r, 1); };
        switch (kind) {
            case CellKind::Rnn:
                p.Ws = g(hidden, state_width);
                p.Ux = g(hidden, input);
                p.b = z(hidden);
                break;
            case CellKind::Gru:
                p.Wz = g(hidden, state_width);
                p.Uz = g(hidden, input);
                p.bz = z(hidden);
                p.Wr = g(state_width, state_width);
                p.Ur = g(state_width, input);
                p.br = z(state_width);
                p.Wc = g(hidden, state_width);
                p.Uc = g(hidden, input);
                p.bc = z(hidden);
                if (state_width != hidden) p.Ws = g(hidden, state_width);
                break;
            case CellKind::Lstm:
                p.Wi = g(hidden, state_width);
                p.Ui = g(hidden, input);
                p.bi = z(hidden);
                p.Wf = g(hidden, state_width);
                p.Uf = g(hidden, input);
                p.bf = z(hidden);
                p.Wo = g(hidden, state_width);
                p.Uo = g(hidden, input);
                p.bo = z(hidden);
                p.Wg = g(hidden, state_width);
                p.Ug = g(hidden, input);
                p.bg = z(hidden);
                break;
        }
        return p;
    }

    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> ps;
        auto push = [&](Tensor& t) {
            if (t.size() > 0) ps.push_back(&t);
        };
        push(Ws); push(Ux); push(b);
        push(Wz); push(Uz); push(bz);
        push(Wr); push(Ur); push(br);
        push(Wc); push(Uc); push(bc);
        push(Wi); push(Ui); push(bi);
        push(Wf); push(Uf); push(bf);
        push(Wo); push(Uo); push(bo);
        push(Wg); push(Ug); push(bg);
        return ps;
    }

    std::vector<std::pair<std::string, Tensor*>> named_parameters(const std::string& prefix) {
        static const char* names[] = {"Ws", "Ux", "b",  "Wz", "Uz", "bz", "Wr", "Ur",
                                      "br", "Wc", "Uc", "bc", "Wi", "Ui", "bi", "Wf",
                                      "Uf", "bf", "Wo", "Uo", "bo", "Wg", "Ug", "bg"};
        Tensor* ts[] = {&Ws, &Ux, &b,  &Wz, &Uz, &bz, &Wr, &Ur, &br, &Wc, &Uc, &bc,
                        &Wi, &Ui, &bi, &Wf, &Uf, &bf, &Wo, &Uo, &bo, &Wg, &Ug, &bg};
        std::vector<std::pair<std::string, Tensor*>> ps;
        for (std::size_t i = 0; i < std::size(ts); ++i)
            if (ts[i]->size() > 0) ps.emplace_back(prefix + "." + names[i], ts[i]);
        return ps;
    }
};

// Hidden state during a rollout. c is carried for LSTM cells only.
struct HiddenState {
    Var h;
    std::optional<Var> c;
};

inline HiddenState zero_state(ParamBinding& bind, CellKind kind, int hidden) {
    HiddenState s;
    s.h = bind.tape().leaf(Tensor::zeros(hidden, 1));
    if (kind == CellKind::Lstm) s.c = bind.tape().leaf(Tensor::zeros(hidden, 1));
    return s;
}

// One discrete cell update: consumes the state input s_in (width sw), the
// observation x, and the carried state (LSTM cell channel). For GRU with
// sw != n, the leak interpolates against the learned projection Ws * s_in;
// for sw == n this is the standard GRU.
inline HiddenState cell_step(ParamBinding& bind, const CellParams& p, const HiddenState& prev,
                             const Var& s_in, const Var& x) {
    if (s_in.rows() != p.state_width)
        throw DimensionError("cell_step: state input is " + s_in.value().shape_str() +
                             ", expected " + std::to_string(p.state_width) + "x1");
    if (x.rows() != p.input)
        throw DimensionError("cell_step: input is " + x.value().shape_str() + ", expected " +
                             std::to_string(p.input) + "x1");
    switch (p.kind) {
        case CellKind::Rnn: {
            Var pre = add(add(matmul(bind(p.Ws), s_in), matmul(bind(p.Ux), x)), bind(p.b));
            return {activation(pre, Activation::Tanh), std::nullopt};
        }
        case CellKind::Gru: {
            Var z = activation(add(add(matmul(bind(p.Wz), s_in), matmul(bind(p.Uz), x)),
                                   bind(p.bz)),
                               Activation::Sigmoid);
            Var r = activation(add(add(matmul(bind(p.Wr), s_in), matmul(bind(p.Ur), x)),
                                   bind(p.br)),
                               Activation::Sigmoid);
            Var cand = activation(add(add(matmul(bind(p.Wc), hadamard(r, s_in)),
                                          matmul(bind(p.Uc), x)),
                                      bind(p.bc)),
                                  Activation::Tanh);
            Var base = (p.state_width == p.hidden) ? s_in : matmul(bind(p.Ws), s_in);
            // h = (1 - z) .* base + z .* cand
            Var ones = bind.tape().leaf(Tensor::ones(p.hidden, 1));
            Var h = add(hadamard(sub(ones, z), base), hadamard(z, cand));
            return {h, std::nullopt};
        }
        case CellKind::Lstm: {
            auto gate = [&](const Tensor& W, const Tensor& U, const Tensor& bb, Activation a) {
                return activation(add(add(matmul(bind(W), s_in), matmul(bind(U), x)), bind(bb)),
                                  a);
            };
            Var gi = gate(p.Wi, p.Ui, p.bi, Activation::Sigmoid);
            Var gf = gate(p.Wf, p.Uf, p.bf, Activation::Sigmoid);
            Var go = gate(p.Wo, p.Uo, p.bo, Activation::Sigmoid);
            Var gg = gate(p.Wg, p.Ug, p.bg, Activation::Tanh);
            Var c_prev = prev.c ? *prev.c : bind.tape().leaf(Tensor::zeros(p.hidden, 1));
            Var c = add(hadamard(gf, c_prev), hadamard(gi, gg));
            Var h = hadamard(go, activation(c, Activation::Tanh));
            return {h, c};
        }
    }
    throw ContractError("cell_step: unknown cell kind");
}

// One model covering all nine hybrid variants. The dynamics net evolves hidden
// states (n-dimensional), shared by both time directions.
struct RecurrentModel {
    Family family;
    CellKind cell;
    int state_dim = 0;   // d
    int hidden_dim = 0;  // n
    int cell_input = 0;  // cell x-input width (d, or 2d for CODE-RNN imputation)
    SolverConfig solver;
    // When set, the backward sweep of CODE-BiRNN visits indices in reversed
    // order (classical BiRNN style) instead of the literal ascending order.
    bool reversed_backward_sweep = false;

    DynamicsNet dynamics;              // state n -> n
    CellParams fwd_cell;
    std::optional<CellParams> bwd_cell;  // CODE-BiRNN only
    LayerParams out;                     // identity; n -> d or 2n -> d

    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> ps = dynamics.parameters();
        for (Tensor* t : fwd_cell.parameters()) ps.push_back(t);
        if (bwd_cell)
            for (Tensor* t : bwd_cell->parameters()) ps.push_back(t);
        ps.push_back(&out.W);
        ps.push_back(&out.b);
        return ps;
    }

    std::vector<std::pair<std::string, Tensor*>> named_parameters() {
        auto ps = dynamics.named_parameters("dynamics");
        for (auto& kv : fwd_cell.named_parameters("cell_fwd")) ps.push_back(kv);
        if (bwd_cell)
            for (auto& kv : bwd_cell->named_parameters("cell_bwd")) ps.push_back(kv);
        ps.emplace_back("out.W", &out.W);
        ps.emplace_back("out.b", &out.b);
        return ps;
    }
};

// Assembles a model from the spec. cell_input_dim defaults to state_dim;
// the imputation task widens it for CODE-RNN (x_i and x_{i+2} are stacked).
inline RecurrentModel build_arch(const ArchSpec& spec, Rng& rng, SolverConfig solver = {},
                                 int cell_input_dim = 0) {
    if (spec.hidden_dim < 1 || spec.state_dim < 1)
        throw ContractError("build_arch: dimensions must be positive");
    int d = spec.state_dim, n = spec.hidden_dim;
    int xin = cell_input_dim > 0 ? cell_input_dim : d;
    RecurrentModel m;
    m.family = spec.family;
    m.cell = spec.cell;
    m.state_dim = d;
    m.hidden_dim = n;
    m.cell_input = xin;
    m.solver = solver;
    m.dynamics = DynamicsNet::make(n, {spec.dynamics_hidden}, spec.dynamics_act, rng);
    switch (spec.family) {
        case Family::OdeRnn:
            m.fwd_cell = CellParams::init(spec.cell, n, xin, n, rng);
            m.out = LayerParams::init(d, n, Activation::Identity, rng);
            break;
        case Family::CodeRnn:
            m.fwd_cell = CellParams::init(spec.cell, n, xin, 2 * n, rng);
            m.out = LayerParams::init(d, n, Activation::Identity, rng);
            break;
        case Family::CodeBiRnn:
            m.fwd_cell = CellParams::init(spec.cell, n, xin, n, rng);
            m.bwd_cell = CellParams::init(spec.cell, n, xin, n, rng);
            m.out = LayerParams::init(d, 2 * n, Activation::Identity, rng);
            break;
    }
    return m;
}

namespace detail {

// Zero-length gaps skip the solver entirely.
inline Var evolve_fwd(ParamBinding& bind, const RecurrentModel& m, const Var& h, Real t_a,
                      Real t_b) {
    if (t_b <= t_a) return h;
    Trajectory tr = solve_ivp(dynamics_field(bind, m.dynamics), h, {t_a, t_b}, m.solver);
    return tr.states.back();
}

inline Var evolve_bwd(ParamBinding& bind, const RecurrentModel& m, const Var& h, Real t_from,
                      Real t_to) {
    if (t_from <= t_to) return h;
    Trajectory tr = solve_fvp(dynamics_field(bind, m.dynamics), h, {t_from, t_to}, m.solver);
    return tr.states.back();
}

}  // namespace detail

// ODE-RNN: evolve the hidden state across the gap, then the cell update.
inline HiddenState ode_rnn_step(ParamBinding& bind, const RecurrentModel& m,
                                const HiddenState& prev, const Var& x, Real t_prev, Real t_i) {
    if (t_i < t_prev) throw DimensionError("ode_rnn_step: t_i < t_prev");
    Var h_mid = detail::evolve_fwd(bind, m, prev.h, t_prev, t_i);
    return cell_step(bind, m.fwd_cell, prev, h_mid, x);
}

struct CodeRnnStep {
    Var h;         // prediction carrier (post-cell)
    Var fwd_next;  // intermediate states that recur
    Var bwd_next;
};

// CODE-RNN: both intermediates recur; the post-cell state does not, so the
// cell is stateless across steps (its LSTM variant carries no cell state).
inline CodeRnnStep code_rnn_step(ParamBinding& bind, const RecurrentModel& m, const Var& fwd_prev,
                                 const Var& bwd_prev, const Var& x, Real t_prev, Real t_i) {
    if (t_i < t_prev) throw DimensionError("code_rnn_step: t_i < t_prev");
    Var fwd_next = detail::evolve_fwd(bind, m, fwd_prev, t_prev, t_i);
    Var bwd_next = detail::evolve_bwd(bind, m, bwd_prev, t_i, t_prev);
    Var merged = concat_rows(fwd_next, bwd_next);
    HiddenState none;  // no carried state
    HiddenState h = cell_step(bind, m.fwd_cell, none, merged, x);
    return {h.h, fwd_next, bwd_next};
}

// CODE-BiRNN forward direction: post-cell state recurs, so x_i propagates.
inline HiddenState code_birnn_step_fwd(ParamBinding& bind, const RecurrentModel& m,
                                       const HiddenState& prev, const Var& x, Real t_prev,
                                       Real t_i) {
    Var h_mid = detail::evolve_fwd(bind, m, prev.h, t_prev, t_i);
    return cell_step(bind, m.fwd_cell, prev, h_mid, x);
}

inline HiddenState code_birnn_step_bwd(ParamBinding& bind, const RecurrentModel& m,
                                       const HiddenState& prev, const Var& x, Real t_from,
                                       Real t_to) {
    Var h_mid = detail::evolve_bwd(bind, m, prev.h, t_from, t_to);
    return cell_step(bind, *m.bwd_cell, prev, h_mid, x);
}

// Full-sequence forward pass producing one prediction per observation.
// xs[i] are cell inputs (d x 1 leaves); times are ascending.
inline std::vector<Var> rollout(ParamBinding& bind, const RecurrentModel& m,
                                const std::vector<Real>& times, const std::vector<Var>& xs) {
    const int n = static_cast<int>(times.size());
    if (static_cast<int>(xs.size()) != n)
        throw DimensionError("rollout: times/inputs length mismatch");
    std::vector<Var> preds(n);

    switch (m.family) {
        case Family::OdeRnn: {
            HiddenState h = zero_state(bind, m.cell, m.hidden_dim);
            for (int i = 0; i < n; ++i) {
                Real t_prev = i == 0 ? times[0] : times[i - 1];
                h = ode_rnn_step(bind, m, h, xs[i], t_prev, times[i]);
                preds[i] = output_layer(bind, m.out, h.h);
            }
            break;
        }
        case Family::CodeRnn: {
            Var fwd = bind.tape().leaf(Tensor::zeros(m.hidden_dim, 1));
            Var bwd = bind.tape().leaf(Tensor::zeros(m.hidden_dim, 1));
            for (int i = 0; i < n; ++i) {
                Real t_prev = i == 0 ? times[0] : times[i - 1];
                CodeRnnStep s = code_rnn_step(bind, m, fwd, bwd, xs[i], t_prev, times[i]);
                preds[i] = output_layer(bind, m.out, s.h);
                fwd = s.fwd_next;
                bwd = s.bwd_next;
            }
            break;
        }
        case Family::CodeBiRnn: {
            std::vector<Var> hf(n), hb(n);
            HiddenState f = zero_state(bind, m.cell, m.hidden_dim);
            for (int i = 0; i < n; ++i) {
                Real t_prev = i == 0 ? times[0] : times[i - 1];
                f = code_birnn_step_fwd(bind, m, f, xs[i], t_prev, times[i]);
                hf[i] = f.h;
            }
            HiddenState b = zero_state(bind, m.cell, m.hidden_dim);
            if (!m.reversed_backward_sweep) {
                // Literal sweep: ascending index order, each interval
                // integrated in reverse.
                for (int i = 0; i < n; ++i) {
                    Real t_prev = i == 0 ? times[0] : times[i - 1];
                    b = code_birnn_step_bwd(bind, m, b, xs[i], times[i], t_prev);
                    hb[i] = b.h;
                }
            } else {
                for (int i = n - 1; i >= 0; --i) {
                    Real t_next = i == n - 1 ? times[n - 1] : times[i + 1];
                    b = code_birnn_step_bwd(bind, m, b, xs[i], t_next, times[i]);
                    hb[i] = b.h;
                }
            }
            for (int i = 0; i < n; ++i)
                preds[i] = output_layer(bind, m.out, concat_rows(hf[i], hb[i]));
            break;
        }
    }
    return preds;
}

namespace detail {

inline std::vector<Var> leaf_inputs(ParamBinding& bind, const TimeSeries& series) {
    std::vector<Var> xs;
    xs.reserve(series.length());
    for (int i = 0; i < series.length(); ++i) xs.push_back(bind.tape().leaf(series.observation(i)));
    return xs;
}

}  // namespace detail

// Self-reconstruction training: one optimizer step per full-series sweep,
// targets are the observations themselves.
inline TrainResult train_recurrent(RecurrentModel& model, const TimeSeries& series,
                                   const TrainConfig& cfg) {
    if (series.dim() != model.cell_input)
        throw DimensionError("train_recurrent: series dim != cell input width");
    std::vector<Tensor*> params = model.parameters();
    AdamState adam = AdamState::init(params, cfg.lr);
    TrainResult result;
    for (int epoch = 0; epoch < cfg.max_iter; ++epoch) {
        Tape tape;
        ParamBinding bind(tape);
        std::vector<Var> xs = detail::leaf_inputs(bind, series);
        std::vector<Var> preds = rollout(bind, model, series.times, xs);
        Var loss;
        for (int i = 0; i < series.length(); ++i) {
            Var term = mse(preds[i], series.observation(i));
            loss = loss.valid() ? add(loss, term) : term;
        }
        loss = scale(loss, 1.0 / series.length());
        Real lv = loss.value()(0, 0);
        if (!std::isfinite(lv))
            throw NumericError("training diverged (non-finite loss) at epoch " +
                               std::to_string(epoch));
        backward(loss);
        std::vector<Tensor> grads;
        for (Tensor* p : params) grads.push_back(bind.grad_of(*p));
        adam_step(params, grads, adam);
        result.history.push_back({epoch, lv, std::numeric_limits<Real>::quiet_NaN(), lv});
    }
    return result;
}

enum class Direction { Future, Past };

// Prediction sweeps over a supplied grid with known inputs. The past
// direction processes the grid from its last index down, with each
// interval's IVP/FVP pair mirrored.
inline std::vector<Tensor> recurrent_predict(const RecurrentModel& model,
                                             const std::vector<Real>& times,
                                             const std::vector<Tensor>& xs,
                                             Direction direction) {
    Tape tape;
    ParamBinding bind(tape);
    std::vector<Real> t = times;
    std::vector<Tensor> x = xs;
    if (direction == Direction::Past) {
        // Mirror the time axis (u_j = t_N - t_{N-j}) so the sweep runs from
        // the last observation down, with every interval pair reversed; gaps
        // are preserved.
        const int n = static_cast<int>(times.size());
        for (int j = 0; j < n; ++j) {
            t[j] = times[n - 1] - times[n - 1 - j];
            x[j] = xs[n - 1 - j];
        }
    }
    std::vector<Var> leaves;
    for (const Tensor& xi : x) leaves.push_back(bind.tape().leaf(xi));
    std::vector<Var> preds = rollout(bind, model, t, leaves);
    std::vector<Tensor> out;
    for (const Var& p : preds) out.push_back(p.value());
    if (direction == Direction::Past) std::reverse(out.begin(), out.end());
    return out;
}

}  // namespace chronode
