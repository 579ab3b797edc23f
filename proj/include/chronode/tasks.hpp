#pragma once

#include <string>
#include <utility>
#include <vector>

#include "chronode/recurrent.hpp"

namespace chronode {

// Recurrent state carried across imputation triples as plain tensors;
// gradients are truncated at window boundaries.
struct ImputeCarry {
    Tensor fwd_h, fwd_c;  // post-cell (BiRNN) or intermediate (CODE-RNN) forward state
    Tensor bwd_h, bwd_c;

    static ImputeCarry zeros(const RecurrentModel& m) {
        ImputeCarry c;
        c.fwd_h = Tensor::zeros(m.hidden_dim, 1);
        c.bwd_h = Tensor::zeros(m.hidden_dim, 1);
        if (m.cell == CellKind::Lstm) {
            c.fwd_c = Tensor::zeros(m.hidden_dim, 1);
            c.bwd_c = Tensor::zeros(m.hidden_dim, 1);
        }
        return c;
    }
};

namespace detail {

inline HiddenState bind_state(ParamBinding& bind, const Tensor& h, const Tensor& c) {
    HiddenState s;
    s.h = bind.tape().leaf(h);
    if (c.size() > 0) s.c = bind.tape().leaf(c);
    return s;
}

inline void store_state(const HiddenState& s, Tensor& h, Tensor& c) {
    h = s.h.value();
    if (s.c) c = s.c->value();
}

}  // namespace detail

// One imputation triple (t_i, t_{i+1}, t_{i+2}): the forward arm integrates
// from t_i to the target time, the backward arm from t_{i+2} down to it.
// ODE-RNN sees only the left observation; the CODE families see both.
inline Var impute_step(ParamBinding& bind, const RecurrentModel& m, const TimeSeries& series,
                       const TaskWindow& w, ImputeCarry& carry) {
    const int li = w.inputs[0], ri = w.inputs[1], ti = w.targets[0];
    const Real t_l = series.times[li], t_m = series.times[ti], t_r = series.times[ri];
    Var x_l = bind.tape().leaf(series.observation(li));
    Var x_r = bind.tape().leaf(series.observation(ri));

    switch (m.family) {
        case Family::OdeRnn: {
            HiddenState prev = detail::bind_state(bind, carry.fwd_h, carry.fwd_c);
            Var mid = detail::evolve_fwd(bind, m, prev.h, t_l, t_m);
            HiddenState next = cell_step(bind, m.fwd_cell, prev, mid, x_l);
            detail::store_state(next, carry.fwd_h, carry.fwd_c);
            return output_layer(bind, m.out, next.h);
        }
        case Family::CodeRnn: {
            Var fwd_prev = bind.tape().leaf(carry.fwd_h);
            Var bwd_prev = bind.tape().leaf(carry.bwd_h);
            Var fwd_mid = detail::evolve_fwd(bind, m, fwd_prev, t_l, t_m);
            Var bwd_mid = detail::evolve_bwd(bind, m, bwd_prev, t_r, t_m);
            Var merged = concat_rows(fwd_mid, bwd_mid);
            Var x = concat_rows(x_l, x_r);  // cell_input == 2d for this task
            HiddenState none;
            HiddenState h = cell_step(bind, m.fwd_cell, none, merged, x);
            carry.fwd_h = fwd_mid.value();
            carry.bwd_h = bwd_mid.value();
            return output_layer(bind, m.out, h.h);
        }
        case Family::CodeBiRnn: {
            HiddenState f_prev = detail::bind_state(bind, carry.fwd_h, carry.fwd_c);
            Var f_mid = detail::evolve_fwd(bind, m, f_prev.h, t_l, t_m);
            HiddenState f = cell_step(bind, m.fwd_cell, f_prev, f_mid, x_l);
            HiddenState b_prev = detail::bind_state(bind, carry.bwd_h, carry.bwd_c);
            Var b_mid = detail::evolve_bwd(bind, m, b_prev.h, t_r, t_m);
            HiddenState b = cell_step(bind, *m.bwd_cell, b_prev, b_mid, x_r);
            detail::store_state(f, carry.fwd_h, carry.fwd_c);
            detail::store_state(b, carry.bwd_h, carry.bwd_c);
            return output_layer(bind, m.out, concat_rows(f.h, b.h));
        }
    }
    throw ContractError("impute_step: unknown family");
}

// Extrapolation window: warm up on the seen observations, then roll the
// horizon autoregressively, feeding each prediction back as the next input.
// Backward windows run on the mirrored time axis. Returns target
// predictions in target index order.
inline std::vector<Var> extrapolate_window(ParamBinding& bind, const RecurrentModel& m,
                                           const TimeSeries& series, const TaskWindow& w,
                                           bool backward) {
    std::vector<Real> t;
    std::vector<int> idx;  // series index per step; -1 in the horizon
    if (!backward) {
        for (int i : w.inputs) { t.push_back(series.times[i]); idx.push_back(i); }
        for (int i : w.targets) { t.push_back(series.times[i]); idx.push_back(-i - 1); }
    } else {
        // inputs come after targets; sweep from the last input downwards on
        // the mirrored axis u = t_end - t.
        Real t_end = series.times[w.inputs.back()];
        for (auto it = w.inputs.rbegin(); it != w.inputs.rend(); ++it) {
            t.push_back(t_end - series.times[*it]);
            idx.push_back(*it);
        }
        for (auto it = w.targets.rbegin(); it != w.targets.rend(); ++it) {
            t.push_back(t_end - series.times[*it]);
            idx.push_back(-*it - 1);
        }
    }

    const int n = static_cast<int>(t.size());
    std::vector<Var> target_preds;
    auto emit = [&](const Var& pred, int step) {
        if (idx[step] < 0) target_preds.push_back(pred);
    };
    auto input_at = [&](int step, const Var& last_pred) {
        if (idx[step] >= 0) return bind.tape().leaf(series.observation(idx[step]));
        return last_pred;  // autoregressive feedback
    };

    switch (m.family) {
        case Family::OdeRnn: {
            HiddenState h = zero_state(bind, m.cell, m.hidden_dim);
            Var last;
            for (int s = 0; s < n; ++s) {
                Real t_prev = s == 0 ? t[0] : t[s - 1];
                Var x = input_at(s, last);
                Var mid = detail::evolve_fwd(bind, m, h.h, t_prev, t[s]);
                h = cell_step(bind, m.fwd_cell, h, mid, x);
                last = output_layer(bind, m.out, h.h);
                emit(last, s);
            }
            break;
        }
        case Family::CodeRnn: {
            Var fwd = bind.tape().leaf(Tensor::zeros(m.hidden_dim, 1));
            Var bwd = bind.tape().leaf(Tensor::zeros(m.hidden_dim, 1));
            Var last;
            for (int s = 0; s < n; ++s) {
                Real t_prev = s == 0 ? t[0] : t[s - 1];
                Var x = input_at(s, last);
                CodeRnnStep step = code_rnn_step(bind, m, fwd, bwd, x, t_prev, t[s]);
                last = output_layer(bind, m.out, step.h);
                fwd = step.fwd_next;
                bwd = step.bwd_next;
                emit(last, s);
            }
            break;
        }
        case Family::CodeBiRnn: {
            HiddenState f = zero_state(bind, m.cell, m.hidden_dim);
            HiddenState b = zero_state(bind, m.cell, m.hidden_dim);
            Var last;
            for (int s = 0; s < n; ++s) {
                Real t_prev = s == 0 ? t[0] : t[s - 1];
                Var x = input_at(s, last);
                f = code_birnn_step_fwd(bind, m, f, x, t_prev, t[s]);
                b = code_birnn_step_bwd(bind, m, b, x, t[s], t_prev);
                last = output_layer(bind, m.out, concat_rows(f.h, b.h));
                emit(last, s);
            }
            break;
        }
    }
    if (backward) std::reverse(target_preds.begin(), target_preds.end());
    return target_preds;
}

// Builds the model for a (spec, task) pair. The imputation task widens the
// CODE-RNN cell input to 2d, since that family's cell is the only place the
// right-neighbor observation can enter.
inline RecurrentModel build_for_task(const ArchSpec& spec, Task task, Rng& rng,
                                     SolverConfig solver = {}) {
    int xin = spec.state_dim;
    if (task == Task::Impute && spec.family == Family::CodeRnn) xin = 2 * spec.state_dim;
    return build_arch(spec, rng, solver, xin);
}

// One optimizer step per window (batch size 1), epochs over all windows.
// Returns per-epoch mean training loss.
inline TrainResult train_on_windows(RecurrentModel& model, const TimeSeries& series,
                                    const TaskWindowSet& windows, const TrainConfig& cfg) {
    if (windows.windows.empty()) throw DimensionError("train_on_windows: no windows");
    std::vector<Tensor*> params = model.parameters();
    AdamState adam = AdamState::init(params, cfg.lr);
    TrainResult result;
    for (int epoch = 0; epoch < cfg.max_iter; ++epoch) {
        Real epoch_loss = 0.0;
        ImputeCarry carry = ImputeCarry::zeros(model);
        for (const TaskWindow& w : windows.windows) {
            Tape tape;
            ParamBinding bind(tape);
            Var loss;
            if (windows.task == Task::Impute) {
                Var pred = impute_step(bind, model, series, w, carry);
                loss = mse(pred, series.observation(w.targets[0]));
            } else {
                std::vector<Var> preds = extrapolate_window(bind, model, series, w,
                                                            windows.task == Task::ExtrapBwd);
                for (std::size_t k = 0; k < preds.size(); ++k) {
                    Var term = mse(preds[k], series.observation(w.targets[k]));
                    loss = loss.valid() ? add(loss, term) : term;
                }
                loss = scale(loss, 1.0 / static_cast<Real>(preds.size()));
            }
            Real lv = loss.value()(0, 0);
            if (!std::isfinite(lv))
                throw NumericError("training diverged (non-finite loss) at epoch " +
                                   std::to_string(epoch));
            epoch_loss += lv;
            backward(loss);
            std::vector<Tensor> grads;
            for (Tensor* p : params) grads.push_back(bind.grad_of(*p));
            adam_step(params, grads, adam);
        }
        epoch_loss /= static_cast<Real>(windows.windows.size());
        result.history.push_back(
            {epoch, epoch_loss, std::numeric_limits<Real>::quiet_NaN(), epoch_loss});
    }
    return result;
}

// Test MSE over all window targets, plus the predictions themselves.
struct EvalResult {
    Real mse = 0.0;
    std::vector<std::pair<int, Tensor>> predictions;  // (series index, d x 1)
};

inline EvalResult eval_on_windows(const RecurrentModel& model, const TimeSeries& series,
                                  const TaskWindowSet& windows) {
    EvalResult res;
    Real acc = 0.0;
    int count = 0;
    ImputeCarry carry = ImputeCarry::zeros(model);
    for (const TaskWindow& w : windows.windows) {
        Tape tape;
        ParamBinding bind(tape);
        std::vector<Var> preds;
        if (windows.task == Task::Impute) {
            preds.push_back(impute_step(bind, model, series, w, carry));
        } else {
            preds = extrapolate_window(bind, model, series, w,
                                       windows.task == Task::ExtrapBwd);
        }
        for (std::size_t k = 0; k < preds.size(); ++k) {
            const Tensor target = series.observation(w.targets[k]);
            const Tensor& pv = preds[k].value();
            for (int i = 0; i < pv.size(); ++i) {
                Real d = pv[i] - target[i];
                acc += d * d;
                ++count;
            }
            res.predictions.emplace_back(w.targets[k], pv);
        }
    }
    res.mse = count ? acc / count : 0.0;
    return res;
}

// Reconstruction evaluation for the Neural ODE/CODE family: IVP from the
// split's first observation across its grid (forward), FVP from its last
// (backward).
inline Real reconstruct_mse(const NeuralCodeModel& model, const TimeSeries& series,
                            Direction direction) {
    Real acc = 0.0;
    int count = 0;
    if (direction == Direction::Future) {
        PredictedPath p = predict_future(model, series.observation(0), series.times);
        for (int i = 0; i < series.length(); ++i) {
            Tensor target = series.observation(i);
            for (int j = 0; j < target.size(); ++j) {
                Real d = p.states[i][j] - target[j];
                acc += d * d;
                ++count;
            }
        }
    } else {
        std::vector<Real> desc(series.times.rbegin(), series.times.rend());
        PredictedPath p = predict_past(model, series.observation(series.length() - 1), desc);
        for (int i = 0; i < series.length(); ++i) {
            Tensor target = series.observation(series.length() - 1 - i);
            for (int j = 0; j < target.size(); ++j) {
                Real d = p.states[i][j] - target[j];
                acc += d * d;
                ++count;
            }
        }
    }
    return acc / count;
}

}  // namespace chronode
