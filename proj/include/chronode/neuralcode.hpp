#pragma once

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "chronode/data.hpp"
#include "chronode/odesolve.hpp"

namespace chronode {

struct TrainConfig {
    int max_iter = 2000;
    Real lr = 1e-3;
    int batch_size = 1;
    int seq_len = 10;
    std::uint64_t seed = 0;
    int loss_log_every = 20;
    int patience = 0;  // 0 disables early stopping
};

struct LossRecord {
    int iteration;
    Real forward_mse;
    Real backward_mse;  // NaN when not trained backward
    Real total;
};

struct NeuralCodeModel {
    DynamicsNet dynamics;
    SolverConfig solver;

    int state_dim() const { return dynamics.state_dim(); }

    static NeuralCodeModel make(int state_dim, int hidden, Activation act, Rng& rng,
                                SolverConfig solver = {}) {
        return {DynamicsNet::make(state_dim, {hidden}, act, rng), solver};
    }

    std::vector<Tensor*> parameters() { return dynamics.parameters(); }
    std::vector<std::pair<std::string, Tensor*>> named_parameters() {
        return dynamics.named_parameters("dynamics");
    }
};

// One training batch: a contiguous window of the series.
struct Batch {
    std::vector<Real> times;       // ascending
    std::vector<Tensor> targets;   // d x 1 each, aligned with times
};

inline Batch window_batch(const TimeSeries& series, int start, int len) {
    Batch b;
    for (int i = start; i < start + len; ++i) {
        b.times.push_back(series.times[i]);
        b.targets.push_back(series.observation(i));
    }
    return b;
}

namespace detail {

inline Var trajectory_mse(const Trajectory& traj, const std::vector<Tensor>& targets) {
    if (traj.states.size() != targets.size())
        throw DimensionError("trajectory_mse: " + std::to_string(traj.states.size()) +
                             " states vs " + std::to_string(targets.size()) + " targets");
    Var acc;
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
        Var term = mse(traj.states[i], targets[i]);
        acc = acc.valid() ? add(acc, term) : term;
    }
    return scale(acc, 1.0 / static_cast<Real>(targets.size()));
}

}  // namespace detail

// Forward term of the training loss: IVP from the window's first
// observation, MSE against the forward targets.
inline Var code_forward_loss(ParamBinding& bind, const NeuralCodeModel& model, const Batch& b) {
    Var h0 = bind.tape().leaf(b.targets.front());
    Trajectory fwd = solve_ivp(dynamics_field(bind, model.dynamics), h0, b.times, model.solver);
    return detail::trajectory_mse(fwd, b.targets);
}

// Backward term: FVP from the window's last observation against the
// reversed targets.
inline Var code_backward_loss(ParamBinding& bind, const NeuralCodeModel& model, const Batch& b) {
    Var hf = bind.tape().leaf(b.targets.back());
    std::vector<Real> desc(b.times.rbegin(), b.times.rend());
    std::vector<Tensor> rev(b.targets.rbegin(), b.targets.rend());
    Trajectory bwd = solve_fvp(dynamics_field(bind, model.dynamics), hf, desc, model.solver);
    return detail::trajectory_mse(bwd, rev);
}

// L_total = forward MSE + backward MSE, assembled from the same primitives.
inline Var code_total_loss(ParamBinding& bind, const NeuralCodeModel& model, const Batch& b) {
    return add(code_forward_loss(bind, model, b), code_backward_loss(bind, model, b));
}

struct TrainResult {
    std::vector<LossRecord> history;
};

namespace detail {

inline TrainResult train_ode_family(NeuralCodeModel& model, const TimeSeries& series,
                                    const TrainConfig& cfg, bool include_backward) {
    if (series.length() < cfg.seq_len)
        throw DimensionError("train: series length " + std::to_string(series.length()) +
                             " < seq_len " + std::to_string(cfg.seq_len));
    if (series.dim() != model.state_dim())
        throw DimensionError("train: series dim " + std::to_string(series.dim()) +
                             " != model state dim " + std::to_string(model.state_dim()));
    Rng rng(cfg.seed);
    std::vector<Tensor*> params = model.parameters();
    AdamState adam = AdamState::init(params, cfg.lr);
    TrainResult result;
    Real best = std::numeric_limits<Real>::infinity();
    int stall = 0;

    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        int start = static_cast<int>(rng.uniform_int(0, series.length() - cfg.seq_len));
        Batch batch = window_batch(series, start, cfg.seq_len);

        Tape tape;
        ParamBinding bind(tape);
        Var fwd = code_forward_loss(bind, model, batch);
        Real fwd_v = fwd.value()(0, 0);
        Var loss = fwd;
        Real bwd_v = std::numeric_limits<Real>::quiet_NaN();
        if (include_backward) {
            Var bwd = code_backward_loss(bind, model, batch);
            bwd_v = bwd.value()(0, 0);
            loss = add(fwd, bwd);
        }
        Real total = loss.value()(0, 0);
        if (!std::isfinite(total))
            throw NumericError("training diverged (non-finite loss) at iteration " +
                               std::to_string(iter));
        backward(loss);
        std::vector<Tensor> grads;
        grads.reserve(params.size());
        for (Tensor* p : params) grads.push_back(bind.grad_of(*p));
        adam_step(params, grads, adam);

        if (iter % cfg.loss_log_every == 0 || iter == cfg.max_iter - 1)
            result.history.push_back({iter, fwd_v, bwd_v, total});

        if (cfg.patience > 0) {
            if (total < best - 1e-12) {
                best = total;
                stall = 0;
            } else if (++stall >= cfg.patience) {
                break;
            }
        }
    }
    return result;
}

}  // namespace detail

inline TrainResult train_neural_code(NeuralCodeModel& model, const TimeSeries& series,
                                     const TrainConfig& cfg) {
    return detail::train_ode_family(model, series, cfg, true);
}

inline TrainResult train_neural_ode(NeuralCodeModel& model, const TimeSeries& series,
                                    const TrainConfig& cfg) {
    return detail::train_ode_family(model, series, cfg, false);
}

// Plain-value trajectory handed to callers that only read predictions.
struct PredictedPath {
    std::vector<Real> times;
    std::vector<Tensor> states;
};

inline PredictedPath predict_future(const NeuralCodeModel& model, const Tensor& h0,
                                    const std::vector<Real>& grid) {
    Tape tape;
    ParamBinding bind(tape);
    Trajectory traj = solve_ivp(dynamics_field(bind, model.dynamics), tape.leaf(h0), grid,
                                model.solver);
    PredictedPath out;
    out.times = traj.times;
    for (const Var& s : traj.states) out.states.push_back(s.value());
    return out;
}

inline PredictedPath predict_past(const NeuralCodeModel& model, const Tensor& hf,
                                  const std::vector<Real>& grid_desc) {
    Tape tape;
    ParamBinding bind(tape);
    Trajectory traj = solve_fvp(dynamics_field(bind, model.dynamics), tape.leaf(hf), grid_desc,
                                model.solver);
    PredictedPath out;
    out.times = traj.times;
    for (const Var& s : traj.states) out.states.push_back(s.value());
    return out;
}

inline void write_loss_history(const std::vector<LossRecord>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("write_loss_history: cannot write " + path);
    out << "iteration,forward_mse,backward_mse,total\n";
    out.precision(17);
    for (const auto& r : history) {
        out << r.iteration << "," << r.forward_mse << ",";
        if (std::isfinite(r.backward_mse)) out << r.backward_mse;
        out << "," << r.total << "\n";
    }
}

}  // namespace chronode
