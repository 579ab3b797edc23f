#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "chronode/nn.hpp"

namespace chronode {

enum class SolverMethod { Rk4Fixed, Dopri5Adaptive };

struct SolverConfig {
    SolverMethod method = SolverMethod::Rk4Fixed;
    int substeps = 10;       // rk4: fixed steps per grid interval
    Real rtol = 1e-7;        // dopri5
    Real atol = 1e-9;        // dopri5
    int max_steps = 100000;  // dopri5: per grid interval
};

// States at the grid times, in grid order. Vars stay attached to the tape
// the solve was recorded on.
struct Trajectory {
    std::vector<Real> times;
    std::vector<Var> states;
};

// Vector field evaluated under autograd; captures its own ParamBinding.
using Field = std::function<Var(const Var& h, Real t)>;

namespace detail {

inline Var rk4_step(const Field& f, const Var& h, Real t, Real dt) {
    Var k1 = f(h, t);
    Var k2 = f(add(h, scale(k1, dt / 2.0)), t + dt / 2.0);
    Var k3 = f(add(h, scale(k2, dt / 2.0)), t + dt / 2.0);
    Var k4 = f(add(h, scale(k3, dt)), t + dt);
    // h + dt/6 * (k1 + 2 k2 + 2 k3 + k4)
    Var incr = add(add(k1, scale(k2, 2.0)), add(scale(k3, 2.0), k4));
    return add(h, scale(incr, dt / 6.0));
}

inline Var rk4_interval(const Field& f, Var h, Real t0, Real t1, int substeps) {
    Real dt = (t1 - t0) / substeps;
    for (int s = 0; s < substeps; ++s) h = rk4_step(f, h, t0 + s * dt, dt);
    return h;
}

// Dormand-Prince 5(4) coefficients.
struct Dopri5Tableau {
    static constexpr Real c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr Real a21 = 1.0 / 5;
    static constexpr Real a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr Real a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr Real a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
    static constexpr Real a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr Real b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr Real e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                          e4 = 125.0 / 192 - 393.0 / 640,
                          e5 = -2187.0 / 6784 + 92097.0 / 339200,
                          e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;
};

}  // namespace detail

struct Dopri5StepResult {
    Var h_next;     // 5th-order solution, recorded on the tape
    Real dt_next;   // PI-controlled proposal for the next step
    Real err_est;   // scaled error norm; accepted iff <= 1
};

// One embedded 5(4) step. Step-size update factor is clipped to [0.2, 5].
inline Dopri5StepResult dopri5_step(const Field& f, const Var& h, Real t, Real dt, Real rtol,
                                    Real atol) {
    using T = detail::Dopri5Tableau;
    if (dt == 0.0) throw ContractError("dopri5_step: dt must be nonzero");
    Var k1 = f(h, t);
    Var k2 = f(add(h, scale(k1, dt * T::a21)), t + dt * T::c2);
    Var k3 = f(add(h, add(scale(k1, dt * T::a31), scale(k2, dt * T::a32))), t + dt * T::c3);
    Var k4 = f(add(h, add(add(scale(k1, dt * T::a41), scale(k2, dt * T::a42)),
                          scale(k3, dt * T::a43))),
               t + dt * T::c4);
    Var k5 = f(add(h, add(add(scale(k1, dt * T::a51), scale(k2, dt * T::a52)),
                          add(scale(k3, dt * T::a53), scale(k4, dt * T::a54)))),
               t + dt * T::c5);
    Var k6 = f(add(h, add(add(scale(k1, dt * T::a61), scale(k2, dt * T::a62)),
                          add(add(scale(k3, dt * T::a63), scale(k4, dt * T::a64)),
                              scale(k5, dt * T::a65)))),
               t + dt);
    Var h_next = add(h, add(add(scale(k1, dt * T::b1), scale(k3, dt * T::b3)),
                            add(add(scale(k4, dt * T::b4), scale(k5, dt * T::b5)),
                                scale(k6, dt * T::b6))));
    Var k7 = f(h_next, t + dt);

    // Error estimate from tensor values only; step sizes are treated as
    // constants by the gradient.
    const Tensor &k1v = k1.value(), &k3v = k3.value(), &k4v = k4.value(), &k5v = k5.value(),
                 &k6v = k6.value(), &k7v = k7.value();
    const Tensor& hv = h.value();
    const Tensor& hnv = h_next.value();
    Real err = 0.0;
    for (int i = 0; i < hv.size(); ++i) {
        Real e = dt * (T::e1 * k1v[i] + T::e3 * k3v[i] + T::e4 * k4v[i] + T::e5 * k5v[i] +
                       T::e6 * k6v[i] + T::e7 * k7v[i]);
        Real tol = atol + rtol * std::max(std::abs(hv[i]), std::abs(hnv[i]));
        err += (e / tol) * (e / tol);
    }
    err = std::sqrt(err / hv.size());

    Real factor = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
    factor = std::clamp(factor, 0.2, 5.0);
    return {h_next, dt * factor, err};
}

namespace detail {

inline Var dopri5_interval(const Field& f, Var h, Real t0, Real t1, const SolverConfig& cfg) {
    const Real span = t1 - t0;
    const Real min_dt = 1e-12 * std::abs(span);
    Real t = t0;
    Real dt = span;
    int steps = 0;
    while (t < t1) {
        if (++steps > cfg.max_steps)
            throw NumericError("dopri5: exceeded " + std::to_string(cfg.max_steps) +
                               " steps on interval [" + std::to_string(t0) + ", " +
                               std::to_string(t1) + "]");
        dt = std::min(dt, t1 - t);
        if (dt < min_dt)
            throw NumericError("dopri5: step size underflow on interval [" +
                               std::to_string(t0) + ", " + std::to_string(t1) + "]");
        Dopri5StepResult r = dopri5_step(f, h, t, dt, cfg.rtol, cfg.atol);
        if (r.err_est <= 1.0) {
            h = r.h_next;
            t += dt;
        }
        dt = r.dt_next;
    }
    return h;
}

inline Var advance(const Field& f, const Var& h, Real t0, Real t1, const SolverConfig& cfg) {
    if (cfg.method == SolverMethod::Rk4Fixed) return rk4_interval(f, h, t0, t1, cfg.substeps);
    return dopri5_interval(f, h, t0, t1, cfg);
}

}  // namespace detail

// Solves dh/dt = f(h, t), h(t_grid[0]) = h0, reporting states at every grid
// time. The whole solve is recorded on h0's tape.
inline Trajectory solve_ivp(const Field& f, const Var& h0, const std::vector<Real>& t_grid,
                            const SolverConfig& cfg = {}) {
    if (t_grid.size() < 2) throw DimensionError("solve_ivp: grid needs at least 2 points");
    for (std::size_t i = 1; i < t_grid.size(); ++i)
        if (t_grid[i] <= t_grid[i - 1])
            throw DimensionError("solve_ivp: grid must be strictly increasing");
    if (cfg.substeps < 1) throw ContractError("solve_ivp: substeps must be >= 1");

    Trajectory traj;
    traj.times = t_grid;
    traj.states.reserve(t_grid.size());
    traj.states.push_back(h0);
    Var h = h0;
    for (std::size_t i = 1; i < t_grid.size(); ++i) {
        h = detail::advance(f, h, t_grid[i - 1], t_grid[i], cfg);
        traj.states.push_back(h);
    }
    return traj;
}

// Solves the final value problem along a strictly decreasing grid via the
// substitution H(s) = h(t_f - s): integrate dH/ds = -f(H, t_f - s) forward
// in s, then map the grid back.
inline Trajectory solve_fvp(const Field& f, const Var& hf, const std::vector<Real>& t_grid_desc,
                            const SolverConfig& cfg = {}) {
    if (t_grid_desc.size() < 2) throw DimensionError("solve_fvp: grid needs at least 2 points");
    for (std::size_t i = 1; i < t_grid_desc.size(); ++i)
        if (t_grid_desc[i] >= t_grid_desc[i - 1])
            throw DimensionError("solve_fvp: grid must be strictly decreasing");

    const Real tf = t_grid_desc.front();
    Field reversed = [&f, tf](const Var& h, Real s) { return scale(f(h, tf - s), -1.0); };
    std::vector<Real> s_grid(t_grid_desc.size());
    for (std::size_t i = 0; i < t_grid_desc.size(); ++i) s_grid[i] = tf - t_grid_desc[i];

    Trajectory traj = solve_ivp(reversed, hf, s_grid, cfg);
    traj.times = t_grid_desc;
    return traj;
}

// Field adapter for a DynamicsNet under a binding.
inline Field dynamics_field(ParamBinding& bind, const DynamicsNet& net) {
    return [&bind, &net](const Var& h, Real t) { return forward_mlp(bind, net, h, t); };
}

// Plain (non-differentiable) fixed-step RK4 on tensor-valued fields. Used
// for data generation and as a reference in tests.
inline std::vector<Tensor> integrate_rk4(const std::function<Tensor(const Tensor&, Real)>& f,
                                         Tensor y0, const std::vector<Real>& t_grid,
                                         int substeps) {
    std::vector<Tensor> out;
    out.reserve(t_grid.size());
    out.push_back(y0);
    Tensor y = std::move(y0);
    for (std::size_t i = 1; i < t_grid.size(); ++i) {
        Real dt = (t_grid[i] - t_grid[i - 1]) / substeps;
        Real t = t_grid[i - 1];
        for (int s = 0; s < substeps; ++s) {
            Tensor k1 = f(y, t);
            Tensor k2 = f(add(y, scale(k1, dt / 2)), t + dt / 2);
            Tensor k3 = f(add(y, scale(k2, dt / 2)), t + dt / 2);
            Tensor k4 = f(add(y, scale(k3, dt)), t + dt);
            Tensor incr = add(add(k1, scale(k2, 2.0)), add(scale(k3, 2.0), k4));
            y = add(y, scale(incr, dt / 6.0));
            t += dt;
        }
        out.push_back(y);
    }
    return out;
}

}  // namespace chronode
