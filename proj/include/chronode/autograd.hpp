#pragma once

#include <cmath>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "chronode/tensor.hpp"

namespace chronode {

enum class Activation { Tanh, Elu, Sigmoid, Identity };

class Tape;

// Lightweight handle into a Tape node. Copyable; the Tape owns the storage.
class Var {
public:
    Var() : tape_(nullptr), id_(-1) {}

    const Tensor& value() const;
    const Tensor& grad() const;
    int rows() const { return value().rows(); }
    int cols() const { return value().cols(); }
    bool valid() const { return tape_ != nullptr; }
    int id() const { return id_; }
    Tape* tape() const { return tape_; }

private:
    friend class Tape;
    Var(Tape* t, int id) : tape_(t), id_(id) {}
    Tape* tape_;
    int id_;
};

// Reverse-mode record of the forward computation. Nodes are appended in
// execution order, so parents always precede children (topological order).
class Tape {
public:
    // Backprop callback: reads adj[self], accumulates into adj[parent].
    using BackFn = std::function<void(std::vector<Tensor>& adj, int self)>;

    Var leaf(Tensor value) {
        nodes_.push_back({std::move(value), Tensor(), nullptr});
        return Var(this, static_cast<int>(nodes_.size()) - 1);
    }

    Var record(Tensor value, BackFn back) {
        nodes_.push_back({std::move(value), Tensor(), std::move(back)});
        return Var(this, static_cast<int>(nodes_.size()) - 1);
    }

    const Tensor& value(int id) const { return nodes_[id].value; }

    const Tensor& grad(int id) const {
        const Node& n = nodes_[id];
        if (n.grad.size() == 0) {
            // Lazily materialize a zero gradient of matching shape.
            const_cast<Node&>(n).grad = Tensor::zeros(n.value.rows(), n.value.cols());
        }
        return n.grad;
    }

    void zero_grad() {
        for (Node& n : nodes_) n.grad = Tensor();
    }

    std::size_t node_count() const { return nodes_.size(); }

    // Accumulates d(loss)/d(node) into every node's grad. Each call runs a
    // full fresh chain-rule pass, so repeated calls add up.
    void backward(const Var& loss) {
        if (loss.tape() != this) throw ContractError("backward: Var from another tape");
        const Tensor& lv = nodes_[loss.id()].value;
        if (lv.rows() != 1 || lv.cols() != 1)
            throw ContractError("backward: loss must be 1x1, got " + lv.shape_str());

        std::vector<Tensor> adj(loss.id() + 1);
        adj[loss.id()] = Tensor::ones(1, 1);
        for (int i = loss.id(); i >= 0; --i) {
            if (adj[i].size() == 0) continue;
            if (nodes_[i].back) nodes_[i].back(adj, i);
        }
        for (int i = 0; i <= loss.id(); ++i) {
            if (adj[i].size() == 0) continue;
            Node& n = nodes_[i];
            if (n.grad.size() == 0) n.grad = std::move(adj[i]);
            else add_in_place(n.grad, adj[i]);
        }
    }

    void accumulate(std::vector<Tensor>& adj, int id, const Tensor& delta) {
        if (adj[id].size() == 0)
            adj[id] = delta;
        else
            add_in_place(adj[id], delta);
    }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        BackFn back;
    };
    std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline const Tensor& Var::grad() const { return tape_->grad(id_); }

inline Tape& tape_of(const Var& a, const Var& b, const char* op) {
    if (a.tape() != b.tape())
        throw ContractError(std::string(op) + ": operands from different tapes");
    return *a.tape();
}

inline Var matmul(const Var& a, const Var& b) {
    Tape& t = tape_of(a, b, "matmul");
    Tensor out = matmul(a.value(), b.value());
    int ai = a.id(), bi = b.id();
    Tensor av = a.value(), bv = b.value();
    return t.record(std::move(out), [&t, ai, bi, av, bv](std::vector<Tensor>& adj, int self) {
        const Tensor& g = adj[self];
        t.accumulate(adj, ai, matmul(g, transpose(bv)));
        t.accumulate(adj, bi, matmul(transpose(av), g));
    });
}

// Elementwise add; additionally supports broadcasting a column bias b (n x 1)
// across the columns of a (n x m). The bias gradient is reduced by summing
// over the broadcast axis.
inline Var add(const Var& a, const Var& b) {
    Tape& t = tape_of(a, b, "add");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    int ai = a.id(), bi = b.id();
    if (av.same_shape(bv)) {
        return t.record(add(av, bv), [&t, ai, bi](std::vector<Tensor>& adj, int self) {
            t.accumulate(adj, ai, adj[self]);
            t.accumulate(adj, bi, adj[self]);
        });
    }
    if (bv.cols() == 1 && bv.rows() == av.rows()) {
        Tensor out = av;
        for (int i = 0; i < out.rows(); ++i)
            for (int j = 0; j < out.cols(); ++j) out(i, j) += bv(i, 0);
        return t.record(std::move(out), [&t, ai, bi](std::vector<Tensor>& adj, int self) {
            const Tensor& g = adj[self];
            t.accumulate(adj, ai, g);
            Tensor gb(g.rows(), 1);
            for (int i = 0; i < g.rows(); ++i)
                for (int j = 0; j < g.cols(); ++j) gb(i, 0) += g(i, j);
            t.accumulate(adj, bi, gb);
        });
    }
    throw DimensionError("add: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
}

inline Var sub(const Var& a, const Var& b) {
    Tape& t = tape_of(a, b, "sub");
    Tensor out = sub(a.value(), b.value());
    int ai = a.id(), bi = b.id();
    return t.record(std::move(out), [&t, ai, bi](std::vector<Tensor>& adj, int self) {
        t.accumulate(adj, ai, adj[self]);
        t.accumulate(adj, bi, scale(adj[self], -1.0));
    });
}

inline Var hadamard(const Var& a, const Var& b) {
    Tape& t = tape_of(a, b, "hadamard");
    Tensor out = hadamard(a.value(), b.value());
    int ai = a.id(), bi = b.id();
    Tensor av = a.value(), bv = b.value();
    return t.record(std::move(out), [&t, ai, bi, av, bv](std::vector<Tensor>& adj, int self) {
        t.accumulate(adj, ai, hadamard(adj[self], bv));
        t.accumulate(adj, bi, hadamard(adj[self], av));
    });
}

inline Var scale(const Var& a, Real s) {
    Tape& t = *a.tape();
    int ai = a.id();
    return t.record(scale(a.value(), s), [&t, ai, s](std::vector<Tensor>& adj, int self) {
        t.accumulate(adj, ai, scale(adj[self], s));
    });
}

inline Real activation_apply(Activation kind, Real x) {
    switch (kind) {
        case Activation::Tanh: return std::tanh(x);
        case Activation::Elu: return x > 0.0 ? x : std::expm1(x);  // alpha = 1
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Activation::Identity: return x;
    }
    return x;
}

// Derivative expressed through input x and output y.
inline Real activation_slope(Activation kind, Real x, Real y) {
    switch (kind) {
        case Activation::Tanh: return 1.0 - y * y;
        case Activation::Elu: return x > 0.0 ? 1.0 : y + 1.0;
        case Activation::Sigmoid: return y * (1.0 - y);
        case Activation::Identity: return 1.0;
    }
    return 1.0;
}

inline Var activation(const Var& a, Activation kind) {
    Tape& t = *a.tape();
    const Tensor& av = a.value();
    Tensor out = av;
    for (int i = 0; i < out.size(); ++i) out[i] = activation_apply(kind, out[i]);
    int ai = a.id();
    Tensor xv = av, yv = out;
    return t.record(std::move(out), [&t, ai, kind, xv, yv](std::vector<Tensor>& adj, int self) {
        Tensor g = adj[self];
        for (int i = 0; i < g.size(); ++i) g[i] *= activation_slope(kind, xv[i], yv[i]);
        t.accumulate(adj, ai, g);
    });
}

// Stacks a on top of b. Either operand may be empty (0 rows).
inline Var concat_rows(const Var& a, const Var& b) {
    Tape& t = tape_of(a, b, "concat_rows");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rows() > 0 && bv.rows() > 0 && av.cols() != bv.cols())
        throw DimensionError("concat_rows: column mismatch " + av.shape_str() + " vs " +
                             bv.shape_str());
    int cols = av.rows() > 0 ? av.cols() : bv.cols();
    Tensor out(av.rows() + bv.rows(), cols);
    std::copy(av.data().begin(), av.data().end(), out.data().begin());
    std::copy(bv.data().begin(), bv.data().end(), out.data().begin() + av.size());
    int ai = a.id(), bi = b.id();
    int ar = av.rows(), br = bv.rows();
    return t.record(std::move(out), [&t, ai, bi, ar, br, cols](std::vector<Tensor>& adj, int self) {
        const Tensor& g = adj[self];
        Tensor ga(ar, ar > 0 ? cols : 0), gb(br, br > 0 ? cols : 0);
        std::copy(g.data().begin(), g.data().begin() + ga.size(), ga.data().begin());
        std::copy(g.data().begin() + ga.size(), g.data().end(), gb.data().begin());
        if (ga.size() > 0) t.accumulate(adj, ai, ga);
        if (gb.size() > 0) t.accumulate(adj, bi, gb);
    });
}

// Mean squared error against a constant target. Result is 1x1.
inline Var mse(const Var& pred, const Tensor& target) {
    Tape& t = *pred.tape();
    const Tensor& pv = pred.value();
    require_same_shape(pv, target, "mse");
    Real acc = 0.0;
    for (int i = 0; i < pv.size(); ++i) {
        Real d = pv[i] - target[i];
        acc += d * d;
    }
    const int count = pv.size();
    Tensor out(1, 1, acc / count);
    int pi = pred.id();
    Tensor pvc = pv, tv = target;
    return t.record(std::move(out), [&t, pi, pvc, tv, count](std::vector<Tensor>& adj, int self) {
        Real g = adj[self](0, 0);
        Tensor gp(pvc.rows(), pvc.cols());
        for (int i = 0; i < gp.size(); ++i) gp[i] = g * 2.0 * (pvc[i] - tv[i]) / count;
        t.accumulate(adj, pi, gp);
    });
}

inline Var sum(const Var& a) {
    Tape& t = *a.tape();
    Real acc = 0.0;
    for (int i = 0; i < a.value().size(); ++i) acc += a.value()[i];
    int ai = a.id();
    int r = a.rows(), c = a.cols();
    return t.record(Tensor(1, 1, acc), [&t, ai, r, c](std::vector<Tensor>& adj, int self) {
        t.accumulate(adj, ai, scale(Tensor::ones(r, c), adj[self](0, 0)));
    });
}

inline void backward(const Var& loss) { loss.tape()->backward(loss); }

// Binds persistent parameter Tensors to tape leaves for one forward pass.
// Repeated lookups of the same parameter return the same leaf, so gradients
// from every use accumulate in one place.
class ParamBinding {
public:
    explicit ParamBinding(Tape& tape) : tape_(tape) {}

    Var operator()(const Tensor& param) {
        auto it = bound_.find(&param);
        if (it != bound_.end()) return it->second;
        Var v = tape_.leaf(param);
        bound_.emplace(&param, v);
        return v;
    }

    Tape& tape() { return tape_; }

    // Gradient of a bound parameter; zeros if the parameter never
    // participated in the pass.
    Tensor grad_of(const Tensor& param) const {
        auto it = bound_.find(&param);
        if (it == bound_.end()) return Tensor::zeros(param.rows(), param.cols());
        return it->second.grad();
    }

private:
    Tape& tape_;
    std::unordered_map<const Tensor*, Var> bound_;
};

}  // namespace chronode
