#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <string>
#include <vector>

#include "chronode/common.hpp"

namespace chronode {

// Dense row-major real matrix. Column vectors are rows x 1.
class Tensor {
public:
    Tensor() : rows_(0), cols_(0) {}

    Tensor(int rows, int cols, Real fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
        if (rows < 0 || cols < 0) throw DimensionError("Tensor: negative dimension");
    }

    Tensor(std::initializer_list<std::initializer_list<Real>> init) {
        rows_ = static_cast<int>(init.size());
        cols_ = rows_ ? static_cast<int>(init.begin()->size()) : 0;
        data_.reserve(static_cast<std::size_t>(rows_) * cols_);
        for (const auto& row : init) {
            if (static_cast<int>(row.size()) != cols_)
                throw DimensionError("Tensor: ragged initializer");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static Tensor zeros(int rows, int cols) { return Tensor(rows, cols, 0.0); }
    static Tensor ones(int rows, int cols) { return Tensor(rows, cols, 1.0); }

    static Tensor identity(int n) {
        Tensor t(n, n);
        for (int i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }

    // Column vector from a flat list.
    static Tensor column(std::initializer_list<Real> vals) {
        Tensor t(static_cast<int>(vals.size()), 1);
        std::copy(vals.begin(), vals.end(), t.data_.begin());
        return t;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int size() const { return rows_ * cols_; }

    Real& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    Real operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

    Real& operator[](int i) { return data_[i]; }
    Real operator[](int i) const { return data_[i]; }

    std::vector<Real>& data() { return data_; }
    const std::vector<Real>& data() const { return data_; }

    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    bool all_finite() const {
        for (Real v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    int rows_, cols_;
    std::vector<Real> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() +
                             " vs " + b.shape_str());
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dimension mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
    Tensor out(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int k = 0; k < a.cols(); ++k) {
            const Real aik = a(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    return out;
}

inline Tensor transpose(const Tensor& a) {
    Tensor out(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (int i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a;
    for (int i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    Tensor out = a;
    for (int i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

inline Tensor scale(const Tensor& a, Real s) {
    Tensor out = a;
    for (int i = 0; i < out.size(); ++i) out[i] *= s;
    return out;
}

inline void add_in_place(Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add_in_place");
    for (int i = 0; i < a.size(); ++i) a[i] += b[i];
}

inline Real max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    Real m = 0.0;
    for (int i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline Real frobenius_norm(const Tensor& a) {
    Real s = 0.0;
    for (int i = 0; i < a.size(); ++i) s += a[i] * a[i];
    return std::sqrt(s);
}

// Largest singular value via power iteration on W^T W.
inline Real spectral_norm(const Tensor& w, int iters = 200) {
    if (w.size() == 0) return 0.0;
    Tensor v(w.cols(), 1, 1.0 / std::sqrt(static_cast<Real>(w.cols())));
    Real sigma = 0.0;
    for (int it = 0; it < iters; ++it) {
        Tensor u = matmul(w, v);
        Real un = frobenius_norm(u);
        if (un == 0.0) return 0.0;
        Tensor vt = matmul(transpose(w), u);
        Real vn = frobenius_norm(vt);
        if (vn == 0.0) return 0.0;
        v = scale(vt, 1.0 / vn);
        sigma = vn / un;
    }
    return sigma;
}

}  // namespace chronode
