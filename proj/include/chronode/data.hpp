#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "chronode/odesolve.hpp"

namespace chronode {

struct TimeSeries {
    std::vector<Real> times;         // strictly increasing
    Tensor values;                   // N x d
    std::vector<std::string> feature_names;

    int length() const { return static_cast<int>(times.size()); }
    int dim() const { return values.cols(); }

    // Observation i as a d x 1 column.
    Tensor observation(int i) const {
        Tensor x(values.cols(), 1);
        for (int j = 0; j < values.cols(); ++j) x(j, 0) = values(i, j);
        return x;
    }

    void validate() const {
        if (static_cast<int>(times.size()) != values.rows())
            throw DataError("TimeSeries: " + std::to_string(times.size()) + " times vs " +
                            std::to_string(values.rows()) + " rows");
        for (std::size_t i = 1; i < times.size(); ++i)
            if (times[i] <= times[i - 1])
                throw DataError("TimeSeries: non-increasing timestamp at row " +
                                std::to_string(i));
        if (!values.all_finite()) throw DataError("TimeSeries: non-finite value");
    }
};

// The cubic spiral field: dx/dt = -0.1 x^3 + 2 y^3, dy/dt = -2 x^3 - 0.1 y^3.
inline Tensor spiral_field(const Tensor& y, Real /*t*/) {
    Real x3 = y(0, 0) * y(0, 0) * y(0, 0);
    Real y3 = y(1, 0) * y(1, 0) * y(1, 0);
    Tensor f(2, 1);
    f(0, 0) = -0.1 * x3 + 2.0 * y3;
    f(1, 0) = -2.0 * x3 - 0.1 * y3;
    return f;
}

// Uniform grid on [0, t_max], integrated with fixed-step RK4. The default
// resolution keeps even coarse grids (step ~0.5, radius 2) converged to
// about 1e-7; finer grids are far better.
inline TimeSeries gen_spiral(int n_points, Real t_max, const Tensor& y0, int substeps = 200) {
    if (n_points < 2) throw DimensionError("gen_spiral: need at least 2 points");
    std::vector<Real> grid(n_points);
    for (int i = 0; i < n_points; ++i) grid[i] = t_max * i / (n_points - 1);
    std::vector<Tensor> states = integrate_rk4(spiral_field, y0, grid, substeps);
    TimeSeries ts;
    ts.times = grid;
    ts.values = Tensor(n_points, 2);
    for (int i = 0; i < n_points; ++i) {
        ts.values(i, 0) = states[i](0, 0);
        ts.values(i, 1) = states[i](1, 0);
    }
    ts.feature_names = {"x", "y"};
    return ts;
}

// Sine-mixture multivariate surrogate standing in for the real-data shapes.
// Each feature is a seeded mixture of three sines plus a slow trend.
inline TimeSeries gen_surrogate(int n_points, int dim, std::uint64_t seed, Real t_max = 10.0) {
    if (n_points < 2) throw DimensionError("gen_surrogate: need at least 2 points");
    Rng rng(seed);
    TimeSeries ts;
    ts.times.resize(n_points);
    for (int i = 0; i < n_points; ++i) ts.times[i] = t_max * i / (n_points - 1);
    ts.values = Tensor(n_points, dim);
    for (int j = 0; j < dim; ++j) {
        Real a1 = rng.uniform(0.5, 1.5), w1 = rng.uniform(0.5, 1.5), p1 = rng.uniform(0, 6.28);
        Real a2 = rng.uniform(0.2, 0.8), w2 = rng.uniform(1.5, 3.0), p2 = rng.uniform(0, 6.28);
        Real a3 = rng.uniform(0.1, 0.4), w3 = rng.uniform(3.0, 5.0), p3 = rng.uniform(0, 6.28);
        Real slope = rng.uniform(-0.1, 0.1);
        for (int i = 0; i < n_points; ++i) {
            Real t = ts.times[i];
            ts.values(i, j) = a1 * std::sin(w1 * t + p1) + a2 * std::sin(w2 * t + p2) +
                              a3 * std::sin(w3 * t + p3) + slope * t;
        }
        ts.feature_names.push_back("f" + std::to_string(j));
    }
    return ts;
}

namespace detail {

inline bool looks_like_date(const std::string& cell) {
    return cell.size() == 10 && cell[4] == '-' && cell[7] == '-';
}

// ISO-8601 date (YYYY-MM-DD) to a day count; plain reals pass through.
inline Real parse_time_cell(const std::string& cell, int row) {
    if (looks_like_date(cell)) {
        int y = std::stoi(cell.substr(0, 4));
        int m = std::stoi(cell.substr(5, 2));
        int d = std::stoi(cell.substr(8, 2));
        // Days since civil epoch (Howard Hinnant's algorithm).
        y -= m <= 2;
        int era = (y >= 0 ? y : y - 399) / 400;
        unsigned yoe = static_cast<unsigned>(y - era * 400);
        unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
        unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        return static_cast<Real>(era * 146097LL + static_cast<long long>(doe) - 719468LL);
    }
    try {
        std::size_t used = 0;
        Real v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        throw DataError("load_csv: unparseable time cell '" + cell + "' at row " +
                        std::to_string(row));
    }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

}  // namespace detail

// Reads a comma-delimited file with a header row. Dates in the time column
// are converted to day offsets from the first row. Gaps are kept verbatim;
// there is no resampling.
inline TimeSeries load_csv(const std::string& path, const std::string& time_column,
                           const std::vector<std::string>& feature_columns) {
    std::ifstream in(path);
    if (!in) throw DataError("load_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("load_csv: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header = detail::split_csv_line(line);

    auto col_index = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError("load_csv: no column '" + name + "' in " + path);
        return static_cast<int>(it - header.begin());
    };
    int tcol = col_index(time_column);
    std::vector<int> fcols;
    for (const auto& name : feature_columns) fcols.push_back(col_index(name));

    std::vector<Real> times;
    std::vector<std::vector<Real>> rows;
    bool dated = false;
    int row = 1;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells = detail::split_csv_line(line);
        if (static_cast<int>(cells.size()) != static_cast<int>(header.size()))
            throw DataError("load_csv: row " + std::to_string(row) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(header.size()));
        if (times.empty()) dated = detail::looks_like_date(cells[tcol]);
        times.push_back(detail::parse_time_cell(cells[tcol], row));
        std::vector<Real> vals;
        for (int c : fcols) {
            try {
                std::size_t used = 0;
                Real v = std::stod(cells[c], &used);
                if (used != cells[c].size()) throw std::invalid_argument(cells[c]);
                vals.push_back(v);
            } catch (const std::exception&) {
                throw DataError("load_csv: non-numeric cell '" + cells[c] + "' at row " +
                                std::to_string(row) + " column " + header[c]);
            }
        }
        rows.push_back(std::move(vals));
        ++row;
    }
    if (times.empty()) throw DataError("load_csv: no data rows in " + path);

    // Date columns become day offsets from the first row.
    Real base = times[0];
    TimeSeries ts;
    ts.times = times;
    if (dated)
        for (Real& t : ts.times) t -= base;
    for (std::size_t i = 1; i < ts.times.size(); ++i)
        if (ts.times[i] <= ts.times[i - 1])
            throw DataError("load_csv: duplicate or non-monotone timestamp at row " +
                            std::to_string(i + 1));
    ts.values = Tensor(static_cast<int>(rows.size()), static_cast<int>(fcols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            ts.values(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
    ts.feature_names = feature_columns;
    return ts;
}

struct NormStats {
    std::vector<Real> min, max;  // per feature, from the train split only

    Real forward(Real v, int feature) const {
        return (v - min[feature]) / (max[feature] - min[feature]);
    }
    Real inverse(Real v, int feature) const {
        return v * (max[feature] - min[feature]) + min[feature];
    }
};

inline NormStats norm_stats_from(const TimeSeries& train) {
    NormStats s;
    for (int j = 0; j < train.dim(); ++j) {
        Real lo = train.values(0, j), hi = lo;
        for (int i = 1; i < train.length(); ++i) {
            lo = std::min(lo, train.values(i, j));
            hi = std::max(hi, train.values(i, j));
        }
        if (hi <= lo)
            throw DataError("normalize: constant feature '" +
                            (j < static_cast<int>(train.feature_names.size())
                                 ? train.feature_names[j]
                                 : std::to_string(j)) +
                            "'");
        s.min.push_back(lo);
        s.max.push_back(hi);
    }
    return s;
}

// Per-feature min-max to [0,1] using the supplied (train) statistics. Test
// values outside the train range leave [0,1] and are not clipped.
inline TimeSeries normalize(const TimeSeries& series, const NormStats& stats) {
    TimeSeries out = series;
    for (int i = 0; i < out.length(); ++i)
        for (int j = 0; j < out.dim(); ++j) out.values(i, j) = stats.forward(out.values(i, j), j);
    return out;
}

inline TimeSeries denormalize(const TimeSeries& series, const NormStats& stats) {
    TimeSeries out = series;
    for (int i = 0; i < out.length(); ++i)
        for (int j = 0; j < out.dim(); ++j) out.values(i, j) = stats.inverse(out.values(i, j), j);
    return out;
}

enum class Task { Impute, ExtrapFwd, ExtrapBwd, Reconstruct };

inline Task parse_task(const std::string& s) {
    if (s == "impute") return Task::Impute;
    if (s == "extrap-fwd") return Task::ExtrapFwd;
    if (s == "extrap-bwd") return Task::ExtrapBwd;
    if (s == "reconstruct") return Task::Reconstruct;
    throw ConfigError("unknown task '" + s + "' (impute, extrap-fwd, extrap-bwd, reconstruct)");
}

struct TaskWindow {
    std::vector<int> inputs;
    std::vector<int> targets;
};

struct TaskWindowSet {
    Task task;
    int seen = 0, predict = 0;
    std::vector<TaskWindow> windows;
};

// Imputation triples follow the written skip pattern i = 1, 3, 6, 9, ...
// (1-based): first a gap of 2, then gaps of 3. stride = 2 gives strict
// alternation i = 1, 3, 5, ... instead.
inline TaskWindowSet make_windows(const TimeSeries& series, Task task, int seen, int predict,
                                  int stride) {
    TaskWindowSet set;
    set.task = task;
    set.seen = seen;
    set.predict = predict;
    const int n = series.length();
    if (task == Task::Impute) {
        if (n < 3)
            throw DimensionError("make_windows: imputation needs at least 3 points, have " +
                                 std::to_string(n));
        // 1-based anchor sequence mapped to 0-based indices.
        int i = 0;  // 1-based anchor 1 maps here
        while (i + 2 < n) {
            set.windows.push_back({{i, i + 2}, {i + 1}});
            i += (stride == 2) ? 2 : (i == 0 ? 2 : 3);
        }
    } else if (task == Task::ExtrapFwd || task == Task::ExtrapBwd) {
        int need = seen + predict;
        if (n < need)
            throw DimensionError("make_windows: series of length " + std::to_string(n) +
                                 " too short, need " + std::to_string(need));
        if (stride < 1) stride = need;
        for (int start = 0; start + need <= n; start += stride) {
            TaskWindow w;
            if (task == Task::ExtrapFwd) {
                for (int k = 0; k < seen; ++k) w.inputs.push_back(start + k);
                for (int k = 0; k < predict; ++k) w.targets.push_back(start + seen + k);
            } else {
                // Mirror: targets precede inputs.
                for (int k = 0; k < seen; ++k) w.inputs.push_back(start + predict + k);
                for (int k = 0; k < predict; ++k) w.targets.push_back(start + k);
            }
            set.windows.push_back(std::move(w));
        }
    } else {
        throw ContractError("make_windows: reconstruct task has no windows");
    }
    return set;
}

struct SplitSpec {
    Real train_fraction = 0.75;
};

inline std::pair<TimeSeries, TimeSeries> split(const TimeSeries& series, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw ConfigError("split: train_fraction must be in (0,1)");
    int n = series.length();
    int ntrain = static_cast<int>(std::llround(n * spec.train_fraction));
    ntrain = std::clamp(ntrain, 1, n - 1);
    TimeSeries train, test;
    train.feature_names = test.feature_names = series.feature_names;
    train.times.assign(series.times.begin(), series.times.begin() + ntrain);
    test.times.assign(series.times.begin() + ntrain, series.times.end());
    train.values = Tensor(ntrain, series.dim());
    test.values = Tensor(n - ntrain, series.dim());
    for (int i = 0; i < ntrain; ++i)
        for (int j = 0; j < series.dim(); ++j) train.values(i, j) = series.values(i, j);
    for (int i = ntrain; i < n; ++i)
        for (int j = 0; j < series.dim(); ++j) test.values(i - ntrain, j) = series.values(i, j);
    return {train, test};
}

inline void save_csv(const TimeSeries& series, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_csv: cannot write " + path);
    out << "t";
    for (const auto& n : series.feature_names) out << "," << n;
    out << "\n";
    out.precision(17);
    for (int i = 0; i < series.length(); ++i) {
        out << series.times[i];
        for (int j = 0; j < series.dim(); ++j) out << "," << series.values(i, j);
        out << "\n";
    }
}

}  // namespace chronode
