#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "chronode/chronode.hpp"

namespace fs = std::filesystem;
using namespace chronode;

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
    std::vector<std::uint64_t> seeds;
    for (const std::string& item : split_list(s)) {
        try {
            seeds.push_back(std::stoull(item));
        } catch (const std::exception&) {
            throw ConfigError("bad seed '" + item + "' in --seeds");
        }
    }
    if (seeds.empty()) throw ConfigError("--seeds must list at least one seed");
    return seeds;
}

int thread_cap() {
    const char* env = std::getenv("CHRONODE_THREADS");
    if (!env) return 1;
    try {
        int n = std::stoi(env);
        if (n < 1) throw std::invalid_argument(env);
        return n;
    } catch (const std::exception&) {
        throw ConfigError("CHRONODE_THREADS must be a positive integer");
    }
}

// Runs fn(i) for i in [0, n) with at most `cap` concurrent workers. Results
// and output files are handled by the caller after all workers join.
void run_parallel(int n, int cap, const std::function<void(int)>& fn) {
    if (cap <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    for (int base = 0; base < n; base += cap) {
        std::vector<std::thread> pool;
        for (int i = base; i < std::min(n, base + cap); ++i)
            pool.emplace_back([&, i]() {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            });
        for (std::thread& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << content;
}

std::string fmt(Real v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

// ---------------------------------------------------------------------------
// spiral-gen

struct SpiralGenOpts {
    std::string preset = "2000-1000";
    Real t_max = 25.0;
    std::string y0 = "2,0";
    std::string out = ".";
};

void cmd_spiral_gen(const SpiralGenOpts& o) {
    int n_train, n_test;
    if (o.preset == "2000-1000") {
        n_train = 2000;
        n_test = 1000;
    } else if (o.preset == "1000-2000") {
        n_train = 1000;
        n_test = 2000;
    } else {
        throw ConfigError("unknown preset '" + o.preset + "' (2000-1000, 1000-2000)");
    }
    std::vector<std::string> parts = split_list(o.y0);
    if (parts.size() != 2) throw ConfigError("--y0 must be two comma-separated reals");
    Tensor y0(2, 1);
    try {
        y0(0, 0) = std::stod(parts[0]);
        y0(1, 0) = std::stod(parts[1]);
    } catch (const std::exception&) {
        throw ConfigError("--y0 must be two comma-separated reals");
    }

    ensure_dir(o.out);
    TimeSeries full = gen_spiral(n_train + n_test, o.t_max, y0);
    SplitSpec spec{static_cast<Real>(n_train) / (n_train + n_test)};
    auto [train, test] = split(full, spec);
    save_csv(full, o.out + "/full.csv");
    save_csv(train, o.out + "/train.csv");
    save_csv(test, o.out + "/test.csv");
    std::ostringstream manifest;
    manifest << "preset," << o.preset << "\ntrain_rows," << train.length() << "\ntest_rows,"
             << test.length() << "\nt_max," << fmt(o.t_max) << "\ny0," << fmt(y0(0, 0)) << ";"
             << fmt(y0(1, 0)) << "\n";
    write_text(o.out + "/manifest.csv", manifest.str());
    std::cout << "wrote " << o.out << "/{full,train,test,manifest}.csv (" << train.length()
              << "/" << test.length() << ")\n";
}

// ---------------------------------------------------------------------------
// gen-surrogate

struct SurrogateOpts {
    int points = 200;
    int dim = 1;
    std::uint64_t seed = 0;
    Real t_max = 10.0;
    std::string out = ".";
};

void cmd_gen_surrogate(const SurrogateOpts& o) {
    if (o.points < 2) throw ConfigError("--points must be >= 2");
    if (o.dim < 1) throw ConfigError("--dim must be >= 1");
    ensure_dir(o.out);
    TimeSeries ts = gen_surrogate(o.points, o.dim, o.seed, o.t_max);
    save_csv(ts, o.out + "/surrogate.csv");
    std::cout << "wrote " << o.out << "/surrogate.csv (" << o.points << " rows, d=" << o.dim
              << ")\n";
}

// ---------------------------------------------------------------------------
// shared run configuration for train/eval

struct RunOpts {
    std::string model;
    std::string task = "reconstruct";
    std::string data;
    std::string time_column = "t";
    std::string features;  // comma list; empty = all non-time columns
    int seen = 7;
    int predict = 7;
    int stride = 0;
    std::string seeds = "0,1,2";
    int iters = -1;       // -1: family default (2000 ODE-family, 50 windowed)
    Real lr = -1.0;       // -1: family default (1e-3 ODE-family, 5e-4 windowed)
    int seq_len = 10;
    int hidden = -1;      // -1: family default (50 ODE-family, 16 recurrent)
    int dynamics_hidden = 32;
    std::string solver = "rk4";
    int substeps = 10;
    Real rtol = 1e-7;
    Real atol = 1e-9;
    Real train_fraction = 0.75;
    bool normalize = true;
    std::string out = "run_out";
    std::string checkpoint;  // eval only
    std::string config_file;
};

// Flat key=value config file; values already set on the command line win.
void apply_config(RunOpts& o, const CLI::App* cmd) {
    std::ifstream in(o.config_file);
    if (!in) throw ConfigError("cannot open config file " + o.config_file);
    auto unquote = [](std::string v) {
        if (v.size() >= 2 && v.front() == '"' && v.back() == '"')
            v = v.substr(1, v.size() - 2);
        return v;
    };
    auto to_int = [](const std::string& v, const std::string& key) {
        try {
            return std::stoi(v);
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": bad integer '" + v + "'");
        }
    };
    auto to_real = [](const std::string& v, const std::string& key) -> Real {
        try {
            return std::stod(v);
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": bad number '" + v + "'");
        }
    };
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + " is not key=value");
        std::string key = line.substr(0, eq);
        std::string value = unquote(line.substr(eq + 1));
        // An explicit flag always wins over the file.
        if (cmd->get_option_no_throw("--" + key) && cmd->count("--" + key) > 0) continue;
        if (key == "model") o.model = value;
        else if (key == "task") o.task = value;
        else if (key == "data") o.data = value;
        else if (key == "time-column") o.time_column = value;
        else if (key == "features") o.features = value;
        else if (key == "seen") o.seen = to_int(value, key);
        else if (key == "predict") o.predict = to_int(value, key);
        else if (key == "stride") o.stride = to_int(value, key);
        else if (key == "seeds") o.seeds = value;
        else if (key == "iters") o.iters = to_int(value, key);
        else if (key == "lr") o.lr = to_real(value, key);
        else if (key == "seq-len") o.seq_len = to_int(value, key);
        else if (key == "hidden") o.hidden = to_int(value, key);
        else if (key == "dynamics-hidden") o.dynamics_hidden = to_int(value, key);
        else if (key == "solver") o.solver = value;
        else if (key == "substeps") o.substeps = to_int(value, key);
        else if (key == "rtol") o.rtol = to_real(value, key);
        else if (key == "atol") o.atol = to_real(value, key);
        else if (key == "train-fraction") o.train_fraction = to_real(value, key);
        else if (key == "normalize") o.normalize = (value == "true" || value == "1");
        else if (key == "out") o.out = value;
        else if (key == "checkpoint") o.checkpoint = value;
        else throw ConfigError("unknown config key '" + key + "'");
    }
}

bool is_ode_family(const std::string& model) {
    return model == "neural-ode" || model == "neural-code";
}

void validate_model(const std::string& model) {
    if (model.empty()) throw ConfigError("--model is required");
    if (is_ode_family(model)) return;
    parse_arch_spec(model);  // throws ConfigError listing the nine specs
}

SolverConfig solver_config(const RunOpts& o) {
    SolverConfig cfg;
    if (o.solver == "rk4")
        cfg.method = SolverMethod::Rk4Fixed;
    else if (o.solver == "dopri5")
        cfg.method = SolverMethod::Dopri5Adaptive;
    else
        throw ConfigError("unknown solver '" + o.solver + "' (rk4, dopri5)");
    if (o.substeps < 1) throw ConfigError("--substeps must be >= 1");
    cfg.substeps = o.substeps;
    cfg.rtol = o.rtol;
    cfg.atol = o.atol;
    return cfg;
}

std::vector<std::string> header_of(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return split_list(line);
}

struct LoadedData {
    TimeSeries train, test;
    NormStats stats;
    bool normalized = false;
};

LoadedData load_run_data(const RunOpts& o) {
    if (o.data.empty()) throw ConfigError("--data is required");
    std::vector<std::string> features = split_list(o.features);
    if (features.empty() || o.features.empty()) {
        features.clear();
        for (const std::string& col : header_of(o.data))
            if (col != o.time_column) features.push_back(col);
    }
    if (features.empty()) throw ConfigError("no feature columns in " + o.data);
    TimeSeries full = load_csv(o.data, o.time_column, features);
    full.validate();
    LoadedData d;
    auto [train, test] = split(full, {o.train_fraction});
    d.train = train;
    d.test = test;
    if (o.normalize) {
        d.stats = norm_stats_from(d.train);
        d.train = normalize(d.train, d.stats);
        d.test = normalize(d.test, d.stats);
        d.normalized = true;
    }
    return d;
}

int default_iters(const RunOpts& o) {
    if (o.iters > 0) return o.iters;
    if (o.iters == 0 || o.iters < -1) throw ConfigError("--iters must be positive");
    return is_ode_family(o.model) ? 2000 : 50;
}

Real default_lr(const RunOpts& o) {
    if (o.lr > 0) return o.lr;
    return is_ode_family(o.model) ? 1e-3 : 5e-4;
}

int default_hidden(const RunOpts& o) {
    if (o.hidden > 0) return o.hidden;
    return is_ode_family(o.model) ? 50 : 16;
}

ArchSpec make_arch_spec(const RunOpts& o) {
    auto [family, cell] = parse_arch_spec(o.model);
    ArchSpec spec;
    spec.family = family;
    spec.cell = cell;
    spec.hidden_dim = default_hidden(o);
    spec.dynamics_hidden = o.dynamics_hidden;
    return spec;
}

// The effective configuration, echoed in a form set_config can read back.
std::string config_echo(const RunOpts& o, const std::string& seeds) {
    std::ostringstream out;
    out << "model=\"" << o.model << "\"\n";
    out << "task=\"" << o.task << "\"\n";
    out << "data=\"" << o.data << "\"\n";
    out << "time-column=\"" << o.time_column << "\"\n";
    if (!o.features.empty()) out << "features=\"" << o.features << "\"\n";
    out << "seen=" << o.seen << "\n";
    out << "predict=" << o.predict << "\n";
    out << "stride=" << o.stride << "\n";
    if (!seeds.empty()) out << "seeds=\"" << seeds << "\"\n";
    out << "iters=" << default_iters(o) << "\n";
    out << "lr=" << fmt(default_lr(o)) << "\n";
    out << "seq-len=" << o.seq_len << "\n";
    out << "hidden=" << default_hidden(o) << "\n";
    out << "dynamics-hidden=" << o.dynamics_hidden << "\n";
    out << "solver=\"" << o.solver << "\"\n";
    out << "substeps=" << o.substeps << "\n";
    out << "rtol=" << fmt(o.rtol) << "\n";
    out << "atol=" << fmt(o.atol) << "\n";
    out << "train-fraction=" << fmt(o.train_fraction) << "\n";
    out << "normalize=" << (o.normalize ? "true" : "false") << "\n";
    out << "out=\"" << o.out << "\"\n";
    return out.str();
}

// One direction-tagged metric row.
struct MetricRow {
    std::string direction;
    Real mse;
};

std::string direction_label(Task task) {
    switch (task) {
        case Task::ExtrapFwd: return "forward";
        case Task::ExtrapBwd: return "backward";
        default: return "both";
    }
}

void write_report(const std::string& path, const std::string& model, const std::string& task,
                  const std::vector<std::uint64_t>& seeds,
                  const std::vector<std::vector<MetricRow>>& per_seed) {
    std::ostringstream out;
    out << "model,task,direction,seed,mse\n";
    std::vector<std::string> directions;
    for (const MetricRow& r : per_seed[0]) directions.push_back(r.direction);
    for (std::size_t s = 0; s < seeds.size(); ++s)
        for (const MetricRow& r : per_seed[s])
            out << model << "," << task << "," << r.direction << "," << seeds[s] << ","
                << fmt(r.mse) << "\n";
    for (std::size_t d = 0; d < directions.size(); ++d) {
        Real mean = 0.0;
        for (std::size_t s = 0; s < seeds.size(); ++s) mean += per_seed[s][d].mse;
        mean /= seeds.size();
        Real var = 0.0;
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            Real dev = per_seed[s][d].mse - mean;
            var += dev * dev;
        }
        var /= seeds.size();  // population standard deviation
        out << model << "," << task << "," << directions[d] << ",avg," << fmt(mean) << "\n";
        out << model << "," << task << "," << directions[d] << ",std," << fmt(std::sqrt(var))
            << "\n";
    }
    write_text(path, out.str());
}

// ---------------------------------------------------------------------------
// train

std::vector<MetricRow> eval_ode_family(NeuralCodeModel& model, const TimeSeries& test) {
    return {{"forward", reconstruct_mse(model, test, Direction::Future)},
            {"backward", reconstruct_mse(model, test, Direction::Past)}};
}

Real recurrent_reconstruct_mse(const RecurrentModel& model, const TimeSeries& series) {
    std::vector<Tensor> xs;
    for (int i = 0; i < series.length(); ++i) xs.push_back(series.observation(i));
    std::vector<Tensor> preds = recurrent_predict(model, series.times, xs, Direction::Future);
    Real acc = 0.0;
    int count = 0;
    for (int i = 0; i < series.length(); ++i) {
        Tensor target = series.observation(i);
        for (int j = 0; j < target.size(); ++j) {
            Real d = preds[i][j] - target[j];
            acc += d * d;
            ++count;
        }
    }
    return acc / count;
}

void cmd_train(const RunOpts& o) {
    validate_model(o.model);
    Task task = parse_task(o.task);
    if (is_ode_family(o.model) && task != Task::Reconstruct)
        throw ConfigError("model " + o.model + " supports only --task reconstruct");
    LoadedData data = load_run_data(o);
    SolverConfig solver = solver_config(o);
    std::vector<std::uint64_t> seeds = parse_seeds(o.seeds);
    ensure_dir(o.out);

    TrainConfig tcfg;
    tcfg.max_iter = default_iters(o);
    tcfg.lr = default_lr(o);
    tcfg.seq_len = o.seq_len;

    TaskWindowSet train_windows, test_windows;
    if (!is_ode_family(o.model) && task != Task::Reconstruct) {
        train_windows = make_windows(data.train, task, o.seen, o.predict, o.stride);
        test_windows = make_windows(data.test, task, o.seen, o.predict, o.stride);
    }

    std::vector<std::vector<MetricRow>> per_seed(seeds.size());
    std::vector<std::string> ckpt_paths(seeds.size()), loss_paths(seeds.size());
    std::vector<TrainResult> results(seeds.size());
    std::vector<std::vector<std::pair<std::string, Tensor>>> ckpts(seeds.size());

    auto run_seed = [&](int k) {
        std::uint64_t seed = seeds[k];
        try {
            Rng rng(seed);
            if (is_ode_family(o.model)) {
                NeuralCodeModel model = NeuralCodeModel::make(
                    data.train.dim(), default_hidden(o), Activation::Tanh, rng, solver);
                TrainConfig cfg = tcfg;
                cfg.seed = seed;
                results[k] = (o.model == "neural-code") ? train_neural_code(model, data.train, cfg)
                                                        : train_neural_ode(model, data.train, cfg);
                per_seed[k] = eval_ode_family(model, data.test);
                for (auto& [name, t] : model.named_parameters()) ckpts[k].emplace_back(name, *t);
            } else {
                ArchSpec spec = make_arch_spec(o);
                spec.state_dim = data.train.dim();
                RecurrentModel model = build_for_task(spec, task, rng, solver);
                TrainConfig cfg = tcfg;
                cfg.seed = seed;
                if (task == Task::Reconstruct) {
                    results[k] = train_recurrent(model, data.train, cfg);
                    per_seed[k] = {{"both", recurrent_reconstruct_mse(model, data.test)}};
                } else {
                    results[k] = train_on_windows(model, data.train, train_windows, cfg);
                    EvalResult res = eval_on_windows(model, data.test, test_windows);
                    per_seed[k] = {{direction_label(task), res.mse}};
                }
                for (auto& [name, t] : model.named_parameters()) ckpts[k].emplace_back(name, *t);
            }
        } catch (const NumericError& e) {
            throw NumericError("seed " + std::to_string(seed) + ": " + e.what());
        }
    };
    run_parallel(static_cast<int>(seeds.size()), thread_cap(), run_seed);

    for (std::size_t k = 0; k < seeds.size(); ++k) {
        ckpt_paths[k] = o.out + "/ckpt_seed" + std::to_string(seeds[k]) + ".txt";
        loss_paths[k] = o.out + "/loss_seed" + std::to_string(seeds[k]) + ".csv";
        std::vector<std::pair<std::string, Tensor*>> named;
        for (auto& [name, t] : ckpts[k]) named.emplace_back(name, &t);
        save_checkpoint(named, ckpt_paths[k]);
        write_loss_history(results[k].history, loss_paths[k]);
    }
    write_report(o.out + "/report.csv", o.model, o.task, seeds, per_seed);
    write_text(o.out + "/config_echo.cfg", config_echo(o, o.seeds));

    std::ostringstream summary;
    summary << "model=" << o.model << " task=" << o.task << " seeds=" << o.seeds << "\n";
    for (std::size_t k = 0; k < seeds.size(); ++k) {
        summary << "seed " << seeds[k] << ":";
        for (const MetricRow& r : per_seed[k])
            summary << " " << r.direction << " mse=" << fmt(r.mse);
        summary << " (ckpt " << ckpt_paths[k] << ", loss " << loss_paths[k] << ")\n";
    }
    write_text(o.out + "/summary.txt", summary.str());
    std::cout << summary.str();
}

// ---------------------------------------------------------------------------
// eval

void write_predictions(const std::string& path, const TimeSeries& test,
                       const std::vector<std::pair<int, Tensor>>& preds, const NormStats& stats,
                       bool normalized) {
    std::ostringstream out;
    out << "t";
    for (const std::string& n : test.feature_names) out << "," << n;
    for (const std::string& n : test.feature_names) out << "," << n << "_pred";
    out << "\n";
    out.precision(17);
    for (const auto& [idx, pred] : preds) {
        out << test.times[idx];
        for (int j = 0; j < test.dim(); ++j) {
            Real v = test.values(idx, j);
            out << "," << (normalized ? stats.inverse(v, j) : v);
        }
        for (int j = 0; j < test.dim(); ++j)
            out << "," << (normalized ? stats.inverse(pred[j], j) : pred[j]);
        out << "\n";
    }
    write_text(path, out.str());
}

void cmd_eval(const RunOpts& o) {
    validate_model(o.model);
    Task task = parse_task(o.task);
    if (is_ode_family(o.model) && task != Task::Reconstruct)
        throw ConfigError("model " + o.model + " supports only --task reconstruct");
    if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
    LoadedData data = load_run_data(o);
    SolverConfig solver = solver_config(o);
    ensure_dir(o.out);

    std::vector<MetricRow> rows;
    std::vector<std::pair<int, Tensor>> preds;
    Rng rng(0);
    if (is_ode_family(o.model)) {
        NeuralCodeModel model = NeuralCodeModel::make(data.test.dim(), default_hidden(o),
                                                      Activation::Tanh, rng, solver);
        load_checkpoint(model.named_parameters(), o.checkpoint);
        rows = eval_ode_family(model, data.test);
        PredictedPath p = predict_future(model, data.test.observation(0), data.test.times);
        for (int i = 0; i < data.test.length(); ++i) preds.emplace_back(i, p.states[i]);
    } else {
        ArchSpec spec = make_arch_spec(o);
        spec.state_dim = data.test.dim();
        RecurrentModel model = build_for_task(spec, task, rng, solver);
        load_checkpoint(model.named_parameters(), o.checkpoint);
        if (task == Task::Reconstruct) {
            rows = {{"both", recurrent_reconstruct_mse(model, data.test)}};
            std::vector<Tensor> xs;
            for (int i = 0; i < data.test.length(); ++i) xs.push_back(data.test.observation(i));
            std::vector<Tensor> out =
                recurrent_predict(model, data.test.times, xs, Direction::Future);
            for (int i = 0; i < data.test.length(); ++i) preds.emplace_back(i, out[i]);
        } else {
            TaskWindowSet windows = make_windows(data.test, task, o.seen, o.predict, o.stride);
            EvalResult res = eval_on_windows(model, data.test, windows);
            rows = {{direction_label(task), res.mse}};
            preds = res.predictions;
        }
    }

    write_report(o.out + "/report.csv", o.model, o.task, {0}, {rows});
    write_predictions(o.out + "/predictions.csv", data.test, preds, data.stats, data.normalized);
    for (const MetricRow& r : rows)
        std::cout << o.model << " " << o.task << " " << r.direction << " mse=" << fmt(r.mse)
                  << "\n";
}

// ---------------------------------------------------------------------------
// compare

struct ReportLine {
    std::string model, task, direction;
    Real mse_avg = 0.0, std_avg = 0.0;
    bool has_avg = false, has_std = false;
};

void cmd_compare(const std::vector<std::string>& reports, const std::string& out_path) {
    if (reports.size() < 2) throw ConfigError("compare needs at least two report files");
    const std::string expected_header = "model,task,direction,seed,mse";
    std::vector<ReportLine> lines;
    for (const std::string& path : reports) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open " + path);
        std::string line;
        if (!std::getline(in, line)) throw DataError("empty report " + path);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line != expected_header)
            throw ConfigError("report schema mismatch in " + path + ": '" + line +
                              "' != '" + expected_header + "'");
        std::map<std::string, ReportLine> by_key;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            std::vector<std::string> cells = split_list(line);
            if (cells.size() != 5)
                throw ConfigError("report schema mismatch in " + path + " row '" + line + "'");
            if (cells[3] != "avg" && cells[3] != "std") continue;
            std::string key = cells[0] + "," + cells[1] + "," + cells[2];
            ReportLine& rl = by_key[key];
            rl.model = cells[0];
            rl.task = cells[1];
            rl.direction = cells[2];
            Real v;
            try {
                v = std::stod(cells[4]);
            } catch (const std::exception&) {
                throw ConfigError("bad mse '" + cells[4] + "' in " + path);
            }
            if (cells[3] == "avg") {
                rl.mse_avg = v;
                rl.has_avg = true;
            } else {
                rl.std_avg = v;
                rl.has_std = true;
            }
        }
        for (auto& [key, rl] : by_key) {
            if (!rl.has_avg || !rl.has_std)
                throw ConfigError("report " + path + " lacks avg/std rows for " + key);
            lines.push_back(rl);
        }
    }

    // Best per (task, direction) group: strict minimum of mse_avg; exact ties
    // are all flagged.
    std::map<std::string, Real> best;
    for (const ReportLine& rl : lines) {
        std::string g = rl.task + "," + rl.direction;
        auto it = best.find(g);
        if (it == best.end() || rl.mse_avg < it->second) best[g] = rl.mse_avg;
    }
    std::ostringstream out;
    out << "model,task,direction,mse_avg,std_avg,best\n";
    for (const ReportLine& rl : lines)
        out << rl.model << "," << rl.task << "," << rl.direction << "," << fmt(rl.mse_avg) << ","
            << fmt(rl.std_avg) << ","
            << (rl.mse_avg == best[rl.task + "," + rl.direction] ? "*" : "") << "\n";
    write_text(out_path, out.str());
    std::cout << out.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"chronode: continuous-time sequence models with bidirectional training"};
    app.require_subcommand(1);

    SpiralGenOpts spiral;
    CLI::App* sg = app.add_subcommand("spiral-gen", "generate the spiral dataset splits");
    sg->add_option("--preset", spiral.preset, "row split: 2000-1000 or 1000-2000");
    sg->add_option("--t-max", spiral.t_max, "end of the time interval");
    sg->add_option("--y0", spiral.y0, "initial point, e.g. 2,0");
    sg->add_option("--out", spiral.out, "output directory");

    SurrogateOpts surrogate;
    CLI::App* gs = app.add_subcommand("gen-surrogate", "generate a sine-mixture series CSV");
    gs->add_option("--points", surrogate.points, "number of rows");
    gs->add_option("--dim", surrogate.dim, "feature count (e.g. 1, 4, 39)");
    gs->add_option("--seed", surrogate.seed, "generator seed");
    gs->add_option("--t-max", surrogate.t_max, "end of the time interval");
    gs->add_option("--out", surrogate.out, "output directory");

    auto add_run_options = [](CLI::App* cmd, RunOpts& o) {
        cmd->add_option("--model", o.model,
                        "neural-ode, neural-code, or a <family>-<cell> spec");
        cmd->add_option("--task", o.task, "impute, extrap-fwd, extrap-bwd, reconstruct");
        cmd->add_option("--data", o.data, "input CSV with a time column");
        cmd->add_option("--time-column", o.time_column, "time column name");
        cmd->add_option("--features", o.features, "comma list; default: all non-time columns");
        cmd->add_option("--seen", o.seen, "observed steps per extrapolation window");
        cmd->add_option("--predict", o.predict, "predicted steps per extrapolation window");
        cmd->add_option("--stride", o.stride, "window stride (impute: 2 = strict alternation)");
        cmd->add_option("--iters", o.iters, "iterations (ODE family) or epochs (windowed)");
        cmd->add_option("--lr", o.lr, "learning rate");
        cmd->add_option("--seq-len", o.seq_len, "training window length (ODE family)");
        cmd->add_option("--hidden", o.hidden, "hidden/state width");
        cmd->add_option("--dynamics-hidden", o.dynamics_hidden, "dynamics net hidden width");
        cmd->add_option("--solver", o.solver, "rk4 or dopri5");
        cmd->add_option("--substeps", o.substeps, "rk4 substeps per interval");
        cmd->add_option("--rtol", o.rtol, "dopri5 relative tolerance");
        cmd->add_option("--atol", o.atol, "dopri5 absolute tolerance");
        cmd->add_option("--train-fraction", o.train_fraction, "contiguous prefix split");
        cmd->add_flag("--normalize,!--no-normalize", o.normalize,
                      "min-max scale features with train statistics");
        cmd->add_option("--out", o.out, "output directory");
        cmd->add_option("--config", o.config_file, "flat key=value config file; flags win");
    };

    RunOpts train_opts;
    CLI::App* tr = app.add_subcommand("train", "train one model over one or more seeds");
    add_run_options(tr, train_opts);
    tr->add_option("--seeds", train_opts.seeds, "comma-separated seed list");

    RunOpts eval_opts;
    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    add_run_options(ev, eval_opts);
    ev->add_option("--checkpoint", eval_opts.checkpoint, "checkpoint file");

    std::vector<std::string> report_files;
    std::string compare_out = "compare.csv";
    CLI::App* cp = app.add_subcommand("compare", "merge run reports into one table");
    cp->add_option("reports", report_files, "report.csv files")->expected(-2);
    cp->add_option("--out", compare_out, "output CSV path");

    try {
        app.parse(argc, argv);
        if (sg->parsed()) cmd_spiral_gen(spiral);
        if (gs->parsed()) cmd_gen_surrogate(surrogate);
        if (tr->parsed()) {
            if (!train_opts.config_file.empty()) apply_config(train_opts, tr);
            cmd_train(train_opts);
        }
        if (ev->parsed()) {
            if (!eval_opts.config_file.empty()) apply_config(eval_opts, ev);
            cmd_eval(eval_opts);
        }
        if (cp->parsed()) cmd_compare(report_files, compare_out);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
