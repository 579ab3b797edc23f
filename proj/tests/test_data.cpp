#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <set>

#include "test_util.hpp"

using namespace chronode;
using testutil::random_tensor;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content = "") : path(name) {
        if (!content.empty()) {
            std::ofstream out(path);
            out << content;
        }
    }
    ~TempFile() { std::remove(path.c_str()); }
};

void zero_dynamics(RecurrentModel& m) {
    for (Tensor* p : m.dynamics.parameters()) *p = Tensor::zeros(p->rows(), p->cols());
}

}  // namespace

TEST_CASE("spiral generation") {
    Tensor y0 = Tensor::column({2.0, 0.0});
    TimeSeries ts = gen_spiral(11, 5.0, y0);

    SECTION("grid and initial condition") {
        REQUIRE(ts.length() == 11);
        CHECK(ts.times.front() == 0.0);
        CHECK(ts.times.back() == 5.0);
        CHECK(ts.times[1] == Catch::Approx(0.5));
        CHECK(ts.values(0, 0) == 2.0);
        CHECK(ts.values(0, 1) == 0.0);
        CHECK_NOTHROW(ts.validate());
    }
    SECTION("the cubic field is odd, so negating y0 negates the path") {
        TimeSeries neg = gen_spiral(11, 5.0, Tensor::column({-2.0, 0.0}));
        for (int i = 0; i < 11; ++i) {
            CHECK(neg.values(i, 0) == Catch::Approx(-ts.values(i, 0)).margin(1e-12));
            CHECK(neg.values(i, 1) == Catch::Approx(-ts.values(i, 1)).margin(1e-12));
        }
    }
    SECTION("the spiral decays inward") {
        // The -0.1 y^3 damping shrinks the orbit on average; the cross term
        // lets the radius wobble, so only the trend is asserted.
        Real r0 = ts.values(0, 0) * ts.values(0, 0) + ts.values(0, 1) * ts.values(0, 1);
        for (int i = 1; i < 11; ++i) {
            Real r2 = ts.values(i, 0) * ts.values(i, 0) + ts.values(i, 1) * ts.values(i, 1);
            CHECK(r2 < r0);
        }
        Real rT = ts.values(10, 0) * ts.values(10, 0) + ts.values(10, 1) * ts.values(10, 1);
        CHECK(rT < 0.3 * r0);
    }
    SECTION("values are converged in the integrator resolution") {
        TimeSeries fine = gen_spiral(11, 5.0, y0, 400);
        CHECK(max_abs_diff(ts.values, fine.values) < 1e-7);
    }
}

TEST_CASE("surrogate generation") {
    TimeSeries a = gen_surrogate(50, 3, 42);
    SECTION("shape and determinism") {
        CHECK(a.length() == 50);
        CHECK(a.dim() == 3);
        CHECK(a.feature_names == std::vector<std::string>{"f0", "f1", "f2"});
        TimeSeries b = gen_surrogate(50, 3, 42);
        CHECK(max_abs_diff(a.values, b.values) == 0.0);
        CHECK_NOTHROW(a.validate());
    }
    SECTION("different seeds give different series") {
        TimeSeries c = gen_surrogate(50, 3, 43);
        CHECK(max_abs_diff(a.values, c.values) > 1e-3);
    }
}

TEST_CASE("csv round trip") {
    TimeSeries ts = gen_surrogate(9, 2, 5);
    TempFile f("roundtrip_test.csv");
    save_csv(ts, f.path);
    TimeSeries back = load_csv(f.path, "t", {"f0", "f1"});
    REQUIRE(back.length() == 9);
    for (int i = 0; i < 9; ++i) CHECK(back.times[i] == Catch::Approx(ts.times[i]).margin(1e-15));
    CHECK(max_abs_diff(back.values, ts.values) == 0.0);
    CHECK(back.feature_names == ts.feature_names);
}

TEST_CASE("csv loading edge cases") {
    SECTION("date stamps become day offsets from the first row") {
        TempFile f("dates_test.csv",
                   "date,price\n2020-01-01,10\n2020-01-02,11\n2020-01-05,14\n");
        TimeSeries ts = load_csv(f.path, "date", {"price"});
        REQUIRE(ts.length() == 3);
        CHECK(ts.times[0] == 0.0);
        CHECK(ts.times[1] == 1.0);
        CHECK(ts.times[2] == 4.0);
        CHECK(ts.values(2, 0) == 14.0);
    }
    SECTION("non-numeric feature cell names row and column") {
        TempFile f("bad_cell_test.csv", "t,v\n0,1\n1,oops\n");
        CHECK_THROWS_MATCHES(load_csv(f.path, "t", {"v"}), DataError,
                             Catch::Matchers::MessageMatches(
                                 Catch::Matchers::ContainsSubstring("oops") &&
                                 Catch::Matchers::ContainsSubstring("row 2")));
    }
    SECTION("duplicate timestamp is rejected with its row") {
        TempFile f("dup_test.csv", "t,v\n0,1\n1,2\n1,3\n");
        CHECK_THROWS_MATCHES(load_csv(f.path, "t", {"v"}), DataError,
                             Catch::Matchers::MessageMatches(
                                 Catch::Matchers::ContainsSubstring("non-monotone") &&
                                 Catch::Matchers::ContainsSubstring("row 3")));
    }
    SECTION("missing column is named") {
        TempFile f("col_test.csv", "t,v\n0,1\n");
        CHECK_THROWS_MATCHES(load_csv(f.path, "t", {"w"}), DataError,
                             Catch::Matchers::MessageMatches(
                                 Catch::Matchers::ContainsSubstring("'w'")));
    }
    SECTION("missing file") {
        CHECK_THROWS_AS(load_csv("no_such_file_anywhere.csv", "t", {"v"}), DataError);
    }
}

TEST_CASE("min-max normalization") {
    TimeSeries train;
    train.times = {0, 1, 2};
    train.values = Tensor{{1.0, 10.0}, {3.0, 30.0}, {2.0, 20.0}};
    train.feature_names = {"a", "b"};

    SECTION("train values map onto [0,1] with the extremes at the ends") {
        NormStats st = norm_stats_from(train);
        TimeSeries norm = normalize(train, st);
        CHECK(norm.values(0, 0) == 0.0);
        CHECK(norm.values(1, 0) == 1.0);
        CHECK(norm.values(2, 0) == 0.5);
        CHECK(norm.values(1, 1) == 1.0);
    }
    SECTION("test data uses train statistics and may leave [0,1]") {
        NormStats st = norm_stats_from(train);
        TimeSeries test;
        test.times = {3};
        test.values = Tensor{{5.0, 0.0}};
        TimeSeries norm = normalize(test, st);
        CHECK(norm.values(0, 0) == 2.0);   // above the train max
        CHECK(norm.values(0, 1) == -0.5);  // below the train min
    }
    SECTION("denormalize inverts exactly") {
        NormStats st = norm_stats_from(train);
        TimeSeries back = denormalize(normalize(train, st), train.length() ? st : st);
        CHECK(max_abs_diff(back.values, train.values) < 1e-14);
    }
    SECTION("constant feature is rejected by name") {
        TimeSeries flat;
        flat.times = {0, 1};
        flat.values = Tensor{{7.0, 1.0}, {7.0, 2.0}};
        flat.feature_names = {"flat", "ok"};
        CHECK_THROWS_MATCHES(norm_stats_from(flat), DataError,
                             Catch::Matchers::MessageMatches(
                                 Catch::Matchers::ContainsSubstring("'flat'")));
    }
}

TEST_CASE("task names") {
    CHECK(parse_task("impute") == Task::Impute);
    CHECK(parse_task("extrap-fwd") == Task::ExtrapFwd);
    CHECK(parse_task("extrap-bwd") == Task::ExtrapBwd);
    CHECK(parse_task("reconstruct") == Task::Reconstruct);
    CHECK_THROWS_AS(parse_task("interpolate"), ConfigError);
}

TEST_CASE("imputation windows") {
    TimeSeries ts = gen_surrogate(12, 1, 1);
    SECTION("skip pattern 1, 3, 6, 9 (1-based anchors)") {
        TaskWindowSet set = make_windows(ts, Task::Impute, 0, 0, 0);
        REQUIRE(set.windows.size() == 4);
        CHECK(set.windows[0].inputs == std::vector<int>{0, 2});
        CHECK(set.windows[0].targets == std::vector<int>{1});
        CHECK(set.windows[1].inputs == std::vector<int>{2, 4});
        CHECK(set.windows[2].inputs == std::vector<int>{5, 7});
        CHECK(set.windows[3].inputs == std::vector<int>{8, 10});
    }
    SECTION("stride 2 alternates strictly") {
        TaskWindowSet set = make_windows(ts, Task::Impute, 0, 0, 2);
        REQUIRE(set.windows.size() == 5);
        for (std::size_t k = 0; k < set.windows.size(); ++k) {
            CHECK(set.windows[k].inputs[0] == static_cast<int>(2 * k));
            CHECK(set.windows[k].targets[0] == static_cast<int>(2 * k + 1));
        }
    }
    SECTION("targets never overlap inputs across the whole set") {
        TaskWindowSet set = make_windows(ts, Task::Impute, 0, 0, 0);
        std::set<int> targets;
        for (const TaskWindow& w : set.windows) targets.insert(w.targets[0]);
        CHECK(targets.size() == set.windows.size());
        for (const TaskWindow& w : set.windows)
            for (int i : w.inputs) CHECK(targets.count(i) == 0);
    }
    SECTION("a five-point series yields the two documented triples") {
        TimeSeries five = gen_surrogate(5, 1, 1);
        TaskWindowSet set = make_windows(five, Task::Impute, 0, 0, 0);
        REQUIRE(set.windows.size() == 2);
        CHECK(set.windows[0].inputs == std::vector<int>{0, 2});
        CHECK(set.windows[1].inputs == std::vector<int>{2, 4});
    }
    SECTION("too-short series rejected") {
        TimeSeries two = gen_surrogate(2, 1, 1);
        CHECK_THROWS_AS(make_windows(two, Task::Impute, 0, 0, 0), DimensionError);
    }
}

TEST_CASE("extrapolation windows") {
    TimeSeries ts = gen_surrogate(10, 1, 2);
    SECTION("forward: inputs then targets") {
        TaskWindowSet set = make_windows(ts, Task::ExtrapFwd, 3, 2, 0);
        REQUIRE(set.windows.size() == 2);
        CHECK(set.windows[0].inputs == std::vector<int>{0, 1, 2});
        CHECK(set.windows[0].targets == std::vector<int>{3, 4});
        CHECK(set.windows[1].inputs == std::vector<int>{5, 6, 7});
        CHECK(set.windows[1].targets == std::vector<int>{8, 9});
    }
    SECTION("backward: targets precede inputs") {
        TaskWindowSet set = make_windows(ts, Task::ExtrapBwd, 3, 2, 0);
        REQUIRE(set.windows.size() == 2);
        CHECK(set.windows[0].targets == std::vector<int>{0, 1});
        CHECK(set.windows[0].inputs == std::vector<int>{2, 3, 4});
    }
    SECTION("custom stride produces overlapping windows") {
        TaskWindowSet set = make_windows(ts, Task::ExtrapFwd, 3, 2, 1);
        CHECK(set.windows.size() == 6);
        CHECK(set.windows[1].inputs == std::vector<int>{1, 2, 3});
    }
    SECTION("too-short series rejected") {
        CHECK_THROWS_AS(make_windows(ts, Task::ExtrapFwd, 8, 3, 0), DimensionError);
    }
    SECTION("reconstruct has no windows") {
        CHECK_THROWS_AS(make_windows(ts, Task::Reconstruct, 0, 0, 0), ContractError);
    }
}

TEST_CASE("train/test split") {
    SECTION("llround arithmetic at 0.75") {
        TimeSeries ts = gen_surrogate(4, 1, 3);
        auto [train, test] = split(ts, {});
        CHECK(train.length() == 3);
        CHECK(test.length() == 1);
        CHECK(test.times[0] == ts.times[3]);
    }
    SECTION("3000 points at two thirds") {
        TimeSeries ts = gen_surrogate(3000, 1, 3);
        auto [train, test] = split(ts, {2.0 / 3.0});
        CHECK(train.length() == 2000);
        CHECK(test.length() == 1000);
        CHECK(train.values(1999, 0) == ts.values(1999, 0));
        CHECK(test.values(0, 0) == ts.values(2000, 0));
    }
    SECTION("both sides stay non-empty") {
        TimeSeries ts = gen_surrogate(2, 1, 3);
        auto [train, test] = split(ts, {0.999});
        CHECK(train.length() == 1);
        CHECK(test.length() == 1);
    }
    SECTION("bad fraction rejected") {
        TimeSeries ts = gen_surrogate(10, 1, 3);
        CHECK_THROWS_AS(split(ts, {0.0}), ConfigError);
        CHECK_THROWS_AS(split(ts, {1.0}), ConfigError);
    }
}

TEST_CASE("task model assembly") {
    Rng rng(30);
    ArchSpec spec;
    spec.state_dim = 2;
    spec.hidden_dim = 3;
    spec.dynamics_hidden = 4;
    SECTION("imputation widens only the merged-intermediate family") {
        spec.family = Family::CodeRnn;
        spec.cell = CellKind::Rnn;
        CHECK(build_for_task(spec, Task::Impute, rng).cell_input == 4);
        CHECK(build_for_task(spec, Task::ExtrapFwd, rng).cell_input == 2);
        spec.family = Family::OdeRnn;
        CHECK(build_for_task(spec, Task::Impute, rng).cell_input == 2);
        spec.family = Family::CodeBiRnn;
        CHECK(build_for_task(spec, Task::Impute, rng).cell_input == 2);
    }
}

TEST_CASE("imputation step information flow") {
    Rng rng(31);
    SolverConfig solver;
    solver.substeps = 2;
    TimeSeries ts = gen_surrogate(5, 1, 11);
    TaskWindow w{{0, 2}, {1}};

    auto predict_with = [&](RecurrentModel& m, Real right_value) {
        TimeSeries mod = ts;
        mod.values(2, 0) = right_value;
        Tape tape;
        ParamBinding bind(tape);
        ImputeCarry carry = ImputeCarry::zeros(m);
        return impute_step(bind, m, mod, w, carry).value();
    };

    SECTION("the one-directional baseline never sees the right neighbor") {
        ArchSpec spec;
        spec.family = Family::OdeRnn;
        spec.cell = CellKind::Gru;
        spec.hidden_dim = 3;
        spec.dynamics_hidden = 4;
        RecurrentModel m = build_for_task(spec, Task::Impute, rng, solver);
        CHECK(max_abs_diff(predict_with(m, 0.0), predict_with(m, 100.0)) == 0.0);
    }
    SECTION("both merged families react to the right neighbor") {
        for (Family fam : {Family::CodeRnn, Family::CodeBiRnn}) {
            ArchSpec spec;
            spec.family = fam;
            spec.cell = CellKind::Rnn;
            spec.hidden_dim = 3;
            spec.dynamics_hidden = 4;
            RecurrentModel m = build_for_task(spec, Task::Impute, rng, solver);
            CHECK(max_abs_diff(predict_with(m, 0.0), predict_with(m, 100.0)) > 1e-6);
        }
    }
    SECTION("the carry links consecutive triples") {
        ArchSpec spec;
        spec.family = Family::CodeBiRnn;
        spec.cell = CellKind::Rnn;
        spec.hidden_dim = 3;
        spec.dynamics_hidden = 4;
        RecurrentModel m = build_for_task(spec, Task::Impute, rng, solver);
        Tape tape;
        ParamBinding bind(tape);
        ImputeCarry carry = ImputeCarry::zeros(m);
        Tensor first = impute_step(bind, m, ts, w, carry).value();
        CHECK(max_abs_diff(carry.fwd_h, Tensor::zeros(3, 1)) > 0.0);
        TaskWindow w2{{2, 4}, {3}};
        Tensor with_carry = impute_step(bind, m, ts, w2, carry).value();
        ImputeCarry fresh = ImputeCarry::zeros(m);
        Tensor without = impute_step(bind, m, ts, w2, fresh).value();
        CHECK(max_abs_diff(with_carry, without) > 1e-9);
        (void)first;
    }
}

TEST_CASE("extrapolation windows run autoregressively") {
    Rng rng(32);
    SolverConfig solver;
    solver.substeps = 2;
    TimeSeries ts = gen_surrogate(8, 1, 12);
    ArchSpec spec;
    spec.family = Family::OdeRnn;
    spec.cell = CellKind::Rnn;
    spec.hidden_dim = 4;
    spec.dynamics_hidden = 4;
    RecurrentModel m = build_for_task(spec, Task::ExtrapFwd, rng, solver);

    SECTION("forward horizon length and order") {
        TaskWindow w{{0, 1, 2}, {3, 4}};
        Tape tape;
        ParamBinding bind(tape);
        std::vector<Var> preds = extrapolate_window(bind, m, ts, w, false);
        REQUIRE(preds.size() == 2);
        for (const Var& p : preds) CHECK(p.value().all_finite());
    }
    SECTION("horizon predictions ignore the unseen true values") {
        TaskWindow w{{0, 1, 2}, {3, 4}};
        auto run = [&](Real corrupt) {
            TimeSeries mod = ts;
            mod.values(3, 0) = corrupt;
            Tape tape;
            ParamBinding bind(tape);
            return extrapolate_window(bind, m, mod, w, false)[1].value();
        };
        CHECK(max_abs_diff(run(0.0), run(50.0)) == 0.0);
    }
    SECTION("the second horizon step feeds on the first prediction") {
        // With frozen dynamics and a zero readout the fed-back input is
        // constant zero, so corrupting the seen inputs still reaches step 2
        // through the hidden state; sanity-check the feedback wiring instead
        // by comparing against a model whose readout differs.
        TaskWindow w{{0, 1, 2}, {3, 4}};
        Tape tape;
        ParamBinding bind(tape);
        std::vector<Var> base = extrapolate_window(bind, m, ts, w, false);
        RecurrentModel m2 = m;
        m2.out.b = Tensor(1, 1, 0.5);  // shifts the fed-back input at step 1
        std::vector<Var> shifted = extrapolate_window(bind, m2, ts, w, false);
        CHECK(max_abs_diff(base[1].value(), shifted[1].value()) > 1e-9);
    }
    SECTION("backward windows return targets in ascending index order") {
        TaskWindow w{{2, 3, 4}, {0, 1}};
        Tape tape;
        ParamBinding bind(tape);
        std::vector<Var> preds = extrapolate_window(bind, m, ts, w, true);
        REQUIRE(preds.size() == 2);
        // preds[0] goes with series index 0, the one farther from the seen
        // block; corrupting observation 0 must not change either prediction.
        TimeSeries mod = ts;
        mod.values(0, 0) = 99.0;
        std::vector<Var> again = extrapolate_window(bind, m, mod, w, true);
        CHECK(max_abs_diff(preds[0].value(), again[0].value()) == 0.0);
        CHECK(max_abs_diff(preds[1].value(), again[1].value()) == 0.0);
    }
}

TEST_CASE("window training lowers the loss and eval agrees with its predictions") {
    TimeSeries ts = gen_surrogate(14, 1, 13);
    TaskWindowSet windows = make_windows(ts, Task::Impute, 0, 0, 2);
    Rng rng(33);
    SolverConfig solver;
    solver.substeps = 2;
    ArchSpec spec;
    spec.family = Family::CodeBiRnn;
    spec.cell = CellKind::Rnn;
    spec.hidden_dim = 6;
    spec.dynamics_hidden = 6;
    RecurrentModel m = build_for_task(spec, Task::Impute, rng, solver);

    TrainConfig cfg;
    cfg.max_iter = 25;
    cfg.lr = 1e-2;
    TrainResult r = train_on_windows(m, ts, windows, cfg);
    REQUIRE(r.history.size() == 25);
    CHECK(r.history.back().total < 0.6 * r.history.front().total);

    EvalResult res = eval_on_windows(m, ts, windows);
    REQUIRE(res.predictions.size() == windows.windows.size());
    Real acc = 0.0;
    int count = 0;
    for (const auto& [idx, pred] : res.predictions) {
        Tensor target = ts.observation(idx);
        for (int i = 0; i < pred.size(); ++i) {
            acc += (pred[i] - target[i]) * (pred[i] - target[i]);
            ++count;
        }
    }
    CHECK(res.mse == Catch::Approx(acc / count).epsilon(1e-14));
}

TEST_CASE("reconstruction error of a frozen model has a closed form") {
    Rng rng(34);
    NeuralCodeModel model = NeuralCodeModel::make(1, 4, Activation::Tanh, rng);
    for (Tensor* p : model.parameters()) *p = Tensor::zeros(p->rows(), p->cols());
    TimeSeries ts;
    ts.times = {0.0, 1.0, 2.0};
    ts.values = Tensor{{1.0}, {2.0}, {4.0}};
    ts.feature_names = {"v"};

    // Forward: constant prediction 1 => mse = (0 + 1 + 9) / 3.
    CHECK(reconstruct_mse(model, ts, Direction::Future) == Catch::Approx(10.0 / 3.0));
    // Backward: constant prediction 4 => mse = (0 + 4 + 9) / 3.
    CHECK(reconstruct_mse(model, ts, Direction::Past) == Catch::Approx(13.0 / 3.0));
}
