#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>

#include "estop/experiments.hpp"
#include "estop/mdp_io.hpp"

using namespace estop;
using nlohmann::json;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("estop_exp_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

ExperimentConfig small_lake() {
    auto c = config_from_json(json::parse(R"({
        "environment": {"kind": "frozenlake", "map": "classic4x4", "hole_escape_prob": 0.01},
        "n_demos": 200,
        "removal": {"rule": "fraction_h", "fraction": 0.25},
        "learner": {"algorithm": "q_learning", "episodes": 300, "eval_every_episodes": 50},
        "trials": [0, 1]
    })"));
    return c;
}

// Sets an environment variable for the lifetime of the guard.
struct EnvGuard {
    std::string name;
    EnvGuard(const char* n, const char* value) : name(n) { setenv(n, value, 1); }
    ~EnvGuard() { unsetenv(name.c_str()); }
};

}  // namespace

TEST_CASE("configs keep defaults for missing keys and reject unknown ones") {
    const auto c = config_from_json(json::object());
    CHECK(c.environment.kind == "frozenlake");
    CHECK(c.discount == 0.99);
    CHECK(c.trials == std::vector<std::uint64_t>{0});

    CHECK_THROWS_AS(config_from_json(json::parse(R"({"dicsount": 0.9})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"learner": {"alpah": 0.2}})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"discount": 1.0})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"discount": "high"})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"environment": {"kind": "cartpole"}})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"learner": {"algorithm": "sarsa"}})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"trials": {"count": 0}})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"removal": {"grid": [0.5, 1.5]}})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::array()), ConfigError);

    const auto t = config_from_json(json::parse(R"({"trials": {"count": 3, "first": 7}})"));
    CHECK(t.trials == std::vector<std::uint64_t>{7, 8, 9});
}

TEST_CASE("configs round-trip and the hash ignores output_dir only") {
    const auto c = small_lake();
    const auto back = config_from_json(config_to_json(c));
    CHECK(config_to_json(back) == config_to_json(c));
    CHECK(config_hash(back) == config_hash(c));
    CHECK(config_hash(c).size() == 16);

    auto moved = c;
    moved.output_dir = "elsewhere";
    CHECK(config_hash(moved) == config_hash(c));
    auto changed = c;
    changed.n_demos += 1;
    CHECK(config_hash(changed) != config_hash(c));
}

TEST_CASE("load_config reports missing files and bad JSON as config errors") {
    const auto dir = scratch_dir("load");
    std::filesystem::create_directories(dir);
    CHECK_THROWS_AS(load_config(dir / "absent.json"), ConfigError);
    write_text_file(dir / "bad.json", "{\"discount\": ");
    CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
    write_text_file(dir / "ok.json", R"({"n_demos": 5})");
    CHECK(load_config(dir / "ok.json").n_demos == 5);
}

TEST_CASE("aggregation interpolates each curve and summarises across trials") {
    LearningCurve a, b;
    a.points = {{0, 0.0}, {10, 1.0}};
    b.points = {{0, 0.0}, {20, 1.0}};
    const auto agg = aggregate_curves({a, b}, 5);
    REQUIRE(agg.points.size() == 5);  // x = 0, 5, 10, 15, 20
    // x = 5: a = 0.5, b = 0.25
    CHECK(agg.points[1].x == 5);
    CHECK(agg.points[1].count == 2);
    CHECK(agg.points[1].median == doctest::Approx(0.375));
    CHECK(agg.points[1].mean == doctest::Approx(0.375));
    CHECK(agg.points[1].stddev == doctest::Approx(0.1767766952966369));
    CHECK(agg.points[1].min == doctest::Approx(0.25));
    CHECK(agg.points[1].max == doctest::Approx(0.5));
    // x = 15 lies past the end of a.
    CHECK(agg.points[3].count == 1);
    CHECK(agg.points[3].median == doctest::Approx(0.75));
    CHECK(agg.points[3].stddev == 0.0);
    CHECK_THROWS_AS(aggregate_curves({a}, 0), Error);
}

TEST_CASE("parallel_for runs every task and captures failures by index") {
    EnvGuard guard("ESTOP_LAB_THREADS", "3");
    CHECK(worker_count(10) == 3);
    CHECK(worker_count(2) == 2);
    CHECK(worker_count(0) == 1);
    std::atomic<int> sum{0};
    const auto errors = parallel_for(10, [&](int i) {
        if (i == 4) throw Error("task four");
        sum += i;
    });
    CHECK(sum == 45 - 4);
    REQUIRE(errors.size() == 10);
    for (int i = 0; i < 10; ++i) CHECK(errors[static_cast<std::size_t>(i)].has_value() == (i == 4));
    CHECK(*errors[4] == "task four");
}

TEST_CASE("support rules keep the initial state and honour the fraction") {
    const auto c = small_lake();
    const auto inst = prepare_instance(c);
    CHECK(inst.mdp.n_states() == 16);
    CHECK(inst.estop.support.contains(0));
    CHECK(inst.estop.support.size() == 12);
    for (const auto* rule : {"fraction_rho", "budget"}) {
        auto r = c.removal;
        r.rule = rule;
        const auto s = build_support(inst.mdp, inst.expert, inst.stats, r);
        CHECK(s.contains(0));
    }
    auto pend = c;
    pend.environment.kind = "pendulum";
    CHECK_THROWS_AS(prepare_instance(pend), ConfigError);
}

TEST_CASE("the value-iteration sweep is monotone and stops at the first infeasible row") {
    auto c = small_lake();
    c.removal.rule = "fraction_rho";
    const auto rows = run_vi_sweep(c);
    REQUIRE(!rows.empty());
    CHECK(rows.front().fraction == 0.0);
    CHECK(rows.front().kept == 16);
    CHECK(rows.front().j_estop_opt > 0.0);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(rows[i].fraction > rows[i - 1].fraction);
        CHECK(rows[i].kept <= rows[i - 1].kept);
        CHECK(rows[i].j_estop_opt <= rows[i - 1].j_estop_opt + 1e-9);
        // The compact MDP carries the absorbing state too.
        CHECK(rows[i].flops == value_iteration_flops(rows[i].sweeps, rows[i].kept + 1, 4));
    }
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) CHECK_FALSE(rows[i].infeasible);
}

TEST_CASE("experiments write hashed CSVs deterministically") {
    auto c = small_lake();
    c.output_dir = scratch_dir("learn_a").string();
    const auto first = write_experiment(c, "learn");
    c.output_dir = scratch_dir("learn_b").string();
    const auto second = write_experiment(c, "learn");
    REQUIRE(first.size() == second.size());
    const std::string hash_line = "# config_hash: " + config_hash(c) + "\n";
    for (std::size_t i = 0; i < first.size(); ++i) {
        CAPTURE(first[i].string());
        CHECK(first[i].filename() == second[i].filename());
        const auto text = read_text_file(first[i]);
        CHECK(text == read_text_file(second[i]));
        CHECK(text.rfind(hash_line, 0) == 0);
    }
    CHECK_THROWS_AS(write_experiment(c, "dance"), ConfigError);
}

TEST_CASE("learning experiments produce one curve per trial for both arms") {
    const auto res = run_learning_experiment(small_lake());
    CHECK(res.estop.size() == 2);
    CHECK(res.full.size() == 2);
    CHECK(res.estop_in_estop.size() == 2);
    CHECK(res.failures.empty());
    CHECK(!res.estop_aggregate.points.empty());
    CHECK(res.estop_aggregate.points.front().count == 2);
}

TEST_CASE("ablations sweep demo counts and reject demo-file experts") {
    auto c = small_lake();
    c.ablation.kind = "n_demos";
    c.ablation.grid = {5, 50, 500};
    const auto rows = run_ablation(c);
    REQUIRE(rows.size() == 3);
    for (const auto& r : rows) {
        CHECK(r.kept == 12);
        CHECK(r.j_estop_opt <= r.j_expert + 1.0);
        CHECK(r.j_estop_opt >= 0.0);
    }
    const auto csv = ablation_csv(rows, "n_demos", "abc");
    CHECK(csv.rfind("# config_hash: abc\nn_demos,kept_states,j_expert,j_estop_opt\n", 0) == 0);

    c.ablation.grid = {0};
    CHECK_THROWS_AS(run_ablation(c), Error);
    c.expert.source = "demo_file";
    c.expert.path = "x.jsonl";
    CHECK_THROWS_AS(run_ablation(c), ConfigError);
}

TEST_CASE("pendulum experiments need the cross-entropy learner") {
    auto c = config_from_json(json::parse(R"({"environment": {"kind": "pendulum"}, "trials": [0]})"));
    CHECK_THROWS_AS(run_learning_experiment(c), ConfigError);
    c.learner.algorithm = Algorithm::CrossEntropy;
    c.learner.iterations = 2;
    c.learner.population = 4;
    c.learner.eval_episodes = 1;
    c.n_demos = 5;
    const auto res = run_learning_experiment(c);
    CHECK(res.estop.size() == 1);
    CHECK(res.estop_final_offset.size() == 1);
    CHECK(res.estop_in_estop.empty());
    auto lake = small_lake();
    lake.learner.algorithm = Algorithm::CrossEntropy;
    CHECK_THROWS_AS(run_learning_experiment(lake), ConfigError);
}
