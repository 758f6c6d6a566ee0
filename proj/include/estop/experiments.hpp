#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "estop/envs.hpp"
#include "estop/estimation.hpp"
#include "estop/learners.hpp"
#include "estop/support.hpp"

namespace estop {

/// Invalid or inconsistent experiment configuration (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// No feasible e-stop instance could be built (CLI exit code 3).
class InfeasibleError : public Error {
public:
    using Error::Error;
};

struct EnvironmentConfig {
    /// "frozenlake", "mdp_file" or "pendulum"
    std::string kind = "frozenlake";
    /// FrozenLake: "classic8x8", "classic4x4" or a map file path.
    std::string map = "classic8x8";
    double hole_escape_prob = 0.01;
    /// 0 keeps the map's default.
    int horizon = 0;
    bool goal_terminal = true;
    /// mdp_file only.
    std::string path;
    PendulumParams pendulum;
};

struct ExpertConfig {
    /// "optimal", "noisy_q" or "demo_file"
    std::string source = "optimal";
    double sigma = 0.0;
    std::string path;
    std::uint64_t seed = 0;
    /// Pendulum: weights of the stabilising controller used for demos.
    std::array<double, 3> pendulum_weights{-20.0, -6.0, 0.0};
};

struct RemovalConfig {
    /// "fraction_h", "fraction_rho" or "budget"
    std::string rule = "fraction_h";
    double fraction = 0.5;
    double xi = 0.0;
    /// Removal fractions for the value-iteration sweep.
    std::vector<double> grid;
    /// Pendulum box margin as a fraction of the demo range.
    double box_margin = 0.5;
};

struct AblationConfig {
    /// "sigma" or "n_demos"
    std::string kind = "sigma";
    std::vector<double> grid;
};

struct ExperimentConfig {
    std::string name = "experiment";
    EnvironmentConfig environment;
    double discount = 0.99;
    ExpertConfig expert;
    int n_demos = 1000;
    std::uint64_t demo_seed = 1;
    RemovalConfig removal;
    LearnerConfig learner;
    std::vector<std::uint64_t> trials{0};
    AblationConfig ablation;
    std::string output_dir = "out";

    void validate() const;
};

/// Missing keys keep their defaults; unknown keys are rejected. Throws ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);
/// FNV-1a (64-bit, hex) of the canonical JSON form.
std::string config_hash(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Aggregation

struct AggregatePoint {
    long x = 0;
    int count = 0;
    double median = 0.0;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation, 0 for a single trial
    double min = 0.0;
    double max = 0.0;
};

struct AggregateCurve {
    std::vector<AggregatePoint> points;
};

/// Interpolates every curve at x = 0, spacing, 2 spacing, ... using only the
/// curves whose range covers x.
AggregateCurve aggregate_curves(const std::vector<LearningCurve>& curves, long spacing = 1000);

// ---------------------------------------------------------------------------
// Parallel trials

/// Worker count: ESTOP_LAB_THREADS if set, else hardware concurrency, capped by n_tasks.
int worker_count(int n_tasks);
/// Runs task(i) for i in [0, n) on a pool; returns when all finish. Exceptions
/// are captured per task and reported by index.
std::vector<std::optional<std::string>> parallel_for(int n, const std::function<void(int)>& task);

// ---------------------------------------------------------------------------
// Protocol

TabularMdp build_environment(const EnvironmentConfig& env);
/// Optimal (discounted VI greedy) or greedy on Q* plus N(0, sigma^2) noise.
TabularPolicy build_expert(const TabularMdp& mdp, const ExpertConfig& expert, double gamma);
/// Support from the configured removal rule (support(rho0) always protected).
StateSet build_support(const TabularMdp& mdp, const TabularPolicy& expert, const VisitStats& stats,
                       const RemovalConfig& removal);

struct EStopInstance {
    TabularMdp mdp;
    TabularPolicy expert;
    DemoSet demos;
    VisitStats stats;
    EStopMdp estop;
};
EStopInstance prepare_instance(const ExperimentConfig& config);

/// Discounted rho0-weighted optimum of an MDP (value iteration).
double optimal_value(const TabularMdp& mdp, double gamma, long* sweeps = nullptr, std::uint64_t* flops = nullptr);

struct ViSweepRow {
    double fraction = 0.0;
    int kept = 0;
    double j_estop_opt = 0.0;
    long sweeps = 0;
    std::uint64_t flops = 0;
    bool infeasible = false;
};
std::vector<ViSweepRow> run_vi_sweep(const ExperimentConfig& config);

struct LearningExperiment {
    std::vector<LearningCurve> estop;
    std::vector<LearningCurve> full;
    /// Tabular only: e-stop learner scored in M-hat.
    std::vector<LearningCurve> estop_in_estop;
    AggregateCurve estop_aggregate;
    AggregateCurve full_aggregate;
    /// Pendulum only: final mean offset from upright per trial.
    std::vector<double> estop_final_offset;
    std::vector<double> full_final_offset;
    std::vector<std::string> failures;
};
LearningExperiment run_learning_experiment(const ExperimentConfig& config);

struct AblationRow {
    double value = 0.0;
    int kept = 0;
    double j_expert = 0.0;
    double j_estop_opt = 0.0;
};
std::vector<AblationRow> run_ablation(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// CSV outputs; each starts with a "# config_hash: ..." line.

std::string vi_sweep_csv(const std::vector<ViSweepRow>& rows, const std::string& hash);
std::string aggregate_csv(const AggregateCurve& agg, const std::string& hash);
std::string curves_csv(const std::vector<LearningCurve>& curves, const std::string& hash);
std::string ablation_csv(const std::vector<AblationRow>& rows, const std::string& kind, const std::string& hash);

/// Runs an experiment kind ("vi-sweep", "learn", "ablation") and writes its CSVs
/// under config.output_dir. Returns the written paths.
std::vector<std::filesystem::path> write_experiment(const ExperimentConfig& config, const std::string& kind);

}  // namespace estop
