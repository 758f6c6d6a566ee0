#include <algorithm>
#include <cmath>
#include <filesystem>

#include "estop/experiments.hpp"
#include "estop/format.hpp"
#include "estop/mdp_io.hpp"

namespace estop {

namespace {

constexpr double kInfeasible = 1e-12;

int count_for_fraction(double fraction, int n_states) {
    return static_cast<int>(std::floor(fraction * n_states + 1e-9));
}

std::vector<double> default_sweep_grid() {
    std::vector<double> grid;
    for (int i = 0; i < 20; ++i) grid.push_back(i / 20.0);
    return grid;
}

std::vector<double> default_ablation_grid(const std::string& kind) {
    if (kind == "sigma") return {0.0, 0.0005, 0.001, 0.002, 0.005, 0.01};
    return {10, 30, 100, 300, 1000};
}

FrozenLakeLayout frozenlake_layout(const EnvironmentConfig& env) {
    FrozenLakeLayout params;
    if (env.map == "classic8x8") {
        params = classic_frozenlake_8x8();
    } else if (env.map == "classic4x4") {
        params = classic_frozenlake_4x4();
    } else {
        std::filesystem::path path = env.map;
        if (!std::filesystem::exists(path)) path = std::filesystem::path(ESTOP_ASSET_DIR) / "maps" / env.map;
        try {
            params.grid = load_frozenlake_map(path.string()).grid;
        } catch (const Error& e) {
            throw ConfigError(std::string("environment.map: ") + e.what());
        }
    }
    params.hole_escape_prob = env.hole_escape_prob;
    params.goal_terminal = env.goal_terminal;
    if (env.horizon > 0) params.horizon = env.horizon;
    return params;
}

void require_tabular(const ExperimentConfig& config) {
    if (config.environment.kind == "pendulum") throw ConfigError("this experiment needs a tabular environment");
    if (config.learner.algorithm == Algorithm::CrossEntropy) {
        throw ConfigError("cross_entropy applies to the pendulum environment only");
    }
}

std::string header(const std::string& hash) { return "# config_hash: " + hash + "\n"; }

}  // namespace

TabularMdp build_environment(const EnvironmentConfig& env) {
    if (env.kind == "frozenlake") return build_frozenlake(frozenlake_layout(env));
    if (env.kind == "mdp_file") {
        auto mdp = load_mdp(env.path);
        return env.horizon > 0 ? mdp.with_horizon(env.horizon) : mdp;
    }
    throw ConfigError("environment kind '" + env.kind + "' is not tabular");
}

TabularPolicy build_expert(const TabularMdp& mdp, const ExpertConfig& expert, double gamma) {
    const auto vi = value_iteration(mdp, EvalMode::discounted(gamma));
    if (expert.source == "optimal" || (expert.source == "noisy_q" && expert.sigma == 0.0)) return vi.greedy;
    if (expert.source != "noisy_q") throw ConfigError("expert source '" + expert.source + "' has no policy");
    auto q = q_values(mdp, vi.values, gamma);
    Rng rng(expert.seed);
    for (double& x : q) x += expert.sigma * standard_normal(rng);
    return greedy_policy(q, mdp.n_states(), mdp.n_actions());
}

StateSet build_support(const TabularMdp& mdp, const TabularPolicy& expert, const VisitStats& stats,
                       const RemovalConfig& removal) {
    const auto protect = initial_support_set(mdp);
    if (removal.rule == "budget") return build_support_by_budget(stats.h_hat, removal.xi, protect);
    const int k = count_for_fraction(removal.fraction, mdp.n_states());
    if (removal.rule == "fraction_h") return remove_lowest(stats.h_hat, k, protect);
    if (expert.n_states() == 0) return remove_lowest(stats.rho_hat, k, protect);
    return remove_lowest(average_state_distribution(mdp, expert), k, protect);
}

EStopInstance prepare_instance(const ExperimentConfig& config) {
    require_tabular(config);
    EStopInstance inst;
    inst.mdp = build_environment(config.environment);
    if (config.expert.source == "demo_file") {
        inst.demos = load_demos(config.expert.path);
    } else {
        inst.expert = build_expert(inst.mdp, config.expert, config.discount);
        inst.demos = collect_demos(inst.mdp, inst.expert, config.n_demos, config.demo_seed);
    }
    inst.stats = estimate_visit_stats(inst.demos, inst.mdp.n_states(), inst.mdp.horizon());
    inst.estop = build_estop_mdp(inst.mdp, build_support(inst.mdp, inst.expert, inst.stats, config.removal));
    return inst;
}

double optimal_value(const TabularMdp& mdp, double gamma, long* sweeps, std::uint64_t* flops) {
    SolverOptions opts;
    // Keeps the value error near 1e-10 so removal sweeps compare cleanly.
    opts.tolerance = 1e-10 * (1.0 - gamma);
    opts.max_sweeps = 1000000;
    const auto vi = value_iteration(mdp, EvalMode::discounted(gamma), opts);
    if (sweeps != nullptr) *sweeps = vi.sweeps;
    if (flops != nullptr) *flops = vi.flop_count;
    double j = 0.0;
    for (std::size_t s = 0; s < vi.values.size(); ++s) j += mdp.rho0()[s] * vi.values[s];
    return j;
}

std::vector<ViSweepRow> run_vi_sweep(const ExperimentConfig& config) {
    require_tabular(config);
    const auto mdp = build_environment(config.environment);
    std::vector<double> rank;
    if (config.expert.source == "demo_file") {
        rank = estimate_visit_stats(load_demos(config.expert.path), mdp.n_states(), mdp.horizon()).rho_hat;
    } else {
        rank = average_state_distribution(mdp, build_expert(mdp, config.expert, config.discount));
    }
    const auto protect = initial_support_set(mdp);
    auto grid = config.removal.grid.empty() ? default_sweep_grid() : config.removal.grid;
    std::sort(grid.begin(), grid.end());

    std::vector<ViSweepRow> rows;
    for (double fraction : grid) {
        const auto support = remove_lowest(rank, count_for_fraction(fraction, mdp.n_states()), protect);
        const auto small = compact(build_estop_mdp(mdp, support));
        ViSweepRow row;
        row.fraction = fraction;
        row.kept = support.size();
        row.j_estop_opt = optimal_value(small.mdp, config.discount, &row.sweeps, &row.flops);
        row.infeasible = row.j_estop_opt <= kInfeasible;
        rows.push_back(row);
        if (row.infeasible) break;
    }
    return rows;
}

LearningExperiment run_learning_experiment(const ExperimentConfig& config) {
    LearningExperiment out;
    const auto n = static_cast<int>(config.trials.size());
    out.estop.resize(config.trials.size());
    out.full.resize(config.trials.size());
    std::vector<std::optional<std::string>> errors;

    if (config.environment.kind == "pendulum") {
        if (config.learner.algorithm != Algorithm::CrossEntropy) {
            throw ConfigError("the pendulum environment needs the cross_entropy learner");
        }
        const auto& params = config.environment.pendulum;
        const LinearPendulumPolicy controller{config.expert.pendulum_weights};
        Rng rng(config.demo_seed);
        std::vector<ContinuousTrajectory> demos;
        for (int i = 0; i < config.n_demos; ++i) {
            demos.push_back(run_pendulum_episode(params, controller, pendulum_reset(params, rng), nullptr, true).states);
        }
        const auto box = box_from_trajectories(demos, config.removal.box_margin);
        out.estop_final_offset.assign(config.trials.size(), 0.0);
        out.full_final_offset.assign(config.trials.size(), 0.0);
        errors = parallel_for(n, [&](int i) {
            auto learner = config.learner;
            learner.seed = config.trials[static_cast<std::size_t>(i)];
            auto with_box = cross_entropy_search(params, &box, learner);
            auto without = cross_entropy_search(params, nullptr, learner);
            out.estop[static_cast<std::size_t>(i)] = std::move(with_box.curve);
            out.full[static_cast<std::size_t>(i)] = std::move(without.curve);
            out.estop_final_offset[static_cast<std::size_t>(i)] = with_box.final_offset;
            out.full_final_offset[static_cast<std::size_t>(i)] = without.final_offset;
        });
    } else {
        const auto inst = prepare_instance(config);
        out.estop_in_estop.resize(config.trials.size());
        errors = parallel_for(n, [&](int i) {
            auto learner = config.learner;
            learner.seed = config.trials[static_cast<std::size_t>(i)];
            const auto idx = static_cast<std::size_t>(i);
            if (learner.algorithm == Algorithm::ActorCritic) {
                auto e = actor_critic(inst.estop.mdp, inst.mdp, learner);
                auto f = actor_critic(inst.mdp, inst.mdp, learner);
                out.estop[idx] = std::move(e.curve);
                out.estop_in_estop[idx] = std::move(e.curve_train);
                out.full[idx] = std::move(f.curve);
            } else {
                auto e = q_learning(inst.estop.mdp, inst.mdp, learner);
                auto f = q_learning(inst.mdp, inst.mdp, learner);
                out.estop[idx] = std::move(e.curve);
                out.estop_in_estop[idx] = std::move(e.curve_train);
                out.full[idx] = std::move(f.curve);
            }
        });
    }

    // Drop failed trials (kept in seed order) and require at least half to succeed.
    int ok = 0;
    for (int i = n - 1; i >= 0; --i) {
        const auto idx = static_cast<std::size_t>(i);
        if (!errors[idx]) {
            ++ok;
            continue;
        }
        out.failures.insert(out.failures.begin(),
                            "trial " + std::to_string(config.trials[idx]) + ": " + *errors[idx]);
        out.estop.erase(out.estop.begin() + i);
        out.full.erase(out.full.begin() + i);
        if (!out.estop_in_estop.empty()) out.estop_in_estop.erase(out.estop_in_estop.begin() + i);
        if (!out.estop_final_offset.empty()) {
            out.estop_final_offset.erase(out.estop_final_offset.begin() + i);
            out.full_final_offset.erase(out.full_final_offset.begin() + i);
        }
    }
    if (2 * ok < n) {
        throw Error("only " + std::to_string(ok) + " of " + std::to_string(n) +
                    " trials succeeded; first failure: " + out.failures.front());
    }
    out.estop_aggregate = aggregate_curves(out.estop);
    out.full_aggregate = aggregate_curves(out.full);
    return out;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& config) {
    require_tabular(config);
    if (config.expert.source == "demo_file") throw ConfigError("ablations need a policy expert, not a demo file");
    const auto mdp = build_environment(config.environment);
    const auto grid = config.ablation.grid.empty() ? default_ablation_grid(config.ablation.kind) : config.ablation.grid;
    std::vector<AblationRow> rows(grid.size());
    const auto errors = parallel_for(static_cast<int>(grid.size()), [&](int i) {
        const auto idx = static_cast<std::size_t>(i);
        auto expert_cfg = config.expert;
        int n_demos = config.n_demos;
        if (config.ablation.kind == "sigma") {
            expert_cfg.source = "noisy_q";
            expert_cfg.sigma = grid[idx];
        } else {
            n_demos = static_cast<int>(std::lround(grid[idx]));
            if (n_demos < 1) throw ConfigError("ablation n_demos values must be positive");
        }
        const auto expert = build_expert(mdp, expert_cfg, config.discount);
        const auto stats =
            estimate_visit_stats(collect_demos(mdp, expert, n_demos, config.demo_seed), mdp.n_states(), mdp.horizon());
        const auto support = build_support(mdp, expert, stats, config.removal);
        AblationRow row;
        row.value = grid[idx];
        row.kept = support.size();
        row.j_expert = policy_value(mdp, expert, EvalMode::discounted(config.discount));
        row.j_estop_opt = optimal_value(compact(build_estop_mdp(mdp, support)).mdp, config.discount);
        rows[idx] = row;
    });
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (errors[i]) throw Error("ablation point " + format_double(grid[i]) + ": " + *errors[i]);
    }
    return rows;
}

// ---------------------------------------------------------------------------

std::string vi_sweep_csv(const std::vector<ViSweepRow>& rows, const std::string& hash) {
    std::string out = header(hash) + "fraction_removed,kept_states,j_estop_opt,sweeps,flops,infeasible\n";
    for (const auto& r : rows) {
        out += format_double(r.fraction) + ',' + std::to_string(r.kept) + ',' + format_double(r.j_estop_opt) + ',' +
               std::to_string(r.sweeps) + ',' + std::to_string(r.flops) + ',' + (r.infeasible ? "1" : "0") + '\n';
    }
    return out;
}

std::string aggregate_csv(const AggregateCurve& agg, const std::string& hash) {
    std::string out = header(hash) + "states_seen,count,median,mean,std,min,max\n";
    for (const auto& p : agg.points) {
        out += std::to_string(p.x) + ',' + std::to_string(p.count) + ',' + format_double(p.median) + ',' +
               format_double(p.mean) + ',' + format_double(p.stddev) + ',' + format_double(p.min) + ',' +
               format_double(p.max) + '\n';
    }
    return out;
}

std::string curves_csv(const std::vector<LearningCurve>& curves, const std::string& hash) {
    return header(hash) + curves_to_csv(curves);
}

std::string ablation_csv(const std::vector<AblationRow>& rows, const std::string& kind, const std::string& hash) {
    std::string out = header(hash) + kind + ",kept_states,j_expert,j_estop_opt\n";
    for (const auto& r : rows) {
        out += format_double(r.value) + ',' + std::to_string(r.kept) + ',' + format_double(r.j_expert) + ',' +
               format_double(r.j_estop_opt) + '\n';
    }
    return out;
}

std::vector<std::filesystem::path> write_experiment(const ExperimentConfig& config, const std::string& kind) {
    const std::filesystem::path dir = config.output_dir;
    std::filesystem::create_directories(dir);
    const auto hash = config_hash(config);
    std::vector<std::filesystem::path> written;
    auto emit = [&](const std::string& name, const std::string& text) {
        written.push_back(dir / name);
        write_text_file(written.back(), text);
    };
    if (kind == "vi-sweep") {
        emit("vi_sweep.csv", vi_sweep_csv(run_vi_sweep(config), hash));
    } else if (kind == "learn") {
        const auto res = run_learning_experiment(config);
        emit("curves_estop.csv", curves_csv(res.estop, hash));
        emit("curves_full.csv", curves_csv(res.full, hash));
        if (!res.estop_in_estop.empty()) emit("curves_estop_in_estop.csv", curves_csv(res.estop_in_estop, hash));
        emit("aggregate_estop.csv", aggregate_csv(res.estop_aggregate, hash));
        emit("aggregate_full.csv", aggregate_csv(res.full_aggregate, hash));
        if (!res.failures.empty()) {
            std::string text;
            for (const auto& f : res.failures) text += f + '\n';
            emit("failures.txt", text);
        }
    } else if (kind == "ablation") {
        emit("ablation_" + config.ablation.kind + ".csv",
             ablation_csv(run_ablation(config), config.ablation.kind, hash));
    } else {
        throw ConfigError("unknown experiment kind '" + kind + "'");
    }
    return written;
}

}  // namespace estop
