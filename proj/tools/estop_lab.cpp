// estop_lab: command-line front end for the e-stop toolkit.

#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "estop/bounds.hpp"
#include "estop/envs.hpp"
#include "estop/estimation.hpp"
#include "estop/experiments.hpp"
#include "estop/format.hpp"
#include "estop/mdp_io.hpp"
#include "estop/supervisor.hpp"

using namespace estop;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;

void print_paths(const std::vector<std::filesystem::path>& paths) {
    for (const auto& p : paths) std::cout << p.string() << '\n';
}

EvalMode eval_mode(bool finite, double gamma) { return finite ? EvalMode::finite_horizon() : EvalMode::discounted(gamma); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Emergency-stop reinforcement learning toolkit"};
    app.require_subcommand(1);

    // mdp build-frozenlake
    auto* mdp_cmd = app.add_subcommand("mdp", "Build MDP documents");
    mdp_cmd->require_subcommand(1);
    auto* build_fl = mdp_cmd->add_subcommand("build-frozenlake", "Write a FrozenLake MDP as JSON");
    EnvironmentConfig fl_env;
    std::string fl_out;
    build_fl->add_option("--map", fl_env.map, "classic8x8, classic4x4 or a map file")->capture_default_str();
    build_fl->add_option("--escape", fl_env.hole_escape_prob, "Hole escape probability")->capture_default_str();
    build_fl->add_option("--horizon", fl_env.horizon, "Episode length (0 keeps the map default)");
    bool fl_no_goal_terminal = false;
    build_fl->add_flag("--no-goal-terminal", fl_no_goal_terminal, "Do not flag goal cells as terminal");
    build_fl->add_option("--out", fl_out, "Output path (stdout when omitted)");

    // expert solve
    auto* expert_cmd = app.add_subcommand("expert", "Expert policies");
    expert_cmd->require_subcommand(1);
    auto* solve = expert_cmd->add_subcommand("solve", "Value iteration; writes the greedy policy");
    std::string solve_mdp, solve_out;
    double solve_gamma = 0.99, solve_sigma = 0.0;
    std::uint64_t solve_seed = 0;
    bool solve_finite = false;
    solve->add_option("--mdp", solve_mdp, "MDP document")->required();
    solve->add_option("--gamma", solve_gamma, "Discount factor")->capture_default_str();
    solve->add_flag("--finite", solve_finite, "Finite-horizon (time-dependent) optimum instead");
    solve->add_option("--sigma", solve_sigma, "Gaussian noise added to Q* before acting greedily");
    solve->add_option("--seed", solve_seed, "Noise seed");
    solve->add_option("--out", solve_out, "Output path (stdout when omitted)");

    // demos rollout
    auto* demos_cmd = app.add_subcommand("demos", "Demonstrations");
    demos_cmd->require_subcommand(1);
    auto* rollout_cmd = demos_cmd->add_subcommand("rollout", "Roll out a policy and write JSON lines");
    std::string ro_mdp, ro_policy, ro_out, ro_stats;
    int ro_n = 1000;
    std::uint64_t ro_seed = 1;
    rollout_cmd->add_option("--mdp", ro_mdp, "MDP document")->required();
    rollout_cmd->add_option("--policy", ro_policy, "Policy document")->required();
    rollout_cmd->add_option("--n", ro_n, "Number of rollouts")->capture_default_str();
    rollout_cmd->add_option("--seed", ro_seed, "Rollout seed")->capture_default_str();
    rollout_cmd->add_option("--out", ro_out, "Output path (stdout when omitted)");
    rollout_cmd->add_option("--stats", ro_stats, "Also write visit statistics CSV here");

    // estop learn
    auto* estop_cmd = app.add_subcommand("estop", "E-stop MDP construction");
    estop_cmd->require_subcommand(1);
    auto* learn = estop_cmd->add_subcommand("learn", "Build the e-stop MDP from demonstrations");
    std::string le_mdp, le_demos, le_out, le_support;
    double le_xi = -1.0, le_fraction = -1.0, le_gamma = 0.99;
    learn->add_option("--mdp", le_mdp, "MDP document")->required();
    learn->add_option("--demos", le_demos, "Demo JSON lines")->required();
    auto* xi_opt = learn->add_option("--xi", le_xi, "Hitting-probability budget");
    auto* frac_opt = learn->add_option("--fraction", le_fraction, "Fraction of states to remove (lowest h-hat)");
    xi_opt->excludes(frac_opt);
    learn->add_option("--gamma", le_gamma, "Discount used for the feasibility check")->capture_default_str();
    learn->add_option("--out", le_out, "E-stop MDP output path");
    learn->add_option("--support", le_support, "Support document output path");

    // run
    auto* run_cmd = app.add_subcommand("run", "Run an experiment config");
    std::string run_kind, run_config, run_out_dir;
    run_cmd->add_option("kind", run_kind, "vi-sweep, learn or ablation")
        ->required()
        ->check(CLI::IsMember({"vi-sweep", "learn", "ablation"}));
    run_cmd->add_option("--config", run_config, "JSON config")->required();
    run_cmd->add_option("--out-dir", run_out_dir, "Override output_dir");

    // bounds
    auto* bounds_cmd = app.add_subcommand("bounds", "Value-gap certificates");
    bounds_cmd->require_subcommand(1);
    auto* certify = bounds_cmd->add_subcommand("certify", "Certify one (MDP, expert, support)");
    std::string ce_mdp, ce_policy, ce_support;
    certify->add_option("--mdp", ce_mdp, "MDP document")->required();
    certify->add_option("--policy", ce_policy, "Expert policy document")->required();
    certify->add_option("--support", ce_support, "State-set support document (perfect only when omitted)");
    auto* sweep = bounds_cmd->add_subcommand("sweep", "Randomized certificate sweep");
    int sw_n = 1000;
    std::uint64_t sw_seed = 0;
    sweep->add_option("--instances", sw_n, "Number of random instances")->capture_default_str();
    sweep->add_option("--seed", sw_seed, "First instance seed")->capture_default_str();

    // coupon
    auto* coupon_cmd = app.add_subcommand("coupon", "Coupon/cover probabilities");
    int cp_m = 1, cp_n = 0;
    double cp_eps = 0.0;
    coupon_cmd->add_option("--m", cp_m, "Number of outcomes")->required();
    coupon_cmd->add_option("--n", cp_n, "Number of draws")->required();
    coupon_cmd->add_option("--eps", cp_eps, "Cover probability with this per-state mass instead");

    // serve
    auto* serve = app.add_subcommand("serve", "Start the supervisor service");
    std::string sv_host = "127.0.0.1";
    int sv_port = 8080;
    serve->add_option("--host", sv_host)->capture_default_str();
    serve->add_option("--port", sv_port)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*build_fl) {
            fl_env.goal_terminal = !fl_no_goal_terminal;
            const auto mdp = build_environment(fl_env);
            if (fl_out.empty()) {
                std::cout << mdp_to_text(mdp);
            } else {
                save_mdp(mdp, fl_out);
            }
        } else if (*solve) {
            const auto mdp = load_mdp(solve_mdp);
            TabularPolicy policy;
            if (solve_finite) {
                policy = value_iteration(mdp, EvalMode::finite_horizon()).greedy;
            } else {
                ExpertConfig ex;
                ex.source = solve_sigma > 0.0 ? "noisy_q" : "optimal";
                ex.sigma = solve_sigma;
                ex.seed = solve_seed;
                policy = build_expert(mdp, ex, solve_gamma);
            }
            std::cerr << "J = " << format_double(policy_value(mdp, policy, eval_mode(solve_finite, solve_gamma)))
                      << '\n';
            if (solve_out.empty()) {
                std::cout << policy_to_json(policy).dump() << '\n';
            } else {
                save_policy(policy, solve_out);
            }
        } else if (*rollout_cmd) {
            const auto mdp = load_mdp(ro_mdp);
            const auto demos = collect_demos(mdp, load_policy(ro_policy), ro_n, ro_seed);
            if (ro_out.empty()) {
                std::cout << demos_to_jsonl(demos);
            } else {
                save_demos(demos, ro_out);
            }
            if (!ro_stats.empty()) {
                write_text_file(ro_stats, visit_stats_csv(estimate_visit_stats(demos, mdp.n_states(), mdp.horizon())));
            }
        } else if (*learn) {
            if (le_xi < 0.0 && le_fraction < 0.0) throw ConfigError("estop learn needs --xi or --fraction");
            const auto mdp = load_mdp(le_mdp);
            const auto demos = load_demos(le_demos);
            const auto estop = le_xi >= 0.0 ? learned_estop(mdp, demos, le_xi) : learned_estop_fraction(mdp, demos, le_fraction);
            const double j = optimal_value(compact(estop).mdp, le_gamma);
            std::cerr << "kept " << estop.support.size() << " of " << mdp.n_states() << " states; J(e-stop optimum) = "
                      << format_double(j) << '\n';
            if (!le_out.empty()) save_mdp(estop.mdp, le_out);
            if (!le_support.empty()) write_text_file(le_support, support_to_json(estop.support).dump() + "\n");
            if (le_out.empty() && le_support.empty()) std::cout << support_to_json(estop.support).dump() << '\n';
            if (j <= 1e-12) throw InfeasibleError("no reward is reachable inside the e-stop support");
        } else if (*run_cmd) {
            auto config = load_config(run_config);
            if (!run_out_dir.empty()) config.output_dir = run_out_dir;
            if (run_kind == "vi-sweep") {
                const auto rows = run_vi_sweep(config);
                if (!rows.empty() && rows.front().infeasible) {
                    throw InfeasibleError("the environment has no reachable reward");
                }
            }
            print_paths(write_experiment(config, run_kind));
        } else if (*certify) {
            const auto mdp = load_mdp(ce_mdp);
            const auto expert = load_policy(ce_policy);
            std::cout << certificate_to_json(certify_perfect(mdp, expert)).dump() << '\n';
            if (!ce_support.empty()) {
                const auto doc = nlohmann::json::parse(read_text_file(ce_support));
                const auto support = support_from_json(doc);
                const auto* set = std::get_if<StateSet>(&support);
                if (set == nullptr) throw ConfigError("certificates need a state_set support");
                std::cout << certificate_to_json(certify_imperfect(mdp, expert, *set)).dump() << '\n';
                std::cout << certificate_to_json(certify_stationary(mdp, expert, *set)).dump() << '\n';
            }
        } else if (*sweep) {
            int failures = 0;
            for (int i = 0; i < sw_n; ++i) {
                const auto seed = sw_seed + static_cast<std::uint64_t>(i);
                for (const auto& c : certify_all(random_certification_instance(seed), seed)) {
                    failures += c.holds ? 0 : 1;
                    std::cout << certificate_to_json(c).dump() << '\n';
                }
            }
            if (failures > 0) {
                std::cerr << failures << " certificates failed\n";
                return 1;
            }
        } else if (*coupon_cmd) {
            const double p = cp_eps > 0.0 ? cover_probability(cp_m, cp_eps, cp_n) : coupon_probability(cp_m, cp_n);
            std::cout << format_double(p) << '\n';
        } else if (*serve) {
            SupervisorService service;
            std::cerr << "listening on " << sv_host << ':' << sv_port << '\n';
            service.listen(sv_host, sv_port);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const FormatError& e) {
        std::cerr << "format error";
        if (e.line() > 0) std::cerr << " (line " << e.line() << ')';
        std::cerr << ": " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
