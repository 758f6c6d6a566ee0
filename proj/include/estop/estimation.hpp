#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "estop/mdp.hpp"
#include "estop/support.hpp"

namespace estop {

/// One demonstration: states s_0 ... s_k, with actions/rewards per transition.
struct Demo {
    std::vector<StateId> states;
    std::vector<ActionId> actions;
    std::vector<double> rewards;
};

using DemoSet = std::vector<Demo>;

Demo demo_from_trajectory(const Trajectory& traj);

/// n rollouts of `policy` from one seeded generator, in order.
DemoSet collect_demos(const TabularMdp& mdp, const TabularPolicy& policy, int n, std::uint64_t seed);

struct VisitStats {
    int n = 0;
    int horizon = 0;
    std::vector<double> h_hat;
    std::vector<double> rho_hat;
    /// varrho[i][s]: fraction of the H timesteps demo i spent in s.
    std::vector<std::vector<double>> varrho;
    /// Unbiased (n - 1) sample variance of varrho[.][s]; zero when n < 2.
    std::vector<double> sample_variance;
    /// False when some demo was shorter than H and had to be padded.
    bool full_horizon = true;
};

/// Short demos are padded with their last state up to H for rho_hat and varrho.
/// Throws when a demo is empty, longer than H, or leaves the state space.
VisitStats estimate_visit_stats(const DemoSet& demos, int n_states, int horizon);

/// h(s) = P(the policy visits s at some t < H), one absorbing chain per target.
std::vector<double> exact_hitting_probabilities(const TabularMdp& mdp, const TabularPolicy& policy);

/// Greedy removal in increasing score order (ties -> lower index), skipping
/// protected states, while the removed score sum stays <= xi.
StateSet build_support_by_budget(std::span<const double> scores, double xi, const StateSet& protect);

/// Removes the k unprotected states with the lowest scores (same ordering).
StateSet remove_lowest(std::span<const double> scores, int k, const StateSet& protect);

/// support(rho0) as a state set.
StateSet initial_support_set(const TabularMdp& mdp);

/// Estimate h from demos, remove under budget xi (protecting support(rho0)), build M-hat.
EStopMdp learned_estop(const TabularMdp& mdp, const DemoSet& demos, double xi);
/// As learned_estop, but removes floor(fraction * |S|) states (fewer if protection forbids).
EStopMdp learned_estop_fraction(const TabularMdp& mdp, const DemoSet& demos, double fraction);

// Demo files: one JSON object per line with "states", "actions", "rewards".
std::string demos_to_jsonl(const DemoSet& demos);
DemoSet demos_from_jsonl(std::string_view text);
DemoSet load_demos(const std::filesystem::path& path);
void save_demos(const DemoSet& demos, const std::filesystem::path& path);

/// Header `state,h_hat,rho_hat,var_varrho`.
std::string visit_stats_csv(const VisitStats& stats);

}  // namespace estop
