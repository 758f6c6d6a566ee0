#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace estop {

using StateId = std::int32_t;
using ActionId = std::int32_t;
using Rng = std::mt19937_64;

/// Uniform double in [0,1) built from the top 53 bits; identical on every platform.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Standard normal draw (Box-Muller on uniform01, so it is portable as well).
double standard_normal(Rng& rng);

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An iterative solver hit its sweep cap before reaching the tolerance.
class NonConvergence : public Error {
public:
    NonConvergence(const std::string& what, double residual, long sweeps)
        : Error(what), residual_(residual), sweeps_(sweeps) {}
    double residual() const { return residual_; }
    long sweeps() const { return sweeps_; }

private:
    double residual_;
    long sweeps_;
};

struct Transition {
    StateId next = 0;
    double prob = 0.0;
    double reward = 0.0;
};

/**
 * Finite episodic MDP with sparse per-(s,a) successor lists.
 *
 * An episode of horizon H visits the H states s_0 ... s_{H-1} and collects
 * the H-1 rewards R(s_t, a_t, s_{t+1}). Terminal states are zero-reward
 * self-loops, so forward recursions stay well defined after termination.
 *
 * Instances are immutable and validated on construction.
 */
class TabularMdp {
public:
    TabularMdp() = default;
    /// `rows` is indexed by s * n_actions + a. Throws estop::Error when an
    /// invariant does not hold.
    TabularMdp(int n_states, int n_actions, int horizon, std::vector<double> rho0,
               std::vector<std::vector<Transition>> rows, std::vector<StateId> terminals);

    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }
    int horizon() const { return horizon_; }
    std::span<const double> rho0() const { return rho0_; }
    std::span<const StateId> terminals() const { return terminals_; }
    bool is_terminal(StateId s) const { return terminal_flag_[static_cast<std::size_t>(s)] != 0; }

    std::span<const Transition> row(StateId s, ActionId a) const {
        return rows_[static_cast<std::size_t>(s) * static_cast<std::size_t>(n_actions_) +
                     static_cast<std::size_t>(a)];
    }
    /// Expected one-step reward sum_{s'} P(s,a,s') R(s,a,s').
    double expected_reward(StateId s, ActionId a) const;

    /// States with rho0(s) > 0, ascending.
    std::vector<StateId> initial_support() const;

    TabularMdp with_horizon(int horizon) const;

private:
    int n_states_ = 0;
    int n_actions_ = 0;
    int horizon_ = 0;
    std::vector<double> rho0_;
    std::vector<std::vector<Transition>> rows_;
    std::vector<StateId> terminals_;
    std::vector<char> terminal_flag_;
};

/// Stationary or time-dependent tabular policy; probabilities stored [t][s][a].
class TabularPolicy {
public:
    enum class Mode { Stationary, TimeDependent };

    TabularPolicy() = default;
    /// Validates that every action distribution sums to one.
    TabularPolicy(Mode mode, int n_states, int n_actions, int n_steps, std::vector<double> probs);

    static TabularPolicy uniform(int n_states, int n_actions);
    static TabularPolicy deterministic(int n_actions, std::span<const ActionId> actions);
    /// `actions[t][s]`
    static TabularPolicy deterministic_time(int n_actions,
                                            const std::vector<std::vector<ActionId>>& actions);

    Mode mode() const { return mode_; }
    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }
    /// Number of timesteps covered (1 for stationary policies).
    int n_steps() const { return n_steps_; }
    bool covers(int t) const { return mode_ == Mode::Stationary || t < n_steps_; }

    std::span<const double> action_probs(int t, StateId s) const;
    double prob(int t, StateId s, ActionId a) const { return action_probs(t, s)[static_cast<std::size_t>(a)]; }

    /// Samples an action with a single uniform draw.
    ActionId sample(int t, StateId s, Rng& rng) const;

private:
    Mode mode_ = Mode::Stationary;
    int n_states_ = 0;
    int n_actions_ = 0;
    int n_steps_ = 1;
    std::vector<double> probs_;
};

enum class TerminationCause { Horizon, TerminalState, EStop };

const char* to_string(TerminationCause cause);

struct Step {
    int t = 0;
    StateId state = 0;
    ActionId action = 0;
    double reward = 0.0;
    StateId next_state = 0;
};

struct Trajectory {
    StateId initial_state = 0;
    std::vector<Step> steps;
    bool terminated_early = false;
    TerminationCause termination_cause = TerminationCause::Horizon;

    /// s_0, s_1, ..., s_last (steps.size() + 1 entries).
    std::vector<StateId> states() const;
    double total_reward() const;
};

class EvalMode {
public:
    enum class Kind { FiniteHorizon, Discounted };

    static EvalMode finite_horizon() { return EvalMode(Kind::FiniteHorizon, 1.0); }
    /// Throws unless gamma lies in (0,1).
    static EvalMode discounted(double gamma);

    Kind kind() const { return kind_; }
    double gamma() const { return gamma_; }
    bool is_discounted() const { return kind_ == Kind::Discounted; }

private:
    EvalMode(Kind kind, double gamma) : kind_(kind), gamma_(gamma) {}
    Kind kind_;
    double gamma_;
};

struct SolverOptions {
    double tolerance = 1e-6;
    long max_sweeps = 100000;
    /// Optional starting values for discounted iterative evaluation (warm start).
    std::span<const double> initial{};
};

// ---------------------------------------------------------------------------
// Exact evaluation

std::vector<double> state_distribution(const TabularMdp& mdp, const TabularPolicy& policy, int t);

/// (1/H) sum_{t<H} rho^t.
std::vector<double> average_state_distribution(const TabularMdp& mdp, const TabularPolicy& policy);

/// All per-timestep distributions rho^0 ... rho^{H-1}.
std::vector<std::vector<double>> state_distributions(const TabularMdp& mdp, const TabularPolicy& policy);

/// Per-state values. Finite horizon: values at t = 0. Discounted: fixed point of
/// iterative policy evaluation (throws NonConvergence at the sweep cap).
std::vector<double> policy_state_values(const TabularMdp& mdp, const TabularPolicy& policy,
                                        const EvalMode& mode, const SolverOptions& options = {});

/// rho0-weighted expected return J(pi).
double policy_value(const TabularMdp& mdp, const TabularPolicy& policy, const EvalMode& mode,
                    const SolverOptions& options = {});

// ---------------------------------------------------------------------------
// Simulation

StateId sample_initial_state(const TabularMdp& mdp, Rng& rng);
/// Returns (next_state, reward).
std::pair<StateId, double> sample_transition(const TabularMdp& mdp, StateId s, ActionId a, Rng& rng);

Trajectory rollout(const TabularMdp& mdp, const TabularPolicy& policy, Rng& rng);
Trajectory rollout(const TabularMdp& mdp, const TabularPolicy& policy, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Planning

struct ValueIterationResult {
    /// V at t = 0 (finite horizon) or the converged V (discounted).
    std::vector<double> values;
    /// Finite horizon only: values_by_t[t][s] for t = 0 ... H-1.
    std::vector<std::vector<double>> values_by_t;
    TabularPolicy greedy;
    long sweeps = 0;
    std::uint64_t flop_count = 0;
    double residual = 0.0;
};

/// FLOPs charged per dense Bellman sweep: 4 |S|^2 |A|.
std::uint64_t value_iteration_flops(long sweeps, int n_states, int n_actions);

/// Bellman-optimal values and the greedy policy (ties go to the lowest action).
/// Throws NonConvergence when the discounted iteration hits its sweep cap.
ValueIterationResult value_iteration(const TabularMdp& mdp, const EvalMode& mode,
                                     const SolverOptions& options = {});

/// Q(s,a) = r(s,a) + gamma * sum P V(s'), stationary, for a converged V.
std::vector<double> q_values(const TabularMdp& mdp, std::span<const double> values, double gamma);

/// Greedy stationary policy over a Q table (ties -> lowest action).
TabularPolicy greedy_policy(std::span<const double> q, int n_states, int n_actions);

}  // namespace estop
