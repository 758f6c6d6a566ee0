#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "estop/envs.hpp"
#include "estop/mdp.hpp"
#include "estop/support.hpp"

namespace estop {

enum class Algorithm { QLearning, ActorCritic, CrossEntropy };

const char* to_string(Algorithm algorithm);
Algorithm algorithm_from_string(const std::string& name);

struct LearnerConfig {
    Algorithm algorithm = Algorithm::QLearning;
    /// Q-learning / critic step size.
    double alpha = 0.1;
    /// Actor step size.
    double beta = 0.05;
    /// Epsilon-greedy exploration, decayed linearly over the episode budget.
    double epsilon_start = 0.1;
    double epsilon_end = 0.01;
    double gamma = 0.99;
    int episodes = 1000;
    int eval_every_episodes = 10;
    std::uint64_t seed = 0;

    // Cross-entropy search
    int iterations = 50;
    int population = 32;
    double elite_fraction = 0.25;
    double init_std = 10.0;
    /// Fixed-seed episodes used to score the mean policy after each iteration.
    int eval_episodes = 8;

    /// Throws estop::Error on out-of-range values.
    void validate() const;
};

struct CurvePoint {
    long states_seen = 0;
    double eval_return = 0.0;
};

struct LearningCurve {
    std::uint64_t seed = 0;
    std::vector<CurvePoint> points;
};

/// `states_seen,eval_return,seed`, curves concatenated in the given order.
std::string curves_to_csv(std::span<const LearningCurve> curves);
/// Inverse of curves_to_csv; one curve per distinct consecutive seed block.
std::vector<LearningCurve> curves_from_csv(std::string_view text);

/// Linear interpolation at x; nullopt outside [first.x, last.x].
std::optional<double> interpolate(const LearningCurve& curve, double x);

/// First states_seen at which eval_return >= fraction * asymptote, where the
/// asymptote is the mean of the last `tail` points. -1 if never reached.
long steps_to_fraction(const LearningCurve& curve, double fraction, int tail = 5);

/// Per-episode training record (undiscounted reward sums and transition counts).
struct TrainingLog {
    std::vector<double> episode_returns;
    std::vector<int> episode_lengths;
};

// ---------------------------------------------------------------------------
// Tabular learners. `train` is the MDP the agent interacts with (M or M-hat);
// the greedy policy is scored on `eval` (usually M) and on `train` separately.
// Policies are truncated or padded (action 0) to each target's state count.

/// Epsilon-greedy tabular Q-learning agent; Q starts at zero.
class QLearningAgent {
public:
    QLearningAgent(int n_states, int n_actions, const LearnerConfig& config);

    double epsilon(int episode) const;
    /// Explores with probability epsilon(episode); greedy ties are broken uniformly at random.
    ActionId act(StateId s, int episode, Rng& rng) const;
    void update(StateId s, ActionId a, double reward, StateId next, bool terminal);
    /// Greedy policy, ties to the lowest action.
    TabularPolicy greedy() const;

    std::span<const double> q() const { return q_; }
    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }

private:
    int n_states_;
    int n_actions_;
    LearnerConfig config_;
    std::vector<double> q_;
};

/// Scores a stationary policy on targets of possibly different state counts,
/// warm-starting each discounted evaluation from the previous values.
class CurveEvaluator {
public:
    CurveEvaluator(const TabularMdp& target, double gamma);
    double operator()(const TabularPolicy& policy);

private:
    const TabularMdp* target_;
    double gamma_;
    std::vector<double> values_;
};

/// Resizes a stationary policy to n_states (truncating, or padding with action 0).
TabularPolicy fit_policy(const TabularPolicy& policy, int n_states);

struct QLearningResult {
    std::vector<double> q;
    TabularPolicy greedy;
    LearningCurve curve;        // evaluated in `eval`
    LearningCurve curve_train;  // evaluated in `train`
    TrainingLog log;
};

QLearningResult q_learning(const TabularMdp& train, const TabularMdp& eval, const LearnerConfig& config);

struct ActorCriticResult {
    /// Softmax preferences, recentred so each row has max 0.
    std::vector<double> preferences;
    std::vector<double> values;
    TabularPolicy policy;  // softmax probabilities
    TabularPolicy mode;    // argmax of the preferences
    LearningCurve curve;
    LearningCurve curve_train;
    TrainingLog log;
};

ActorCriticResult actor_critic(const TabularMdp& train, const TabularMdp& eval, const LearnerConfig& config);

// ---------------------------------------------------------------------------
// Cross-entropy search over linear pendulum controllers.

struct PendulumEpisode {
    double total_reward = 0.0;
    int steps = 0;
    bool estopped = false;
    /// Mean |offset from upright| over the final min(50, steps) states.
    double final_offset = 0.0;
    std::vector<std::vector<double>> states;
};

/// One episode from `start`; with a box, leaving it ends the episode with no
/// reward for the offending transition.
PendulumEpisode run_pendulum_episode(const PendulumParams& params, const LinearPendulumPolicy& policy,
                                     const PendulumState& start, const ContinuousBox* box, bool record_states);

struct CrossEntropyResult {
    LinearPendulumPolicy policy;  // final mean
    LearningCurve curve;          // x: environment steps, y: mean return of the mean policy
    /// Mean final_offset of the mean policy over the evaluation episodes.
    double final_offset = 0.0;
    std::vector<double> mean_episode_length;  // per iteration, training episodes
};

CrossEntropyResult cross_entropy_search(const PendulumParams& params, const ContinuousBox* box,
                                        const LearnerConfig& config);

}  // namespace estop
