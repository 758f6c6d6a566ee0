#include <algorithm>

#include "estop/learners.hpp"

namespace estop {

QLearningAgent::QLearningAgent(int n_states, int n_actions, const LearnerConfig& config)
    : n_states_(n_states),
      n_actions_(n_actions),
      config_(config),
      q_(static_cast<std::size_t>(n_states) * static_cast<std::size_t>(n_actions), 0.0) {
    config_.validate();
}

double QLearningAgent::epsilon(int episode) const {
    if (config_.episodes <= 1) return config_.epsilon_end;
    const double frac = std::min(1.0, static_cast<double>(episode) / (config_.episodes - 1));
    return config_.epsilon_start + frac * (config_.epsilon_end - config_.epsilon_start);
}

ActionId QLearningAgent::act(StateId s, int episode, Rng& rng) const {
    if (uniform01(rng) < epsilon(episode)) return static_cast<ActionId>(uniform01(rng) * n_actions_);
    const double* row = q_.data() + static_cast<std::size_t>(s) * static_cast<std::size_t>(n_actions_);
    const double best = *std::max_element(row, row + n_actions_);
    const auto ties = static_cast<int>(std::count(row, row + n_actions_, best));
    int pick = ties == 1 ? 0 : static_cast<int>(uniform01(rng) * ties);
    for (ActionId a = 0; a < n_actions_; ++a) {
        if (row[a] == best && pick-- == 0) return a;
    }
    return 0;
}

void QLearningAgent::update(StateId s, ActionId a, double reward, StateId next, bool terminal) {
    const auto A = static_cast<std::size_t>(n_actions_);
    double target = reward;
    if (!terminal) {
        const double* row = q_.data() + static_cast<std::size_t>(next) * A;
        target += config_.gamma * *std::max_element(row, row + n_actions_);
    }
    double& q = q_[static_cast<std::size_t>(s) * A + static_cast<std::size_t>(a)];
    q += config_.alpha * (target - q);
}

TabularPolicy QLearningAgent::greedy() const { return greedy_policy(q_, n_states_, n_actions_); }

QLearningResult q_learning(const TabularMdp& train, const TabularMdp& eval, const LearnerConfig& config) {
    if (train.n_actions() != eval.n_actions()) throw Error("training and evaluation MDPs differ in action count");
    QLearningAgent agent(train.n_states(), train.n_actions(), config);
    CurveEvaluator eval_full(eval, config.gamma);
    CurveEvaluator eval_train(train, config.gamma);
    QLearningResult out;
    out.curve.seed = config.seed;
    out.curve_train.seed = config.seed;
    Rng rng(config.seed);
    long seen = 0;

    auto record = [&] {
        if (!out.curve.points.empty() && out.curve.points.back().states_seen == seen) return;
        const auto policy = agent.greedy();
        out.curve.points.push_back(CurvePoint{seen, eval_full(policy)});
        out.curve_train.points.push_back(CurvePoint{seen, eval_train(policy)});
    };

    for (int ep = 0; ep < config.episodes; ++ep) {
        if (ep % config.eval_every_episodes == 0) record();
        StateId s = sample_initial_state(train, rng);
        double ret = 0.0;
        int len = 0;
        for (int t = 0; t + 1 < train.horizon() && !train.is_terminal(s); ++t) {
            const ActionId a = agent.act(s, ep, rng);
            const auto [next, reward] = sample_transition(train, s, a, rng);
            ++seen;
            ++len;
            ret += reward;
            agent.update(s, a, reward, next, train.is_terminal(next));
            s = next;
        }
        out.log.episode_returns.push_back(ret);
        out.log.episode_lengths.push_back(len);
    }
    record();
    out.q.assign(agent.q().begin(), agent.q().end());
    out.greedy = agent.greedy();
    return out;
}

}  // namespace estop
