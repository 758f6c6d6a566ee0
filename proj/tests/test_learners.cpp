#include <doctest.h>

#include <cmath>
#include <numeric>

#include "estop/envs.hpp"
#include "estop/learners.hpp"
#include "fixtures.hpp"

using namespace estop;

namespace {

LearnerConfig small_config(Algorithm algorithm, int episodes) {
    LearnerConfig c;
    c.algorithm = algorithm;
    c.episodes = episodes;
    c.eval_every_episodes = 10;
    return c;
}

TabularMdp zero_reward_mdp() {
    using Rows = std::vector<std::vector<Transition>>;
    return TabularMdp(2, 2, 5, {1.0, 0.0},
                      Rows{{{0, 0.5, 0.0}, {1, 0.5, 0.0}}, {{1, 1.0, 0.0}}, {{0, 1.0, 0.0}}, {{0, 1.0, 0.0}}}, {});
}

}  // namespace

TEST_CASE("configuration validation and algorithm names") {
    LearnerConfig c;
    CHECK_NOTHROW(c.validate());
    c.alpha = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = LearnerConfig{};
    c.gamma = 1.0;
    CHECK_THROWS_AS(c.validate(), Error);
    for (auto a : {Algorithm::QLearning, Algorithm::ActorCritic, Algorithm::CrossEntropy}) {
        CHECK(algorithm_from_string(to_string(a)) == a);
    }
    CHECK_THROWS_AS(algorithm_from_string("sarsa"), Error);
}

TEST_CASE("epsilon decays linearly over the episode budget") {
    LearnerConfig c;
    c.episodes = 11;
    const QLearningAgent agent(2, 2, c);
    CHECK(agent.epsilon(0) == doctest::Approx(0.1));
    CHECK(agent.epsilon(5) == doctest::Approx(0.055));
    CHECK(agent.epsilon(10) == doctest::Approx(0.01));
    CHECK(agent.epsilon(50) == doctest::Approx(0.01));
}

TEST_CASE("Q-learning with zero rewards keeps Q at zero") {
    const auto mdp = zero_reward_mdp();
    const auto r = q_learning(mdp, mdp, small_config(Algorithm::QLearning, 200));
    for (double q : r.q) CHECK(q == 0.0);
    for (const auto& p : r.curve.points) CHECK(p.eval_return == 0.0);
}

TEST_CASE("Q-learning on ChainA learns Q(s0) = 1") {
    const auto mdp = test::chain_a(2);
    const auto r = q_learning(mdp, mdp, small_config(Algorithm::QLearning, 500));
    CHECK(r.q[0] == doctest::Approx(1.0).epsilon(0.05));
    CHECK(r.curve.points.front().states_seen == 0);
    CHECK(r.curve.points.back().states_seen == 500);
    CHECK(r.log.episode_returns.size() == 500);
    CHECK(r.log.episode_lengths.front() == 1);
}

TEST_CASE("Q-learning prefers the better bandit arm") {
    const auto mdp = test::bandit();
    const auto r = q_learning(mdp, mdp, small_config(Algorithm::QLearning, 300));
    CHECK(r.greedy.prob(0, 0, 0) == 1.0);
}

TEST_CASE("curves have strictly increasing x and are reproducible") {
    const auto mdp = build_frozenlake(classic_frozenlake_4x4());
    const auto cfg = small_config(Algorithm::QLearning, 300);
    const auto a = q_learning(mdp, mdp, cfg);
    const auto b = q_learning(mdp, mdp, cfg);
    for (std::size_t i = 1; i < a.curve.points.size(); ++i) {
        CHECK(a.curve.points[i].states_seen > a.curve.points[i - 1].states_seen);
    }
    const LearningCurve ca[] = {a.curve}, cb[] = {b.curve};
    CHECK(curves_to_csv(ca) == curves_to_csv(cb));
    // Curve values are exact policy evaluations of the greedy policy.
    const auto exact = test::solve_policy_values(mdp, a.greedy, cfg.gamma);
    CHECK(std::fabs(a.curve.points.back().eval_return - exact[0]) < 1e-5);
}

TEST_CASE("learning in the e-stop MDP never collects reward after an e-stop") {
    const auto mdp = build_frozenlake(classic_frozenlake_4x4());
    const auto support = StateSet::from_states(16, std::vector<StateId>{0, 1, 2, 3, 4, 8});
    const auto e = build_estop_mdp(mdp, support);
    const auto r = q_learning(e.mdp, mdp, small_config(Algorithm::QLearning, 300));
    // The goal lies outside the support, so no episode can earn anything.
    for (double ret : r.log.episode_returns) CHECK(ret == 0.0);
    for (const auto& p : r.curve_train.points) CHECK(p.eval_return == 0.0);
    // E-stopped episodes are short.
    const double mean_len = std::accumulate(r.log.episode_lengths.begin(), r.log.episode_lengths.end(), 0.0) /
                            static_cast<double>(r.log.episode_lengths.size());
    CHECK(mean_len < 20.0);
}

TEST_CASE("actor-critic with zero rewards stays uniform") {
    const auto mdp = zero_reward_mdp();
    const auto r = actor_critic(mdp, mdp, small_config(Algorithm::ActorCritic, 200));
    for (double p : r.preferences) CHECK(p == 0.0);
    CHECK(r.policy.prob(0, 0, 0) == doctest::Approx(0.5));
}

TEST_CASE("actor-critic on ChainA learns V(s0) = 1") {
    const auto mdp = test::chain_a(2);
    const auto r = actor_critic(mdp, mdp, small_config(Algorithm::ActorCritic, 500));
    CHECK(r.values[0] == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("actor-critic solves the two-armed bandit") {
    const auto mdp = test::bandit();
    auto cfg = small_config(Algorithm::ActorCritic, 3000);
    cfg.beta = 0.2;
    const auto r = actor_critic(mdp, mdp, cfg);
    CHECK(r.policy.prob(0, 0, 0) >= 0.99);
    CHECK(r.mode.prob(0, 0, 0) == 1.0);
    // Preferences are recentred so the best action sits at zero.
    CHECK(std::max(r.preferences[0], r.preferences[1]) == 0.0);
}

TEST_CASE("steps to a fraction of the asymptote") {
    LearningCurve c;
    c.points = {{0, 0.0}, {10, 0.5}, {20, 0.95}, {30, 1.0}, {40, 1.0}};
    CHECK(steps_to_fraction(c, 0.9, 2) == 20);
    CHECK(steps_to_fraction(c, 0.4, 2) == 10);
    CHECK(steps_to_fraction(LearningCurve{}, 0.9) == -1);
    CHECK(interpolate(c, 5.0).value() == doctest::Approx(0.25));
    CHECK_FALSE(interpolate(c, 41.0).has_value());
    CHECK_FALSE(interpolate(c, -1.0).has_value());
}

TEST_CASE("curve CSV round-trip") {
    std::vector<LearningCurve> curves(2);
    curves[0].seed = 3;
    curves[0].points = {{0, 0.0}, {5, 0.1}};
    curves[1].seed = 4;
    curves[1].points = {{0, 0.25}};
    const auto text = curves_to_csv(curves);
    const auto back = curves_from_csv("# comment\n" + text);
    REQUIRE(back.size() == 2);
    CHECK(back[0].seed == 3);
    CHECK(back[0].points[1].eval_return == 0.1);
    CHECK(back[1].points[0].eval_return == 0.25);
}

TEST_CASE("cross-entropy with no torque sees identical returns") {
    PendulumParams params;
    params.max_torque = 0.0;
    LearnerConfig cfg;
    cfg.algorithm = Algorithm::CrossEntropy;
    cfg.iterations = 3;
    const auto r = cross_entropy_search(params, nullptr, cfg);
    for (const auto& p : r.curve.points) CHECK(p.eval_return == r.curve.points.front().eval_return);
}

TEST_CASE("a box covering every reachable state changes nothing") {
    PendulumParams params;
    LearnerConfig cfg;
    cfg.algorithm = Algorithm::CrossEntropy;
    cfg.iterations = 5;
    const ContinuousBox everything{{-10.0, -100.0}, {10.0, 100.0}};
    const auto a = cross_entropy_search(params, &everything, cfg);
    const auto b = cross_entropy_search(params, nullptr, cfg);
    CHECK(a.policy.weights == b.policy.weights);
    const LearningCurve ca[] = {a.curve}, cb[] = {b.curve};
    CHECK(curves_to_csv(ca) == curves_to_csv(cb));
}

TEST_CASE("a demo-derived box shortens early episodes") {
    PendulumParams params;
    LearnerConfig cfg;
    cfg.algorithm = Algorithm::CrossEntropy;
    cfg.iterations = 3;
    const ContinuousBox box{{-0.2, -0.4}, {0.2, 0.4}};
    const auto a = cross_entropy_search(params, &box, cfg);
    const auto b = cross_entropy_search(params, nullptr, cfg);
    CHECK(a.mean_episode_length.front() < b.mean_episode_length.front());
    CHECK(b.mean_episode_length.front() == params.episode_length - 1);
}

TEST_CASE("pendulum episodes stop when leaving the box") {
    PendulumParams params;
    const LinearPendulumPolicy passive{{0.0, 0.0, 0.0}};
    const ContinuousBox box{{-0.2, -1.0}, {0.2, 1.0}};
    const PendulumState start{std::numbers::pi + 0.1, 0.0};
    const auto stopped = run_pendulum_episode(params, passive, start, &box, true);
    CHECK(stopped.estopped);
    CHECK(stopped.steps < params.episode_length - 1);
    for (const auto& x : stopped.states) CHECK(box.contains(x));
    const auto free = run_pendulum_episode(params, passive, start, nullptr, false);
    CHECK(free.steps == params.episode_length - 1);
    CHECK(free.total_reward > stopped.total_reward);
    // The stabilising demo controller holds the pendulum upright.
    const LinearPendulumPolicy controller{{-20.0, -6.0, 0.0}};
    CHECK(run_pendulum_episode(params, controller, start, nullptr, false).final_offset < 0.01);
}
