#include <algorithm>
#include <cmath>

#include "estop/learners.hpp"

namespace estop {

namespace {

void softmax_row(const double* prefs, int n, double* out) {
    const double top = *std::max_element(prefs, prefs + n);
    double sum = 0.0;
    for (int a = 0; a < n; ++a) {
        out[a] = std::exp(prefs[a] - top);
        sum += out[a];
    }
    for (int a = 0; a < n; ++a) out[a] /= sum;
}

TabularPolicy softmax_policy(const std::vector<double>& prefs, int S, int A) {
    std::vector<double> probs(prefs.size());
    for (int s = 0; s < S; ++s) {
        const auto off = static_cast<std::size_t>(s) * static_cast<std::size_t>(A);
        softmax_row(prefs.data() + off, A, probs.data() + off);
    }
    return TabularPolicy(TabularPolicy::Mode::Stationary, S, A, 1, std::move(probs));
}

}  // namespace

ActorCriticResult actor_critic(const TabularMdp& train, const TabularMdp& eval, const LearnerConfig& config) {
    config.validate();
    if (train.n_actions() != eval.n_actions()) throw Error("training and evaluation MDPs differ in action count");
    const int S = train.n_states();
    const int A = train.n_actions();
    const auto uA = static_cast<std::size_t>(A);
    std::vector<double> prefs(static_cast<std::size_t>(S) * uA, 0.0);
    std::vector<double> v(static_cast<std::size_t>(S), 0.0);
    std::vector<double> pi(uA);
    CurveEvaluator eval_full(eval, config.gamma);
    CurveEvaluator eval_train(train, config.gamma);
    ActorCriticResult out;
    out.curve.seed = config.seed;
    out.curve_train.seed = config.seed;
    Rng rng(config.seed);
    long seen = 0;

    auto record = [&] {
        if (!out.curve.points.empty() && out.curve.points.back().states_seen == seen) return;
        const auto mode = greedy_policy(prefs, S, A);
        out.curve.points.push_back(CurvePoint{seen, eval_full(mode)});
        out.curve_train.points.push_back(CurvePoint{seen, eval_train(mode)});
    };

    for (int ep = 0; ep < config.episodes; ++ep) {
        if (ep % config.eval_every_episodes == 0) record();
        StateId s = sample_initial_state(train, rng);
        double ret = 0.0;
        int len = 0;
        double discount = 1.0;
        for (int t = 0; t + 1 < train.horizon() && !train.is_terminal(s); ++t) {
            double* row = prefs.data() + static_cast<std::size_t>(s) * uA;
            softmax_row(row, A, pi.data());
            const double u = uniform01(rng);
            ActionId a = A - 1;
            double acc = 0.0;
            for (ActionId b = 0; b < A; ++b) {
                acc += pi[static_cast<std::size_t>(b)];
                if (u < acc) {
                    a = b;
                    break;
                }
            }
            const auto [next, reward] = sample_transition(train, s, a, rng);
            ++seen;
            ++len;
            ret += reward;
            const double bootstrap = train.is_terminal(next) ? 0.0 : v[static_cast<std::size_t>(next)];
            const double delta = reward + config.gamma * bootstrap - v[static_cast<std::size_t>(s)];
            v[static_cast<std::size_t>(s)] += config.alpha * delta;
            const double step = config.beta * delta * discount;
            for (ActionId b = 0; b < A; ++b) {
                row[b] += step * ((b == a ? 1.0 : 0.0) - pi[static_cast<std::size_t>(b)]);
            }
            const double top = *std::max_element(row, row + A);
            for (ActionId b = 0; b < A; ++b) row[b] -= top;
            discount *= config.gamma;
            s = next;
        }
        out.log.episode_returns.push_back(ret);
        out.log.episode_lengths.push_back(len);
    }
    record();
    out.policy = softmax_policy(prefs, S, A);
    out.mode = greedy_policy(prefs, S, A);
    out.preferences = std::move(prefs);
    out.values = std::move(v);
    return out;
}

}  // namespace estop
