#include <algorithm>
#include <cmath>
#include <numeric>

#include "estop/learners.hpp"

namespace estop {

namespace {

constexpr double kVarianceFloor = 1e-6;

}  // namespace

PendulumEpisode run_pendulum_episode(const PendulumParams& params, const LinearPendulumPolicy& policy,
                                     const PendulumState& start, const ContinuousBox* box, bool record_states) {
    PendulumEpisode ep;
    PendulumState x = start;
    std::vector<double> offsets;
    offsets.reserve(static_cast<std::size_t>(params.episode_length));
    offsets.push_back(std::fabs(upright_offset(x.theta)));
    if (record_states) ep.states.push_back({upright_offset(x.theta), x.theta_dot});
    for (int t = 0; t + 1 < params.episode_length; ++t) {
        const auto step = pendulum_step(params, x, policy.torque(params, x));
        ++ep.steps;
        if (box != nullptr) {
            const double coords[2] = {upright_offset(step.next.theta), step.next.theta_dot};
            const StepContext ctx{t + 1, -1, coords, {}};
            if (estop_step_filter(*box, ctx) == StepDecision::Terminate) {
                ep.estopped = true;
                break;
            }
        }
        ep.total_reward += step.reward;
        x = step.next;
        offsets.push_back(std::fabs(upright_offset(x.theta)));
        if (record_states) ep.states.push_back({upright_offset(x.theta), x.theta_dot});
    }
    const std::size_t tail = std::min<std::size_t>(50, offsets.size());
    ep.final_offset = std::accumulate(offsets.end() - static_cast<std::ptrdiff_t>(tail), offsets.end(), 0.0) /
                      static_cast<double>(tail);
    return ep;
}

CrossEntropyResult cross_entropy_search(const PendulumParams& params, const ContinuousBox* box,
                                        const LearnerConfig& config) {
    config.validate();
    if (box != nullptr && box->lo.size() != 2) throw Error("pendulum box must have two dimensions (offset, speed)");
    constexpr std::size_t D = 3;
    Rng rng(config.seed);

    // Fixed evaluation starts, drawn once so every iteration is scored on the same episodes.
    Rng eval_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<PendulumState> eval_starts;
    for (int i = 0; i < config.eval_episodes; ++i) eval_starts.push_back(pendulum_reset(params, eval_rng));

    std::array<double, D> mean{};
    std::array<double, D> var{};
    var.fill(config.init_std * config.init_std);

    CrossEntropyResult out;
    out.curve.seed = config.seed;
    long steps = 0;
    auto evaluate = [&](const LinearPendulumPolicy& policy) {
        double ret = 0.0;
        double offset = 0.0;
        for (const auto& start : eval_starts) {
            const auto ep = run_pendulum_episode(params, policy, start, nullptr, false);
            ret += ep.total_reward;
            offset += ep.final_offset;
        }
        out.final_offset = offset / static_cast<double>(eval_starts.size());
        out.curve.points.push_back(CurvePoint{steps, ret / static_cast<double>(eval_starts.size())});
    };
    evaluate(LinearPendulumPolicy{mean});

    const auto n_elite = static_cast<std::size_t>(
        std::max(1.0, std::ceil(config.elite_fraction * static_cast<double>(config.population))));
    std::vector<std::array<double, D>> samples(static_cast<std::size_t>(config.population));
    std::vector<double> scores(samples.size());
    std::vector<std::size_t> order(samples.size());
    for (int it = 0; it < config.iterations; ++it) {
        long episode_steps = 0;
        // One start per iteration shared by the whole population, so elites are ranked on equal terms.
        const auto start = pendulum_reset(params, rng);
        for (std::size_t i = 0; i < samples.size(); ++i) {
            for (std::size_t d = 0; d < D; ++d) samples[i][d] = mean[d] + std::sqrt(var[d]) * standard_normal(rng);
            const auto ep = run_pendulum_episode(params, LinearPendulumPolicy{samples[i]}, start, box, false);
            scores[i] = ep.total_reward;
            episode_steps += ep.steps;
        }
        steps += episode_steps;
        out.mean_episode_length.push_back(static_cast<double>(episode_steps) / static_cast<double>(samples.size()));

        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
        for (std::size_t d = 0; d < D; ++d) {
            double m = 0.0;
            for (std::size_t k = 0; k < n_elite; ++k) m += samples[order[k]][d];
            m /= static_cast<double>(n_elite);
            double v = 0.0;
            for (std::size_t k = 0; k < n_elite; ++k) v += (samples[order[k]][d] - m) * (samples[order[k]][d] - m);
            v /= static_cast<double>(n_elite);
            mean[d] = m;
            var[d] = std::max(v, kVarianceFloor);
        }
        evaluate(LinearPendulumPolicy{mean});
    }
    out.policy = LinearPendulumPolicy{mean};
    return out;
}

}  // namespace estop
