#pragma once

#include <cmath>
#include <vector>

#include "estop/mdp.hpp"

namespace estop::test {

// s0 -> s1 with reward 1, s1 loops with reward 0; one action, starts in s0.
inline TabularMdp chain_a(int horizon = 2) {
    std::vector<std::vector<Transition>> rows = {{{1, 1.0, 1.0}}, {{1, 1.0, 0.0}}};
    return TabularMdp(2, 1, horizon, {1.0, 0.0}, std::move(rows), {});
}

// One state, H = 2 (a single reward), two arms paying 1 and 0.
inline TabularMdp bandit() {
    std::vector<std::vector<Transition>> rows = {{{0, 1.0, 1.0}}, {{0, 1.0, 0.0}}};
    return TabularMdp(1, 2, 2, {1.0}, std::move(rows), {});
}

// Dense solve of (I - gamma P_pi) v = r_pi by Gaussian elimination with partial pivoting.
inline std::vector<double> solve_policy_values(const TabularMdp& mdp, const TabularPolicy& pi, double gamma) {
    const auto n = static_cast<std::size_t>(mdp.n_states());
    std::vector<std::vector<double>> a(n, std::vector<double>(n + 1, 0.0));
    for (std::size_t s = 0; s < n; ++s) {
        a[s][s] += 1.0;
        if (mdp.is_terminal(static_cast<StateId>(s))) continue;
        for (ActionId act = 0; act < mdp.n_actions(); ++act) {
            const double p = pi.prob(0, static_cast<StateId>(s), act);
            for (const auto& tr : mdp.row(static_cast<StateId>(s), act)) {
                a[s][static_cast<std::size_t>(tr.next)] -= gamma * p * tr.prob;
                a[s][n] += p * tr.prob * tr.reward;
            }
        }
    }
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r) {
            if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
        }
        std::swap(a[c], a[piv]);
        for (std::size_t r = 0; r < n; ++r) {
            if (r == c) continue;
            const double f = a[r][c] / a[c][c];
            for (std::size_t k = c; k <= n; ++k) a[r][k] -= f * a[c][k];
        }
    }
    std::vector<double> v(n);
    for (std::size_t s = 0; s < n; ++s) v[s] = a[s][n] / a[s][s];
    return v;
}

// Mean and standard error of total reward over sampled rollouts.
struct MonteCarlo {
    double mean = 0.0;
    double se = 0.0;
};

template <typename Sampler>
MonteCarlo monte_carlo(long n, Sampler sample) {
    double sum = 0.0, sq = 0.0;
    for (long i = 0; i < n; ++i) {
        const double x = sample();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

}  // namespace estop::test
