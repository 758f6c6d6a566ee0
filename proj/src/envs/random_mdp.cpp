#include <algorithm>
#include <cmath>
#include <numeric>

#include "estop/envs.hpp"

namespace estop {

namespace {

// Dirichlet(1) weights via normalised exponentials.
std::vector<double> dirichlet(std::size_t k, Rng& rng) {
    std::vector<double> w(k);
    double sum = 0.0;
    for (double& x : w) {
        x = -std::log(1.0 - uniform01(rng));
        sum += x;
    }
    for (double& x : w) x /= sum;
    return w;
}

// k distinct indices out of n, partial Fisher-Yates.
std::vector<int> choose_distinct(int n, int k, Rng& rng) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < k; ++i) {
        const int j = i + static_cast<int>(uniform01(rng) * (n - i));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(k));
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

TabularMdp random_mdp(int n_states, int n_actions, int horizon, int sparsity, std::uint64_t seed) {
    if (n_states < 2) throw Error("random_mdp needs at least two states");
    Rng rng(seed);
    const int k = std::clamp(sparsity, 1, n_states);
    std::vector<std::vector<Transition>> rows(static_cast<std::size_t>(n_states * n_actions));
    for (auto& row : rows) {
        const auto succ = choose_distinct(n_states, k, rng);
        const auto w = dirichlet(succ.size(), rng);
        for (std::size_t i = 0; i < succ.size(); ++i) row.push_back(Transition{succ[i], w[i], uniform01(rng)});
    }
    const int max_support = (n_states + 1) / 2;
    const int support = 1 + static_cast<int>(uniform01(rng) * max_support);
    const auto starts = choose_distinct(n_states, support, rng);
    const auto w = dirichlet(starts.size(), rng);
    std::vector<double> rho0(static_cast<std::size_t>(n_states), 0.0);
    for (std::size_t i = 0; i < starts.size(); ++i) rho0[static_cast<std::size_t>(starts[i])] = w[i];
    return TabularMdp(n_states, n_actions, horizon, std::move(rho0), std::move(rows), {});
}

TabularPolicy random_policy(int n_states, int n_actions, int n_steps, bool time_dependent, Rng& rng) {
    const int steps = time_dependent ? n_steps : 1;
    std::vector<double> probs;
    probs.reserve(static_cast<std::size_t>(steps * n_states * n_actions));
    for (int r = 0; r < steps * n_states; ++r) {
        const auto w = dirichlet(static_cast<std::size_t>(n_actions), rng);
        probs.insert(probs.end(), w.begin(), w.end());
    }
    return TabularPolicy(time_dependent ? TabularPolicy::Mode::TimeDependent : TabularPolicy::Mode::Stationary,
                         n_states, n_actions, steps, std::move(probs));
}

}  // namespace estop
