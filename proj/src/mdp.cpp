#include "estop/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "estop/kernels.hpp"

namespace estop {

namespace {

constexpr double kSumTol = 1e-12;

template <typename... Args>
std::string cat(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

void check_compatible(const TabularMdp& mdp, const TabularPolicy& policy) {
    if (policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions()) {
        throw Error(cat("policy shape ", policy.n_states(), "x", policy.n_actions(),
                        " does not match mdp ", mdp.n_states(), "x", mdp.n_actions()));
    }
}

void check_covers(const TabularPolicy& policy, int last_t) {
    if (last_t >= 0 && !policy.covers(last_t)) {
        throw Error(cat("time-dependent policy covers ", policy.n_steps(), " steps, need ", last_t + 1));
    }
}

// Dense copy of P and the expected rewards, rows indexed s * A + a.
struct DenseModel {
    std::size_t n_states;
    std::size_t n_actions;
    std::vector<double> p;
    std::vector<double> rbar;
};

DenseModel densify(const TabularMdp& mdp) {
    const auto S = static_cast<std::size_t>(mdp.n_states());
    const auto A = static_cast<std::size_t>(mdp.n_actions());
    DenseModel m{S, A, std::vector<double>(S * A * S, 0.0), std::vector<double>(S * A, 0.0)};
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a) {
            const std::size_t r = s * A + a;
            for (const Transition& tr : mdp.row(static_cast<StateId>(s), static_cast<ActionId>(a))) {
                m.p[r * S + static_cast<std::size_t>(tr.next)] += tr.prob;
                m.rbar[r] += tr.prob * tr.reward;
            }
        }
    }
    return m;
}

// Max over actions per state; ties keep the lowest action index.
void max_over_actions(std::span<const double> q, std::size_t A, std::span<double> v,
                      std::span<ActionId> argmax) {
    for (std::size_t s = 0; s < v.size(); ++s) {
        std::size_t best = 0;
        for (std::size_t a = 1; a < A; ++a) {
            if (q[s * A + a] > q[s * A + best]) best = a;
        }
        v[s] = q[s * A + best];
        argmax[s] = static_cast<ActionId>(best);
    }
}

}  // namespace

// ---------------------------------------------------------------------------

TabularMdp::TabularMdp(int n_states, int n_actions, int horizon, std::vector<double> rho0,
                       std::vector<std::vector<Transition>> rows, std::vector<StateId> terminals)
    : n_states_(n_states),
      n_actions_(n_actions),
      horizon_(horizon),
      rho0_(std::move(rho0)),
      rows_(std::move(rows)),
      terminals_(std::move(terminals)) {
    if (n_states_ <= 0) throw Error("n_states must be positive");
    if (n_actions_ <= 0) throw Error("n_actions must be positive");
    if (horizon_ <= 0) throw Error("horizon must be positive");
    if (rho0_.size() != static_cast<std::size_t>(n_states_)) {
        throw Error(cat("rho0 has ", rho0_.size(), " entries, expected ", n_states_));
    }
    double mass = 0.0;
    for (std::size_t s = 0; s < rho0_.size(); ++s) {
        if (!(rho0_[s] >= 0.0)) throw Error(cat("rho0[", s, "] is negative"));
        mass += rho0_[s];
    }
    if (std::fabs(mass - 1.0) > kSumTol) throw Error(cat("rho0 sums to ", mass));

    if (rows_.size() != static_cast<std::size_t>(n_states_) * static_cast<std::size_t>(n_actions_)) {
        throw Error(cat("expected ", n_states_ * n_actions_, " transition rows, got ", rows_.size()));
    }
    for (std::size_t r = 0; r < rows_.size(); ++r) {
        const auto s = static_cast<int>(r) / n_actions_;
        const auto a = static_cast<int>(r) % n_actions_;
        double sum = 0.0;
        for (const Transition& tr : rows_[r]) {
            if (tr.next < 0 || tr.next >= n_states_) {
                throw Error(cat("transition (", s, ",", a, ") -> ", tr.next, " out of range"));
            }
            if (!(tr.prob >= 0.0)) throw Error(cat("negative probability in row (", s, ",", a, ")"));
            if (tr.prob > 0.0 && !(tr.reward >= 0.0 && tr.reward <= 1.0)) {
                throw Error(cat("reward ", tr.reward, " of (", s, ",", a, ",", tr.next, ") outside [0,1]"));
            }
            sum += tr.prob;
        }
        if (std::fabs(sum - 1.0) > kSumTol) {
            throw Error(cat("row (", s, ",", a, ") sums to ", sum));
        }
    }

    terminal_flag_.assign(static_cast<std::size_t>(n_states_), 0);
    std::sort(terminals_.begin(), terminals_.end());
    terminals_.erase(std::unique(terminals_.begin(), terminals_.end()), terminals_.end());
    for (StateId s : terminals_) {
        if (s < 0 || s >= n_states_) throw Error(cat("terminal state ", s, " out of range"));
        for (ActionId a = 0; a < n_actions_; ++a) {
            double self = 0.0;
            for (const Transition& tr : row(s, a)) {
                if (tr.prob == 0.0) continue;
                if (tr.next != s || tr.reward != 0.0) {
                    throw Error(cat("terminal state ", s, " must be a zero-reward self-loop"));
                }
                self += tr.prob;
            }
            if (std::fabs(self - 1.0) > kSumTol) throw Error(cat("terminal state ", s, " leaks mass"));
        }
        terminal_flag_[static_cast<std::size_t>(s)] = 1;
    }
}

double TabularMdp::expected_reward(StateId s, ActionId a) const {
    double r = 0.0;
    for (const Transition& tr : row(s, a)) r += tr.prob * tr.reward;
    return r;
}

std::vector<StateId> TabularMdp::initial_support() const {
    std::vector<StateId> out;
    for (std::size_t s = 0; s < rho0_.size(); ++s) {
        if (rho0_[s] > 0.0) out.push_back(static_cast<StateId>(s));
    }
    return out;
}

TabularMdp TabularMdp::with_horizon(int horizon) const {
    return TabularMdp(n_states_, n_actions_, horizon, rho0_, rows_, terminals_);
}

// ---------------------------------------------------------------------------

TabularPolicy::TabularPolicy(Mode mode, int n_states, int n_actions, int n_steps, std::vector<double> probs)
    : mode_(mode), n_states_(n_states), n_actions_(n_actions), n_steps_(n_steps), probs_(std::move(probs)) {
    if (mode_ == Mode::Stationary) n_steps_ = 1;
    if (n_states_ <= 0 || n_actions_ <= 0 || n_steps_ <= 0) throw Error("policy dimensions must be positive");
    const auto expected = static_cast<std::size_t>(n_steps_) * static_cast<std::size_t>(n_states_) *
                          static_cast<std::size_t>(n_actions_);
    if (probs_.size() != expected) throw Error(cat("policy expects ", expected, " probabilities, got ", probs_.size()));
    for (std::size_t row = 0; row < expected / static_cast<std::size_t>(n_actions_); ++row) {
        double sum = 0.0;
        for (int a = 0; a < n_actions_; ++a) {
            const double p = probs_[row * static_cast<std::size_t>(n_actions_) + static_cast<std::size_t>(a)];
            if (!(p >= 0.0)) throw Error("policy has a negative probability");
            sum += p;
        }
        if (std::fabs(sum - 1.0) > kSumTol) throw Error(cat("policy row ", row, " sums to ", sum));
    }
}

TabularPolicy TabularPolicy::uniform(int n_states, int n_actions) {
    std::vector<double> p(static_cast<std::size_t>(n_states) * static_cast<std::size_t>(n_actions),
                          1.0 / n_actions);
    return TabularPolicy(Mode::Stationary, n_states, n_actions, 1, std::move(p));
}

TabularPolicy TabularPolicy::deterministic(int n_actions, std::span<const ActionId> actions) {
    std::vector<double> p(actions.size() * static_cast<std::size_t>(n_actions), 0.0);
    for (std::size_t s = 0; s < actions.size(); ++s) {
        p[s * static_cast<std::size_t>(n_actions) + static_cast<std::size_t>(actions[s])] = 1.0;
    }
    return TabularPolicy(Mode::Stationary, static_cast<int>(actions.size()), n_actions, 1, std::move(p));
}

TabularPolicy TabularPolicy::deterministic_time(int n_actions, const std::vector<std::vector<ActionId>>& actions) {
    if (actions.empty()) throw Error("time-dependent policy needs at least one step");
    const std::size_t S = actions.front().size();
    std::vector<double> p(actions.size() * S * static_cast<std::size_t>(n_actions), 0.0);
    for (std::size_t t = 0; t < actions.size(); ++t) {
        for (std::size_t s = 0; s < S; ++s) {
            p[(t * S + s) * static_cast<std::size_t>(n_actions) + static_cast<std::size_t>(actions[t][s])] = 1.0;
        }
    }
    return TabularPolicy(Mode::TimeDependent, static_cast<int>(S), n_actions, static_cast<int>(actions.size()),
                         std::move(p));
}

std::span<const double> TabularPolicy::action_probs(int t, StateId s) const {
    const std::size_t step = mode_ == Mode::Stationary ? 0 : static_cast<std::size_t>(std::min(t, n_steps_ - 1));
    const std::size_t A = static_cast<std::size_t>(n_actions_);
    return std::span<const double>(probs_).subspan((step * static_cast<std::size_t>(n_states_) +
                                                    static_cast<std::size_t>(s)) * A, A);
}

ActionId TabularPolicy::sample(int t, StateId s, Rng& rng) const {
    const auto probs = action_probs(t, s);
    const double u = uniform01(rng);
    double acc = 0.0;
    ActionId last_positive = 0;
    for (std::size_t a = 0; a < probs.size(); ++a) {
        if (probs[a] <= 0.0) continue;
        acc += probs[a];
        last_positive = static_cast<ActionId>(a);
        if (u < acc) return last_positive;
    }
    return last_positive;
}

// ---------------------------------------------------------------------------

double standard_normal(Rng& rng) {
    const double u1 = 1.0 - uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

const char* to_string(TerminationCause cause) {
    switch (cause) {
        case TerminationCause::Horizon: return "horizon";
        case TerminationCause::TerminalState: return "terminal_state";
        case TerminationCause::EStop: return "estop";
    }
    return "unknown";
}

std::vector<StateId> Trajectory::states() const {
    std::vector<StateId> out;
    out.reserve(steps.size() + 1);
    out.push_back(initial_state);
    for (const Step& st : steps) out.push_back(st.next_state);
    return out;
}

double Trajectory::total_reward() const {
    double r = 0.0;
    for (const Step& st : steps) r += st.reward;
    return r;
}

EvalMode EvalMode::discounted(double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw Error(cat("discount ", gamma, " not in (0,1)"));
    return EvalMode(Kind::Discounted, gamma);
}

// ---------------------------------------------------------------------------

std::vector<std::vector<double>> state_distributions(const TabularMdp& mdp, const TabularPolicy& policy) {
    check_compatible(mdp, policy);
    const int H = mdp.horizon();
    check_covers(policy, H - 2);
    std::vector<std::vector<double>> out;
    out.reserve(static_cast<std::size_t>(H));
    out.emplace_back(mdp.rho0().begin(), mdp.rho0().end());
    for (int t = 0; t + 1 < H; ++t) {
        const auto& cur = out.back();
        std::vector<double> next(cur.size(), 0.0);
        for (StateId s = 0; s < mdp.n_states(); ++s) {
            const double mass = cur[static_cast<std::size_t>(s)];
            if (mass == 0.0) continue;
            const auto probs = policy.action_probs(t, s);
            for (ActionId a = 0; a < mdp.n_actions(); ++a) {
                const double w = mass * probs[static_cast<std::size_t>(a)];
                if (w == 0.0) continue;
                for (const Transition& tr : mdp.row(s, a)) next[static_cast<std::size_t>(tr.next)] += w * tr.prob;
            }
        }
        out.push_back(std::move(next));
    }
    return out;
}

std::vector<double> state_distribution(const TabularMdp& mdp, const TabularPolicy& policy, int t) {
    check_compatible(mdp, policy);
    if (t < 0 || t > mdp.horizon()) throw Error(cat("timestep ", t, " outside [0, ", mdp.horizon(), "]"));
    check_covers(policy, t - 1);
    std::vector<double> cur(mdp.rho0().begin(), mdp.rho0().end());
    for (int k = 0; k < t; ++k) {
        std::vector<double> next(cur.size(), 0.0);
        for (StateId s = 0; s < mdp.n_states(); ++s) {
            const double mass = cur[static_cast<std::size_t>(s)];
            if (mass == 0.0) continue;
            const auto probs = policy.action_probs(k, s);
            for (ActionId a = 0; a < mdp.n_actions(); ++a) {
                const double w = mass * probs[static_cast<std::size_t>(a)];
                if (w == 0.0) continue;
                for (const Transition& tr : mdp.row(s, a)) next[static_cast<std::size_t>(tr.next)] += w * tr.prob;
            }
        }
        cur = std::move(next);
    }
    return cur;
}

std::vector<double> average_state_distribution(const TabularMdp& mdp, const TabularPolicy& policy) {
    const auto per_t = state_distributions(mdp, policy);
    std::vector<double> avg(static_cast<std::size_t>(mdp.n_states()), 0.0);
    for (const auto& d : per_t) {
        for (std::size_t s = 0; s < avg.size(); ++s) avg[s] += d[s];
    }
    for (double& v : avg) v /= static_cast<double>(per_t.size());
    return avg;
}

std::vector<double> policy_state_values(const TabularMdp& mdp, const TabularPolicy& policy, const EvalMode& mode,
                                        const SolverOptions& options) {
    check_compatible(mdp, policy);
    const auto S = static_cast<std::size_t>(mdp.n_states());

    // Expected one-step reward and successor lists of the policy-induced chain.
    auto backup = [&](int t, const std::vector<double>& next_v, double gamma, std::vector<double>& out) {
        for (StateId s = 0; s < mdp.n_states(); ++s) {
            const auto probs = policy.action_probs(t, s);
            double v = 0.0;
            for (ActionId a = 0; a < mdp.n_actions(); ++a) {
                const double pa = probs[static_cast<std::size_t>(a)];
                if (pa == 0.0) continue;
                double q = 0.0;
                for (const Transition& tr : mdp.row(s, a)) {
                    q += tr.prob * (tr.reward + gamma * next_v[static_cast<std::size_t>(tr.next)]);
                }
                v += pa * q;
            }
            out[static_cast<std::size_t>(s)] = v;
        }
    };

    if (!mode.is_discounted()) {
        const int H = mdp.horizon();
        check_covers(policy, H - 2);
        std::vector<double> v(S, 0.0), next(S, 0.0);
        for (int t = H - 2; t >= 0; --t) {
            backup(t, next, 1.0, v);
            std::swap(v, next);
        }
        return next;
    }

    std::vector<double> v(S, 0.0), next(S, 0.0);
    if (!options.initial.empty()) {
        if (options.initial.size() != S) throw Error("initial values have the wrong size");
        v.assign(options.initial.begin(), options.initial.end());
    }
    double residual = 0.0;
    for (long sweep = 0; sweep < options.max_sweeps; ++sweep) {
        backup(0, v, mode.gamma(), next);
        residual = kernels::max_abs_diff(next, v);
        std::swap(v, next);
        if (residual < options.tolerance) return v;
    }
    throw NonConvergence(cat("policy evaluation did not converge; residual ", residual), residual,
                         options.max_sweeps);
}

double policy_value(const TabularMdp& mdp, const TabularPolicy& policy, const EvalMode& mode,
                    const SolverOptions& options) {
    const auto v = policy_state_values(mdp, policy, mode, options);
    double j = 0.0;
    for (std::size_t s = 0; s < v.size(); ++s) j += mdp.rho0()[s] * v[s];
    return j;
}

// ---------------------------------------------------------------------------

StateId sample_initial_state(const TabularMdp& mdp, Rng& rng) {
    const double u = uniform01(rng);
    double acc = 0.0;
    StateId last = 0;
    for (std::size_t s = 0; s < mdp.rho0().size(); ++s) {
        const double p = mdp.rho0()[s];
        if (p <= 0.0) continue;
        acc += p;
        last = static_cast<StateId>(s);
        if (u < acc) return last;
    }
    return last;
}

std::pair<StateId, double> sample_transition(const TabularMdp& mdp, StateId s, ActionId a, Rng& rng) {
    const auto row = mdp.row(s, a);
    const double u = uniform01(rng);
    double acc = 0.0;
    const Transition* last = nullptr;
    for (const Transition& tr : row) {
        if (tr.prob <= 0.0) continue;
        acc += tr.prob;
        last = &tr;
        if (u < acc) return {tr.next, tr.reward};
    }
    return {last->next, last->reward};
}

Trajectory rollout(const TabularMdp& mdp, const TabularPolicy& policy, Rng& rng) {
    check_compatible(mdp, policy);
    Trajectory traj;
    StateId s = sample_initial_state(mdp, rng);
    traj.initial_state = s;
    traj.steps.reserve(static_cast<std::size_t>(mdp.horizon()));
    for (int t = 0; t + 1 < mdp.horizon(); ++t) {
        if (mdp.is_terminal(s)) {
            traj.terminated_early = true;
            traj.termination_cause = TerminationCause::TerminalState;
            return traj;
        }
        const ActionId a = policy.sample(t, s, rng);
        const auto [next, reward] = sample_transition(mdp, s, a, rng);
        traj.steps.push_back(Step{t, s, a, reward, next});
        s = next;
    }
    traj.termination_cause = TerminationCause::Horizon;
    return traj;
}

Trajectory rollout(const TabularMdp& mdp, const TabularPolicy& policy, std::uint64_t seed) {
    Rng rng(seed);
    return rollout(mdp, policy, rng);
}

// ---------------------------------------------------------------------------

std::uint64_t value_iteration_flops(long sweeps, int n_states, int n_actions) {
    return static_cast<std::uint64_t>(sweeps) * 4ULL * static_cast<std::uint64_t>(n_states) *
           static_cast<std::uint64_t>(n_states) * static_cast<std::uint64_t>(n_actions);
}

ValueIterationResult value_iteration(const TabularMdp& mdp, const EvalMode& mode, const SolverOptions& options) {
    if (!(options.tolerance > 0.0)) throw Error("value iteration tolerance must be positive");
    const DenseModel m = densify(mdp);
    const std::size_t S = m.n_states;
    const std::size_t A = m.n_actions;
    const auto& k = kernels::active();
    std::vector<double> q(S * A, 0.0);
    std::vector<ActionId> argmax(S, 0);
    ValueIterationResult out;

    if (!mode.is_discounted()) {
        const int H = mdp.horizon();
        out.values_by_t.assign(static_cast<std::size_t>(H), std::vector<double>(S, 0.0));
        std::vector<std::vector<ActionId>> actions(static_cast<std::size_t>(H), std::vector<ActionId>(S, 0));
        for (int t = H - 2; t >= 0; --t) {
            const auto& next = out.values_by_t[static_cast<std::size_t>(t) + 1];
            k.affine_rows(m.p.data(), m.rbar.data(), next.data(), 1.0, q.data(), S * A, S);
            max_over_actions(q, A, out.values_by_t[static_cast<std::size_t>(t)],
                             actions[static_cast<std::size_t>(t)]);
        }
        out.values = out.values_by_t.front();
        out.greedy = TabularPolicy::deterministic_time(mdp.n_actions(), actions);
        out.sweeps = H - 1;
        out.flop_count = value_iteration_flops(out.sweeps, mdp.n_states(), mdp.n_actions());
        return out;
    }

    std::vector<double> v(S, 0.0), next(S, 0.0);
    double residual = 0.0;
    long sweeps = 0;
    while (true) {
        if (sweeps >= options.max_sweeps) {
            throw NonConvergence(cat("value iteration did not converge; residual ", residual), residual, sweeps);
        }
        k.affine_rows(m.p.data(), m.rbar.data(), v.data(), mode.gamma(), q.data(), S * A, S);
        max_over_actions(q, A, next, argmax);
        residual = k.max_abs_diff(next.data(), v.data(), S);
        std::swap(v, next);
        ++sweeps;
        if (residual < options.tolerance) break;
    }
    k.affine_rows(m.p.data(), m.rbar.data(), v.data(), mode.gamma(), q.data(), S * A, S);
    max_over_actions(q, A, next, argmax);
    out.values = v;
    out.greedy = TabularPolicy::deterministic(mdp.n_actions(), argmax);
    out.sweeps = sweeps;
    out.flop_count = value_iteration_flops(sweeps, mdp.n_states(), mdp.n_actions());
    out.residual = residual;
    return out;
}

std::vector<double> q_values(const TabularMdp& mdp, std::span<const double> values, double gamma) {
    const auto A = static_cast<std::size_t>(mdp.n_actions());
    std::vector<double> q(static_cast<std::size_t>(mdp.n_states()) * A, 0.0);
    for (StateId s = 0; s < mdp.n_states(); ++s) {
        for (ActionId a = 0; a < mdp.n_actions(); ++a) {
            double acc = 0.0;
            for (const Transition& tr : mdp.row(s, a)) {
                acc += tr.prob * (tr.reward + gamma * values[static_cast<std::size_t>(tr.next)]);
            }
            q[static_cast<std::size_t>(s) * A + static_cast<std::size_t>(a)] = acc;
        }
    }
    return q;
}

TabularPolicy greedy_policy(std::span<const double> q, int n_states, int n_actions) {
    std::vector<double> v(static_cast<std::size_t>(n_states));
    std::vector<ActionId> argmax(static_cast<std::size_t>(n_states));
    max_over_actions(q, static_cast<std::size_t>(n_actions), v, argmax);
    return TabularPolicy::deterministic(n_actions, argmax);
}

}  // namespace estop
