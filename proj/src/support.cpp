#include "estop/support.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <string>

namespace estop {

// ---------------------------------------------------------------------------
// StateSet

StateSet StateSet::full(int n_states) { return StateSet(std::vector<char>(static_cast<std::size_t>(n_states), 1)); }

StateSet StateSet::from_states(int n_states, std::span<const StateId> states) {
    std::vector<char> mask(static_cast<std::size_t>(n_states), 0);
    for (StateId s : states) {
        if (s < 0 || s >= n_states) throw Error("state " + std::to_string(s) + " out of range for state set");
        mask[static_cast<std::size_t>(s)] = 1;
    }
    return StateSet(std::move(mask));
}

StateSet StateSet::from_mask(std::vector<char> mask) {
    for (char& c : mask) c = c ? 1 : 0;
    return StateSet(std::move(mask));
}

int StateSet::size() const { return static_cast<int>(std::count(kept_.begin(), kept_.end(), 1)); }

std::vector<StateId> StateSet::states() const {
    std::vector<StateId> out;
    for (std::size_t s = 0; s < kept_.size(); ++s) {
        if (kept_[s]) out.push_back(static_cast<StateId>(s));
    }
    return out;
}

std::vector<StateId> StateSet::removed() const {
    std::vector<StateId> out;
    for (std::size_t s = 0; s < kept_.size(); ++s) {
        if (!kept_[s]) out.push_back(static_cast<StateId>(s));
    }
    return out;
}

bool StateSet::includes(const StateSet& other) const {
    if (other.n_states() != n_states()) return false;
    for (std::size_t s = 0; s < kept_.size(); ++s) {
        if (other.kept_[s] && !kept_[s]) return false;
    }
    return true;
}

bool ContinuousBox::contains(std::span<const double> x) const {
    for (std::size_t i = 0; i < lo.size(); ++i) {
        if (x[i] < lo[i] || x[i] > hi[i]) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// e-stop MDP

EStopMdp build_estop_mdp(std::shared_ptr<const TabularMdp> base, const StateSet& support) {
    const TabularMdp& m = *base;
    if (support.n_states() != m.n_states()) {
        throw Error("support covers " + std::to_string(support.n_states()) + " states, MDP has " +
                    std::to_string(m.n_states()));
    }
    for (StateId s : m.initial_support()) {
        if (!support.contains(s)) {
            throw Error("support must contain every initial state; state " + std::to_string(s) + " is missing");
        }
    }
    const int S = m.n_states();
    const int A = m.n_actions();
    const StateId term = S;
    std::vector<std::vector<Transition>> rows(static_cast<std::size_t>((S + 1) * A));
    for (StateId s = 0; s < S; ++s) {
        for (ActionId a = 0; a < A; ++a) {
            auto& row = rows[static_cast<std::size_t>(s * A + a)];
            if (!support.contains(s)) {
                row.push_back(Transition{term, 1.0, 0.0});
                continue;
            }
            double stopped = 0.0;
            for (const Transition& tr : m.row(s, a)) {
                if (support.contains(tr.next)) {
                    row.push_back(tr);
                } else {
                    stopped += tr.prob;
                }
            }
            if (stopped > 0.0) row.push_back(Transition{term, stopped, 0.0});
        }
    }
    for (ActionId a = 0; a < A; ++a) rows[static_cast<std::size_t>(term * A + a)].push_back(Transition{term, 1.0, 0.0});

    std::vector<double> rho0(m.rho0().begin(), m.rho0().end());
    rho0.push_back(0.0);
    std::vector<StateId> terminals;
    for (StateId s : m.terminals()) {
        if (support.contains(s)) terminals.push_back(s);
    }
    terminals.push_back(term);

    EStopMdp out{std::move(base),
                 TabularMdp(S + 1, A, m.horizon(), std::move(rho0), std::move(rows), std::move(terminals)),
                 support, term};
    return out;
}

EStopMdp build_estop_mdp(const TabularMdp& mdp, const StateSet& support) {
    return build_estop_mdp(std::make_shared<const TabularMdp>(mdp), support);
}

CompactMdp compact(const EStopMdp& estop) {
    const TabularMdp& m = estop.mdp;
    const int A = m.n_actions();
    std::vector<StateId> to_original = estop.support.states();
    std::vector<StateId> to_compact(static_cast<std::size_t>(m.n_states()), -1);
    for (std::size_t i = 0; i < to_original.size(); ++i) to_compact[static_cast<std::size_t>(to_original[i])] = static_cast<StateId>(i);
    const auto term = static_cast<StateId>(to_original.size());
    to_compact[static_cast<std::size_t>(estop.terminal_state)] = term;
    const int n = static_cast<int>(to_original.size()) + 1;

    std::vector<std::vector<Transition>> rows(static_cast<std::size_t>(n * A));
    std::vector<double> rho0(static_cast<std::size_t>(n), 0.0);
    std::vector<StateId> terminals;
    for (StateId c = 0; c < n; ++c) {
        const StateId orig = c == term ? estop.terminal_state : to_original[static_cast<std::size_t>(c)];
        rho0[static_cast<std::size_t>(c)] = m.rho0()[static_cast<std::size_t>(orig)];
        if (m.is_terminal(orig)) terminals.push_back(c);
        for (ActionId a = 0; a < A; ++a) {
            for (const Transition& tr : m.row(orig, a)) {
                rows[static_cast<std::size_t>(c * A + a)].push_back(
                    Transition{to_compact[static_cast<std::size_t>(tr.next)], tr.prob, tr.reward});
            }
        }
    }
    to_original.push_back(-1);
    return CompactMdp{TabularMdp(n, A, m.horizon(), std::move(rho0), std::move(rows), std::move(terminals)),
                      std::move(to_original)};
}

TabularPolicy extend_policy(const TabularPolicy& policy, int extra) {
    const int S = policy.n_states();
    const int A = policy.n_actions();
    const int T = policy.n_steps();
    std::vector<double> probs;
    probs.reserve(static_cast<std::size_t>(T * (S + extra) * A));
    for (int t = 0; t < T; ++t) {
        for (StateId s = 0; s < S; ++s) {
            const auto row = policy.action_probs(t, s);
            probs.insert(probs.end(), row.begin(), row.end());
        }
        for (int e = 0; e < extra; ++e) {
            for (ActionId a = 0; a < A; ++a) probs.push_back(a == 0 ? 1.0 : 0.0);
        }
    }
    return TabularPolicy(policy.mode(), S + extra, A, T, std::move(probs));
}

TabularPolicy restrict_policy(const TabularPolicy& policy, int n_states) {
    if (n_states > policy.n_states()) throw Error("cannot restrict a policy to more states than it has");
    const int T = policy.n_steps();
    std::vector<double> probs;
    probs.reserve(static_cast<std::size_t>(T * n_states * policy.n_actions()));
    for (int t = 0; t < T; ++t) {
        for (StateId s = 0; s < n_states; ++s) {
            const auto row = policy.action_probs(t, s);
            probs.insert(probs.end(), row.begin(), row.end());
        }
    }
    return TabularPolicy(policy.mode(), n_states, policy.n_actions(), T, std::move(probs));
}

// ---------------------------------------------------------------------------
// Step filter

StepDecision estop_step_filter(const SupportSet& support, const StepContext& ctx) {
    struct Visitor {
        const StepContext& ctx;
        StepDecision operator()(const StateSet& set) const {
            return set.contains(ctx.state) ? StepDecision::Continue : StepDecision::Terminate;
        }
        StepDecision operator()(const TimeIndexedSet& seq) const {
            if (ctx.t < 0 || ctx.t >= static_cast<int>(seq.sets.size())) {
                throw Error("timestep " + std::to_string(ctx.t) + " beyond the time-indexed support");
            }
            return seq.sets[static_cast<std::size_t>(ctx.t)].contains(ctx.state) ? StepDecision::Continue
                                                                                 : StepDecision::Terminate;
        }
        StepDecision operator()(const VisitCountBudget& f) const {
            if (ctx.visit_counts.size() < f.budget.size()) throw Error("visit counts required for a visit-count support");
            const auto s = static_cast<std::size_t>(ctx.state);
            return ctx.visit_counts[s] + 1 > f.budget[s] ? StepDecision::Terminate : StepDecision::Continue;
        }
        StepDecision operator()(const ContinuousBox& box) const {
            if (ctx.coords.size() != box.lo.size()) throw Error("state dimension does not match the support box");
            return box.contains(ctx.coords) ? StepDecision::Continue : StepDecision::Terminate;
        }
    };
    return std::visit(Visitor{ctx}, support);
}

Trajectory rollout_with_support(const TabularMdp& mdp, const TabularPolicy& policy, const SupportSet& support,
                                Rng& rng) {
    if (std::holds_alternative<ContinuousBox>(support)) throw Error("box supports apply to continuous environments");
    Trajectory traj;
    std::vector<int> counts(static_cast<std::size_t>(mdp.n_states()), 0);
    StateId s = sample_initial_state(mdp, rng);
    traj.initial_state = s;
    counts[static_cast<std::size_t>(s)] = 1;
    for (int t = 0; t + 1 < mdp.horizon(); ++t) {
        if (mdp.is_terminal(s)) {
            traj.terminated_early = true;
            traj.termination_cause = TerminationCause::TerminalState;
            return traj;
        }
        const ActionId a = policy.sample(t, s, rng);
        const auto [next, reward] = sample_transition(mdp, s, a, rng);
        const StepContext ctx{t + 1, next, {}, counts};
        if (estop_step_filter(support, ctx) == StepDecision::Terminate) {
            traj.steps.push_back(Step{t, s, a, 0.0, next});
            traj.terminated_early = true;
            traj.termination_cause = TerminationCause::EStop;
            return traj;
        }
        ++counts[static_cast<std::size_t>(next)];
        traj.steps.push_back(Step{t, s, a, reward, next});
        s = next;
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Alternative constructions

TimeIndexedSet time_indexed_from_distributions(const std::vector<std::vector<double>>& per_t, double eps,
                                               std::span<const double> rho0) {
    TimeIndexedSet out;
    for (std::size_t t = 0; t < per_t.size(); ++t) {
        std::vector<char> mask(per_t[t].size(), 0);
        for (std::size_t s = 0; s < mask.size(); ++s) {
            mask[s] = per_t[t][s] > eps || (t == 0 && rho0[s] > 0.0);
        }
        out.sets.push_back(StateSet::from_mask(std::move(mask)));
    }
    return out;
}

VisitCountBudget visit_budget_from_distributions(const std::vector<std::vector<double>>& per_t, double eps) {
    VisitCountBudget f;
    if (per_t.empty()) return f;
    f.budget.assign(per_t.front().size(), 0);
    for (const auto& dist : per_t) {
        for (std::size_t s = 0; s < dist.size(); ++s) f.budget[s] += dist[s] > eps ? 1 : 0;
    }
    return f;
}

VisitCountBudget visit_budget_from_demos(const std::vector<std::vector<StateId>>& state_sequences, int n_states) {
    VisitCountBudget f;
    f.budget.assign(static_cast<std::size_t>(n_states), 0);
    std::vector<int> counts(static_cast<std::size_t>(n_states));
    for (const auto& seq : state_sequences) {
        std::fill(counts.begin(), counts.end(), 0);
        for (StateId s : seq) ++counts[static_cast<std::size_t>(s)];
        for (std::size_t s = 0; s < counts.size(); ++s) f.budget[s] = std::max(f.budget[s], counts[s]);
    }
    return f;
}

VisitCountProduct build_visit_count_product(const TabularMdp& mdp, const VisitCountBudget& f) {
    const int S = mdp.n_states();
    const int A = mdp.n_actions();
    if (static_cast<int>(f.budget.size()) != S) throw Error("visit budget size does not match the MDP");
    for (StateId s : mdp.initial_support()) {
        if (f.budget[static_cast<std::size_t>(s)] < 1) throw Error("visit budget must allow every initial state");
    }

    // Key: base state followed by the visit-count vector.
    using Key = std::vector<int>;
    std::map<Key, StateId> index;
    std::vector<Key> keys;
    std::deque<StateId> frontier;
    auto intern = [&](Key key) {
        auto [it, inserted] = index.emplace(key, static_cast<StateId>(keys.size()));
        if (inserted) {
            keys.push_back(std::move(key));
            frontier.push_back(it->second);
        }
        return it->second;
    };
    for (StateId s : mdp.initial_support()) {
        Key k(static_cast<std::size_t>(S + 1), 0);
        k[0] = s;
        k[static_cast<std::size_t>(s) + 1] = 1;
        intern(std::move(k));
    }

    struct Edge {
        StateId from;
        ActionId a;
        StateId to;  // -1: absorbing e-stop state
        double p;
        double r;
    };
    std::vector<Edge> edges;
    while (!frontier.empty()) {
        const StateId id = frontier.front();
        frontier.pop_front();
        const Key key = keys[static_cast<std::size_t>(id)];
        const StateId s = key[0];
        for (ActionId a = 0; a < A; ++a) {
            if (mdp.is_terminal(s)) {
                edges.push_back(Edge{id, a, id, 1.0, 0.0});
                continue;
            }
            for (const Transition& tr : mdp.row(s, a)) {
                const auto n = static_cast<std::size_t>(tr.next);
                if (key[n + 1] + 1 > f.budget[n]) {
                    edges.push_back(Edge{id, a, -1, tr.prob, 0.0});
                    continue;
                }
                Key next = key;
                next[0] = tr.next;
                next[n + 1] += 1;
                edges.push_back(Edge{id, a, intern(std::move(next)), tr.prob, tr.reward});
            }
        }
    }

    const auto n_product = static_cast<StateId>(keys.size());
    const StateId term = n_product;
    std::vector<std::vector<Transition>> rows(static_cast<std::size_t>((n_product + 1) * A));
    for (const Edge& e : edges) {
        auto& row = rows[static_cast<std::size_t>(e.from * A + e.a)];
        const StateId to = e.to < 0 ? term : e.to;
        auto it = std::find_if(row.begin(), row.end(),
                               [&](const Transition& t) { return t.next == to && t.reward == e.r; });
        if (it != row.end()) {
            it->prob += e.p;
        } else {
            row.push_back(Transition{to, e.p, e.r});
        }
    }
    for (ActionId a = 0; a < A; ++a) rows[static_cast<std::size_t>(term * A + a)].push_back(Transition{term, 1.0, 0.0});

    std::vector<double> rho0(static_cast<std::size_t>(n_product + 1), 0.0);
    std::vector<StateId> base_state(static_cast<std::size_t>(n_product + 1), -1);
    std::vector<StateId> terminals{term};
    for (StateId i = 0; i < n_product; ++i) {
        const Key& k = keys[static_cast<std::size_t>(i)];
        base_state[static_cast<std::size_t>(i)] = k[0];
        if (mdp.is_terminal(k[0])) terminals.push_back(i);
        int total = 0;
        for (std::size_t j = 1; j < k.size(); ++j) total += k[j];
        if (total == 1) rho0[static_cast<std::size_t>(i)] = mdp.rho0()[static_cast<std::size_t>(k[0])];
    }
    return VisitCountProduct{TabularMdp(n_product + 1, A, mdp.horizon(), std::move(rho0), std::move(rows),
                                        std::move(terminals)),
                             std::move(base_state)};
}

TabularPolicy lift_to_product(const VisitCountProduct& product, const TabularPolicy& policy) {
    const int A = policy.n_actions();
    const int T = policy.n_steps();
    const auto n = product.base_state.size();
    std::vector<double> probs;
    probs.reserve(static_cast<std::size_t>(T) * n * static_cast<std::size_t>(A));
    for (int t = 0; t < T; ++t) {
        for (StateId b : product.base_state) {
            if (b < 0) {
                for (ActionId a = 0; a < A; ++a) probs.push_back(a == 0 ? 1.0 : 0.0);
                continue;
            }
            const auto row = policy.action_probs(t, b);
            probs.insert(probs.end(), row.begin(), row.end());
        }
    }
    return TabularPolicy(policy.mode(), static_cast<int>(n), A, T, std::move(probs));
}

ContinuousBox box_from_trajectories(const std::vector<ContinuousTrajectory>& demos, double margin_fraction) {
    ContinuousBox box;
    for (const auto& demo : demos) {
        for (const auto& x : demo) {
            if (box.lo.empty()) {
                box.lo.assign(x.size(), std::numeric_limits<double>::infinity());
                box.hi.assign(x.size(), -std::numeric_limits<double>::infinity());
            }
            if (x.size() != box.lo.size()) throw Error("demo states have inconsistent dimensions");
            for (std::size_t i = 0; i < x.size(); ++i) {
                if (!std::isfinite(x[i])) throw Error("demo state is not finite");
                box.lo[i] = std::min(box.lo[i], x[i]);
                box.hi[i] = std::max(box.hi[i], x[i]);
            }
        }
    }
    if (box.lo.empty()) throw Error("cannot build a box from an empty demo set");
    for (std::size_t i = 0; i < box.lo.size(); ++i) {
        const double pad = margin_fraction * (box.hi[i] - box.lo[i]);
        box.lo[i] -= pad;
        box.hi[i] += pad;
    }
    return box;
}

}  // namespace estop
