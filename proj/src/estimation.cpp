#include "estop/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "estop/format.hpp"
#include "estop/mdp_io.hpp"

namespace estop {

Demo demo_from_trajectory(const Trajectory& traj) {
    Demo d;
    d.states = traj.states();
    for (const Step& st : traj.steps) {
        d.actions.push_back(st.action);
        d.rewards.push_back(st.reward);
    }
    return d;
}

DemoSet collect_demos(const TabularMdp& mdp, const TabularPolicy& policy, int n, std::uint64_t seed) {
    Rng rng(seed);
    DemoSet demos;
    demos.reserve(static_cast<std::size_t>(std::max(n, 0)));
    for (int i = 0; i < n; ++i) demos.push_back(demo_from_trajectory(rollout(mdp, policy, rng)));
    return demos;
}

VisitStats estimate_visit_stats(const DemoSet& demos, int n_states, int horizon) {
    if (horizon < 1) throw Error("horizon must be positive");
    if (demos.empty()) throw Error("visit statistics need at least one demo");
    const auto S = static_cast<std::size_t>(n_states);
    VisitStats st;
    st.n = static_cast<int>(demos.size());
    st.horizon = horizon;
    st.h_hat.assign(S, 0.0);
    st.rho_hat.assign(S, 0.0);
    st.sample_variance.assign(S, 0.0);
    st.varrho.reserve(demos.size());

    std::vector<int> counts(S);
    for (std::size_t i = 0; i < demos.size(); ++i) {
        const auto& states = demos[i].states;
        if (states.empty()) throw Error("demo " + std::to_string(i) + " is empty");
        if (static_cast<int>(states.size()) > horizon) {
            throw Error("demo " + std::to_string(i) + " has " + std::to_string(states.size()) +
                        " states, more than the horizon " + std::to_string(horizon));
        }
        std::fill(counts.begin(), counts.end(), 0);
        for (StateId s : states) {
            if (s < 0 || static_cast<std::size_t>(s) >= S) {
                throw Error("demo " + std::to_string(i) + " visits out-of-range state " + std::to_string(s));
            }
            ++counts[static_cast<std::size_t>(s)];
        }
        const auto pad = static_cast<std::size_t>(horizon) - states.size();
        if (pad > 0) st.full_horizon = false;
        counts[static_cast<std::size_t>(states.back())] += static_cast<int>(pad);

        std::vector<double> frac(S);
        for (std::size_t s = 0; s < S; ++s) {
            if (counts[s] > 0) st.h_hat[s] += 1.0;
            frac[s] = static_cast<double>(counts[s]) / horizon;
            st.rho_hat[s] += frac[s];
        }
        st.varrho.push_back(std::move(frac));
    }
    if (st.n == 0) return st;
    for (std::size_t s = 0; s < S; ++s) {
        st.h_hat[s] /= st.n;
        st.rho_hat[s] /= st.n;
    }
    if (st.n >= 2) {
        for (std::size_t s = 0; s < S; ++s) {
            double ss = 0.0;
            for (const auto& frac : st.varrho) ss += (frac[s] - st.rho_hat[s]) * (frac[s] - st.rho_hat[s]);
            st.sample_variance[s] = ss / (st.n - 1);
        }
    }
    return st;
}

std::vector<double> exact_hitting_probabilities(const TabularMdp& mdp, const TabularPolicy& policy) {
    if (policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions()) {
        throw Error("policy dimensions do not match the MDP");
    }
    const auto S = static_cast<std::size_t>(mdp.n_states());
    const int H = mdp.horizon();
    std::vector<double> h(S, 0.0);
    std::vector<double> cur(S);
    std::vector<double> next(S);
    for (std::size_t target = 0; target < S; ++target) {
        cur.assign(mdp.rho0().begin(), mdp.rho0().end());
        double hit = cur[target];
        cur[target] = 0.0;
        for (int t = 0; t + 1 < H; ++t) {
            std::fill(next.begin(), next.end(), 0.0);
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
            hit += next[target];
            next[target] = 0.0;
            std::swap(cur, next);
        }
        h[target] = std::min(hit, 1.0);
    }
    return h;
}

namespace {

std::vector<StateId> removal_order(std::span<const double> scores, const StateSet& protect) {
    if (protect.n_states() != static_cast<int>(scores.size())) throw Error("protected set size does not match scores");
    std::vector<StateId> order;
    for (std::size_t s = 0; s < scores.size(); ++s) {
        if (scores[s] < 0.0) throw Error("scores must be nonnegative");
        if (!protect.contains(static_cast<StateId>(s))) order.push_back(static_cast<StateId>(s));
    }
    std::stable_sort(order.begin(), order.end(), [&](StateId a, StateId b) {
        return scores[static_cast<std::size_t>(a)] < scores[static_cast<std::size_t>(b)];
    });
    return order;
}

}  // namespace

StateSet build_support_by_budget(std::span<const double> scores, double xi, const StateSet& protect) {
    if (xi < 0.0) throw Error("budget xi must be nonnegative");
    StateSet kept = StateSet::full(static_cast<int>(scores.size()));
    double removed = 0.0;
    for (StateId s : removal_order(scores, protect)) {
        const double next = removed + scores[static_cast<std::size_t>(s)];
        if (next > xi) break;
        removed = next;
        kept.erase(s);
    }
    return kept;
}

StateSet remove_lowest(std::span<const double> scores, int k, const StateSet& protect) {
    StateSet kept = StateSet::full(static_cast<int>(scores.size()));
    const auto order = removal_order(scores, protect);
    const auto n = std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max(k, 0)));
    for (std::size_t i = 0; i < n; ++i) kept.erase(order[i]);
    return kept;
}

StateSet initial_support_set(const TabularMdp& mdp) {
    const auto init = mdp.initial_support();
    return StateSet::from_states(mdp.n_states(), init);
}

EStopMdp learned_estop(const TabularMdp& mdp, const DemoSet& demos, double xi) {
    const auto stats = estimate_visit_stats(demos, mdp.n_states(), mdp.horizon());
    return build_estop_mdp(mdp, build_support_by_budget(stats.h_hat, xi, initial_support_set(mdp)));
}

EStopMdp learned_estop_fraction(const TabularMdp& mdp, const DemoSet& demos, double fraction) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error("removal fraction must lie in [0,1]");
    const auto stats = estimate_visit_stats(demos, mdp.n_states(), mdp.horizon());
    const int k = static_cast<int>(std::floor(fraction * mdp.n_states() + 1e-9));
    return build_estop_mdp(mdp, remove_lowest(stats.h_hat, k, initial_support_set(mdp)));
}

// ---------------------------------------------------------------------------
// IO

std::string demos_to_jsonl(const DemoSet& demos) {
    std::string out;
    for (const Demo& d : demos) {
        out += nlohmann::json{{"states", d.states}, {"actions", d.actions}, {"rewards", d.rewards}}.dump();
        out += '\n';
    }
    return out;
}

DemoSet demos_from_jsonl(std::string_view text) {
    DemoSet demos;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto doc = nlohmann::json::parse(line);
            Demo d;
            d.states = doc.at("states").get<std::vector<StateId>>();
            d.actions = doc.value("actions", std::vector<ActionId>{});
            d.rewards = doc.value("rewards", std::vector<double>{});
            // Observation-only demos omit actions and rewards; otherwise one per transition.
            const auto transitions = d.states.empty() ? 0 : d.states.size() - 1;
            if (d.states.empty()) throw FormatError("demo file: a demo needs at least one state", line_no);
            if ((!d.actions.empty() && d.actions.size() != transitions) ||
                (!d.rewards.empty() && d.rewards.size() != transitions)) {
                throw FormatError("demo file: actions and rewards need one entry per transition", line_no);
            }
            demos.push_back(std::move(d));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("demo file: ") + e.what(), line_no);
        }
    }
    return demos;
}

DemoSet load_demos(const std::filesystem::path& path) { return demos_from_jsonl(read_text_file(path)); }

void save_demos(const DemoSet& demos, const std::filesystem::path& path) { write_text_file(path, demos_to_jsonl(demos)); }

std::string visit_stats_csv(const VisitStats& stats) {
    std::string out = "state,h_hat,rho_hat,var_varrho\n";
    for (std::size_t s = 0; s < stats.h_hat.size(); ++s) {
        out += std::to_string(s) + ',' + format_double(stats.h_hat[s]) + ',' + format_double(stats.rho_hat[s]) + ',' +
               format_double(stats.sample_variance[s]) + '\n';
    }
    return out;
}

}  // namespace estop
