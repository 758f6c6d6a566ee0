#pragma once

#include <memory>
#include <span>
#include <variant>
#include <vector>

#include <json.hpp>

#include "estop/mdp.hpp"

namespace estop {

/// Subset S-hat of a discrete state space, stored as a membership mask.
class StateSet {
public:
    StateSet() = default;
    static StateSet full(int n_states);
    static StateSet from_states(int n_states, std::span<const StateId> states);
    static StateSet from_mask(std::vector<char> mask);

    int n_states() const { return static_cast<int>(kept_.size()); }
    bool contains(StateId s) const { return kept_[static_cast<std::size_t>(s)] != 0; }
    int size() const;
    std::vector<StateId> states() const;
    std::vector<StateId> removed() const;

    void insert(StateId s) { kept_[static_cast<std::size_t>(s)] = 1; }
    void erase(StateId s) { kept_[static_cast<std::size_t>(s)] = 0; }
    bool includes(const StateSet& other) const;

    bool operator==(const StateSet&) const = default;

private:
    explicit StateSet(std::vector<char> kept) : kept_(std::move(kept)) {}
    std::vector<char> kept_;
};

/// One state set per timestep t = 0 ... H-1.
struct TimeIndexedSet {
    std::vector<StateSet> sets;
};

/// Episode terminates on the visit that would push count(s) past budget[s].
struct VisitCountBudget {
    std::vector<int> budget;
};

/// Axis-aligned box over continuous state coordinates.
struct ContinuousBox {
    std::vector<double> lo;
    std::vector<double> hi;
    bool contains(std::span<const double> x) const;
};

using SupportSet = std::variant<StateSet, TimeIndexedSet, VisitCountBudget, ContinuousBox>;

/// Transformed MDP: removed transitions are redirected to an absorbing,
/// zero-reward state appended at index base->n_states(). Removed states keep
/// their indices as unreachable stubs.
struct EStopMdp {
    std::shared_ptr<const TabularMdp> base;
    TabularMdp mdp;
    StateSet support;
    StateId terminal_state = 0;

    int base_states() const { return base->n_states(); }
};

/// Throws when support misses part of support(rho0) or has the wrong size.
EStopMdp build_estop_mdp(std::shared_ptr<const TabularMdp> mdp, const StateSet& support);
EStopMdp build_estop_mdp(const TabularMdp& mdp, const StateSet& support);

/// Kept states plus the absorbing state only (the planner-facing view).
struct CompactMdp {
    TabularMdp mdp;
    /// compact index -> original index; the last entry (absorbing state) maps to -1.
    std::vector<StateId> to_original;
};
CompactMdp compact(const EStopMdp& estop);

/// Appends `extra` states acting with action 0 (e.g. for the absorbing state).
TabularPolicy extend_policy(const TabularPolicy& policy, int extra = 1);
/// Keeps the first n_states rows.
TabularPolicy restrict_policy(const TabularPolicy& policy, int n_states);

enum class StepDecision { Continue, Terminate };

struct StepContext {
    int t = 0;
    StateId state = -1;
    std::span<const double> coords{};
    /// Visits to each state before this one (VisitCountBudget only).
    std::span<const int> visit_counts{};
};

/// Decides whether arriving at the given state (at time t) triggers the e-stop.
StepDecision estop_step_filter(const SupportSet& support, const StepContext& ctx);

/// Rollout in the base MDP with the filter applied on every arrival; an e-stop
/// transition yields zero reward and ends the episode (cause EStop). The
/// recorded next_state of that step is the state that triggered the stop.
Trajectory rollout_with_support(const TabularMdp& mdp, const TabularPolicy& policy, const SupportSet& support,
                                Rng& rng);

// ---------------------------------------------------------------------------
// Constructors for the alternative support types

/// S^t = {s : rho^t(s) > eps}; S^0 always contains support(rho0).
TimeIndexedSet time_indexed_from_distributions(const std::vector<std::vector<double>>& per_t, double eps,
                                               std::span<const double> rho0);
/// f(s) = #{t : rho^t(s) > eps}
VisitCountBudget visit_budget_from_distributions(const std::vector<std::vector<double>>& per_t, double eps);
/// f(s) = max over demos of the number of visits to s.
VisitCountBudget visit_budget_from_demos(const std::vector<std::vector<StateId>>& state_sequences, int n_states);

/// Explicit product MDP over (state, visit-count vector) realising the budget
/// rule with an absorbing e-stop state; exponential size, tiny instances only.
struct VisitCountProduct {
    TabularMdp mdp;
    /// product index -> base state (-1 for the absorbing state)
    std::vector<StateId> base_state;
};
VisitCountProduct build_visit_count_product(const TabularMdp& mdp, const VisitCountBudget& budget);
/// Lifts a base-state policy onto the product states.
TabularPolicy lift_to_product(const VisitCountProduct& product, const TabularPolicy& policy);

using ContinuousTrajectory = std::vector<std::vector<double>>;

/// Per-dimension min/max over every demo state, widened by margin * (hi - lo)
/// on each side. Throws on an empty or ragged demo set.
ContinuousBox box_from_trajectories(const std::vector<ContinuousTrajectory>& demos, double margin_fraction);

// Support document: {"variant": "state_set" | "time_indexed" | "visit_count" | "box", ...}
nlohmann::json support_to_json(const SupportSet& support);
SupportSet support_from_json(const nlohmann::json& doc);

}  // namespace estop
