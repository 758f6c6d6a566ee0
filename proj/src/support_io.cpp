#include "estop/support.hpp"

#include <string>

namespace estop {

using nlohmann::json;

namespace {

json state_set_json(const StateSet& set) { return json{{"n_states", set.n_states()}, {"states", set.states()}}; }

StateSet state_set_from(const json& doc) {
    const int n = doc.at("n_states").get<int>();
    if (n < 1) throw Error("support document: n_states must be positive");
    const auto states = doc.at("states").get<std::vector<StateId>>();
    return StateSet::from_states(n, states);
}

}  // namespace

json support_to_json(const SupportSet& support) {
    struct Visitor {
        json operator()(const StateSet& set) const {
            json doc = state_set_json(set);
            doc["variant"] = "state_set";
            return doc;
        }
        json operator()(const TimeIndexedSet& seq) const {
            json sets = json::array();
            for (const auto& s : seq.sets) sets.push_back(s.states());
            const int n = seq.sets.empty() ? 0 : seq.sets.front().n_states();
            return json{{"variant", "time_indexed"}, {"n_states", n}, {"sets", sets}};
        }
        json operator()(const VisitCountBudget& f) const {
            return json{{"variant", "visit_count"}, {"budget", f.budget}};
        }
        json operator()(const ContinuousBox& box) const {
            return json{{"variant", "box"}, {"lo", box.lo}, {"hi", box.hi}};
        }
    };
    return std::visit(Visitor{}, support);
}

SupportSet support_from_json(const json& doc) {
    try {
        const auto variant = doc.at("variant").get<std::string>();
        if (variant == "state_set") return state_set_from(doc);
        if (variant == "time_indexed") {
            const int n = doc.at("n_states").get<int>();
            TimeIndexedSet seq;
            for (const auto& states : doc.at("sets")) {
                seq.sets.push_back(StateSet::from_states(n, states.get<std::vector<StateId>>()));
            }
            return seq;
        }
        if (variant == "visit_count") {
            VisitCountBudget f{doc.at("budget").get<std::vector<int>>()};
            for (int b : f.budget) {
                if (b < 0) throw Error("support document: visit budgets must be nonnegative");
            }
            return f;
        }
        if (variant == "box") {
            ContinuousBox box{doc.at("lo").get<std::vector<double>>(), doc.at("hi").get<std::vector<double>>()};
            if (box.lo.size() != box.hi.size()) throw Error("support document: lo and hi differ in length");
            for (std::size_t i = 0; i < box.lo.size(); ++i) {
                if (!(box.lo[i] <= box.hi[i])) throw Error("support document: lo exceeds hi in dimension " + std::to_string(i));
            }
            return box;
        }
        throw Error("support document: unknown variant '" + variant + "'");
    } catch (const json::exception& e) {
        throw Error(std::string("support document: ") + e.what());
    }
}

}  // namespace estop
