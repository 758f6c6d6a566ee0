#include <algorithm>
#include <chrono>

#include "estop/supervisor.hpp"

namespace estop {

using nlohmann::json;

SessionConfig session_config_from_json(const json& doc) {
    if (!doc.is_object()) throw ConfigError("session config must be an object");
    json exp = json::object();
    SessionConfig c;
    for (const auto& [key, value] : doc.items()) {
        if (key == "environment" || key == "learner") {
            exp[key] = value;
        } else if (key == "speed") {
            if (!value.is_number()) throw ConfigError("speed must be a number");
            c.speed = value.get<double>();
        } else if (key == "start_paused") {
            if (!value.is_boolean()) throw ConfigError("start_paused must be a boolean");
            c.start_paused = value.get<bool>();
        } else {
            throw ConfigError("session config: unknown key '" + key + "'");
        }
    }
    const auto parsed = config_from_json(exp);
    if (parsed.environment.kind == "pendulum") throw ConfigError("sessions support tabular environments only");
    if (parsed.learner.algorithm != Algorithm::QLearning) throw ConfigError("sessions run Q-learning only");
    if (!(c.speed > 0.0)) throw ConfigError("speed must be positive");
    c.environment = parsed.environment;
    c.learner = parsed.learner;
    return c;
}

json session_config_to_json(const SessionConfig& c) {
    ExperimentConfig tmp;
    tmp.environment = c.environment;
    tmp.learner = c.learner;
    const auto full = config_to_json(tmp);
    return json{{"environment", full.at("environment")},
                {"learner", full.at("learner")},
                {"speed", c.speed},
                {"start_paused", c.start_paused}};
}

json step_event_to_json(const StepEvent& e) {
    return json{{"episode", e.episode}, {"t", e.t},       {"s", e.s},
                {"a", e.a},             {"r", e.r},       {"next", e.next},
                {"removed_flag", e.removed_flag}, {"episode_end", e.episode_end}};
}

json intervention_to_json(const InterventionRecord& r) {
    return json{{"step_index", r.step_index}, {"wall_time", r.wall_time}, {"episode", r.episode},
                {"t", r.t},                   {"state", r.state},         {"window", r.window},
                {"marked", r.marked},         {"ended_episode", r.ended_episode}};
}

InterventionRecord intervention_from_json(const json& doc) {
    InterventionRecord r;
    r.step_index = doc.at("step_index").get<long>();
    r.wall_time = doc.value("wall_time", 0.0);
    r.episode = doc.value("episode", 0);
    r.t = doc.value("t", 0);
    r.state = doc.value("state", 0);
    r.window = doc.value("window", 1);
    r.marked = doc.value("marked", std::vector<StateId>{});
    r.ended_episode = doc.value("ended_episode", false);
    return r;
}

// ---------------------------------------------------------------------------

SessionCore::SessionCore(SessionConfig config)
    : config_(std::move(config)),
      mdp_(build_environment(config_.environment)),
      agent_(mdp_.n_states(), mdp_.n_actions(), config_.learner),
      evaluator_(mdp_, config_.learner.gamma),
      rng_(config_.learner.seed),
      removed_(static_cast<std::size_t>(mdp_.n_states()), 0),
      protected_(static_cast<std::size_t>(mdp_.n_states()), 0) {
    for (StateId s : mdp_.initial_support()) protected_[static_cast<std::size_t>(s)] = 1;
    curve_.seed = config_.learner.seed;
}

void SessionCore::record_eval() {
    if (!curve_.points.empty() && curve_.points.back().states_seen == seen_) return;
    curve_.points.push_back(CurvePoint{seen_, evaluator_(agent_.greedy())});
}

void SessionCore::begin_episode() {
    if (episode_ % config_.learner.eval_every_episodes == 0) record_eval();
    state_ = sample_initial_state(mdp_, rng_);
    t_ = 0;
    history_.assign(1, state_);
    in_episode_ = true;
    if (mdp_.is_terminal(state_) || mdp_.horizon() < 2) end_episode();
}

void SessionCore::end_episode() {
    in_episode_ = false;
    ++episode_;
}

std::optional<StepEvent> SessionCore::step() {
    if (finished_) return std::nullopt;
    while (!in_episode_) {
        if (episode_ >= config_.learner.episodes) {
            finished_ = true;
            record_eval();
            return std::nullopt;
        }
        begin_episode();
    }
    StepEvent ev;
    ev.episode = episode_;
    ev.t = t_;
    ev.s = state_;
    ev.a = agent_.act(state_, episode_, rng_);
    const auto [next, reward] = sample_transition(mdp_, state_, ev.a, rng_);
    ev.next = next;
    ++seen_;
    ++steps_;
    if (removed_[static_cast<std::size_t>(next)]) {
        ev.removed_flag = true;
        ev.r = 0.0;
        agent_.update(state_, ev.a, 0.0, next, true);
        end_episode();
        ev.episode_end = true;
        return ev;
    }
    ev.r = reward;
    agent_.update(state_, ev.a, reward, next, mdp_.is_terminal(next));
    state_ = next;
    ++t_;
    history_.push_back(next);
    if (mdp_.is_terminal(next) || t_ + 1 >= mdp_.horizon()) {
        end_episode();
        ev.episode_end = true;
    }
    return ev;
}

InterventionRecord SessionCore::trigger(int window) {
    if (window < 1) throw SessionError(400, "window must be at least 1");
    if (finished_) throw SessionError(409, "session has ended");
    InterventionRecord rec;
    rec.step_index = steps_;
    rec.wall_time = std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
    rec.window = window;
    rec.ended_episode = in_episode_;
    rec.episode = in_episode_ ? episode_ : std::max(episode_ - 1, 0);
    rec.t = t_;
    rec.state = history_.empty() ? state_ : history_.back();
    const auto n = std::min(history_.size(), static_cast<std::size_t>(window));
    for (std::size_t i = history_.size() - n; i < history_.size(); ++i) {
        const auto s = static_cast<std::size_t>(history_[i]);
        if (protected_[s] || removed_[s]) continue;
        removed_[s] = 1;
        rec.marked.push_back(history_[i]);
    }
    if (in_episode_) end_episode();
    interventions_.push_back(rec);
    return rec;
}

std::vector<StateId> SessionCore::removed() const {
    std::vector<StateId> out;
    for (std::size_t s = 0; s < removed_.size(); ++s) {
        if (removed_[s]) out.push_back(static_cast<StateId>(s));
    }
    return out;
}

StateSet SessionCore::support() const {
    std::vector<char> kept(removed_.size());
    for (std::size_t s = 0; s < kept.size(); ++s) kept[s] = !removed_[s];
    return StateSet::from_mask(std::move(kept));
}

SessionCore SessionCore::replay(const SessionConfig& config, const std::vector<InterventionRecord>& log, long n_steps) {
    SessionCore core(config);
    std::size_t next = 0;
    while (true) {
        while (next < log.size() && log[next].step_index == core.steps()) core.trigger(log[next++].window);
        if (core.steps() >= n_steps) break;
        if (!core.step()) break;
    }
    return core;
}

}  // namespace estop
