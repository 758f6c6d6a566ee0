#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "estop/experiments.hpp"
#include "estop/learners.hpp"
#include "estop/support.hpp"

namespace estop {

struct SessionConfig {
    EnvironmentConfig environment;
    LearnerConfig learner;
    /// Steps per second while an observer is attached.
    double speed = 5.0;
    bool start_paused = false;
};

/// {"environment": {...}, "learner": {...}, "speed": 5, "start_paused": false}
SessionConfig session_config_from_json(const nlohmann::json& doc);
nlohmann::json session_config_to_json(const SessionConfig& config);

struct StepEvent {
    int episode = 0;
    int t = 0;
    StateId s = 0;
    ActionId a = 0;
    double r = 0.0;
    StateId next = 0;
    /// The transition entered a removed state and ended the episode.
    bool removed_flag = false;
    bool episode_end = false;
};
nlohmann::json step_event_to_json(const StepEvent& event);

struct InterventionRecord {
    /// Number of step() calls completed before the trigger took effect.
    long step_index = 0;
    double wall_time = 0.0;  // seconds since the Unix epoch; not used for replay
    int episode = 0;
    int t = 0;
    StateId state = 0;
    int window = 1;
    /// States newly added to the removed set.
    std::vector<StateId> marked;
    /// Whether an episode was running (and was ended) by this trigger.
    bool ended_episode = false;
};
nlohmann::json intervention_to_json(const InterventionRecord& record);
InterventionRecord intervention_from_json(const nlohmann::json& doc);

/**
 * Deterministic training loop behind a supervisor session. Each step() makes
 * exactly one environment transition (starting an episode first if needed).
 * With no removed states it reproduces q_learning() on the same MDP and seed.
 */
class SessionCore {
public:
    explicit SessionCore(SessionConfig config);

    /// Returns nullopt once the episode budget is spent.
    std::optional<StepEvent> step();
    /// Marks the last `window` states of the current (or last) episode, except
    /// protected start states, and ends the running episode. Throws when w < 1.
    InterventionRecord trigger(int window);

    bool finished() const { return finished_; }
    long steps() const { return steps_; }
    int episode() const { return episode_; }
    int t() const { return t_; }
    StateId state() const { return state_; }
    bool in_episode() const { return in_episode_; }
    long states_seen() const { return seen_; }

    const TabularMdp& mdp() const { return mdp_; }
    const SessionConfig& config() const { return config_; }
    std::vector<StateId> removed() const;
    StateSet support() const;
    const LearningCurve& curve() const { return curve_; }
    const std::vector<InterventionRecord>& interventions() const { return interventions_; }
    const QLearningAgent& agent() const { return agent_; }

    /// Re-runs a session: `log` triggers are applied at their step_index, and
    /// stepping continues until `n_steps` steps or the budget ends.
    static SessionCore replay(const SessionConfig& config, const std::vector<InterventionRecord>& log, long n_steps);

private:
    void begin_episode();
    void end_episode();
    void record_eval();

    SessionConfig config_;
    TabularMdp mdp_;
    QLearningAgent agent_;
    CurveEvaluator evaluator_;
    Rng rng_;
    std::vector<char> removed_;
    std::vector<char> protected_;
    std::vector<StateId> history_;
    std::vector<InterventionRecord> interventions_;
    LearningCurve curve_;
    long steps_ = 0;
    long seen_ = 0;
    int episode_ = 0;
    int t_ = 0;
    StateId state_ = 0;
    bool in_episode_ = false;
    bool finished_ = false;
};

/// Error with an HTTP status for the service layer.
class SessionError : public Error {
public:
    SessionError(int status, const std::string& what) : Error(what), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

/**
 * A live session: a stepping thread around a SessionCore. Triggers are queued
 * and applied by the stepping thread at the next step boundary.
 */
class LiveSession {
public:
    LiveSession(std::string id, SessionConfig config);
    ~LiveSession();
    LiveSession(const LiveSession&) = delete;
    LiveSession& operator=(const LiveSession&) = delete;

    const std::string& id() const { return id_; }
    nlohmann::json state_json();
    std::string support_json();
    std::string curve_csv();

    /// Blocks until the stepping thread applies the trigger (or `timeout`).
    InterventionRecord trigger(int window, std::chrono::milliseconds timeout = std::chrono::seconds(5));
    void pause();
    void resume();
    void set_speed(double steps_per_second);

    /// Observer registration for the event stream; interventions need one.
    int attach();
    void detach(int observer);
    /// Pops buffered events (JSON lines) for an observer, waiting up to `wait`.
    std::vector<std::string> poll(int observer, std::chrono::milliseconds wait);
    bool done();

    void stop();

private:
    void run();

    std::string id_;
    std::mutex mu_;
    std::condition_variable cv_;
    SessionCore core_;
    double speed_;
    bool paused_;
    bool stop_ = false;
    std::deque<std::pair<long, int>> pending_;  // (ticket, window)
    long next_ticket_ = 0;
    std::map<long, InterventionRecord> applied_;
    std::map<int, std::deque<std::string>> observers_;
    int next_observer_ = 0;
    std::thread worker_;
};

/// Registry of sessions plus the HTTP front end.
class SupervisorService {
public:
    SupervisorService();
    ~SupervisorService();

    std::shared_ptr<LiveSession> create(const SessionConfig& config);
    std::shared_ptr<LiveSession> find(const std::string& id);

    /// Binds and serves on a background thread; returns the bound port (port 0 picks one).
    int start(const std::string& host, int port);
    /// Serves on the calling thread until stop().
    void listen(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace estop
