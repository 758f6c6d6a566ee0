#include <atomic>
#include <regex>

#include <httplib.h>

#include "estop/supervisor.hpp"

namespace estop {

using nlohmann::json;

namespace {
constexpr std::size_t kMaxBufferedEvents = 10000;
}

LiveSession::LiveSession(std::string id, SessionConfig config)
    : id_(std::move(id)), core_(std::move(config)), speed_(core_.config().speed), paused_(core_.config().start_paused) {
    worker_ = std::thread([this] { run(); });
}

LiveSession::~LiveSession() { stop(); }

void LiveSession::stop() {
    {
        std::lock_guard lk(mu_);
        stop_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
}

void LiveSession::run() {
    std::unique_lock lk(mu_);
    while (true) {
        // Step boundary: apply queued triggers before the next transition.
        while (!pending_.empty()) {
            const auto [ticket, window] = pending_.front();
            pending_.pop_front();
            try {
                applied_[ticket] = core_.trigger(window);
            } catch (const Error&) {
                applied_[ticket] = InterventionRecord{};
                applied_[ticket].window = -1;
            }
            cv_.notify_all();
        }
        if (stop_) break;
        if (paused_ || core_.finished()) {
            cv_.wait(lk, [&] { return stop_ || !pending_.empty() || (!paused_ && !core_.finished()); });
            continue;
        }
        const auto ev = core_.step();
        if (ev) {
            const std::string line = step_event_to_json(*ev).dump();
            for (auto& [id, queue] : observers_) {
                if (queue.size() >= kMaxBufferedEvents) queue.pop_front();
                queue.push_back(line);
            }
        }
        cv_.notify_all();
        if (!observers_.empty()) {
            const auto delay = std::chrono::duration<double>(1.0 / speed_);
            cv_.wait_for(lk, delay, [&] { return stop_ || !pending_.empty(); });
        } else {
            // Headless: full speed, but let request handlers in between steps.
            lk.unlock();
            std::this_thread::yield();
            lk.lock();
        }
    }
}

json LiveSession::state_json() {
    std::lock_guard lk(mu_);
    return json{{"id", id_},
                {"config", session_config_to_json(core_.config())},
                {"n_states", core_.mdp().n_states()},
                {"episode", core_.episode()},
                {"t", core_.t()},
                {"state", core_.state()},
                {"in_episode", core_.in_episode()},
                {"states_seen", core_.states_seen()},
                {"removed", core_.removed()},
                {"speed", speed_},
                {"paused", paused_},
                {"finished", core_.finished()},
                {"observers", observers_.size()},
                {"interventions", core_.interventions().size()},
                {"curve_points", core_.curve().points.size()}};
}

std::string LiveSession::support_json() {
    std::lock_guard lk(mu_);
    return support_to_json(core_.support()).dump();
}

std::string LiveSession::curve_csv() {
    std::lock_guard lk(mu_);
    const LearningCurve curves[] = {core_.curve()};
    return curves_to_csv(curves);
}

InterventionRecord LiveSession::trigger(int window, std::chrono::milliseconds timeout) {
    std::unique_lock lk(mu_);
    if (window < 1) throw SessionError(400, "window must be at least 1");
    if (core_.finished()) throw SessionError(409, "session has ended");
    if (paused_) throw SessionError(409, "session is paused");
    if (observers_.empty()) throw SessionError(409, "interventions need an attached observer");
    const long ticket = next_ticket_++;
    pending_.emplace_back(ticket, window);
    cv_.notify_all();
    if (!cv_.wait_for(lk, timeout, [&] { return applied_.count(ticket) > 0; })) {
        throw SessionError(504, "trigger was not applied in time");
    }
    auto rec = applied_[ticket];
    applied_.erase(ticket);
    if (rec.window < 0) throw SessionError(409, "session has ended");
    return rec;
}

void LiveSession::pause() {
    std::lock_guard lk(mu_);
    paused_ = true;
    cv_.notify_all();
}

void LiveSession::resume() {
    {
        std::lock_guard lk(mu_);
        paused_ = false;
    }
    cv_.notify_all();
}

void LiveSession::set_speed(double steps_per_second) {
    if (!(steps_per_second > 0.0)) throw SessionError(400, "speed must be positive");
    std::lock_guard lk(mu_);
    speed_ = steps_per_second;
    cv_.notify_all();
}

int LiveSession::attach() {
    std::lock_guard lk(mu_);
    const int id = next_observer_++;
    observers_[id];
    return id;
}

void LiveSession::detach(int observer) {
    std::lock_guard lk(mu_);
    observers_.erase(observer);
}

std::vector<std::string> LiveSession::poll(int observer, std::chrono::milliseconds wait) {
    std::unique_lock lk(mu_);
    auto it = observers_.find(observer);
    if (it == observers_.end()) return {};
    cv_.wait_for(lk, wait, [&] { return stop_ || core_.finished() || !observers_[observer].empty(); });
    auto& queue = observers_[observer];
    std::vector<std::string> out(queue.begin(), queue.end());
    queue.clear();
    return out;
}

bool LiveSession::done() {
    std::lock_guard lk(mu_);
    return stop_ || core_.finished();
}

// ---------------------------------------------------------------------------

struct SupervisorService::Impl {
    std::mutex mu;
    std::map<std::string, std::shared_ptr<LiveSession>> sessions;
    long next_id = 1;
    httplib::Server server;
    std::thread thread;
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, json{{"error", message}});
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::exception& e) {
        throw SessionError(400, std::string("malformed JSON body: ") + e.what());
    }
}

}  // namespace

SupervisorService::SupervisorService() : impl_(std::make_unique<Impl>()) {
    auto& srv = impl_->server;

    // Wraps a handler that needs a session, mapping errors to HTTP statuses.
    auto with_session = [this](auto handler) {
        return [this, handler](const httplib::Request& req, httplib::Response& res) {
            try {
                auto session = find(req.matches[1]);
                if (!session) return send_error(res, 404, "no such session");
                handler(*session, req, res);
            } catch (const SessionError& e) {
                send_error(res, e.status(), e.what());
            } catch (const std::exception& e) {
                send_error(res, 400, e.what());
            }
        };
    };

    srv.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        try {
            const auto session = create(session_config_from_json(parse_body(req)));
            send_json(res, 201, json{{"id", session->id()}});
        } catch (const SessionError& e) {
            send_error(res, e.status(), e.what());
        } catch (const std::exception& e) {
            send_error(res, 400, e.what());
        }
    });
    srv.Get(R"(/sessions/([^/]+))", with_session([](LiveSession& s, const httplib::Request&, httplib::Response& res) {
                send_json(res, 200, s.state_json());
            }));
    srv.Post(R"(/sessions/([^/]+)/estop)",
             with_session([](LiveSession& s, const httplib::Request& req, httplib::Response& res) {
                 const auto body = parse_body(req);
                 int window = 1;
                 if (body.contains("window")) {
                     if (!body["window"].is_number_integer()) throw SessionError(400, "window must be an integer");
                     window = body["window"].get<int>();
                 }
                 send_json(res, 200, intervention_to_json(s.trigger(window)));
             }));
    srv.Post(R"(/sessions/([^/]+)/pause)", with_session([](LiveSession& s, const httplib::Request&, httplib::Response& res) {
                 s.pause();
                 send_json(res, 200, s.state_json());
             }));
    srv.Post(R"(/sessions/([^/]+)/resume)",
             with_session([](LiveSession& s, const httplib::Request&, httplib::Response& res) {
                 s.resume();
                 send_json(res, 200, s.state_json());
             }));
    srv.Post(R"(/sessions/([^/]+)/speed)", with_session([](LiveSession& s, const httplib::Request& req, httplib::Response& res) {
                 const auto body = parse_body(req);
                 if (!body.contains("steps_per_second") || !body["steps_per_second"].is_number()) {
                     throw SessionError(400, "body needs a numeric steps_per_second");
                 }
                 s.set_speed(body["steps_per_second"].get<double>());
                 send_json(res, 200, s.state_json());
             }));
    srv.Get(R"(/sessions/([^/]+)/support)",
            with_session([](LiveSession& s, const httplib::Request&, httplib::Response& res) {
                res.set_content(s.support_json(), "application/json");
            }));
    srv.Get(R"(/sessions/([^/]+)/curve)", with_session([](LiveSession& s, const httplib::Request&, httplib::Response& res) {
                res.set_content(s.curve_csv(), "text/csv");
            }));
    srv.Get(R"(/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
        auto session = find(req.matches[1]);
        if (!session) return send_error(res, 404, "no such session");
        const int observer = session->attach();
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream",
            [session, observer](std::size_t, httplib::DataSink& sink) {
                const auto lines = session->poll(observer, std::chrono::milliseconds(200));
                for (const auto& line : lines) {
                    const std::string frame = "data: " + line + "\n\n";
                    if (!sink.write(frame.data(), frame.size())) return false;
                }
                if (lines.empty() && session->done()) {
                    sink.done();
                    return true;
                }
                if (lines.empty()) {
                    // Comment frame keeps the connection alive and detects disconnects.
                    static const std::string ping = ": ping\n\n";
                    if (!sink.write(ping.data(), ping.size())) return false;
                }
                return true;
            },
            [session, observer](bool) { session->detach(observer); });
    });
}

SupervisorService::~SupervisorService() {
    stop();
    std::lock_guard lk(impl_->mu);
    for (auto& [id, s] : impl_->sessions) s->stop();
}

std::shared_ptr<LiveSession> SupervisorService::create(const SessionConfig& config) {
    std::lock_guard lk(impl_->mu);
    const std::string id = "s" + std::to_string(impl_->next_id++);
    auto session = std::make_shared<LiveSession>(id, config);
    impl_->sessions[id] = session;
    return session;
}

std::shared_ptr<LiveSession> SupervisorService::find(const std::string& id) {
    std::lock_guard lk(impl_->mu);
    auto it = impl_->sessions.find(id);
    return it == impl_->sessions.end() ? nullptr : it->second;
}

int SupervisorService::start(const std::string& host, int port) {
    auto& srv = impl_->server;
    const int bound = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error("could not bind " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([&srv] { srv.listen_after_bind(); });
    srv.wait_until_ready();
    return bound;
}

void SupervisorService::listen(const std::string& host, int port) {
    if (!impl_->server.listen(host, port)) throw Error("could not listen on " + host + ":" + std::to_string(port));
}

void SupervisorService::stop() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace estop
