#include <doctest.h>

#include <atomic>
#include <set>
#include <thread>

#include <httplib.h>

#include "estop/supervisor.hpp"

using namespace estop;
using nlohmann::json;

namespace {

SessionConfig lake_session(int episodes = 200) {
    return session_config_from_json(json{
        {"environment", {{"kind", "frozenlake"}, {"map", "classic4x4"}, {"hole_escape_prob", 0.01}}},
        {"learner", {{"episodes", episodes}, {"eval_every_episodes", 20}, {"seed", 3}}},
        {"speed", 1000.0}});
}

std::vector<double> q_values(const SessionCore& core) {
    return {core.agent().q().begin(), core.agent().q().end()};
}

void run_steps(SessionCore& core, long n) {
    for (long i = 0; i < n && core.step(); ++i) {
    }
}

}  // namespace

TEST_CASE("session configs accept tabular Q-learning only") {
    const auto c = lake_session();
    CHECK(c.speed == 1000.0);
    CHECK(session_config_from_json(session_config_to_json(c)).learner.episodes == 200);
    CHECK_THROWS_AS(session_config_from_json(json{{"speeed", 2}}), ConfigError);
    CHECK_THROWS_AS(session_config_from_json(json{{"speed", 0}}), ConfigError);
    CHECK_THROWS_AS(session_config_from_json(json{{"environment", {{"kind", "pendulum"}}}}), ConfigError);
    CHECK_THROWS_AS(session_config_from_json(json{{"learner", {{"algorithm", "actor_critic"}}}}), ConfigError);
    CHECK_THROWS_AS(session_config_from_json(json::array()), ConfigError);
}

TEST_CASE("an untouched session reproduces plain Q-learning exactly") {
    const auto config = lake_session();
    SessionCore core(config);
    while (core.step()) {
    }
    CHECK(core.finished());
    CHECK(core.episode() == 200);

    const auto mdp = build_environment(config.environment);
    const auto ref = q_learning(mdp, mdp, config.learner);
    CHECK(q_values(core) == ref.q);
    CHECK(core.curve().points.size() == ref.curve.points.size());
    for (std::size_t i = 0; i < ref.curve.points.size(); ++i) {
        CHECK(core.curve().points[i].states_seen == ref.curve.points[i].states_seen);
        CHECK(core.curve().points[i].eval_return == ref.curve.points[i].eval_return);
    }
    long total = 0;
    for (int len : ref.log.episode_lengths) total += len;
    CHECK(core.states_seen() == total);
    CHECK(!core.step().has_value());
    CHECK_THROWS_AS(core.trigger(1), SessionError);
}

TEST_CASE("a trigger marks the recent window and ends the episode at once") {
    SessionCore core(lake_session());
    // Step until an episode has moved at least three states away from the start.
    std::vector<StateId> path;
    while (true) {
        const auto ev = core.step();
        REQUIRE(ev.has_value());
        if (ev->t == 0) path.assign(1, ev->s);
        path.push_back(ev->next);
        if (core.in_episode() && path.size() >= 4) break;
    }
    std::set<StateId> expected;
    for (std::size_t i = path.size() - 3; i < path.size(); ++i) {
        if (path[i] != 0) expected.insert(path[i]);
    }
    const auto rec = core.trigger(3);
    CHECK(rec.ended_episode);
    CHECK(rec.window == 3);
    CHECK(std::set<StateId>(rec.marked.begin(), rec.marked.end()) == expected);
    CHECK(!core.in_episode());
    const auto removed = core.removed();
    CHECK(std::set<StateId>(removed.begin(), removed.end()) == expected);
    CHECK(core.support().size() == 16 - static_cast<int>(expected.size()));
    CHECK(core.support().contains(0));

    // The next transition starts a fresh episode.
    const auto next = core.step();
    REQUIRE(next.has_value());
    CHECK(next->t == 0);

    // Marking the same states again adds nothing; bad windows are rejected.
    CHECK_THROWS_AS(core.trigger(0), SessionError);
}

TEST_CASE("entering a removed state ends the episode with zero reward") {
    SessionCore core(lake_session(2000));
    run_steps(core, 50);
    // Mark everything visited so far by using a huge window, repeatedly.
    for (int i = 0; i < 5; ++i) {
        core.trigger(1000);
        run_steps(core, 30);
    }
    REQUIRE(!core.removed().empty());
    int stops = 0;
    for (int i = 0; i < 5000; ++i) {
        const auto ev = core.step();
        if (!ev) break;
        const bool removed = !core.support().contains(ev->next);
        CHECK(ev->removed_flag == removed);
        if (ev->removed_flag) {
            ++stops;
            CHECK(ev->r == 0.0);
            CHECK(ev->episode_end);
            CHECK(!core.in_episode());
        }
    }
    CHECK(stops > 0);
}

TEST_CASE("replaying the intervention log reproduces the session") {
    const auto config = lake_session(400);
    SessionCore live(config);
    run_steps(live, 137);
    live.trigger(2);
    run_steps(live, 400);
    live.trigger(5);
    live.trigger(1);
    run_steps(live, 250);

    auto log = live.interventions();
    // Round-trip the log through JSON as a client would store it.
    for (auto& rec : log) rec = intervention_from_json(intervention_to_json(rec));
    const auto again = SessionCore::replay(config, log, live.steps());
    CHECK(again.steps() == live.steps());
    CHECK(again.removed() == live.removed());
    CHECK(q_values(again) == q_values(live));
    CHECK(again.curve().points.size() == live.curve().points.size());
    REQUIRE(again.interventions().size() == log.size());
    for (std::size_t i = 0; i < log.size(); ++i) CHECK(again.interventions()[i].marked == log[i].marked);
}

TEST_CASE("live sessions gate triggers on observers and pausing") {
    LiveSession session("t", lake_session(100000));
    CHECK_THROWS_AS(session.trigger(1), SessionError);
    const int obs = session.attach();
    const auto events = session.poll(obs, std::chrono::milliseconds(500));
    CHECK(!events.empty());
    CHECK(json::parse(events.front()).contains("removed_flag"));
    const auto rec = session.trigger(2);
    CHECK(rec.window == 2);
    session.pause();
    try {
        session.trigger(1);
        FAIL("trigger while paused should throw");
    } catch (const SessionError& e) {
        CHECK(e.status() == 409);
    }
    session.resume();
    CHECK_NOTHROW(session.trigger(1));
    CHECK_THROWS_AS(session.set_speed(-1.0), SessionError);
    session.detach(obs);
    CHECK_THROWS_AS(session.trigger(1), SessionError);
    session.stop();
}

TEST_CASE("the HTTP service drives a session end to end") {
    SupervisorService service;
    const int port = service.start("127.0.0.1", 0);
    REQUIRE(port > 0);
    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(10, 0);

    const json body = {{"environment", {{"kind", "frozenlake"}, {"map", "classic4x4"}}},
                       {"learner", {{"episodes", 1000000}, {"eval_every_episodes", 100}}},
                       {"speed", 500.0}};
    auto created = client.Post("/sessions", body.dump(), "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    const auto id = json::parse(created->body).at("id").get<std::string>();
    const std::string base = "/sessions/" + id;

    SUBCASE("error statuses") {
        auto missing = client.Get("/sessions/nope");
        REQUIRE(missing);
        CHECK(missing->status == 404);
        auto bad = client.Post("/sessions", "{not json", "application/json");
        REQUIRE(bad);
        CHECK(bad->status == 400);
        auto unknown = client.Post("/sessions", R"({"colour": 1})", "application/json");
        REQUIRE(unknown);
        CHECK(unknown->status == 400);
        auto no_observer = client.Post(base + "/estop", R"({"window": 2})", "application/json");
        REQUIRE(no_observer);
        CHECK(no_observer->status == 409);
        auto bad_window = client.Post(base + "/estop", R"({"window": "two"})", "application/json");
        REQUIRE(bad_window);
        CHECK(bad_window->status == 400);
        auto bad_speed = client.Post(base + "/speed", R"({"steps_per_second": -3})", "application/json");
        REQUIRE(bad_speed);
        CHECK(bad_speed->status == 400);
        auto no_session = client.Post("/sessions/nope/estop", "{}", "application/json");
        REQUIRE(no_session);
        CHECK(no_session->status == 404);
    }

    SUBCASE("five triggers with an observer attached") {
        // Observer: reads the event stream on its own connection.
        std::atomic<bool> stop_stream{false};
        std::string stream;
        std::mutex stream_mu;
        std::thread reader([&] {
            httplib::Client sse("127.0.0.1", port);
            sse.set_read_timeout(10, 0);
            sse.Get(base + "/events", [&](const char* data, std::size_t n) {
                std::lock_guard lk(stream_mu);
                stream.append(data, n);
                return !stop_stream.load();
            });
        });
        for (int i = 0; i < 200; ++i) {
            auto st = client.Get(base);
            if (st && json::parse(st->body).at("observers").get<int>() == 1) break;
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }

        std::set<StateId> marked;
        for (int i = 0; i < 5; ++i) {
            std::this_thread::sleep_for(std::chrono::milliseconds(30));
            auto res = client.Post(base + "/estop", R"({"window": 3})", "application/json");
            REQUIRE(res);
            REQUIRE(res->status == 200);
            const auto rec = json::parse(res->body);
            CHECK(rec.at("window") == 3);
            for (const auto& s : rec.at("marked")) marked.insert(s.get<StateId>());
        }
        CHECK(!marked.count(0));

        auto st = client.Get(base);
        REQUIRE(st);
        const auto state = json::parse(st->body);
        CHECK(state.at("interventions") == 5);
        CHECK(state.at("removed").get<std::vector<StateId>>() == std::vector<StateId>(marked.begin(), marked.end()));

        auto sup = client.Get(base + "/support");
        REQUIRE(sup);
        CHECK(sup->status == 200);
        const auto support = std::get<StateSet>(support_from_json(json::parse(sup->body)));
        CHECK(support.n_states() == 16);
        for (StateId s = 0; s < 16; ++s) CHECK(support.contains(s) == !marked.count(s));

        // Paused sessions refuse triggers; speed changes are reflected in the state.
        auto paused = client.Post(base + "/pause", "", "application/json");
        REQUIRE(paused);
        CHECK(json::parse(paused->body).at("paused") == true);
        auto refused = client.Post(base + "/estop", R"({"window": 1})", "application/json");
        REQUIRE(refused);
        CHECK(refused->status == 409);
        auto resumed = client.Post(base + "/resume", "", "application/json");
        REQUIRE(resumed);
        CHECK(json::parse(resumed->body).at("paused") == false);
        auto speed = client.Post(base + "/speed", R"({"steps_per_second": 250})", "application/json");
        REQUIRE(speed);
        CHECK(json::parse(speed->body).at("speed") == 250.0);

        auto curve = client.Get(base + "/curve");
        REQUIRE(curve);
        CHECK(curve->get_header_value("Content-Type") == "text/csv");
        CHECK(curve->body.rfind("states_seen,eval_return,seed\n0,0,", 0) == 0);

        stop_stream = true;
        reader.join();
        std::lock_guard lk(stream_mu);
        CHECK(stream.rfind("data: {", 0) == 0);
        int frames = 0;
        std::size_t pos = 0;
        while ((pos = stream.find("data: ", pos)) != std::string::npos) {
            const auto end = stream.find("\n\n", pos);
            if (end == std::string::npos) break;
            const auto ev = json::parse(stream.substr(pos + 6, end - pos - 6));
            CHECK(ev.contains("episode"));
            CHECK(ev.contains("next"));
            ++frames;
            pos = end;
        }
        CHECK(frames > 0);
    }

    service.stop();
}
