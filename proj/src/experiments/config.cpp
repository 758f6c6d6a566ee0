#include <cstdio>
#include <set>

#include "estop/experiments.hpp"
#include "estop/mdp_io.hpp"

namespace estop {

using nlohmann::json;

namespace {

// Reads optional fields out of one JSON object and rejects keys nobody asked for.
class Fields {
public:
    Fields(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
        if (!obj_.is_object()) throw ConfigError(where_ + ": expected an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = obj_.find(key);
        if (it == obj_.end()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where_ + "." + key + ": " + e.what());
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (const auto& [key, value] : obj_.items()) {
            if (!seen_.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
        }
    }

private:
    const json& obj_;
    std::string where_;
    std::set<std::string> seen_;
};

void read_learner(const json& doc, LearnerConfig& l) {
    Fields f(doc, "learner");
    std::string algorithm = to_string(l.algorithm);
    f.get("algorithm", algorithm);
    try {
        l.algorithm = algorithm_from_string(algorithm);
    } catch (const Error& e) {
        throw ConfigError(std::string("learner.algorithm: ") + e.what());
    }
    f.get("alpha", l.alpha);
    f.get("beta", l.beta);
    f.get("epsilon_start", l.epsilon_start);
    f.get("epsilon_end", l.epsilon_end);
    f.get("gamma", l.gamma);
    f.get("episodes", l.episodes);
    f.get("eval_every_episodes", l.eval_every_episodes);
    f.get("seed", l.seed);
    f.get("iterations", l.iterations);
    f.get("population", l.population);
    f.get("elite_fraction", l.elite_fraction);
    f.get("init_std", l.init_std);
    f.get("eval_episodes", l.eval_episodes);
    f.finish();
}

void read_pendulum(const json& doc, PendulumParams& p) {
    Fields f(doc, "environment.pendulum");
    f.get("mass", p.mass);
    f.get("length", p.length);
    f.get("gravity", p.gravity);
    f.get("max_torque", p.max_torque);
    f.get("max_speed", p.max_speed);
    f.get("dt", p.dt);
    f.get("episode_length", p.episode_length);
    f.get("reset_angle", p.reset_angle);
    f.get("reset_speed", p.reset_speed);
    f.get("cost_scale", p.cost_scale);
    f.finish();
}

json pendulum_json(const PendulumParams& p) {
    return json{{"mass", p.mass},           {"length", p.length},         {"gravity", p.gravity},
                {"max_torque", p.max_torque}, {"max_speed", p.max_speed},   {"dt", p.dt},
                {"episode_length", p.episode_length}, {"reset_angle", p.reset_angle},
                {"reset_speed", p.reset_speed}, {"cost_scale", p.cost_scale}};
}

}  // namespace

void ExperimentConfig::validate() const {
    const auto& env = environment;
    if (env.kind != "frozenlake" && env.kind != "mdp_file" && env.kind != "pendulum") {
        throw ConfigError("environment.kind must be frozenlake, mdp_file or pendulum");
    }
    if (env.kind == "mdp_file" && env.path.empty()) throw ConfigError("environment.path is required for mdp_file");
    if (!(env.hole_escape_prob >= 0.0 && env.hole_escape_prob <= 1.0)) {
        throw ConfigError("environment.hole_escape_prob must lie in [0,1]");
    }
    if (env.horizon < 0) throw ConfigError("environment.horizon must be nonnegative");
    if (env.kind == "pendulum") {
        const auto& p = env.pendulum;
        if (!(p.dt > 0.0)) throw ConfigError("environment.pendulum.dt must be positive");
        if (!(p.max_torque >= 0.0)) throw ConfigError("environment.pendulum.max_torque must be nonnegative");
        if (!(p.cost_scale > 0.0)) throw ConfigError("environment.pendulum.cost_scale must be positive");
        if (p.episode_length < 2) throw ConfigError("environment.pendulum.episode_length must be at least 2");
    }
    if (!(discount > 0.0 && discount < 1.0)) throw ConfigError("discount must lie in (0,1)");
    if (expert.source != "optimal" && expert.source != "noisy_q" && expert.source != "demo_file") {
        throw ConfigError("expert.source must be optimal, noisy_q or demo_file");
    }
    if (expert.source == "demo_file" && expert.path.empty()) throw ConfigError("expert.path is required for demo_file");
    if (!(expert.sigma >= 0.0)) throw ConfigError("expert.sigma must be nonnegative");
    if (n_demos < 1) throw ConfigError("n_demos must be positive");
    if (removal.rule != "fraction_h" && removal.rule != "fraction_rho" && removal.rule != "budget") {
        throw ConfigError("removal.rule must be fraction_h, fraction_rho or budget");
    }
    if (!(removal.fraction >= 0.0 && removal.fraction <= 1.0)) throw ConfigError("removal.fraction must lie in [0,1]");
    for (double g : removal.grid) {
        if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("removal.grid entries must lie in [0,1]");
    }
    if (!(removal.xi >= 0.0)) throw ConfigError("removal.xi must be nonnegative");
    if (!(removal.box_margin >= 0.0)) throw ConfigError("removal.box_margin must be nonnegative");
    if (ablation.kind != "sigma" && ablation.kind != "n_demos") throw ConfigError("ablation.kind must be sigma or n_demos");
    if (trials.empty()) throw ConfigError("trials must not be empty");
    try {
        learner.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("learner: ") + e.what());
    }
}

ExperimentConfig config_from_json(const json& doc) {
    ExperimentConfig c;
    Fields f(doc, "config");
    f.get("name", c.name);
    f.get("discount", c.discount);
    f.get("n_demos", c.n_demos);
    f.get("demo_seed", c.demo_seed);
    f.get("output_dir", c.output_dir);
    if (const json* env = f.child("environment")) {
        Fields e(*env, "environment");
        e.get("kind", c.environment.kind);
        e.get("map", c.environment.map);
        e.get("hole_escape_prob", c.environment.hole_escape_prob);
        e.get("horizon", c.environment.horizon);
        e.get("goal_terminal", c.environment.goal_terminal);
        e.get("path", c.environment.path);
        if (const json* p = e.child("pendulum")) read_pendulum(*p, c.environment.pendulum);
        e.finish();
    }
    if (const json* ex = f.child("expert")) {
        Fields e(*ex, "expert");
        e.get("source", c.expert.source);
        e.get("sigma", c.expert.sigma);
        e.get("path", c.expert.path);
        e.get("seed", c.expert.seed);
        e.get("pendulum_weights", c.expert.pendulum_weights);
        e.finish();
    }
    if (const json* r = f.child("removal")) {
        Fields e(*r, "removal");
        e.get("rule", c.removal.rule);
        e.get("fraction", c.removal.fraction);
        e.get("xi", c.removal.xi);
        e.get("grid", c.removal.grid);
        e.get("box_margin", c.removal.box_margin);
        e.finish();
    }
    if (const json* l = f.child("learner")) read_learner(*l, c.learner);
    if (const json* t = f.child("trials")) {
        if (t->is_array()) {
            try {
                c.trials = t->get<std::vector<std::uint64_t>>();
            } catch (const json::exception& e) {
                throw ConfigError(std::string("trials: ") + e.what());
            }
        } else {
            Fields e(*t, "trials");
            int count = 1;
            std::uint64_t first = 0;
            e.get("count", count);
            e.get("first", first);
            e.finish();
            if (count < 1) throw ConfigError("trials.count must be positive");
            c.trials.clear();
            for (int i = 0; i < count; ++i) c.trials.push_back(first + static_cast<std::uint64_t>(i));
        }
    }
    if (const json* a = f.child("ablation")) {
        Fields e(*a, "ablation");
        e.get("kind", c.ablation.kind);
        e.get("grid", c.ablation.grid);
        e.finish();
    }
    f.finish();
    c.validate();
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    const auto& l = c.learner;
    return json{
        {"name", c.name},
        {"environment",
         {{"kind", c.environment.kind},
          {"map", c.environment.map},
          {"hole_escape_prob", c.environment.hole_escape_prob},
          {"horizon", c.environment.horizon},
          {"goal_terminal", c.environment.goal_terminal},
          {"path", c.environment.path},
          {"pendulum", pendulum_json(c.environment.pendulum)}}},
        {"discount", c.discount},
        {"expert",
         {{"source", c.expert.source},
          {"sigma", c.expert.sigma},
          {"path", c.expert.path},
          {"seed", c.expert.seed},
          {"pendulum_weights", c.expert.pendulum_weights}}},
        {"n_demos", c.n_demos},
        {"demo_seed", c.demo_seed},
        {"removal",
         {{"rule", c.removal.rule},
          {"fraction", c.removal.fraction},
          {"xi", c.removal.xi},
          {"grid", c.removal.grid},
          {"box_margin", c.removal.box_margin}}},
        {"learner",
         {{"algorithm", to_string(l.algorithm)},
          {"alpha", l.alpha},
          {"beta", l.beta},
          {"epsilon_start", l.epsilon_start},
          {"epsilon_end", l.epsilon_end},
          {"gamma", l.gamma},
          {"episodes", l.episodes},
          {"eval_every_episodes", l.eval_every_episodes},
          {"seed", l.seed},
          {"iterations", l.iterations},
          {"population", l.population},
          {"elite_fraction", l.elite_fraction},
          {"init_std", l.init_std},
          {"eval_episodes", l.eval_episodes}}},
        {"trials", c.trials},
        {"ablation", {{"kind", c.ablation.kind}, {"grid", c.ablation.grid}}},
        {"output_dir", c.output_dir},
    };
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return config_from_json(doc);
}

std::string config_hash(const ExperimentConfig& config) {
    // output_dir does not change results, so it stays out of the hash.
    json doc = config_to_json(config);
    doc.erase("output_dir");
    const std::string text = doc.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace estop
