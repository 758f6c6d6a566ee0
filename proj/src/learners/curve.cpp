#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "estop/format.hpp"
#include "estop/learners.hpp"

namespace estop {

const char* to_string(Algorithm algorithm) {
    switch (algorithm) {
        case Algorithm::QLearning: return "q_learning";
        case Algorithm::ActorCritic: return "actor_critic";
        case Algorithm::CrossEntropy: return "cross_entropy";
    }
    return "unknown";
}

Algorithm algorithm_from_string(const std::string& name) {
    if (name == "q_learning") return Algorithm::QLearning;
    if (name == "actor_critic") return Algorithm::ActorCritic;
    if (name == "cross_entropy") return Algorithm::CrossEntropy;
    throw Error("unknown algorithm '" + name + "'");
}

void LearnerConfig::validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("alpha must lie in (0,1]");
    if (!(beta > 0.0 && beta <= 1.0)) throw Error("beta must lie in (0,1]");
    if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0)) throw Error("epsilon_start must lie in [0,1]");
    if (!(epsilon_end >= 0.0 && epsilon_end <= 1.0)) throw Error("epsilon_end must lie in [0,1]");
    if (!(gamma > 0.0 && gamma < 1.0)) throw Error("gamma must lie in (0,1)");
    if (episodes < 1) throw Error("episodes must be positive");
    if (eval_every_episodes < 1) throw Error("eval_every_episodes must be positive");
    if (iterations < 1 || population < 2) throw Error("cross-entropy needs iterations >= 1 and population >= 2");
    if (!(elite_fraction > 0.0 && elite_fraction <= 1.0)) throw Error("elite_fraction must lie in (0,1]");
    if (!(init_std > 0.0)) throw Error("init_std must be positive");
    if (eval_episodes < 1) throw Error("eval_episodes must be positive");
}

std::string curves_to_csv(std::span<const LearningCurve> curves) {
    std::string out = "states_seen,eval_return,seed\n";
    for (const auto& c : curves) {
        const std::string seed = std::to_string(c.seed);
        for (const auto& p : c.points) {
            out += std::to_string(p.states_seen) + ',' + format_double(p.eval_return) + ',' + seed + '\n';
        }
    }
    return out;
}

std::vector<LearningCurve> curves_from_csv(std::string_view text) {
    std::vector<LearningCurve> curves;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("states_seen", 0) == 0) continue;
        std::istringstream fields(line);
        std::string x, y, seed;
        if (!std::getline(fields, x, ',') || !std::getline(fields, y, ',') || !std::getline(fields, seed)) {
            throw Error("curve CSV line " + std::to_string(line_no) + ": expected three fields");
        }
        CurvePoint p;
        p.states_seen = std::stol(x);
        p.eval_return = std::stod(y);
        const auto s = std::stoull(seed);
        if (curves.empty() || curves.back().seed != s) curves.push_back(LearningCurve{s, {}});
        curves.back().points.push_back(p);
    }
    return curves;
}

std::optional<double> interpolate(const LearningCurve& curve, double x) {
    const auto& pts = curve.points;
    if (pts.empty() || x < static_cast<double>(pts.front().states_seen) ||
        x > static_cast<double>(pts.back().states_seen)) {
        return std::nullopt;
    }
    auto it = std::lower_bound(pts.begin(), pts.end(), x,
                               [](const CurvePoint& p, double v) { return static_cast<double>(p.states_seen) < v; });
    if (static_cast<double>(it->states_seen) == x) return it->eval_return;
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double w = (x - static_cast<double>(lo.states_seen)) / static_cast<double>(hi.states_seen - lo.states_seen);
    return lo.eval_return + w * (hi.eval_return - lo.eval_return);
}

long steps_to_fraction(const LearningCurve& curve, double fraction, int tail) {
    const auto& pts = curve.points;
    if (pts.empty()) return -1;
    const auto n = std::min<std::size_t>(pts.size(), static_cast<std::size_t>(std::max(tail, 1)));
    double asymptote = 0.0;
    for (std::size_t i = pts.size() - n; i < pts.size(); ++i) asymptote += pts[i].eval_return;
    asymptote /= static_cast<double>(n);
    const double target = fraction * asymptote;
    for (const auto& p : pts) {
        if (p.eval_return >= target) return p.states_seen;
    }
    return -1;
}

TabularPolicy fit_policy(const TabularPolicy& policy, int n_states) {
    if (n_states == policy.n_states()) return policy;
    if (n_states < policy.n_states()) return restrict_policy(policy, n_states);
    return extend_policy(policy, n_states - policy.n_states());
}

CurveEvaluator::CurveEvaluator(const TabularMdp& target, double gamma) : target_(&target), gamma_(gamma) {}

double CurveEvaluator::operator()(const TabularPolicy& policy) {
    SolverOptions opts;
    // Sup-norm error after a sweep is at most residual * gamma / (1 - gamma); keep it near 1e-6.
    opts.tolerance = 1e-6 * (1.0 - gamma_);
    opts.initial = values_;
    values_ = policy_state_values(*target_, fit_policy(policy, target_->n_states()), EvalMode::discounted(gamma_), opts);
    double j = 0.0;
    for (std::size_t s = 0; s < values_.size(); ++s) j += target_->rho0()[s] * values_[s];
    return j;
}

}  // namespace estop
