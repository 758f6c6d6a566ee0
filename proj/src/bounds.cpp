#include "estop/bounds.hpp"

#include <algorithm>
#include <cmath>

#include "estop/envs.hpp"

namespace estop {

namespace {

struct EStopOptimum {
    double in_estop = 0.0;
    double in_base = 0.0;
};

EStopOptimum solve_estop(const TabularMdp& mdp, const StateSet& support) {
    const auto estop = build_estop_mdp(mdp, support);
    const auto vi = value_iteration(estop.mdp, EvalMode::finite_horizon());
    EStopOptimum out;
    for (std::size_t s = 0; s < vi.values.size(); ++s) out.in_estop += estop.mdp.rho0()[s] * vi.values[s];
    out.in_base = policy_value(mdp, restrict_policy(vi.greedy, mdp.n_states()), EvalMode::finite_horizon());
    return out;
}

GapCertificate finish(std::string theorem, const TabularMdp& mdp, const TabularPolicy& expert,
                      const StateSet& support, double bound, std::uint64_t seed) {
    GapCertificate c;
    c.theorem = std::move(theorem);
    c.j_expert = policy_value(mdp, expert, EvalMode::finite_horizon());
    const auto opt = solve_estop(mdp, support);
    c.j_estop_opt = opt.in_estop;
    c.j_estop_opt_in_m = opt.in_base;
    c.gap = c.j_expert - c.j_estop_opt;
    c.bound = bound;
    c.holds = c.gap <= c.bound + kCertificateTolerance;
    c.instance_seed = seed;
    return c;
}

}  // namespace

GapCertificate certify_perfect(const TabularMdp& mdp, const TabularPolicy& expert, std::uint64_t instance_seed) {
    const auto h = exact_hitting_probabilities(mdp, expert);
    std::vector<char> mask(h.size());
    for (std::size_t s = 0; s < h.size(); ++s) mask[s] = h[s] > 0.0;
    return finish("perfect", mdp, expert, StateSet::from_mask(std::move(mask)), 0.0, instance_seed);
}

GapCertificate certify_imperfect(const TabularMdp& mdp, const TabularPolicy& expert, const StateSet& support,
                                 std::uint64_t instance_seed) {
    const auto h = exact_hitting_probabilities(mdp, expert);
    double removed = 0.0;
    for (StateId s : support.removed()) removed += h[static_cast<std::size_t>(s)];
    return finish("imperfect", mdp, expert, support, mdp.horizon() * removed, instance_seed);
}

GapCertificate certify_stationary(const TabularMdp& mdp, const TabularPolicy& expert, const StateSet& support,
                                  std::uint64_t instance_seed) {
    const auto rho = average_state_distribution(mdp, expert);
    double removed = 0.0;
    for (StateId s : support.removed()) removed += rho[static_cast<std::size_t>(s)];
    const double H = mdp.horizon();
    return finish("stationary", mdp, expert, support, H * H * removed, instance_seed);
}

CertificationInstance random_certification_instance(std::uint64_t seed) {
    Rng rng(seed);
    const int S = 2 + static_cast<int>(uniform01(rng) * 5);
    const int A = 1 + static_cast<int>(uniform01(rng) * 3);
    const int H = 1 + static_cast<int>(uniform01(rng) * 5);
    const int sparsity = 1 + static_cast<int>(uniform01(rng) * S);
    CertificationInstance inst;
    inst.mdp = random_mdp(S, A, H, sparsity, rng());
    inst.expert = random_policy(S, A, std::max(H - 1, 1), true, rng);
    std::vector<char> keep(static_cast<std::size_t>(S));
    for (std::size_t s = 0; s < keep.size(); ++s) keep[s] = inst.mdp.rho0()[s] > 0.0 || uniform01(rng) < 0.5;
    inst.support = StateSet::from_mask(std::move(keep));
    return inst;
}

std::vector<GapCertificate> certify_all(const CertificationInstance& inst, std::uint64_t seed) {
    return {certify_perfect(inst.mdp, inst.expert, seed), certify_imperfect(inst.mdp, inst.expert, inst.support, seed),
            certify_stationary(inst.mdp, inst.expert, inst.support, seed)};
}

nlohmann::json certificate_to_json(const GapCertificate& c) {
    return nlohmann::json{{"theorem", c.theorem},
                          {"gap", c.gap},
                          {"bound", c.bound},
                          {"holds", c.holds},
                          {"instance_seed", c.instance_seed},
                          {"j_expert", c.j_expert},
                          {"j_estop_opt", c.j_estop_opt},
                          {"j_estop_opt_in_m", c.j_estop_opt_in_m}};
}

HoeffdingGuarantee hoeffding_guarantee(int n, int n_states, double xi, double eps, int horizon) {
    if (n < 0) throw Error("demo count must be nonnegative");
    if (!(eps > 0.0)) throw Error("eps must be positive");
    if (n_states < 1) throw Error("state count must be positive");
    const double S = n_states;
    HoeffdingGuarantee g;
    g.gap_bound = (xi + eps) * horizon;
    g.failure_prob = std::min(1.0, S * std::exp(-2.0 * eps * eps * n / (S * S)));
    return g;
}

double bernstein_guarantee(const VisitStats& stats, double xi, double delta, int horizon) {
    if (stats.n < 2) throw Error("the Bernstein bound needs at least two demos");
    if (!stats.full_horizon) throw Error("the Bernstein bound needs demos that run the full horizon");
    const auto S = static_cast<double>(stats.sample_variance.size());
    if (!(delta > 0.0)) throw Error("delta must be positive");
    const double L = std::max(0.0, std::log(2.0 * S / delta));
    double spread = 0.0;
    for (double v : stats.sample_variance) spread += std::sqrt(std::max(v, 0.0));
    const double n = stats.n;
    const double H = horizon;
    return (xi + std::sqrt(2.0 * L / n) * spread + 7.0 * S * L / (3.0 * (n - 1.0))) * H * H;
}

RegretDecomposition regret_decomposition(const TabularMdp& mdp, const EStopMdp& estop, const TrainingLog& log,
                                         long T) {
    if (T < 1) throw Error("T must be positive");
    const long H = mdp.horizon();
    RegretDecomposition r;
    r.episodes = static_cast<int>((T + H - 1) / H);
    if (static_cast<long>(log.episode_returns.size()) < r.episodes) {
        throw Error("training log has " + std::to_string(log.episode_returns.size()) + " episodes, need " +
                    std::to_string(r.episodes));
    }
    const auto full = value_iteration(mdp, EvalMode::finite_horizon());
    const auto hat = value_iteration(estop.mdp, EvalMode::finite_horizon());
    for (std::size_t s = 0; s < full.values.size(); ++s) r.j_opt += mdp.rho0()[s] * full.values[s];
    for (std::size_t s = 0; s < hat.values.size(); ++s) r.j_estop_opt += estop.mdp.rho0()[s] * hat.values[s];
    r.asymptotic_term = r.episodes * (r.j_opt - r.j_estop_opt);
    double earned = 0.0;
    for (int k = 0; k < r.episodes; ++k) earned += log.episode_returns[static_cast<std::size_t>(k)];
    r.learning_term = r.episodes * r.j_estop_opt - earned;
    return r;
}

}  // namespace estop
