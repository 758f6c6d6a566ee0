#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "estop/estimation.hpp"
#include "estop/learners.hpp"
#include "estop/mdp.hpp"
#include "estop/support.hpp"

namespace estop {

/// Slack used by every certificate's `holds` test.
inline constexpr double kCertificateTolerance = 1e-9;

/// Exact finite-horizon comparison of the expert in M against the optimal
/// policy of the e-stop MDP.
struct GapCertificate {
    std::string theorem;  // "perfect", "imperfect" or "stationary"
    double j_expert = 0.0;
    /// J of the optimal e-stop policy, in M-hat and re-evaluated in M.
    double j_estop_opt = 0.0;
    double j_estop_opt_in_m = 0.0;
    double gap = 0.0;    // j_expert - j_estop_opt
    double bound = 0.0;  // right-hand side of the certificate
    bool holds = false;  // gap <= bound + kCertificateTolerance
    std::uint64_t instance_seed = 0;
};

/// Support {s : h(s) > 0}; bound 0.
GapCertificate certify_perfect(const TabularMdp& mdp, const TabularPolicy& expert, std::uint64_t instance_seed = 0);
/// bound = H * sum_{s not in support} h(s)
GapCertificate certify_imperfect(const TabularMdp& mdp, const TabularPolicy& expert, const StateSet& support,
                                 std::uint64_t instance_seed = 0);
/// bound = H^2 * rho_expert(S \ support)
GapCertificate certify_stationary(const TabularMdp& mdp, const TabularPolicy& expert, const StateSet& support,
                                  std::uint64_t instance_seed = 0);

/// Small random instance for certificate sweeps: |S| in [2,6], |A| in [1,3],
/// H in [1,5], a random time-dependent expert and a random valid support.
struct CertificationInstance {
    TabularMdp mdp;
    TabularPolicy expert;
    StateSet support;
};
CertificationInstance random_certification_instance(std::uint64_t seed);
/// perfect, imperfect and stationary certificates for one instance.
std::vector<GapCertificate> certify_all(const CertificationInstance& inst, std::uint64_t seed);

/// {theorem, gap, bound, holds, instance_seed} plus the underlying values.
nlohmann::json certificate_to_json(const GapCertificate& cert);

struct HoeffdingGuarantee {
    double gap_bound = 0.0;     // (xi + eps) * H
    double failure_prob = 1.0;  // min(1, |S| exp(-2 eps^2 n / |S|^2))
};
HoeffdingGuarantee hoeffding_guarantee(int n, int n_states, double xi, double eps, int horizon);

/// (xi + sqrt(2 L / n) sum_s sqrt(V_n(s)) + 7 |S| L / (3 (n - 1))) H^2 with
/// L = max(0, log(2|S| / delta)). Needs n >= 2 full-horizon demos.
double bernstein_guarantee(const VisitStats& stats, double xi, double delta, int horizon);

struct RegretDecomposition {
    int episodes = 0;  // ceil(T / H)
    double j_opt = 0.0;
    double j_estop_opt = 0.0;
    double asymptotic_term = 0.0;
    double learning_term = 0.0;
};

/// Finite-horizon values; the learning term compares ceil(T/H) optimal
/// e-stop episodes with the learner's first logged episodes in M-hat.
/// Throws when the log holds fewer episodes than needed.
RegretDecomposition regret_decomposition(const TabularMdp& mdp, const EStopMdp& estop, const TrainingLog& log,
                                         long T);

/// P(all m outcomes seen in n uniform draws with replacement).
double coupon_probability(int m, int n);
/// sum_k (-1)^k C(m,k) max(0, 1 - k eps)^n
double cover_probability(int m, double eps, int n);

}  // namespace estop
