// Acceptance gates. Prints one PASS/FAIL line per gate and exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "estop/bounds.hpp"
#include "estop/envs.hpp"
#include "estop/estimation.hpp"
#include "estop/experiments.hpp"
#include "estop/learners.hpp"

using namespace estop;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename T>
T median(std::vector<T> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return (v[n / 2 - 1] + v[n / 2]) / 2;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---------------------------------------------------------------------------

Outcome certificates() {
    const auto start = Clock::now();
    int failed = 0;
    double worst = -1e300;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        for (const auto& c : certify_all(random_certification_instance(seed), seed)) {
            failed += c.holds ? 0 : 1;
            worst = std::max(worst, c.gap - c.bound);
        }
    }
    const double secs = seconds_since(start);
    return {failed == 0 && secs < 120.0,
            fmt("1000 instances, %d failed certificates, max(gap - bound) = %.3g, %.1fs (limit 120s)", failed, worst,
                secs)};
}

Outcome hitting_vs_monte_carlo() {
    const auto start = Clock::now();
    constexpr long kRollouts = 1000000;
    int bad = 0;
    double worst_z = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng gen(1000 + seed);
        const int S = 2 + static_cast<int>(uniform01(gen) * 5);
        const int A = 1 + static_cast<int>(uniform01(gen) * 3);
        const int H = 1 + static_cast<int>(uniform01(gen) * 5);
        const auto mdp = random_mdp(S, A, H, 1 + static_cast<int>(uniform01(gen) * S), gen());
        const auto policy = random_policy(S, A, std::max(H - 1, 1), true, gen);
        const auto h = exact_hitting_probabilities(mdp, policy);

        std::vector<long> hits(static_cast<std::size_t>(S), 0);
        std::vector<char> seen(static_cast<std::size_t>(S));
        Rng rng(seed);
        for (long k = 0; k < kRollouts; ++k) {
            std::fill(seen.begin(), seen.end(), 0);
            for (StateId s : rollout(mdp, policy, rng).states()) seen[static_cast<std::size_t>(s)] = 1;
            for (std::size_t s = 0; s < seen.size(); ++s) hits[s] += seen[s];
        }
        for (std::size_t s = 0; s < h.size(); ++s) {
            const double p_hat = static_cast<double>(hits[s]) / kRollouts;
            const double se = std::sqrt(h[s] * (1.0 - h[s]) / kRollouts);
            const double err = std::fabs(p_hat - h[s]);
            if (se == 0.0) {
                if (err > 1e-12) ++bad;
                continue;
            }
            worst_z = std::max(worst_z, err / se);
            if (err > 4.0 * se) ++bad;
        }
    }
    const double secs = seconds_since(start);
    return {bad == 0 && secs < 300.0,
            fmt("20 instances x 1e6 rollouts, %d states outside 4 SE, worst |z| = %.2f, %.1fs (limit 300s)", bad,
                worst_z, secs)};
}

Outcome coupon_identities() {
    const bool exact = coupon_probability(2, 2) == 0.5 && coupon_probability(3, 3) == 2.0 / 9.0;
    double worst = 0.0;
    for (int m = 1; m <= 10; ++m) {
        for (int n = 0; n <= 50; ++n) {
            worst = std::max(worst, std::fabs(cover_probability(m, 1.0 / m, n) - coupon_probability(m, n)));
        }
    }
    constexpr long kTrials = 200000;
    Rng rng(7);
    long covered = 0;
    for (long k = 0; k < kTrials; ++k) {
        unsigned mask = 0;
        for (int i = 0; i < 20; ++i) mask |= 1u << static_cast<unsigned>(uniform01(rng) * 4);
        covered += mask == 0xF ? 1 : 0;
    }
    const double p = coupon_probability(4, 20);
    const double p_hat = static_cast<double>(covered) / kTrials;
    const double se = std::sqrt(p * (1.0 - p) / kTrials);
    const bool mc = std::fabs(p_hat - p) <= 3.0 * se;
    return {exact && worst <= 1e-12 && mc,
            fmt("exact small cases %s, max |cover - coupon| = %.3g (tol 1e-12), MC(4,20) %.5f vs %.5f, %.2f SE (tol 3)",
                exact ? "ok" : "WRONG", worst, p_hat, p, std::fabs(p_hat - p) / se)};
}

Outcome hoeffding_coverage() {
    constexpr int S = 16;
    constexpr int n = 200;
    constexpr double eps = 0.15;
    constexpr int reps = 500;
    const auto mdp = random_mdp(S, 2, 8, 3, 11);
    const auto policy = TabularPolicy::uniform(S, 2);
    const auto h = exact_hitting_probabilities(mdp, policy);
    int failures = 0;
    for (int r = 0; r < reps; ++r) {
        const auto stats = estimate_visit_stats(collect_demos(mdp, policy, n, 5000 + static_cast<std::uint64_t>(r)), S,
                                                mdp.horizon());
        double dev = 0.0;
        for (std::size_t s = 0; s < h.size(); ++s) dev = std::max(dev, std::fabs(stats.h_hat[s] - h[s]));
        failures += dev > eps ? 1 : 0;
    }
    const double rate = static_cast<double>(failures) / reps;
    const double bound = hoeffding_guarantee(n, S, 0.0, eps, mdp.horizon()).failure_prob;
    const double se = std::sqrt(std::max(rate * (1.0 - rate), 1e-12) / reps);
    return {rate <= bound + 3.0 * se,
            fmt("failure rate %.4f <= bound %.4f + 3 SE (%.4f)", rate, bound, 3.0 * se)};
}

ExperimentConfig frozenlake_config() {
    ExperimentConfig c;
    c.name = "acceptance-frozenlake";
    c.environment.kind = "frozenlake";
    c.environment.map = "classic8x8";
    c.environment.hole_escape_prob = 0.01;
    c.discount = 0.99;
    c.expert.source = "optimal";
    c.n_demos = 1000;
    c.demo_seed = 1;
    c.removal.rule = "fraction_h";
    c.removal.fraction = 0.5;
    c.learner.algorithm = Algorithm::QLearning;
    c.learner.episodes = 20000;
    c.learner.eval_every_episodes = 100;
    c.trials.clear();
    for (std::uint64_t s = 0; s < 20; ++s) c.trials.push_back(s);
    return c;
}

Outcome learning_speedup() {
    const auto start = Clock::now();
    const auto exp = run_learning_experiment(frozenlake_config());
    std::vector<double> estop_steps, full_steps;
    for (const auto& c : exp.estop) estop_steps.push_back(static_cast<double>(steps_to_fraction(c, 0.9)));
    for (const auto& c : exp.full) full_steps.push_back(static_cast<double>(steps_to_fraction(c, 0.9)));
    const double me = median(estop_steps);
    const double mf = median(full_steps);
    const double secs = seconds_since(start);
    const bool ok = exp.failures.empty() && exp.estop.size() >= 20 && me > 0.0 && mf >= 1.5 * me && secs < 600.0;
    return {ok, fmt("%zu seeds, median states to 90%% of asymptote: e-stop %.0f, full %.0f, ratio %.2f (need >= 1.5), "
                    "%.1fs (limit 600s)",
                    exp.estop.size(), me, mf, me > 0.0 ? mf / me : 0.0, secs)};
}

Outcome estop_value_and_bound() {
    const auto config = frozenlake_config();
    const auto inst = prepare_instance(config);
    const double j_full = optimal_value(inst.mdp, config.discount);
    const double j_hat = optimal_value(compact(inst.estop).mdp, config.discount);
    const auto cert = certify_imperfect(inst.mdp, inst.expert, inst.estop.support);
    return {j_hat >= 0.5 * j_full && cert.holds,
            fmt("J(e-stop optimum) = %.4f, J(optimum) = %.4f, ratio %.3f (need >= 0.5); removal-bound certificate: "
                "gap %.4g <= bound %.4g %s",
                j_hat, j_full, j_hat / j_full, cert.gap, cert.bound, cert.holds ? "holds" : "VIOLATED")};
}

Outcome vi_sweep_monotone() {
    auto config = frozenlake_config();
    config.removal.rule = "fraction_rho";
    const auto rows = run_vi_sweep(config);
    bool j_ok = true, flops_ok = true, stop_ok = !rows.empty();
    for (std::size_t i = 1; i < rows.size(); ++i) {
        j_ok = j_ok && rows[i].j_estop_opt <= rows[i - 1].j_estop_opt + 1e-12;
        if (rows[i].kept < rows[i - 1].kept) flops_ok = flops_ok && rows[i].flops <= rows[i - 1].flops;
    }
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) stop_ok = stop_ok && !rows[i].infeasible;
    const bool reached = !rows.empty() && rows.back().infeasible;
    return {j_ok && flops_ok && stop_ok,
            fmt("%zu rows, J nonincreasing %s, FLOPs nonincreasing %s, stops at first infeasible %s (%s)", rows.size(),
                j_ok ? "yes" : "NO", flops_ok ? "yes" : "NO", stop_ok ? "yes" : "NO",
                reached ? fmt("fraction %.2f", rows.back().fraction).c_str() : "none reached in grid")};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome byte_identical_reruns() {
    const auto root = std::filesystem::temp_directory_path() / "estop_acceptance_rerun";
    std::filesystem::remove_all(root);
    auto config = frozenlake_config();
    config.learner.episodes = 2000;
    config.trials = {0, 1, 2};
    config.ablation.kind = "n_demos";
    config.ablation.grid = {30, 300};

    auto pendulum = ExperimentConfig{};
    pendulum.environment.kind = "pendulum";
    pendulum.learner.algorithm = Algorithm::CrossEntropy;
    pendulum.learner.iterations = 10;
    pendulum.trials = {0, 1};
    pendulum.n_demos = 20;

    int files = 0, differing = 0;
    for (const char* kind : {"vi-sweep", "learn", "ablation", "pendulum"}) {
        std::vector<std::vector<std::filesystem::path>> written;
        for (int run = 0; run < 2; ++run) {
            auto c = std::string(kind) == "pendulum" ? pendulum : config;
            c.output_dir = (root / (std::string(kind) + "_" + std::to_string(run))).string();
            written.push_back(write_experiment(c, std::string(kind) == "pendulum" ? "learn" : kind));
        }
        for (std::size_t i = 0; i < written[0].size(); ++i) {
            ++files;
            if (i >= written[1].size() || slurp(written[0][i]) != slurp(written[1][i])) ++differing;
        }
    }
    std::filesystem::remove_all(root);
    return {files > 0 && differing == 0, fmt("%d CSV files compared across reruns, %d differ", files, differing)};
}

Outcome pendulum_box() {
    ExperimentConfig c;
    c.environment.kind = "pendulum";
    c.n_demos = 100;
    c.removal.box_margin = 0.5;
    c.learner.algorithm = Algorithm::CrossEntropy;
    c.trials.clear();
    for (std::uint64_t s = 0; s < 20; ++s) c.trials.push_back(s);
    const auto exp = run_learning_experiment(c);
    std::vector<double> estop_steps, full_steps;
    for (const auto& curve : exp.estop) estop_steps.push_back(static_cast<double>(steps_to_fraction(curve, 0.9)));
    for (const auto& curve : exp.full) full_steps.push_back(static_cast<double>(steps_to_fraction(curve, 0.9)));
    const double me = median(estop_steps), mf = median(full_steps);
    const double oe = median(exp.estop_final_offset), of = median(exp.full_final_offset);
    const bool ok = exp.failures.empty() && me < mf && oe < 0.3 && of < 0.3;
    return {ok, fmt("median env steps to 90%% of asymptote: e-stop %.0f < full %.0f; median final |offset| e-stop "
                    "%.3f, full %.3f (need < 0.3)",
                    me, mf, oe, of)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> gates = {
        {"1 certificates on random instances", certificates},
        {"2 exact hitting probabilities vs Monte Carlo", hitting_vs_monte_carlo},
        {"3 coupon and cover probabilities", coupon_identities},
        {"4 Hoeffding coverage", hoeffding_coverage},
        {"5 FrozenLake e-stop learning speedup", learning_speedup},
        {"6 FrozenLake e-stop value and removal bound", estop_value_and_bound},
        {"7 value-iteration removal sweep", vi_sweep_monotone},
        {"8 byte-identical CSV reruns", byte_identical_reruns},
        {"9 pendulum box e-stop", pendulum_box},
    };
    int failed = 0;
    for (const auto& [name, gate] : gates) {
        Outcome o;
        try {
            o = gate();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
