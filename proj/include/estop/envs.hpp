#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "estop/mdp.hpp"

namespace estop {

// ---------------------------------------------------------------------------
// FrozenLake

/// Actions follow the gym numbering.
enum FrozenLakeAction : ActionId { kLeft = 0, kDown = 1, kRight = 2, kUp = 3 };

struct FrozenLakeLayout {
    /// Rows of 'S', 'F', 'H', 'G'.
    std::vector<std::string> grid;
    /// Probability that a hole follows the ordinary slip dynamics instead of staying put.
    double hole_escape_prob = 0.01;
    bool goal_terminal = true;
    double discount = 0.99;
    /// Episode length cap (states per episode).
    int horizon = 200;

    int rows() const { return static_cast<int>(grid.size()); }
    int cols() const { return grid.empty() ? 0 : static_cast<int>(grid.front().size()); }
    char cell(StateId s) const { return grid[static_cast<std::size_t>(s / cols())][static_cast<std::size_t>(s % cols())]; }
};

/// One grid row per non-empty line. Throws on characters outside {S,F,H,G},
/// ragged rows, or a start/goal count violation.
FrozenLakeLayout parse_frozenlake_map(std::string_view text);
FrozenLakeLayout load_frozenlake_map(const std::string& path);
std::string frozenlake_map_text(const FrozenLakeLayout& params);

FrozenLakeLayout classic_frozenlake_4x4();
FrozenLakeLayout classic_frozenlake_8x8();

/// |S| = rows * cols, reward 1 on every transition into a goal cell.
TabularMdp build_frozenlake(const FrozenLakeLayout& params);

// ---------------------------------------------------------------------------
// Random MDPs for property tests

/// Rows have `sparsity` distinct successors with Dirichlet(1) weights, rewards
/// are U[0,1], and rho0 is spread over a random subset of at most ceil(n/2) states.
TabularMdp random_mdp(int n_states, int n_actions, int horizon, int sparsity, std::uint64_t seed);

/// Uniform random time-dependent (or stationary) stochastic policy.
TabularPolicy random_policy(int n_states, int n_actions, int n_steps, bool time_dependent, Rng& rng);

// ---------------------------------------------------------------------------
// Pendulum. theta is measured from hanging-down, so theta = pi is upright.

struct PendulumParams {
    double mass = 1.0;
    double length = 1.0;
    double gravity = 9.8;
    double max_torque = 2.0;
    double max_speed = 8.0;
    double dt = 0.05;
    int episode_length = 200;
    /// Reset draws the offset from upright and the speed uniformly from these ranges.
    double reset_angle = 0.1;
    double reset_speed = 0.2;
    /// reward = clamp(1 - cost / cost_scale, 0, 1) with the quadratic cost below.
    double cost_scale = 1.0;
};

struct PendulumState {
    double theta = 0.0;
    double theta_dot = 0.0;
};

struct PendulumStep {
    PendulumState next;
    double reward = 0.0;
};

/// Signed offset from upright in [-pi, pi).
double upright_offset(double theta);
double pendulum_reward(const PendulumParams& params, const PendulumState& state, double torque);
double pendulum_energy(const PendulumParams& params, const PendulumState& state);

PendulumState pendulum_reset(const PendulumParams& params, Rng& rng);

/// Semi-implicit Euler step with speed clamping. Throws on non-finite state
/// or |torque| > max_torque.
PendulumStep pendulum_step(const PendulumParams& params, const PendulumState& state, double torque);

/// u = clamp(w0 * offset + w1 * theta_dot + w2, -u_max, u_max)
struct LinearPendulumPolicy {
    std::array<double, 3> weights{};
    double torque(const PendulumParams& params, const PendulumState& state) const;
};

}  // namespace estop
