#include <algorithm>
#include <cmath>
#include <numbers>

#include "estop/envs.hpp"

namespace estop {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double theta) {
    double w = std::fmod(theta, kTwoPi);
    if (w < 0.0) w += kTwoPi;
    return w;
}
}  // namespace

double upright_offset(double theta) { return wrap_angle(theta) - kPi; }

double pendulum_reward(const PendulumParams& params, const PendulumState& state, double torque) {
    const double off = upright_offset(state.theta);
    const double cost = off * off + 0.1 * state.theta_dot * state.theta_dot + 0.001 * torque * torque;
    return std::clamp(1.0 - cost / params.cost_scale, 0.0, 1.0);
}

double pendulum_energy(const PendulumParams& params, const PendulumState& state) {
    const double ml2 = params.mass * params.length * params.length;
    return 0.5 * ml2 * state.theta_dot * state.theta_dot - params.mass * params.gravity * params.length * std::cos(state.theta);
}

PendulumState pendulum_reset(const PendulumParams& params, Rng& rng) {
    const double off = (2.0 * uniform01(rng) - 1.0) * params.reset_angle;
    const double speed = (2.0 * uniform01(rng) - 1.0) * params.reset_speed;
    return PendulumState{wrap_angle(kPi + off), speed};
}

PendulumStep pendulum_step(const PendulumParams& params, const PendulumState& state, double torque) {
    if (!std::isfinite(state.theta) || !std::isfinite(state.theta_dot)) throw Error("pendulum state is not finite");
    if (!std::isfinite(torque) || std::fabs(torque) > params.max_torque) throw Error("pendulum torque out of range");
    const double ml2 = params.mass * params.length * params.length;
    const double accel = -(params.gravity / params.length) * std::sin(state.theta) + torque / ml2;
    const double speed = std::clamp(state.theta_dot + accel * params.dt, -params.max_speed, params.max_speed);
    PendulumStep out;
    out.reward = pendulum_reward(params, state, torque);
    out.next = PendulumState{wrap_angle(state.theta + speed * params.dt), speed};
    return out;
}

double LinearPendulumPolicy::torque(const PendulumParams& params, const PendulumState& state) const {
    const double u = weights[0] * upright_offset(state.theta) + weights[1] * state.theta_dot + weights[2];
    return std::clamp(u, -params.max_torque, params.max_torque);
}

}  // namespace estop
