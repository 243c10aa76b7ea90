#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "pla/errors.hpp"
#include "pla/geom.hpp"
#include "pla/reasoning.hpp"

namespace pla::motion {

/// Kinematic bicycle integration settings. The acceleration magnitudes map
/// the discrete speed actions onto the horizon; steering is rate-limited
/// toward the commanded angle.
struct RolloutParams {
    double dt = 0.1;                // s
    double horizon_s = 1.0;         // must be an integer multiple of dt
    double wheelbase_m = 2.7;       // m
    double accelerate_mps2 = 1.0;   // applied for "accelerate"
    double decelerate_mps2 = -1.5;  // applied for "decelerate"
    double max_steer_rate_dps = 15.0;
    double min_speed_mps = 0.0;

    std::size_t steps() const {
        return static_cast<std::size_t>(std::llround(horizon_s / dt));
    }

    void validate() const {
        if (!(dt > 0) || !std::isfinite(dt))
            throw InvariantViolation("rollout.dt", std::to_string(dt), "> 0");
        if (!(horizon_s > 0) || !std::isfinite(horizon_s))
            throw InvariantViolation("rollout.horizon", std::to_string(horizon_s), "> 0");
        const double ratio = horizon_s / dt;
        if (std::fabs(ratio - std::round(ratio)) > 1e-9 || std::llround(ratio) < 1)
            throw InvariantViolation("rollout.horizon", std::to_string(horizon_s),
                                     "integer multiple of dt");
        if (!(wheelbase_m > 0))
            throw InvariantViolation("rollout.wheelbase", std::to_string(wheelbase_m), "> 0");
        if (!(max_steer_rate_dps >= 0))
            throw InvariantViolation("rollout.max_steer_rate", std::to_string(max_steer_rate_dps),
                                     ">= 0");
        if (!(min_speed_mps >= 0))
            throw InvariantViolation("rollout.min_speed", std::to_string(min_speed_mps), ">= 0");
        if (!(accelerate_mps2 >= 0))
            throw InvariantViolation("rollout.accelerate", std::to_string(accelerate_mps2), ">= 0");
        if (!(decelerate_mps2 <= 0))
            throw InvariantViolation("rollout.decelerate", std::to_string(decelerate_mps2), "<= 0");
    }
};

/// One integration step, expressed in the ego frame at rollout start
/// (x forward, y left, heading 0 along +x).
struct Waypoint {
    double t = 0;            // s since rollout start
    double x = 0;            // m
    double y = 0;            // m
    double heading_rad = 0;  // rad, CCW from +x
    double speed_mps = 0;    // m/s

    friend bool operator==(const Waypoint&, const Waypoint&) = default;
};

struct Trajectory {
    std::vector<Waypoint> waypoints;  // first entry at t = dt

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct RolloutResult {
    Trajectory trajectory;
    std::vector<double> steer_deg;  // effective wheel angle after each step, signed (left +)
};

/// Rolls a driving command into a short trajectory with a kinematic bicycle.
/// Per step, in order: speed integrates the commanded acceleration (clamped at
/// min_speed), the wheel angle moves toward the command target at most
/// max_steer_rate * dt, then the pose advances with the new speed, the old
/// heading for x/y, and the new heading rate.
inline RolloutResult rollout(double ego_speed_mps, double current_steer_deg,
                             const reasoning::DrivingCommand& command, const RolloutParams& params) {
    params.validate();
    if (!std::isfinite(ego_speed_mps) || ego_speed_mps < 0)
        throw std::invalid_argument("ego speed must be finite and non-negative");
    if (!std::isfinite(current_steer_deg))
        throw std::invalid_argument("current steer must be finite");

    double accel = 0.0;
    if (command.speed_action == reasoning::SpeedAction::Accelerate) accel = params.accelerate_mps2;
    if (command.speed_action == reasoning::SpeedAction::Decelerate) accel = params.decelerate_mps2;

    const double target_steer = command.signed_angle_deg();
    const double max_step_deg = params.max_steer_rate_dps * params.dt;
    const std::size_t n = params.steps();

    RolloutResult result;
    result.trajectory.waypoints.reserve(n);
    result.steer_deg.reserve(n);

    double speed = ego_speed_mps;
    double steer = current_steer_deg;
    double x = 0, y = 0, heading = 0;
    for (std::size_t k = 1; k <= n; ++k) {
        speed = std::max(params.min_speed_mps, speed + accel * params.dt);
        steer += std::clamp(target_steer - steer, -max_step_deg, max_step_deg);
        const double heading_rate = speed * std::tan(deg_to_rad(steer)) / params.wheelbase_m;
        x += speed * std::cos(heading) * params.dt;
        y += speed * std::sin(heading) * params.dt;
        heading += heading_rate * params.dt;
        result.trajectory.waypoints.push_back(
            Waypoint{static_cast<double>(k) * params.dt, x, y, heading, speed});
        result.steer_deg.push_back(steer);
    }
    return result;
}

}  // namespace pla::motion
