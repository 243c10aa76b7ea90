#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pla/errors.hpp"
#include "pla/geom.hpp"
#include "pla/scene.hpp"

namespace pla::reasoning {

/// Task context handed to the reasoning backend alongside the scene.
struct TaskSpec {
    std::string task_text = "follow the lead vehicle";
    std::string lane_info = "keep to the current lane";
    double lateral_bound_m = 1.0;
    double steering_rate_min_dps = 5.0;
    double steering_rate_max_dps = 15.0;
    double horizon_s = 1.0;

    void validate() const {
        if (!(lateral_bound_m > 0))
            throw InvariantViolation("task.lateral_bound", std::to_string(lateral_bound_m), "> 0");
        if (!(steering_rate_min_dps > 0) || !(steering_rate_min_dps <= steering_rate_max_dps))
            throw InvariantViolation("task.steering_rate", std::to_string(steering_rate_min_dps),
                                     "0 < min <= max");
        if (!(horizon_s > 0)) throw InvariantViolation("task.horizon", std::to_string(horizon_s), "> 0");
    }
};

struct PromptBundle {
    static constexpr std::size_t kMaxImageRefs = 7;  // six surround views plus one overlay target

    std::string system_text;
    std::string user_text;
    std::vector<std::pair<std::string, std::string>> image_refs;  // (camera name, path or URI)

    friend bool operator==(const PromptBundle&, const PromptBundle&) = default;
};

enum class SpeedAction { Accelerate, Decelerate, Maintain };
enum class SteeringDirection { Left, Right, Straight };

inline std::string_view to_string(SpeedAction a) {
    switch (a) {
        case SpeedAction::Accelerate: return "accelerate";
        case SpeedAction::Decelerate: return "decelerate";
        default: return "maintain";
    }
}

inline std::string_view to_string(SteeringDirection d) {
    switch (d) {
        case SteeringDirection::Left: return "left";
        case SteeringDirection::Right: return "right";
        default: return "straight";
    }
}

inline std::optional<SpeedAction> speed_action_from_string(std::string_view s) {
    if (s == "accelerate") return SpeedAction::Accelerate;
    if (s == "decelerate") return SpeedAction::Decelerate;
    if (s == "maintain") return SpeedAction::Maintain;
    return std::nullopt;
}

inline std::optional<SteeringDirection> steering_direction_from_string(std::string_view s) {
    if (s == "left") return SteeringDirection::Left;
    if (s == "right") return SteeringDirection::Right;
    if (s == "straight") return SteeringDirection::Straight;
    return std::nullopt;
}

inline constexpr double kMaxSteeringAngleDeg = 45.0;

/// One decision from the reasoning backend: a discrete speed action plus a
/// steering direction and target wheel angle for the plan horizon.
struct DrivingCommand {
    SpeedAction speed_action = SpeedAction::Maintain;
    SteeringDirection steering_direction = SteeringDirection::Straight;
    double steering_angle_deg = 0.0;
    std::string explanation;

    friend bool operator==(const DrivingCommand&, const DrivingCommand&) = default;

    /// Steering angle with the frame's sign convention: left positive.
    double signed_angle_deg() const {
        switch (steering_direction) {
            case SteeringDirection::Left: return steering_angle_deg;
            case SteeringDirection::Right: return -steering_angle_deg;
            default: return 0.0;
        }
    }

    static DrivingCommand checked(SpeedAction action, SteeringDirection direction, double angle_deg,
                                  std::string explanation) {
        if (!std::isfinite(angle_deg) || angle_deg < 0.0 || angle_deg > kMaxSteeringAngleDeg)
            throw SchemaViolation("steering_angle " + std::to_string(angle_deg) + " outside [0, 45]");
        if (angle_deg == 0.0) direction = SteeringDirection::Straight;
        if (direction == SteeringDirection::Straight && angle_deg != 0.0)
            throw SchemaViolation("steering_direction is straight but steering_angle is nonzero");
        return DrivingCommand{action, direction, angle_deg, std::move(explanation)};
    }
};

/// Renders a command as the wire-format JSON object.
inline std::string command_to_json(const DrivingCommand& cmd) {
    nlohmann::json j{{"speed_action", to_string(cmd.speed_action)},
                     {"steering_direction", to_string(cmd.steering_direction)},
                     {"steering_angle", cmd.steering_angle_deg},
                     {"explanation", cmd.explanation}};
    return j.dump();
}

namespace detail {

inline std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

/// Finds the first balanced JSON object in free-form text, skipping over
/// string literals and escapes while matching braces.
inline std::optional<std::string_view> first_json_object(std::string_view text) {
    for (std::size_t start = text.find('{'); start != std::string_view::npos;
         start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (escaped)
                    escaped = false;
                else if (c == '\\')
                    escaped = true;
                else if (c == '"')
                    in_string = false;
                continue;
            }
            if (c == '"')
                in_string = true;
            else if (c == '{')
                ++depth;
            else if (c == '}' && --depth == 0)
                return text.substr(start, i - start + 1);
        }
    }
    return std::nullopt;
}

}  // namespace detail

inline constexpr std::string_view kSceneBlockOpen = "<<<SCENE\n";
inline constexpr std::string_view kSceneBlockClose = "SCENE>>>";

/// Builds the prompt pair for a scene and task. Pure: equal inputs produce
/// byte-identical bundles. The serialized scene is embedded verbatim between
/// the SCENE markers so offline backends can recover it.
inline PromptBundle build_prompt(const scene::SceneDescription& scene, const TaskSpec& task,
                                 std::vector<std::pair<std::string, std::string>> image_refs = {}) {
    task.validate();
    if (image_refs.size() > PromptBundle::kMaxImageRefs)
        throw InvariantViolation("prompt.image_refs", std::to_string(image_refs.size()),
                                 "<= " + std::to_string(PromptBundle::kMaxImageRefs));

    PromptBundle bundle;
    bundle.system_text =
        "You are the reasoning core of an autonomous vehicle. Decide the next driving "
        "action from the scene description, the task, and the camera views.\n"
        "Constraints: stay within \xc2\xb1" +
        detail::fmt("%.2f", task.lateral_bound_m) + " m of the lane center; steering rate " +
        detail::fmt("%.1f", task.steering_rate_min_dps) + "\xe2\x80\x93" +
        detail::fmt("%.1f", task.steering_rate_max_dps) + " deg/s; plan the next " +
        detail::fmt("%.1f", task.horizon_s) +
        " s.\n"
        "Assess the risks, then respond with exactly one JSON object and no other text. Keys: "
        "speed_action (\"accelerate\"|\"decelerate\"|\"maintain\"), steering_direction "
        "(\"left\"|\"right\"|\"straight\"), steering_angle (degrees, 0 to 45, 0 when straight), "
        "explanation (one sentence of reasoning).\n";

    std::string cams;
    for (const auto& [name, _] : image_refs) {
        if (!cams.empty()) cams += ", ";
        cams += name;
    }
    if (cams.empty()) cams = "(none)";

    bundle.user_text = "Task: " + task.task_text + "\nLane info: " + task.lane_info +
                       "\nCamera views: " + cams + "\n\nScene:\n" + std::string(kSceneBlockOpen) +
                       scene::serialize_scene(scene) + std::string(kSceneBlockClose) +
                       "\n\nReturn the JSON object now.\n";
    bundle.image_refs = std::move(image_refs);
    return bundle;
}

/// Recovers the scene text a prompt embeds. Inverse of the embedding done by
/// build_prompt; used by the offline backends.
inline std::string extract_scene_block(std::string_view user_text) {
    const std::size_t open = user_text.find(kSceneBlockOpen);
    if (open == std::string_view::npos) throw Error("prompt does not embed a scene block");
    const std::size_t body = open + kSceneBlockOpen.size();
    const std::size_t close = user_text.find(kSceneBlockClose, body);
    if (close == std::string_view::npos) throw Error("prompt scene block is not terminated");
    return std::string(user_text.substr(body, close - body));
}

/// Extracts and validates a driving command from raw backend text. Tolerates
/// fenced code blocks and surrounding prose; the first balanced JSON object
/// wins.
inline DrivingCommand parse_command(std::string_view raw) {
    auto object_text = detail::first_json_object(raw);
    if (!object_text) throw MalformedResponse("no JSON object in response");

    const nlohmann::json j = nlohmann::json::parse(*object_text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw MalformedResponse("unparseable JSON object");

    auto require = [&](const char* key) -> const nlohmann::json& {
        auto it = j.find(key);
        if (it == j.end()) throw SchemaViolation(std::string("missing key '") + key + "'");
        return *it;
    };

    const auto& action_j = require("speed_action");
    const auto& direction_j = require("steering_direction");
    const auto& angle_j = require("steering_angle");
    const auto& explanation_j = require("explanation");

    if (!action_j.is_string()) throw SchemaViolation("speed_action must be a string");
    if (!direction_j.is_string()) throw SchemaViolation("steering_direction must be a string");
    if (!angle_j.is_number()) throw SchemaViolation("steering_angle must be a number");
    if (!explanation_j.is_string()) throw SchemaViolation("explanation must be a string");

    auto action = speed_action_from_string(action_j.get<std::string>());
    if (!action) throw SchemaViolation("unknown speed_action '" + action_j.get<std::string>() + "'");
    auto direction = steering_direction_from_string(direction_j.get<std::string>());
    if (!direction)
        throw SchemaViolation("unknown steering_direction '" + direction_j.get<std::string>() + "'");

    return DrivingCommand::checked(*action, *direction, angle_j.get<double>(),
                                   explanation_j.get<std::string>());
}

/// Cruise ceiling for the rule controller; above this it stops accelerating.
inline constexpr double kCruiseSpeedCap = 12.0;

/// Deterministic follower controller. Stands in for the language model so the
/// whole pipeline runs offline: follow the nearest vehicle in the front
/// sectors, keep a 2-3 s time gap, steer back when the target drifts beyond
/// the lateral bound.
inline DrivingCommand rule_plan(const scene::SceneDescription& sc, const TaskSpec& task) {
    task.validate();

    const scene::Obstacle* target = nullptr;
    for (const auto& o : sc.obstacles) {
        if (!std::string_view(o.label).starts_with("vehicle.")) continue;
        if (o.partition != scene::Partition::Front && o.partition != scene::Partition::FrontLeft &&
            o.partition != scene::Partition::FrontRight)
            continue;
        if (!target || o.distance < target->distance) target = &o;
    }

    const double ego_speed = sc.ego.speed;
    SpeedAction action;
    if (!target) {
        action = ego_speed < kCruiseSpeedCap ? SpeedAction::Accelerate : SpeedAction::Maintain;
    } else {
        const double gap = target->distance;
        if (gap < 2.0 * ego_speed * task.horizon_s)
            action = SpeedAction::Decelerate;
        else if (gap > 3.0 * ego_speed * task.horizon_s)
            action = ego_speed < kCruiseSpeedCap ? SpeedAction::Accelerate : SpeedAction::Maintain;
        else
            action = SpeedAction::Maintain;
    }

    SteeringDirection direction = SteeringDirection::Straight;
    double angle = 0.0;
    if (target && std::fabs(target->position.y) > task.lateral_bound_m) {
        direction = target->position.y > 0 ? SteeringDirection::Left : SteeringDirection::Right;
        angle = std::min(rad_to_deg(std::atan2(std::fabs(target->position.y), target->position.x)),
                         task.steering_rate_max_dps * task.horizon_s);
        // while correcting laterally, hold speed rather than accelerate
        if (action == SpeedAction::Accelerate) action = SpeedAction::Maintain;
    }

    std::string explanation;
    if (target) {
        explanation = "lead " + target->label + " at " + detail::fmt("%.2f", target->distance) +
                      " m, lateral offset " + detail::fmt("%.2f", target->position.y) + " m";
    } else {
        explanation = "no lead vehicle in the front sectors";
    }

    return DrivingCommand::checked(action, direction, angle, std::move(explanation));
}

}  // namespace pla::reasoning
