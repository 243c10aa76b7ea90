// Minimal tour: generate a short scenario, fuse one frame, ask the rule
// backend for a command, roll it out, and score the prediction.

#include <cstdio>

#include "pla/backend.hpp"
#include "pla/evaluation.hpp"
#include "pla/motion.hpp"
#include "pla/perception.hpp"
#include "pla/reasoning.hpp"
#include "pla/scenario.hpp"
#include "pla/scene.hpp"

int main() {
    using namespace pla;

    scenario::ScenarioParams params;
    params.frame_count = 12;
    const auto frames = scenario::generate_following_scenario(params);
    const auto& frame = frames[5];

    perception::EgoPose pose{frame.ego.position, frame.ego.yaw};
    const auto scene = perception::fuse_frame(frame.frame_id, pose, frame.ego.velocity,
                                              frame.ego.dimensions, frame.lidar_detections,
                                              frame.radar_points, {});
    std::printf("--- structured scene (%s) ---\n%s\n", frame.frame_id.c_str(),
                scene::serialize_scene(scene).c_str());

    reasoning::TaskSpec task;
    const auto prompt = reasoning::build_prompt(scene, task);
    reasoning::RuleBackend backend(task);
    const std::string raw = backend.plan(prompt);
    const auto command = reasoning::parse_command(raw);
    std::printf("--- %s backend command ---\n%s\n\n", backend.name().c_str(),
                reasoning::command_to_json(command).c_str());

    const auto rolled = motion::rollout(scene.ego.speed, 0.0, command, {});
    const auto& last = rolled.trajectory.waypoints.back();
    std::printf("--- 1 s rollout ---\nendpoint (%.2f, %.2f) m, heading %.3f rad, speed %.2f m/s\n",
                last.x, last.y, last.heading_rad, last.speed_mps);

    std::vector<eval::Point2> predicted, actual;
    for (const auto& wp : rolled.trajectory.waypoints) predicted.push_back({wp.x, wp.y});
    for (const auto& wp : frame.ground_truth.waypoints_xy) actual.push_back({wp[0], wp[1]});
    std::printf("ADE %.3f m, FDE %.3f m against the scripted ground truth\n",
                eval::ade(predicted, actual), eval::fde(predicted, actual));
    return 0;
}
