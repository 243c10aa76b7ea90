#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pla/errors.hpp"
#include "pla/geom.hpp"
#include "pla/perception.hpp"
#include "pla/rng.hpp"

namespace pla::scenario {

/// Ego state recorded with a frame, world coordinates.
struct EgoFrame {
    Vec3 position;
    double yaw = 0;  // rad
    Vec3 velocity;
    Vec3 dimensions{3.99, 2.06, 1.84};

    friend bool operator==(const EgoFrame&, const EgoFrame&) = default;
};

struct CameraRef {
    std::string name;
    std::string path;

    friend bool operator==(const CameraRef&, const CameraRef&) = default;
};

/// Recorded future for one frame: ego-frame waypoints at dt spacing plus the
/// speed and wheel angle reached at the horizon. The wheel angle is kept in
/// degrees in memory; the file format stores radians.
struct GroundTruth {
    std::vector<std::array<double, 2>> waypoints_xy;
    double speed_mps = 0;
    double steering_deg = 0;

    friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

/// Everything one pipeline step consumes for a single frame.
struct FrameBundle {
    std::string frame_id;
    std::int64_t timestamp_us = 0;
    EgoFrame ego;
    std::vector<perception::RadarPoint> radar_points;        // world frame
    std::vector<perception::LidarDetection> lidar_detections;  // world frame
    std::vector<CameraRef> camera_images;
    GroundTruth ground_truth;

    friend bool operator==(const FrameBundle&, const FrameBundle&) = default;
};

struct LeadProfile {
    double initial_gap_m = 22.0;
    double cruise_speed_mps = 8.0;
    double min_speed_mps = 3.0;
    double brake_at_s = 0.8;
    double recover_at_s = 2.9;
    double brake_rate_mps2 = 2.5;
    double recover_rate_mps2 = 2.0;
};

struct ScenarioParams {
    std::uint64_t seed = 42;
    std::size_t frame_count = 40;
    double dt_s = 0.1;
    std::size_t gt_count = 10;  // ground-truth waypoints per frame (the plan horizon)

    double ego_cruise_mps = 8.0;
    double ego_min_mps = 3.2;
    double ego_brake_at_s = 1.1;
    double ego_recover_at_s = 3.3;
    double ego_brake_rate_mps2 = 2.2;
    double ego_recover_rate_mps2 = 1.8;

    double lane_shift_m = 0.6;
    double lane_shift_start_x_m = 12.0;
    double lane_shift_length_m = 16.0;

    LeadProfile lead;

    double noise_sigma_m = 0.0;     // gaussian jitter on radar returns
    double detection_dropout = 0.0; // per-detection drop probability

    void validate() const {
        if (frame_count < 1)
            throw InvariantViolation("scenario.frame_count", std::to_string(frame_count), ">= 1");
        if (!(dt_s > 0)) throw InvariantViolation("scenario.dt", std::to_string(dt_s), "> 0");
        if (gt_count < 1)
            throw InvariantViolation("scenario.gt_count", std::to_string(gt_count), ">= 1");
        if (!(noise_sigma_m >= 0))
            throw InvariantViolation("scenario.noise_sigma", std::to_string(noise_sigma_m), ">= 0");
        if (!(detection_dropout >= 0) || detection_dropout >= 1.0)
            throw InvariantViolation("scenario.detection_dropout",
                                     std::to_string(detection_dropout), "in [0, 1)");
        if (!(ego_cruise_mps > 0) || !(lead.cruise_speed_mps > 0))
            throw InvariantViolation("scenario.cruise_speed", "non-positive", "> 0");
        if (!(lane_shift_length_m > 0))
            throw InvariantViolation("scenario.lane_shift_length",
                                     std::to_string(lane_shift_length_m), "> 0");
    }
};

namespace detail {

inline double smoothstep(double u) {
    if (u <= 0) return 0;
    if (u >= 1) return 1;
    return u * u * (3 - 2 * u);
}

inline double cruise_brake_recover(double t, double cruise, double vmin, double brake_at,
                                   double recover_at, double brake_rate, double recover_rate) {
    if (t < brake_at) return cruise;
    if (t < recover_at) return std::max(vmin, cruise - brake_rate * (t - brake_at));
    const double at_recover = std::max(vmin, cruise - brake_rate * (recover_at - brake_at));
    return std::min(cruise, at_recover + recover_rate * (t - recover_at));
}

struct PathState {
    double x = 0, y = 0, heading = 0, speed = 0, steer_deg = 0;
};

/// Integrates a vehicle along the shifted lane with the given speed schedule.
/// Returns one state per step edge, steps+1 entries.
inline std::vector<PathState> integrate_lane_path(const ScenarioParams& p, double x0,
                                                  double cruise, double vmin, double brake_at,
                                                  double recover_at, double brake_rate,
                                                  double recover_rate, std::size_t steps) {
    auto lane_y = [&](double x) {
        return p.lane_shift_m * smoothstep((x - p.lane_shift_start_x_m) / p.lane_shift_length_m);
    };
    auto lane_slope = [&](double x) {
        const double u = (x - p.lane_shift_start_x_m) / p.lane_shift_length_m;
        if (u <= 0 || u >= 1) return 0.0;
        return p.lane_shift_m * 6.0 * u * (1.0 - u) / p.lane_shift_length_m;
    };

    std::vector<PathState> path(steps + 1);
    path[0].x = x0;
    path[0].y = lane_y(x0);
    path[0].heading = std::atan(lane_slope(x0));
    path[0].speed = cruise_brake_recover(0, cruise, vmin, brake_at, recover_at, brake_rate,
                                         recover_rate);
    for (std::size_t k = 1; k <= steps; ++k) {
        const double t = static_cast<double>(k) * p.dt_s;
        const auto& prev = path[k - 1];
        path[k].speed = cruise_brake_recover(t, cruise, vmin, brake_at, recover_at, brake_rate,
                                             recover_rate);
        path[k].x = prev.x + path[k].speed * std::cos(prev.heading) * p.dt_s;
        path[k].y = prev.y + path[k].speed * std::sin(prev.heading) * p.dt_s;
        path[k].heading = std::atan(lane_slope(path[k].x));
    }
    for (std::size_t k = 0; k < steps; ++k) {
        const double rate = (path[k + 1].heading - path[k].heading) / p.dt_s;
        const double v = std::max(path[k + 1].speed, 0.5);
        path[k].steer_deg = rad_to_deg(std::atan(2.7 * rate / v));
    }
    if (steps > 0) path[steps].steer_deg = path[steps - 1].steer_deg;
    return path;
}

}  // namespace detail

inline const std::array<const char*, 7> kCameraNames{
    "CAM_FRONT",      "CAM_FRONT_LEFT", "CAM_FRONT_RIGHT", "CAM_BACK",
    "CAM_BACK_LEFT",  "CAM_BACK_RIGHT", "CAM_FRONT_OVERLAY"};

/// Builds the synthetic following scenario: the ego trails a lead car along a
/// straight road with a gentle lane shift, the lead brakes near an
/// intersection and recovers, a pedestrian crosses ahead, and a row of
/// construction barriers lines the roadside. Same params, same bytes out.
inline std::vector<FrameBundle> generate_following_scenario(const ScenarioParams& params) {
    params.validate();
    SplitMix64 rng(params.seed);

    const std::size_t steps = params.frame_count + params.gt_count;
    const auto ego_path = detail::integrate_lane_path(
        params, 0.0, params.ego_cruise_mps, params.ego_min_mps, params.ego_brake_at_s,
        params.ego_recover_at_s, params.ego_brake_rate_mps2, params.ego_recover_rate_mps2, steps);
    const auto lead_path = detail::integrate_lane_path(
        params, params.lead.initial_gap_m, params.lead.cruise_speed_mps, params.lead.min_speed_mps,
        params.lead.brake_at_s, params.lead.recover_at_s, params.lead.brake_rate_mps2,
        params.lead.recover_rate_mps2, steps);

    const Vec3 ped_start{62.0, -8.0, 0.0};
    const Vec3 ped_vel{-0.3, 1.2, 0.0};
    const double ped_yaw = std::atan2(ped_vel.y, ped_vel.x);

    struct Barrier {
        Vec3 center;
    };
    std::vector<Barrier> barriers;
    for (int k = 0; k < 7; ++k) barriers.push_back({{32.0 + 3.0 * k, -2.4, 0.5}});

    // five-return sampling stencil around a moving object, object frame
    const std::array<std::array<double, 2>, 5> stencil{{{0, 0}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};

    std::vector<FrameBundle> frames;
    frames.reserve(params.frame_count);
    for (std::size_t k = 0; k < params.frame_count; ++k) {
        FrameBundle frame;
        char id[16];
        std::snprintf(id, sizeof id, "f%04zu", k);
        frame.frame_id = id;
        frame.timestamp_us = static_cast<std::int64_t>(k) *
                             static_cast<std::int64_t>(std::llround(params.dt_s * 1e6));

        const auto& ego = ego_path[k];
        frame.ego.position = {ego.x, ego.y, 0.0};
        frame.ego.yaw = ego.heading;
        frame.ego.velocity = {ego.speed * std::cos(ego.heading), ego.speed * std::sin(ego.heading),
                              0.0};

        const double t = static_cast<double>(k) * params.dt_s;
        const auto& lead = lead_path[k];
        const Vec3 lead_center{lead.x, lead.y, 0.8};
        const Vec3 lead_vel{lead.speed * std::cos(lead.heading),
                            lead.speed * std::sin(lead.heading), 0.0};
        const Vec3 ped_center = ped_start + t * ped_vel + Vec3{0, 0, 0.9};

        // radar returns around the two movers; draws happen unconditionally so
        // the stream stays aligned regardless of parameter choices
        auto sample_radar = [&](const Vec3& center, double yaw, double half_l, double half_w,
                                const Vec3& vel) {
            for (const auto& s : stencil) {
                const Vec3 offset = rotate_z({s[0] * half_l / 2, s[1] * half_w / 2, 0}, yaw);
                const double nx = rng.gaussian(0.0, params.noise_sigma_m);
                const double ny = rng.gaussian(0.0, params.noise_sigma_m);
                frame.radar_points.push_back(perception::RadarPoint{
                    {center.x + offset.x + nx, center.y + offset.y + ny, 0.4}, vel.x, vel.y});
            }
        };
        sample_radar(lead_center, lead.heading, 4.5 / 2, 1.9 / 2, lead_vel);
        sample_radar(ped_center, ped_yaw, 0.6 / 2, 0.6 / 2, ped_vel);

        auto keep_detection = [&] { return rng.uniform01() >= params.detection_dropout; };
        if (keep_detection())
            frame.lidar_detections.push_back(perception::LidarDetection{
                "vehicle.car", lead_center, {4.5, 1.9, 1.6}, lead.heading, lead_vel});
        if (keep_detection())
            frame.lidar_detections.push_back(perception::LidarDetection{
                "human.pedestrian.adult", ped_center, {0.6, 0.6, 1.8}, ped_yaw, std::nullopt});
        for (const auto& b : barriers) {
            if (keep_detection())
                frame.lidar_detections.push_back(perception::LidarDetection{
                    "movable_object.barrier", b.center, {1.8, 0.4, 1.0}, 0.0, std::nullopt});
        }

        for (const char* cam : kCameraNames)
            frame.camera_images.push_back(
                CameraRef{cam, "images/" + frame.frame_id + "/" + cam + ".jpg"});

        // the recorded future: ego script positions k+1..k+gt_count, expressed
        // in the ego frame at k, plus the speed and wheel angle at the horizon
        for (std::size_t j = 1; j <= params.gt_count; ++j) {
            const auto& future = ego_path[k + j];
            const Vec3 rel = rotate_z({future.x - ego.x, future.y - ego.y, 0.0}, -ego.heading);
            frame.ground_truth.waypoints_xy.push_back({rel.x, rel.y});
        }
        frame.ground_truth.speed_mps = ego_path[k + params.gt_count].speed;
        frame.ground_truth.steering_deg = ego_path[k + params.gt_count].steer_deg;

        frames.push_back(std::move(frame));
    }
    return frames;
}

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& j, const char* key,
                                   const std::string& path, const std::string& where) {
    const auto it = j.find(key);
    if (it == j.end()) throw SchemaError(path, where + "." + key + " missing");
    return *it;
}

inline double num(const nlohmann::json& j, const std::string& path, const std::string& where) {
    if (!j.is_number()) throw SchemaError(path, where + " must be a number");
    return j.get<double>();
}

inline Vec3 vec3(const nlohmann::json& j, const std::string& path, const std::string& where) {
    if (!j.is_array() || j.size() != 3) throw SchemaError(path, where + " must be [x, y, z]");
    return {num(j[0], path, where), num(j[1], path, where), num(j[2], path, where)};
}

inline nlohmann::json to_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

}  // namespace detail

/// Serializes frames to the bundle file format. Angles are stored in radians;
/// nlohmann's sorted keys and shortest-round-trip doubles make the bytes a
/// pure function of the frames.
inline void save_frames(const std::vector<FrameBundle>& frames, const std::filesystem::path& path) {
    nlohmann::json out{{"version", "pla-frames/1"}, {"frames", nlohmann::json::array()}};
    for (const auto& f : frames) {
        nlohmann::json radar = nlohmann::json::array();
        for (const auto& p : f.radar_points)
            radar.push_back({{"position", detail::to_json(p.position)},
                             {"velocity", nlohmann::json::array({p.vx, p.vy})}});
        nlohmann::json dets = nlohmann::json::array();
        for (const auto& d : f.lidar_detections) {
            nlohmann::json det{{"label", d.label},
                               {"center", detail::to_json(d.center)},
                               {"size", detail::to_json(d.size)},
                               {"yaw", d.yaw}};
            det["velocity"] = d.velocity ? detail::to_json(*d.velocity) : nlohmann::json(nullptr);
            dets.push_back(std::move(det));
        }
        nlohmann::json cams = nlohmann::json::array();
        for (const auto& c : f.camera_images) cams.push_back({{"name", c.name}, {"path", c.path}});
        nlohmann::json waypoints = nlohmann::json::array();
        for (const auto& w : f.ground_truth.waypoints_xy)
            waypoints.push_back(nlohmann::json::array({w[0], w[1]}));

        out["frames"].push_back(
            {{"frame_id", f.frame_id},
             {"timestamp", f.timestamp_us},
             {"ego",
              {{"position", detail::to_json(f.ego.position)},
               {"yaw", f.ego.yaw},
               {"velocity", detail::to_json(f.ego.velocity)},
               {"dimensions", detail::to_json(f.ego.dimensions)}}},
             {"radar_points", radar},
             {"lidar_detections", dets},
             {"camera_images", cams},
             {"ground_truth",
              {{"waypoints", waypoints},
               {"speed", f.ground_truth.speed_mps},
               {"steering", deg_to_rad(f.ground_truth.steering_deg)}}}});
    }

    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open " + path.string() + " for writing");
    file << out.dump(1, '\t') << '\n';
    if (!file) throw IoError("failed writing " + path.string());
}

/// Loads and validates a bundle file. Structural problems raise SchemaError
/// naming the file and the offending field; unreadable files raise IoError.
inline std::vector<FrameBundle> load_frames(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << file.rdbuf();
    if (file.bad()) throw IoError("failed reading " + path.string());

    const auto doc = nlohmann::json::parse(buffer.str(), nullptr, false);
    const std::string p = path.string();
    if (doc.is_discarded()) throw SchemaError(p, "not valid JSON");
    if (!doc.is_object()) throw SchemaError(p, "top level must be an object");
    if (detail::field(doc, "version", p, "$") != "pla-frames/1")
        throw SchemaError(p, "version must be \"pla-frames/1\"");
    const auto& frames_j = detail::field(doc, "frames", p, "$");
    if (!frames_j.is_array()) throw SchemaError(p, "frames must be an array");

    std::vector<FrameBundle> frames;
    frames.reserve(frames_j.size());
    std::size_t waypoint_count = 0;
    for (std::size_t i = 0; i < frames_j.size(); ++i) {
        const std::string where = "frames[" + std::to_string(i) + "]";
        const auto& fj = frames_j[i];
        if (!fj.is_object()) throw SchemaError(p, where + " must be an object");

        FrameBundle f;
        const auto& id_j = detail::field(fj, "frame_id", p, where);
        if (!id_j.is_string() || id_j.get<std::string>().empty())
            throw SchemaError(p, where + ".frame_id must be a non-empty string");
        f.frame_id = id_j.get<std::string>();

        const auto& ts_j = detail::field(fj, "timestamp", p, where);
        if (!ts_j.is_number_integer()) throw SchemaError(p, where + ".timestamp must be an integer");
        f.timestamp_us = ts_j.get<std::int64_t>();
        if (i > 0 && f.timestamp_us <= frames.back().timestamp_us)
            throw SchemaError(p, where + ".timestamp must increase strictly");

        const auto& ego_j = detail::field(fj, "ego", p, where);
        f.ego.position = detail::vec3(detail::field(ego_j, "position", p, where + ".ego"), p,
                                      where + ".ego.position");
        f.ego.yaw = detail::num(detail::field(ego_j, "yaw", p, where + ".ego"), p,
                                where + ".ego.yaw");
        f.ego.velocity = detail::vec3(detail::field(ego_j, "velocity", p, where + ".ego"), p,
                                      where + ".ego.velocity");
        f.ego.dimensions = detail::vec3(detail::field(ego_j, "dimensions", p, where + ".ego"), p,
                                        where + ".ego.dimensions");

        const auto& radar_j = detail::field(fj, "radar_points", p, where);
        if (!radar_j.is_array()) throw SchemaError(p, where + ".radar_points must be an array");
        for (std::size_t r = 0; r < radar_j.size(); ++r) {
            const std::string rp = where + ".radar_points[" + std::to_string(r) + "]";
            const auto& rj = radar_j[r];
            const auto& vel = detail::field(rj, "velocity", p, rp);
            if (!vel.is_array() || vel.size() != 2)
                throw SchemaError(p, rp + ".velocity must be [vx, vy]");
            f.radar_points.push_back(perception::RadarPoint{
                detail::vec3(detail::field(rj, "position", p, rp), p, rp + ".position"),
                detail::num(vel[0], p, rp + ".velocity"), detail::num(vel[1], p, rp + ".velocity")});
        }

        const auto& dets_j = detail::field(fj, "lidar_detections", p, where);
        if (!dets_j.is_array()) throw SchemaError(p, where + ".lidar_detections must be an array");
        for (std::size_t d = 0; d < dets_j.size(); ++d) {
            const std::string dp = where + ".lidar_detections[" + std::to_string(d) + "]";
            const auto& dj = dets_j[d];
            const auto& label_j = detail::field(dj, "label", p, dp);
            if (!label_j.is_string()) throw SchemaError(p, dp + ".label must be a string");
            perception::LidarDetection det;
            det.label = label_j.get<std::string>();
            det.center = detail::vec3(detail::field(dj, "center", p, dp), p, dp + ".center");
            det.size = detail::vec3(detail::field(dj, "size", p, dp), p, dp + ".size");
            det.yaw = detail::num(detail::field(dj, "yaw", p, dp), p, dp + ".yaw");
            const auto& vel_j = detail::field(dj, "velocity", p, dp);
            if (!vel_j.is_null()) det.velocity = detail::vec3(vel_j, p, dp + ".velocity");
            f.lidar_detections.push_back(std::move(det));
        }

        const auto& cams_j = detail::field(fj, "camera_images", p, where);
        if (!cams_j.is_array()) throw SchemaError(p, where + ".camera_images must be an array");
        for (std::size_t c = 0; c < cams_j.size(); ++c) {
            const std::string cp = where + ".camera_images[" + std::to_string(c) + "]";
            const auto& cj = cams_j[c];
            const auto& name_j = detail::field(cj, "name", p, cp);
            const auto& path_j = detail::field(cj, "path", p, cp);
            if (!name_j.is_string() || !path_j.is_string())
                throw SchemaError(p, cp + " name and path must be strings");
            f.camera_images.push_back(CameraRef{name_j.get<std::string>(), path_j.get<std::string>()});
        }
        if (f.camera_images.size() > 7)
            throw SchemaError(p, where + ".camera_images allows at most 7 entries");

        const auto& gt_j = detail::field(fj, "ground_truth", p, where);
        const auto& wps_j = detail::field(gt_j, "waypoints", p, where + ".ground_truth");
        if (!wps_j.is_array() || wps_j.empty())
            throw SchemaError(p, where + ".ground_truth.waypoints must be a non-empty array");
        for (std::size_t w = 0; w < wps_j.size(); ++w) {
            const auto& wj = wps_j[w];
            if (!wj.is_array() || wj.size() != 2)
                throw SchemaError(p, where + ".ground_truth.waypoints[" + std::to_string(w) +
                                         "] must be [x, y]");
            f.ground_truth.waypoints_xy.push_back(
                {detail::num(wj[0], p, where + ".ground_truth.waypoints"),
                 detail::num(wj[1], p, where + ".ground_truth.waypoints")});
        }
        if (i == 0)
            waypoint_count = f.ground_truth.waypoints_xy.size();
        else if (f.ground_truth.waypoints_xy.size() != waypoint_count)
            throw SchemaError(p, where + ".ground_truth.waypoints count differs across frames");
        f.ground_truth.speed_mps = detail::num(
            detail::field(gt_j, "speed", p, where + ".ground_truth"), p,
            where + ".ground_truth.speed");
        f.ground_truth.steering_deg = rad_to_deg(detail::num(
            detail::field(gt_j, "steering", p, where + ".ground_truth"), p,
            where + ".ground_truth.steering"));

        frames.push_back(std::move(f));
    }
    return frames;
}

}  // namespace pla::scenario
