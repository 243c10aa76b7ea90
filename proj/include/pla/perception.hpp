#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "pla/errors.hpp"
#include "pla/geom.hpp"
#include "pla/scene.hpp"

namespace pla::perception {

/// One radar return in the world frame: a 3-D position plus the planar
/// velocity of whatever reflected it.
struct RadarPoint {
    Vec3 position;
    double vx = 0;  // m/s, world frame
    double vy = 0;

    friend bool operator==(const RadarPoint&, const RadarPoint&) = default;
};

/// A cluster of radar returns reduced to a summary object.
struct RadarObject {
    Vec3 centroid;
    Vec3 extent;         // per-axis max - min over the members
    Vec3 mean_velocity;  // z is always 0; radar measures planar motion
    std::size_t member_count = 0;

    friend bool operator==(const RadarObject&, const RadarObject&) = default;
};

/// One labeled box from the LiDAR detector, world frame. Velocity is an
/// optional annotation; radar wins over it when both are present.
struct LidarDetection {
    std::string label;
    Vec3 center;
    Vec3 size;       // (length, width, height)
    double yaw = 0;  // rad, world frame
    std::optional<Vec3> velocity;

    friend bool operator==(const LidarDetection&, const LidarDetection&) = default;
};

struct FusionConfig {
    double cluster_radius_m = 1.5;
    std::size_t min_cluster_points = 2;
    double association_gate_m = 2.0;
    double inclusion_radius_m = scene::kInclusionRadius;

    void validate() const {
        if (!(cluster_radius_m > 0))
            throw InvariantViolation("fusion.cluster_radius", std::to_string(cluster_radius_m), "> 0");
        if (min_cluster_points < 1)
            throw InvariantViolation("fusion.min_cluster_points",
                                     std::to_string(min_cluster_points), ">= 1");
        if (!(association_gate_m > 0))
            throw InvariantViolation("fusion.association_gate", std::to_string(association_gate_m),
                                     "> 0");
        if (!(inclusion_radius_m > 0) || inclusion_radius_m > scene::kInclusionRadius)
            throw InvariantViolation("fusion.inclusion_radius", std::to_string(inclusion_radius_m),
                                     "in (0, 50]");
    }
};

/// Groups points whose Euclidean distance chains within `radius` (connected
/// components of the proximity graph), then drops components smaller than
/// `min_points`. Clusters are ordered by their smallest member index and hold
/// ascending indices, so the result is invariant to how the graph was walked.
inline std::vector<std::vector<std::size_t>> euclidean_cluster(const std::vector<RadarPoint>& points,
                                                               double radius,
                                                               std::size_t min_points) {
    if (!(radius > 0)) throw std::invalid_argument("cluster radius must be positive");
    if (min_points < 1) throw std::invalid_argument("min_points must be at least 1");

    const std::size_t n = points.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    };

    const double r2 = radius * radius;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const Vec3 d = points[i].position - points[j].position;
            if (d.x * d.x + d.y * d.y + d.z * d.z <= r2) {
                const std::size_t ri = find(i), rj = find(j);
                if (ri != rj) parent[std::max(ri, rj)] = std::min(ri, rj);
            }
        }
    }

    std::vector<std::vector<std::size_t>> by_root(n);
    for (std::size_t i = 0; i < n; ++i) by_root[find(i)].push_back(i);

    std::vector<std::vector<std::size_t>> clusters;
    for (auto& members : by_root) {
        if (members.size() >= min_points) clusters.push_back(std::move(members));
    }
    // members are ascending by construction; roots visited in index order keep
    // clusters sorted by smallest member
    return clusters;
}

/// Reduces one cluster of radar points to its summary object.
inline RadarObject fit_cluster(const std::vector<RadarPoint>& members) {
    if (members.empty()) throw EmptyCluster();

    Vec3 sum{}, lo = members.front().position, hi = members.front().position;
    double svx = 0, svy = 0;
    for (const auto& p : members) {
        sum = sum + p.position;
        lo = {std::min(lo.x, p.position.x), std::min(lo.y, p.position.y),
              std::min(lo.z, p.position.z)};
        hi = {std::max(hi.x, p.position.x), std::max(hi.y, p.position.y),
              std::max(hi.z, p.position.z)};
        svx += p.vx;
        svy += p.vy;
    }
    const double inv = 1.0 / static_cast<double>(members.size());
    return RadarObject{inv * sum, hi - lo, Vec3{svx * inv, svy * inv, 0.0}, members.size()};
}

/// Matches LiDAR detections to radar objects greedily by ascending centroid
/// distance: the globally closest pair under the gate is matched first, both
/// sides are retired, and the sweep repeats. Ties break on the lower detection
/// index, then the lower radar index. One entry per detection, in input order;
/// unmatched detections carry nullopt.
inline std::vector<std::pair<std::size_t, std::optional<std::size_t>>> associate(
    const std::vector<LidarDetection>& detections, const std::vector<RadarObject>& radar_objects,
    double gate) {
    if (!(gate > 0)) throw std::invalid_argument("association gate must be positive");

    struct Candidate {
        double dist;
        std::size_t det;
        std::size_t radar;
    };
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < detections.size(); ++i) {
        for (std::size_t j = 0; j < radar_objects.size(); ++j) {
            const double d = (detections[i].center - radar_objects[j].centroid).norm();
            if (d <= gate) candidates.push_back({d, i, j});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        return std::tie(a.dist, a.det, a.radar) < std::tie(b.dist, b.det, b.radar);
    });

    std::vector<std::pair<std::size_t, std::optional<std::size_t>>> result;
    result.reserve(detections.size());
    for (std::size_t i = 0; i < detections.size(); ++i) result.emplace_back(i, std::nullopt);

    std::vector<bool> det_used(detections.size(), false), radar_used(radar_objects.size(), false);
    for (const auto& c : candidates) {
        if (det_used[c.det] || radar_used[c.radar]) continue;
        det_used[c.det] = true;
        radar_used[c.radar] = true;
        result[c.det].second = c.radar;
    }
    return result;
}

/// Ego pose in the world frame.
struct EgoPose {
    Vec3 position;
    double yaw = 0;  // rad, CCW from world +x
};

/// Fuses one frame of world-frame detections and radar objects into the
/// ego-frame scene description. Each detection becomes an obstacle positioned
/// by the rigid transform R(-yaw) * (p - ego); its velocity comes from the
/// associated radar object if any, else from the detection's own annotation,
/// else zero — rotated into ego axes the same way. Obstacles beyond the
/// inclusion radius are dropped.
inline scene::SceneDescription fuse_frame(const std::string& frame_id, const EgoPose& pose,
                                          const Vec3& ego_velocity, const Vec3& ego_dimensions,
                                          const std::vector<LidarDetection>& detections,
                                          const std::vector<RadarObject>& radar_objects,
                                          const FusionConfig& config) {
    config.validate();
    if (!pose.position.finite() || !std::isfinite(pose.yaw))
        throw InvalidPose("ego pose must be finite");
    if (!ego_velocity.finite()) throw InvalidPose("ego velocity must be finite");

    const auto matches = associate(detections, radar_objects, config.association_gate_m);

    std::vector<scene::Obstacle> obstacles;
    obstacles.reserve(detections.size());
    for (const auto& [i, radar_idx] : matches) {
        const LidarDetection& det = detections[i];
        Vec3 rel = det.center - pose.position;
        const Vec3 position = rotate_z(rel, -pose.yaw);  // z untouched by the planar rotation
        if (position.norm() > config.inclusion_radius_m) continue;

        Vec3 velocity{};
        if (radar_idx) {
            velocity = rotate_z(radar_objects[*radar_idx].mean_velocity, -pose.yaw);
        } else if (det.velocity) {
            velocity = rotate_z(*det.velocity, -pose.yaw);
        }
        obstacles.push_back(scene::Obstacle::with_derived(det.label, position, velocity));
    }

    const scene::EgoState ego =
        scene::EgoState::with_derived(ego_dimensions, rotate_z(ego_velocity, -pose.yaw));
    return scene::SceneDescription::create(frame_id, ego, std::move(obstacles));
}

/// Convenience composition: cluster raw radar points, fit each cluster, then
/// fuse with the detections.
inline scene::SceneDescription fuse_frame(const std::string& frame_id, const EgoPose& pose,
                                          const Vec3& ego_velocity, const Vec3& ego_dimensions,
                                          const std::vector<LidarDetection>& detections,
                                          const std::vector<RadarPoint>& radar_points,
                                          const FusionConfig& config) {
    config.validate();
    std::vector<RadarObject> radar_objects;
    for (const auto& cluster : euclidean_cluster(radar_points, config.cluster_radius_m,
                                                 config.min_cluster_points)) {
        std::vector<RadarPoint> members;
        members.reserve(cluster.size());
        for (std::size_t idx : cluster) members.push_back(radar_points[idx]);
        radar_objects.push_back(fit_cluster(members));
    }
    return fuse_frame(frame_id, pose, ego_velocity, ego_dimensions, detections, radar_objects,
                      config);
}

}  // namespace pla::perception
