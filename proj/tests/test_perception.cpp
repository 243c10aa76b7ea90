#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <set>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "pla/perception.hpp"
#include "pla/rng.hpp"
#include "pla/scene.hpp"
#include "support.hpp"

using namespace pla;
using namespace pla::perception;

namespace {

// Oracle: connected components by breadth-first search over the full
// proximity graph, canonicalized the same way euclidean_cluster promises.
std::vector<std::vector<std::size_t>> bfs_components(const std::vector<RadarPoint>& points,
                                                     double radius, std::size_t min_points) {
    const std::size_t n = points.size();
    std::vector<std::vector<std::size_t>> adj(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j && (points[i].position - points[j].position).norm() <= radius)
                adj[i].push_back(j);
        }
    }
    std::vector<bool> seen(n, false);
    std::vector<std::vector<std::size_t>> components;
    for (std::size_t s = 0; s < n; ++s) {
        if (seen[s]) continue;
        std::vector<std::size_t> queue{s}, comp;
        seen[s] = true;
        while (!queue.empty()) {
            const std::size_t v = queue.back();
            queue.pop_back();
            comp.push_back(v);
            for (std::size_t w : adj[v]) {
                if (!seen[w]) {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        if (comp.size() >= min_points) components.push_back(std::move(comp));
    }
    for (auto& c : components) std::sort(c.begin(), c.end());
    std::sort(components.begin(), components.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    return components;
}

// Oracle: association by repeatedly scanning every remaining pair for the
// minimum distance (no candidate list, no pre-sort).
std::vector<std::pair<std::size_t, std::optional<std::size_t>>> scan_associate(
    const std::vector<LidarDetection>& detections, const std::vector<RadarObject>& radar,
    double gate) {
    std::vector<std::pair<std::size_t, std::optional<std::size_t>>> result;
    for (std::size_t i = 0; i < detections.size(); ++i) result.emplace_back(i, std::nullopt);
    std::vector<bool> du(detections.size(), false), ru(radar.size(), false);
    while (true) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        bool found = false;
        for (std::size_t i = 0; i < detections.size(); ++i) {
            if (du[i]) continue;
            for (std::size_t j = 0; j < radar.size(); ++j) {
                if (ru[j]) continue;
                const double d = (detections[i].center - radar[j].centroid).norm();
                if (d <= gate && d < best) {
                    best = d;
                    bi = i;
                    bj = j;
                    found = true;
                }
            }
        }
        if (!found) break;
        du[bi] = true;
        ru[bj] = true;
        result[bi].second = bj;
    }
    return result;
}

std::vector<RadarPoint> random_points(SplitMix64& rng, std::size_t count, double span) {
    std::vector<RadarPoint> pts;
    pts.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        pts.push_back(RadarPoint{{rng.uniform(-span, span), rng.uniform(-span, span),
                                  rng.uniform(-2.0, 2.0)},
                                 rng.uniform(-10.0, 10.0),
                                 rng.uniform(-10.0, 10.0)});
    }
    return pts;
}

}  // namespace

TEST_CASE("clustering groups chained points and honors min_points", "[perception]") {
    std::vector<RadarPoint> pts{
        {{0, 0, 0}, 0, 0},   {{0.9, 0, 0}, 0, 0}, {{1.8, 0, 0}, 0, 0},  // chain
        {{10, 0, 0}, 0, 0},  {{10.4, 0, 0}, 0, 0},                      // pair
        {{-20, 5, 0}, 0, 0},                                            // singleton
    };
    auto clusters = euclidean_cluster(pts, 1.0, 2);
    REQUIRE(clusters.size() == 2);
    CHECK(clusters[0] == std::vector<std::size_t>{0, 1, 2});
    CHECK(clusters[1] == std::vector<std::size_t>{3, 4});

    auto with_singletons = euclidean_cluster(pts, 1.0, 1);
    REQUIRE(with_singletons.size() == 3);
    CHECK(with_singletons[2] == std::vector<std::size_t>{5});

    CHECK(euclidean_cluster({}, 1.0, 1).empty());
    CHECK_THROWS_AS(euclidean_cluster(pts, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(euclidean_cluster(pts, 1.0, 0), std::invalid_argument);
}

TEST_CASE("clustering radius boundary is inclusive", "[perception]") {
    std::vector<RadarPoint> pts{{{0, 0, 0}, 0, 0}, {{1.5, 0, 0}, 0, 0}};
    CHECK(euclidean_cluster(pts, 1.5, 2).size() == 1);
    CHECK(euclidean_cluster(pts, 1.4999, 2).empty());
}

TEST_CASE("clustering matches a breadth-first components oracle", "[perception]") {
    SplitMix64 rng(0x5eedc1u);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t count = 1 + rng.below(200);
        const double span = rng.uniform(3.0, 30.0);
        const double radius = rng.uniform(0.3, 4.0);
        const std::size_t min_points = 1 + rng.below(3);
        const auto pts = random_points(rng, count, span);
        CHECK(euclidean_cluster(pts, radius, min_points) == bfs_components(pts, radius, min_points));
    }
}

TEST_CASE("clustering is invariant under input permutation", "[perception]") {
    SplitMix64 rng(0x9e11u);
    for (int trial = 0; trial < 20; ++trial) {
        const auto pts = random_points(rng, 4 + rng.below(60), 12.0);
        std::vector<std::size_t> perm(pts.size());
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

        std::vector<RadarPoint> shuffled(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) shuffled[perm[i]] = pts[i];

        auto base = euclidean_cluster(pts, 1.8, 2);
        auto moved = euclidean_cluster(shuffled, 1.8, 2);
        // map the shuffled indices back and canonicalize
        for (auto& c : moved) {
            for (auto& idx : c) {
                idx = static_cast<std::size_t>(
                    std::find(perm.begin(), perm.end(), idx) - perm.begin());
            }
            std::sort(c.begin(), c.end());
        }
        std::sort(moved.begin(), moved.end(),
                  [](const auto& a, const auto& b) { return a.front() < b.front(); });
        CHECK(base == moved);
    }
}

TEST_CASE("cluster fit reduces members to centroid, extent, mean velocity", "[perception]") {
    std::vector<RadarPoint> members{{{0, 0, 0}, 1, 0}, {{2, 0, 0}, 3, 0}};
    const RadarObject obj = fit_cluster(members);
    CHECK(obj.centroid == Vec3{1, 0, 0});
    CHECK(obj.extent == Vec3{2, 0, 0});
    CHECK(obj.mean_velocity == Vec3{2, 0, 0});
    CHECK(obj.member_count == 2);

    const RadarObject single = fit_cluster({{{4, -1, 0.5}, -2, 7}});
    CHECK(single.centroid == Vec3{4, -1, 0.5});
    CHECK(single.extent == Vec3{0, 0, 0});
    CHECK(single.mean_velocity == Vec3{-2, 7, 0});
    CHECK(single.member_count == 1);

    CHECK_THROWS_AS(fit_cluster({}), EmptyCluster);
}

TEST_CASE("association matches the near pair and leaves far pairs unmatched", "[perception]") {
    std::vector<LidarDetection> dets{{"vehicle.car", {5, 0, 0}, {4, 2, 1.5}, 0, std::nullopt}};
    std::vector<RadarObject> radar{{{5.2, 0, 0}, {}, {1, 0, 0}, 3}};

    auto matched = associate(dets, radar, 1.0);
    REQUIRE(matched.size() == 1);
    CHECK(matched[0].first == 0);
    REQUIRE(matched[0].second.has_value());
    CHECK(*matched[0].second == 0);

    auto gated = associate(dets, radar, 0.1);
    REQUIRE(gated.size() == 1);
    CHECK_FALSE(gated[0].second.has_value());

    auto no_radar = associate(dets, {}, 2.0);
    REQUIRE(no_radar.size() == 1);
    CHECK_FALSE(no_radar[0].second.has_value());

    CHECK_THROWS_AS(associate(dets, radar, 0.0), std::invalid_argument);
}

TEST_CASE("association is greedy on the globally closest pair", "[perception]") {
    // detection 1 is closest to the lone radar object; detection 0 loses out
    std::vector<LidarDetection> dets{{"vehicle.car", {0, 0, 0}, {}, 0, std::nullopt},
                                     {"vehicle.truck", {1.0, 0, 0}, {}, 0, std::nullopt}};
    std::vector<RadarObject> radar{{{0.8, 0, 0}, {}, {}, 2}};
    auto matched = associate(dets, radar, 2.0);
    CHECK_FALSE(matched[0].second.has_value());
    REQUIRE(matched[1].second.has_value());
    CHECK(*matched[1].second == 0);
}

TEST_CASE("association matches a repeated-minimum-scan oracle", "[perception]") {
    SplitMix64 rng(0xa550cu);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t nd = rng.below(7);
        const std::size_t nr = rng.below(7);
        std::vector<LidarDetection> dets;
        for (std::size_t i = 0; i < nd; ++i)
            dets.push_back({"vehicle.car",
                            {rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(-1, 1)},
                            {4, 2, 1.5},
                            0,
                            std::nullopt});
        std::vector<RadarObject> radar;
        for (std::size_t j = 0; j < nr; ++j)
            radar.push_back({{rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(-1, 1)},
                             {},
                             {rng.uniform(-5, 5), rng.uniform(-5, 5), 0},
                             1 + rng.below(5)});
        const double gate = rng.uniform(0.5, 6.0);
        CHECK(associate(dets, radar, gate) == scan_associate(dets, radar, gate));
    }
}

TEST_CASE("fusion reproduces the pedestrian reference frame", "[perception]") {
    // world-frame setup chosen so the ego-frame obstacle lands at the
    // reference coordinates: ego somewhere away from the origin, rotated
    const double yaw = 0.7;
    const EgoPose pose{{120.5, -40.25, 1.1}, yaw};
    const Vec3 ego_dims{3.99, 2.06, 1.84};
    const Vec3 ego_vel_world = rotate_z({8.28, 0.0, 0.0}, yaw);

    const Vec3 ped_ego{25.17, -21.64, 0.86};
    const Vec3 ped_world = pose.position + rotate_z(ped_ego, yaw);
    const Vec3 ped_vel_world = rotate_z({1.26, -0.06, -0.03}, yaw);

    std::vector<LidarDetection> dets{
        {"human.pedestrian.adult", ped_world, {0.6, 0.6, 1.8}, 0.0, ped_vel_world}};

    const auto sc = fuse_frame("t1", pose, ego_vel_world, ego_dims, dets,
                               std::vector<RadarObject>{}, FusionConfig{});

    REQUIRE(sc.obstacles.size() == 1);
    const auto& obstacle = sc.obstacles.front();
    CHECK(obstacle.position.x == Catch::Approx(25.17).margin(1e-9));
    CHECK(obstacle.position.y == Catch::Approx(-21.64).margin(1e-9));
    CHECK(obstacle.position.z == Catch::Approx(0.86).margin(1e-9));
    CHECK(obstacle.distance == Catch::Approx(33.2047).margin(1e-3));
    CHECK(obstacle.partition == scene::Partition::FrontRight);
    CHECK(obstacle.speed == Catch::Approx(1.2617).margin(1e-3));
    CHECK(sc.ego.speed == Catch::Approx(8.28).margin(1e-9));

    const std::string text = scene::serialize_scene(sc);
    CHECK(text.find("distance_m: 33.20\n") != std::string::npos);
    CHECK(text.find("partition: front-right\n") != std::string::npos);
    CHECK(text.find("speed_mps: 1.26\n") != std::string::npos);
    CHECK(text.find("speed_mps: 8.28\n") != std::string::npos);
}

TEST_CASE("fusion rotates world offsets into the ego frame", "[perception]") {
    // ego faces world +y; an object 10 m to the world north is dead ahead
    const EgoPose pose{{0, 0, 0}, deg_to_rad(90.0)};
    std::vector<LidarDetection> dets{{"vehicle.car", {0, 10, 0}, {4, 2, 1.5}, 0, std::nullopt}};
    const auto sc = fuse_frame("f", pose, rotate_z({5, 0, 0}, deg_to_rad(90.0)), {4, 2, 1.6}, dets,
                               std::vector<RadarObject>{}, FusionConfig{});
    REQUIRE(sc.obstacles.size() == 1);
    CHECK(sc.obstacles[0].position.x == Catch::Approx(10.0).margin(1e-9));
    CHECK(sc.obstacles[0].position.y == Catch::Approx(0.0).margin(1e-9));
    CHECK(sc.obstacles[0].partition == scene::Partition::Front);
    CHECK(sc.ego.velocity.x == Catch::Approx(5.0).margin(1e-9));
    CHECK(sc.ego.velocity.y == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("fusion drops obstacles beyond the inclusion radius", "[perception]") {
    std::vector<LidarDetection> dets{{"vehicle.car", {60, 0, 0}, {4, 2, 1.5}, 0, std::nullopt},
                                     {"vehicle.truck", {30, 0, 0}, {8, 3, 3}, 0, std::nullopt}};
    const auto sc = fuse_frame("f", EgoPose{}, {0, 0, 0}, {4, 2, 1.6}, dets,
                               std::vector<RadarObject>{}, FusionConfig{});
    REQUIRE(sc.obstacles.size() == 1);
    CHECK(sc.obstacles[0].label == "vehicle.truck");
}

TEST_CASE("fusion velocity priority is radar, then annotation, then zero", "[perception]") {
    const double yaw = deg_to_rad(90.0);
    const EgoPose pose{{0, 0, 0}, yaw};
    std::vector<LidarDetection> dets{
        {"vehicle.car", {0, 10, 0}, {4, 2, 1.5}, 0, Vec3{9, 9, 0}},     // radar should win
        {"vehicle.truck", {0, 20, 0}, {8, 3, 3}, 0, Vec3{0, 3, 0.5}},   // annotation fallback
        {"movable_object.barrier", {0, 30, 0}, {2, 0.5, 1}, 0, std::nullopt},  // zero fallback
    };
    std::vector<RadarObject> radar{{{0, 10.3, 0}, {0.4, 0.4, 0}, {0, 2, 0}, 4}};

    const auto sc = fuse_frame("f", pose, {0, 0, 0}, {4, 2, 1.6}, dets, radar, FusionConfig{});
    REQUIRE(sc.obstacles.size() == 3);
    // obstacles sorted by distance: car(10), truck(20), barrier(30)
    CHECK(sc.obstacles[0].velocity.x == Catch::Approx(2.0).margin(1e-9));  // world +y -> ego +x
    CHECK(sc.obstacles[0].velocity.y == Catch::Approx(0.0).margin(1e-9));
    CHECK(sc.obstacles[1].velocity.x == Catch::Approx(3.0).margin(1e-9));
    CHECK(sc.obstacles[1].velocity.z == Catch::Approx(0.5).margin(1e-9));
    CHECK(sc.obstacles[2].velocity == Vec3{0, 0, 0});
}

TEST_CASE("fusion preserves distances under the rigid transform", "[perception]") {
    SplitMix64 rng(0x717abcu);
    for (int trial = 0; trial < 40; ++trial) {
        const EgoPose pose{{rng.uniform(-200, 200), rng.uniform(-200, 200), rng.uniform(-3, 3)},
                           rng.uniform(-3.1, 3.1)};
        std::vector<LidarDetection> dets;
        const std::size_t nd = 1 + rng.below(8);
        for (std::size_t i = 0; i < nd; ++i) {
            const double r = rng.uniform(1.0, 45.0);
            const double a = rng.uniform(-3.14159, 3.14159);
            dets.push_back({"vehicle.car",
                            pose.position + Vec3{r * std::cos(a), r * std::sin(a),
                                                 rng.uniform(-1.5, 1.5)},
                            {4, 2, 1.5},
                            rng.uniform(-3.0, 3.0),
                            std::nullopt});
        }
        const auto sc = fuse_frame("f", pose, {rng.uniform(-10, 10), rng.uniform(-10, 10), 0},
                                   {4, 2, 1.6}, dets, std::vector<RadarObject>{}, FusionConfig{});
        REQUIRE(sc.obstacles.size() == dets.size());

        std::vector<double> world_dists, ego_dists;
        for (const auto& d : dets) world_dists.push_back((d.center - pose.position).norm());
        for (const auto& o : sc.obstacles) ego_dists.push_back(o.distance);
        std::sort(world_dists.begin(), world_dists.end());
        std::sort(ego_dists.begin(), ego_dists.end());
        for (std::size_t i = 0; i < world_dists.size(); ++i)
            CHECK(ego_dists[i] == Catch::Approx(world_dists[i]).margin(1e-9));
    }
}

TEST_CASE("fusion rejects non-finite poses and validates config", "[perception]") {
    std::vector<LidarDetection> dets;
    CHECK_THROWS_AS(fuse_frame("f", EgoPose{{0, 0, 0}, std::nan("")}, {0, 0, 0}, {4, 2, 1.6}, dets,
                               std::vector<RadarObject>{}, FusionConfig{}),
                    InvalidPose);
    FusionConfig bad;
    bad.association_gate_m = 0;
    CHECK_THROWS_AS(fuse_frame("f", EgoPose{}, {0, 0, 0}, {4, 2, 1.6}, dets,
                               std::vector<RadarObject>{}, bad),
                    InvariantViolation);
    FusionConfig wide;
    wide.inclusion_radius_m = 80.0;
    CHECK_THROWS_AS(wide.validate(), InvariantViolation);
}

TEST_CASE("point-level fusion clusters radar and carries its velocity", "[perception]") {
    // five returns around a moving car, one stray return far away
    std::vector<RadarPoint> pts;
    for (double dx : {-0.5, -0.25, 0.0, 0.25, 0.5})
        pts.push_back({{20.0 + dx, 1.0, 0.4}, 6.0, 0.0});
    pts.push_back({{-40, -40, 0}, 1, 1});  // isolated; filtered by min_points

    std::vector<LidarDetection> dets{{"vehicle.car", {20, 1, 0.8}, {4, 2, 1.5}, 0, std::nullopt}};
    const auto sc = fuse_frame("f", EgoPose{}, {0, 0, 0}, {4, 2, 1.6}, dets, pts, FusionConfig{});
    REQUIRE(sc.obstacles.size() == 1);
    CHECK(sc.obstacles[0].velocity.x == Catch::Approx(6.0).margin(1e-12));
    CHECK(sc.obstacles[0].speed == Catch::Approx(6.0).margin(1e-12));
}
