#pragma once

// Shared generators and mutators for the unit and acceptance suites. These
// build inputs only through the public factories, so every generated scene is
// valid by construction.

#include <string>
#include <vector>

#include "pla/rng.hpp"
#include "pla/scene.hpp"

namespace pla_test {

inline const std::vector<std::string>& label_pool() {
    static const std::vector<std::string> pool = {
        "vehicle.car",
        "vehicle.truck",
        "human.pedestrian.adult",
        "movable_object.barrier",
        "movable_object.trafficcone",
        "unknown",
        "custom.sensor artifact",  // labels may contain spaces
    };
    return pool;
}

inline pla::scene::Obstacle random_obstacle(pla::SplitMix64& rng) {
    const double bearing = rng.uniform(-M_PI, M_PI);
    const double planar = rng.uniform(0.1, 49.5);
    pla::Vec3 position{planar * std::cos(bearing), planar * std::sin(bearing), rng.uniform(-2.0, 3.0)};
    pla::Vec3 velocity{rng.uniform(-15.0, 15.0), rng.uniform(-15.0, 15.0), rng.uniform(-1.0, 1.0)};
    const auto& pool = label_pool();
    return pla::scene::Obstacle::with_derived(pool[rng.below(pool.size())], position, velocity);
}

inline pla::scene::SceneDescription random_scene(pla::SplitMix64& rng, int max_obstacles = 12) {
    pla::Vec3 dims{rng.uniform(0.5, 6.0), rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.5)};
    pla::Vec3 ego_vel{rng.uniform(-15.0, 15.0), rng.uniform(-15.0, 15.0), rng.uniform(-0.5, 0.5)};
    auto ego = pla::scene::EgoState::with_derived(dims, ego_vel);

    std::vector<pla::scene::Obstacle> obstacles;
    const auto count = rng.below(static_cast<std::uint64_t>(max_obstacles) + 1);
    for (std::uint64_t i = 0; i < count; ++i) obstacles.push_back(random_obstacle(rng));

    std::string frame_id = "scene-" + std::to_string(rng.below(1000000));
    return pla::scene::SceneDescription::create(frame_id, ego, std::move(obstacles));
}

/// Applies one seeded, guaranteed-detectable corruption to serialized scene
/// text. Every mutation either breaks the grammar or moves a cross-checked
/// number far beyond the parser's quantization slack.
inline std::string mutate_scene_text(const std::string& text, pla::SplitMix64& rng) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string::npos) nl = text.size();
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }

    auto rejoin = [](const std::vector<std::string>& ls) {
        std::string out;
        for (const auto& l : ls) {
            out += l;
            out += '\n';
        }
        return out;
    };

    auto find_line = [&](const std::string& prefix, std::size_t nth) -> std::size_t {
        std::size_t seen = 0;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (lines[i].starts_with(prefix) && seen++ == nth) return i;
        }
        return lines.size();
    };

    auto bump_value = [&](std::size_t idx, double delta) {
        const std::string& line = lines[idx];
        std::size_t colon = line.find(": ");
        double v = std::strtod(line.c_str() + colon + 2, nullptr);
        lines[idx] = line.substr(0, colon + 2) + pla::scene::format_fixed2(v + delta);
    };

    const bool has_obstacle = find_line("[obstacle 1]", 0) < lines.size();
    switch (rng.below(9)) {
        case 0:  // drop a line
            lines.erase(lines.begin() + static_cast<long>(rng.below(lines.size())));
            break;
        case 1:  // duplicate a line
        {
            auto idx = static_cast<long>(rng.below(lines.size()));
            lines.insert(lines.begin() + idx, lines[static_cast<std::size_t>(idx)]);
            break;
        }
        case 2:  // corrupt a key separator
        {
            std::size_t idx = find_line("speed_mps: ", 0);
            lines[idx][lines[idx].find(':')] = ';';
            break;
        }
        case 3:  // tamper a speed far beyond slack
            bump_value(find_line("speed_mps: ", rng.below(has_obstacle ? 2 : 1)), 5.0);
            break;
        case 4:  // tamper a distance far beyond slack
            bump_value(find_line("distance_m: ", rng.below(has_obstacle ? 2 : 1)), 7.0);
            break;
        case 5:  // flip a partition to the opposite sector
            if (has_obstacle) {
                std::size_t idx = find_line("partition: ", 0);
                auto stated = pla::scene::partition_from_string(lines[idx].substr(11));
                auto flipped = static_cast<pla::scene::Partition>((static_cast<int>(*stated) + 4) % 8);
                lines[idx] = "partition: " + std::string(pla::scene::to_string(flipped));
            } else {
                lines.erase(lines.begin() + 2);
            }
            break;
        case 6:  // obstacle_count off by one
        {
            std::size_t idx = find_line("obstacle_count: ", 0);
            long n = std::strtol(lines[idx].c_str() + 16, nullptr, 10);
            lines[idx] = "obstacle_count: " + std::to_string(n + 1);
            break;
        }
        case 7:  // truncate mid-file
            return text.substr(0, text.size() / 2);
        case 8:  // wrong header
            lines[0] = "# pla-scene v2";
            break;
    }
    return rejoin(lines);
}

}  // namespace pla_test
