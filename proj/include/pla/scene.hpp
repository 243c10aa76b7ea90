#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "pla/errors.hpp"
#include "pla/geom.hpp"

namespace pla::scene {

/// Obstacles farther than this from the ego origin are not part of a scene.
inline constexpr double kInclusionRadius = 50.0;

/// Consistency slack for derived fields (distance vs ‖position‖, speed vs
/// ‖velocity‖) on freshly constructed scenes, where both sides carry at most
/// one two-decimal rounding step.
inline constexpr double kDerivedSlack = 0.005;

/// Consistency slack applied when validating parsed files. Both operands of a
/// derived-field check are independently quantized there: the scalar moves by
/// up to 0.005 and the vector norm by up to √3·0.005, so 0.015 is the tightest
/// bound that admits every legitimately quantized scene.
inline constexpr double kFileSlack = 0.015;

/// Max planar displacement of a point whose x and y were each rounded to two
/// decimals (√2·0.005, padded).
inline constexpr double kPlanarQuantShift = 0.0075;

// ---------------------------------------------------------------------------
// two-decimal number grid
// ---------------------------------------------------------------------------

/// Nearest value on the 0.01 grid, halves away from zero. Never returns -0.
inline double quantize2(double v) {
    return static_cast<double>(std::llround(v * 100.0)) / 100.0;
}

/// Renders v with exactly two decimals, matching quantize2 ("-0.00" is
/// normalized to "0.00").
inline std::string format_fixed2(double v) {
    long long n = std::llround(v * 100.0);
    const bool neg = n < 0;
    unsigned long long m = neg ? -static_cast<unsigned long long>(n) : static_cast<unsigned long long>(n);
    std::string digits = std::to_string(m / 100);
    char frac[4];
    std::snprintf(frac, sizeof frac, "%02llu", m % 100);
    return (neg ? "-" : "") + digits + "." + frac;
}

// ---------------------------------------------------------------------------
// partitions
// ---------------------------------------------------------------------------

/// Eight 45° bearing sectors around the ego vehicle, counterclockwise from
/// straight ahead. The frame is x forward, y left, so negative y is the
/// vehicle's right.
enum class Partition {
    Front,
    FrontLeft,
    Left,
    BackLeft,
    Back,
    BackRight,
    Right,
    FrontRight,
};

inline constexpr std::array<std::string_view, 8> kPartitionNames = {
    "front", "front-left", "left", "back-left", "back", "back-right", "right", "front-right"};

inline std::string_view to_string(Partition p) { return kPartitionNames[static_cast<int>(p)]; }

inline std::optional<Partition> partition_from_string(std::string_view s) {
    for (int i = 0; i < 8; ++i) {
        if (kPartitionNames[i] == s) return static_cast<Partition>(i);
    }
    return std::nullopt;
}

/// Sector of the bearing atan2(y, x). Boundaries sit at odd multiples of
/// 22.5° and resolve to the counterclockwise-adjacent sector.
inline Partition partition_of(double x, double y) {
    if (x == 0.0 && y == 0.0) throw DegenerateInput("partition undefined at the origin");
    const double theta = std::atan2(y, x);
    int idx = static_cast<int>(std::floor((theta + M_PI / 8.0) / (M_PI / 4.0)));
    idx = ((idx % 8) + 8) % 8;
    return static_cast<Partition>(idx);
}

inline Partition partition_of(const Vec3& position) { return partition_of(position.x, position.y); }

/// True when `stated` is the sector of (x, y) or could be after undoing a
/// two-decimal rounding of x and y. Used when validating parsed files, where
/// positions near a sector boundary may have been nudged across it.
inline bool partition_consistent(Partition stated, double x, double y) {
    if (x == 0.0 && y == 0.0) return false;
    if (partition_of(x, y) == stated) return true;
    const double r = std::hypot(x, y);
    if (r <= kPlanarQuantShift) return true;
    const double wiggle = std::asin(std::min(1.0, kPlanarQuantShift / r));
    const double theta = std::atan2(y, x);
    const double center = static_cast<int>(stated) * (M_PI / 4.0);
    const double dist = std::fabs(std::remainder(theta - center, 2.0 * M_PI));
    return dist <= M_PI / 8.0 + wiggle;
}

// ---------------------------------------------------------------------------
// domain types
// ---------------------------------------------------------------------------

namespace detail {

inline void require_finite(const char* field, const Vec3& v) {
    if (!v.finite()) throw InvariantViolation(field, "non-finite", "finite components");
}

inline void require_finite(const char* field, double v) {
    if (!std::isfinite(v)) throw InvariantViolation(field, "non-finite", "a finite value");
}

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace detail

/// Ego vehicle block of a scene description. Position and distance are zero
/// by definition of the ego frame.
struct EgoState {
    std::string label = "ego_vehicle";
    Vec3 dimensions;  // length, width, height
    Vec3 position;    // always (0, 0, 0)
    double distance = 0.0;
    Vec3 velocity;
    double speed = 0.0;

    friend bool operator==(const EgoState&, const EgoState&) = default;

    /// Builds an ego state from its primary fields; speed is derived exactly.
    static EgoState with_derived(const Vec3& dimensions, const Vec3& velocity) {
        detail::require_finite("ego.dimensions", dimensions);
        detail::require_finite("ego.velocity", velocity);
        if (dimensions.x <= 0 || dimensions.y <= 0 || dimensions.z <= 0)
            throw InvariantViolation("ego.dimensions", detail::num(dimensions.x), "all components > 0");
        EgoState e;
        e.dimensions = dimensions;
        e.velocity = velocity;
        e.speed = velocity.norm();
        return e;
    }

    /// Builds an ego state from explicit (file-borne) fields, validating
    /// consistency within kFileSlack.
    static EgoState checked(std::string label, const Vec3& dimensions, const Vec3& position,
                            double distance, const Vec3& velocity, double speed) {
        if (label != "ego_vehicle")
            throw InvariantViolation("ego.label", label, "ego_vehicle");
        detail::require_finite("ego.dimensions", dimensions);
        detail::require_finite("ego.velocity", velocity);
        detail::require_finite("ego.speed", speed);
        if (dimensions.x <= 0 || dimensions.y <= 0 || dimensions.z <= 0)
            throw InvariantViolation("ego.dimensions", detail::num(dimensions.x), "all components > 0");
        if (position.x != 0.0 || position.y != 0.0 || position.z != 0.0)
            throw InvariantViolation("ego.position", detail::num(position.x), "(0, 0, 0)");
        if (distance != 0.0) throw InvariantViolation("ego.distance", detail::num(distance), "0");
        if (std::fabs(speed - velocity.norm()) > kFileSlack)
            throw InvariantViolation("ego.speed", detail::num(speed), detail::num(velocity.norm()));
        EgoState e;
        e.label = std::move(label);
        e.dimensions = dimensions;
        e.velocity = velocity;
        e.speed = speed;
        return e;
    }
};

struct Obstacle {
    std::string label;
    Partition partition = Partition::Front;
    Vec3 position;  // ego frame
    double distance = 0.0;
    Vec3 velocity;
    double speed = 0.0;

    friend bool operator==(const Obstacle&, const Obstacle&) = default;

    /// Builds an obstacle from its primary fields; distance, speed and
    /// partition are derived exactly.
    static Obstacle with_derived(std::string label, const Vec3& position, const Vec3& velocity) {
        validate_label(label);
        detail::require_finite("obstacle.position", position);
        detail::require_finite("obstacle.velocity", velocity);
        Obstacle o;
        o.label = std::move(label);
        o.position = position;
        o.distance = position.norm();
        if (o.distance > kInclusionRadius)
            throw InvariantViolation("obstacle.distance", detail::num(o.distance),
                                     "<= " + detail::num(kInclusionRadius));
        o.partition = partition_of(position);
        o.velocity = velocity;
        o.speed = velocity.norm();
        return o;
    }

    /// Builds an obstacle from explicit (file-borne) fields, validating
    /// consistency within kFileSlack.
    static Obstacle checked(std::string label, Partition partition, const Vec3& position,
                            double distance, const Vec3& velocity, double speed) {
        validate_label(label);
        detail::require_finite("obstacle.position", position);
        detail::require_finite("obstacle.velocity", velocity);
        detail::require_finite("obstacle.distance", distance);
        detail::require_finite("obstacle.speed", speed);
        if (distance > kInclusionRadius)
            throw InvariantViolation("obstacle.distance", detail::num(distance),
                                     "<= " + detail::num(kInclusionRadius));
        if (std::fabs(distance - position.norm()) > kFileSlack)
            throw InvariantViolation("obstacle.distance", detail::num(distance),
                                     detail::num(position.norm()));
        if (std::fabs(speed - velocity.norm()) > kFileSlack)
            throw InvariantViolation("obstacle.speed", detail::num(speed), detail::num(velocity.norm()));
        if (!partition_consistent(partition, position.x, position.y))
            throw InvariantViolation("obstacle.partition", std::string(to_string(partition)),
                                     position.x == 0.0 && position.y == 0.0
                                         ? "nonzero planar position"
                                         : std::string(to_string(partition_of(position))));
        Obstacle o;
        o.label = std::move(label);
        o.partition = partition;
        o.position = position;
        o.distance = distance;
        o.velocity = velocity;
        o.speed = speed;
        return o;
    }

    static void validate_label(const std::string& label) {
        if (label.empty()) throw InvariantViolation("obstacle.label", "empty", "a nonempty category");
        if (label.find('\n') != std::string::npos || label.find('\r') != std::string::npos)
            throw InvariantViolation("obstacle.label", label, "single-line text");
    }
};

/// Sort key for obstacles in files: ascending printed distance, ties by label
/// then printed x. Quantized so the serialized order is reproducible from the
/// file alone.
inline std::tuple<double, const std::string&, double> obstacle_order_key(const Obstacle& o) {
    return {quantize2(o.distance), o.label, quantize2(o.position.x)};
}

struct SceneDescription {
    EgoState ego;
    std::vector<Obstacle> obstacles;
    std::string frame_id;

    friend bool operator==(const SceneDescription&, const SceneDescription&) = default;

    /// Assembles a scene, validating the frame id and sorting obstacles into
    /// the canonical file order.
    static SceneDescription create(std::string frame_id, EgoState ego, std::vector<Obstacle> obstacles) {
        validate_frame_id(frame_id);
        std::stable_sort(obstacles.begin(), obstacles.end(), [](const Obstacle& a, const Obstacle& b) {
            return obstacle_order_key(a) < obstacle_order_key(b);
        });
        return SceneDescription{std::move(ego), std::move(obstacles), std::move(frame_id)};
    }

    static void validate_frame_id(const std::string& id) {
        if (id.empty()) throw InvariantViolation("frame_id", "empty", "a nonempty identifier");
        if (id.find('\n') != std::string::npos || id.find('\r') != std::string::npos)
            throw InvariantViolation("frame_id", id, "single-line text");
    }
};

/// Componentwise two-decimal quantization of every float field. Labels,
/// partitions and obstacle order are untouched.
inline SceneDescription quantize2(const SceneDescription& s) {
    auto qv = [](const Vec3& v) { return Vec3{quantize2(v.x), quantize2(v.y), quantize2(v.z)}; };
    SceneDescription out = s;
    out.ego.dimensions = qv(s.ego.dimensions);
    out.ego.position = qv(s.ego.position);
    out.ego.distance = quantize2(s.ego.distance);
    out.ego.velocity = qv(s.ego.velocity);
    out.ego.speed = quantize2(s.ego.speed);
    for (auto& o : out.obstacles) {
        o.position = qv(o.position);
        o.distance = quantize2(o.distance);
        o.velocity = qv(o.velocity);
        o.speed = quantize2(o.speed);
    }
    return out;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

inline constexpr std::string_view kSceneHeader = "# pla-scene v1";

/// Emits the scene text format: UTF-8, LF line endings, every float with
/// exactly two decimals. Byte-identical output for equal scenes.
inline std::string serialize_scene(const SceneDescription& s) {
    std::string out;
    out.reserve(256 + 160 * s.obstacles.size());
    auto vec = [](const Vec3& v) {
        return format_fixed2(v.x) + " " + format_fixed2(v.y) + " " + format_fixed2(v.z);
    };
    out += kSceneHeader;
    out += "\nframe_id: " + s.frame_id;
    out += "\n[ego_vehicle]";
    out += "\nlabel: " + s.ego.label;
    out += "\ndimension_m: " + vec(s.ego.dimensions);
    out += "\nposition_m: " + vec(s.ego.position);
    out += "\ndistance_m: " + format_fixed2(s.ego.distance);
    out += "\nvelocity_mps: " + vec(s.ego.velocity);
    out += "\nspeed_mps: " + format_fixed2(s.ego.speed);
    out += "\nobstacle_count: " + std::to_string(s.obstacles.size());
    for (std::size_t i = 0; i < s.obstacles.size(); ++i) {
        const Obstacle& o = s.obstacles[i];
        out += "\n[obstacle " + std::to_string(i + 1) + "]";
        out += "\nlabel: " + o.label;
        out += "\npartition: " + std::string(to_string(o.partition));
        out += "\nposition_m: " + vec(o.position);
        out += "\ndistance_m: " + format_fixed2(o.distance);
        out += "\nvelocity_mps: " + vec(o.velocity);
        out += "\nspeed_mps: " + format_fixed2(o.speed);
    }
    out += "\n";
    return out;
}

// ---------------------------------------------------------------------------
// parsing
// ---------------------------------------------------------------------------

namespace detail {

class SceneParser {
public:
    explicit SceneParser(std::string_view text) {
        std::size_t start = 0;
        while (start <= text.size()) {
            std::size_t nl = text.find('\n', start);
            if (nl == std::string_view::npos) {
                if (start < text.size()) lines_.push_back(text.substr(start));
                break;
            }
            lines_.push_back(text.substr(start, nl - start));
            start = nl + 1;
        }
    }

    SceneDescription parse() {
        expect_line(std::string(kSceneHeader));
        std::string frame_id = std::string(value_of("frame_id"));
        if (frame_id.empty()) fail("empty frame_id");

        expect_line("[ego_vehicle]");
        std::string ego_label = std::string(value_of("label"));
        Vec3 dims = parse_vec3(value_of("dimension_m"));
        Vec3 pos = parse_vec3(value_of("position_m"));
        double dist = parse_number(value_of("distance_m"));
        Vec3 vel = parse_vec3(value_of("velocity_mps"));
        double speed = parse_number(value_of("speed_mps"));
        EgoState ego = EgoState::checked(std::move(ego_label), dims, pos, dist, vel, speed);

        std::string_view count_str = value_of("obstacle_count");
        std::size_t count = parse_count(count_str);

        std::vector<Obstacle> obstacles;
        obstacles.reserve(count);
        for (std::size_t i = 1; i <= count; ++i) {
            expect_line("[obstacle " + std::to_string(i) + "]");
            std::string label = std::string(value_of("label"));
            std::string_view part_str = value_of("partition");
            auto partition = partition_from_string(part_str);
            if (!partition) fail("unknown partition '" + std::string(part_str) + "'");
            Vec3 opos = parse_vec3(value_of("position_m"));
            double odist = parse_number(value_of("distance_m"));
            Vec3 ovel = parse_vec3(value_of("velocity_mps"));
            double ospeed = parse_number(value_of("speed_mps"));
            obstacles.push_back(Obstacle::checked(std::move(label), *partition, opos, odist, ovel, ospeed));
        }
        if (cursor_ != lines_.size()) fail("expected end of file");

        for (std::size_t i = 1; i < obstacles.size(); ++i) {
            if (obstacle_order_key(obstacles[i]) < obstacle_order_key(obstacles[i - 1]))
                throw InvariantViolation("obstacle_order", obstacles[i].label,
                                         "ascending (distance, label, x)");
        }

        SceneDescription::validate_frame_id(frame_id);
        return SceneDescription{std::move(ego), std::move(obstacles), std::move(frame_id)};
    }

private:
    [[noreturn]] void fail(const std::string& reason) const { throw SyntaxError(cursor_ + 1, reason); }

    std::string_view next_line() {
        if (cursor_ >= lines_.size()) fail("unexpected end of file");
        return lines_[cursor_++];
    }

    void expect_line(const std::string& expected) {
        std::string_view got = next_line();
        if (got != expected) {
            --cursor_;
            fail("expected '" + expected + "'");
        }
    }

    std::string_view value_of(std::string_view key) {
        std::string_view line = next_line();
        std::string prefix = std::string(key) + ": ";
        if (!line.starts_with(prefix)) {
            --cursor_;
            fail("expected '" + std::string(key) + ": <value>'");
        }
        return line.substr(prefix.size());
    }

    /// Floats must carry exactly two decimals and a canonical integer part.
    double parse_number(std::string_view token) {
        if (!is_fixed2(token)) {
            --cursor_;
            fail("malformed number '" + std::string(token) + "'");
        }
        return std::strtod(std::string(token).c_str(), nullptr);
    }

    Vec3 parse_vec3(std::string_view text) {
        std::array<std::string_view, 3> parts;
        std::size_t n = 0;
        std::size_t start = 0;
        while (n < 3) {
            std::size_t sp = text.find(' ', start);
            std::string_view tok =
                sp == std::string_view::npos ? text.substr(start) : text.substr(start, sp - start);
            parts[n++] = tok;
            if (sp == std::string_view::npos) break;
            start = sp + 1;
        }
        if (n != 3 || text.find(' ', start) != std::string_view::npos) {
            --cursor_;
            fail("expected three numbers, got '" + std::string(text) + "'");
        }
        Vec3 v;
        v.x = parse_number(parts[0]);
        v.y = parse_number(parts[1]);
        v.z = parse_number(parts[2]);
        return v;
    }

    std::size_t parse_count(std::string_view token) {
        if (token.empty() || token.size() > 9) fail_count(token);
        if (token.size() > 1 && token[0] == '0') fail_count(token);
        std::size_t value = 0;
        for (char c : token) {
            if (c < '0' || c > '9') fail_count(token);
            value = value * 10 + static_cast<std::size_t>(c - '0');
        }
        return value;
    }

    [[noreturn]] void fail_count(std::string_view token) {
        --cursor_;
        fail("malformed obstacle_count '" + std::string(token) + "'");
    }

    static bool is_fixed2(std::string_view t) {
        std::size_t i = 0;
        if (i < t.size() && t[i] == '-') ++i;
        std::size_t digits_start = i;
        while (i < t.size() && t[i] >= '0' && t[i] <= '9') ++i;
        const std::size_t int_digits = i - digits_start;
        if (int_digits == 0 || int_digits > 15) return false;
        if (int_digits > 1 && t[digits_start] == '0') return false;
        if (i >= t.size() || t[i] != '.') return false;
        ++i;
        if (t.size() - i != 2) return false;
        return t[i] >= '0' && t[i] <= '9' && t[i + 1] >= '0' && t[i + 1] <= '9';
    }

    std::vector<std::string_view> lines_;
    std::size_t cursor_ = 0;
};

}  // namespace detail

/// Strict parse of the scene text format. Throws SyntaxError for malformed
/// input and InvariantViolation for well-formed but inconsistent scenes.
inline SceneDescription parse_scene(std::string_view text) {
    return detail::SceneParser(text).parse();
}

}  // namespace pla::scene
