#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "pla/backend.hpp"
#include "pla/errors.hpp"
#include "pla/evaluation.hpp"
#include "pla/motion.hpp"
#include "pla/perception.hpp"
#include "pla/plots.hpp"
#include "pla/reasoning.hpp"
#include "pla/scenario.hpp"
#include "pla/scene.hpp"

namespace pla::pipeline {

struct BackendSettings {
    std::string kind = "rule";  // rule | replay | http
    std::string model = "gpt-4.1";
    std::string base_url;    // http; PLA_API_BASE overrides
    std::string replay_dir;  // replay
    double timeout_s = 60;
    int retries = 2;
    int max_in_flight = 2;
};

struct RunConfig {
    std::filesystem::path frames_path;
    std::filesystem::path out_dir;
    int workers = 1;
    bool keep_going = false;
    bool plots = true;
    BackendSettings backend;
    perception::FusionConfig fusion;
    reasoning::TaskSpec task;
    motion::RolloutParams rollout;

    void validate() const {
        if (workers < 1)
            throw InvariantViolation("run.workers", std::to_string(workers), ">= 1");
        fusion.validate();
        task.validate();
        rollout.validate();
    }
};

namespace detail {

inline double num_or(const nlohmann::json& j, double fallback) {
    return j.is_number() ? j.get<double>() : fallback;
}

[[noreturn]] inline void unknown_key(const std::string& where, const std::string& key) {
    throw ConfigError("config: unknown key " + where + "." + key);
}

inline void apply_backend(const nlohmann::json& j, BackendSettings& b) {
    for (const auto& [key, value] : j.items()) {
        if (key == "kind") b.kind = value.get<std::string>();
        else if (key == "model") b.model = value.get<std::string>();
        else if (key == "base_url") b.base_url = value.get<std::string>();
        else if (key == "replay_dir") b.replay_dir = value.get<std::string>();
        else if (key == "timeout_s") b.timeout_s = value.get<double>();
        else if (key == "retries") b.retries = value.get<int>();
        else if (key == "max_in_flight") b.max_in_flight = value.get<int>();
        else unknown_key("backend", key);
    }
}

inline void apply_fusion(const nlohmann::json& j, perception::FusionConfig& f) {
    for (const auto& [key, value] : j.items()) {
        if (key == "cluster_radius_m") f.cluster_radius_m = value.get<double>();
        else if (key == "min_cluster_points") f.min_cluster_points = value.get<std::size_t>();
        else if (key == "association_gate_m") f.association_gate_m = value.get<double>();
        else if (key == "inclusion_radius_m") f.inclusion_radius_m = value.get<double>();
        else unknown_key("fusion", key);
    }
}

inline void apply_task(const nlohmann::json& j, reasoning::TaskSpec& t) {
    for (const auto& [key, value] : j.items()) {
        if (key == "task_text") t.task_text = value.get<std::string>();
        else if (key == "lane_info") t.lane_info = value.get<std::string>();
        else if (key == "lateral_bound_m") t.lateral_bound_m = value.get<double>();
        else if (key == "steering_rate_min_dps") t.steering_rate_min_dps = value.get<double>();
        else if (key == "steering_rate_max_dps") t.steering_rate_max_dps = value.get<double>();
        else if (key == "horizon_s") t.horizon_s = value.get<double>();
        else unknown_key("task", key);
    }
}

inline void apply_rollout(const nlohmann::json& j, motion::RolloutParams& r) {
    for (const auto& [key, value] : j.items()) {
        if (key == "dt") r.dt = value.get<double>();
        else if (key == "horizon_s") r.horizon_s = value.get<double>();
        else if (key == "wheelbase_m") r.wheelbase_m = value.get<double>();
        else if (key == "accelerate_mps2") r.accelerate_mps2 = value.get<double>();
        else if (key == "decelerate_mps2") r.decelerate_mps2 = value.get<double>();
        else if (key == "max_steer_rate_dps") r.max_steer_rate_dps = value.get<double>();
        else if (key == "min_speed_mps") r.min_speed_mps = value.get<double>();
        else unknown_key("rollout", key);
    }
}

}  // namespace detail

/// Applies a declarative config document on top of the current values.
/// Unknown keys are rejected by name; secrets never live in the file.
inline void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw ConfigError("cannot open config " + path.string());
    std::ostringstream buffer;
    buffer << file.rdbuf();
    const auto doc = nlohmann::json::parse(buffer.str(), nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw ConfigError("config " + path.string() + " must be a JSON object");

    try {
        for (const auto& [key, value] : doc.items()) {
            if (key == "backend") detail::apply_backend(value, config.backend);
            else if (key == "fusion") detail::apply_fusion(value, config.fusion);
            else if (key == "task") detail::apply_task(value, config.task);
            else if (key == "rollout") detail::apply_rollout(value, config.rollout);
            else if (key == "workers") config.workers = value.get<int>();
            else if (key == "keep_going") config.keep_going = value.get<bool>();
            else if (key == "plots") config.plots = value.get<bool>();
            else detail::unknown_key("$", key);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
}

/// Overrides the backend base URL from PLA_API_BASE when set. The API key is
/// read only inside make_backend and never stored in the config.
inline void apply_env(RunConfig& config) {
    if (const char* base = std::getenv("PLA_API_BASE"); base && *base)
        config.backend.base_url = base;
}

/// FNV-1a 64 over the canonical dump of everything that shapes per-frame
/// output. Paths and parallelism knobs are excluded on purpose.
inline std::string config_hash(const RunConfig& c) {
    const nlohmann::json j{
        {"backend",
         {{"kind", c.backend.kind},
          {"model", c.backend.model},
          {"base_url", c.backend.base_url},
          {"replay_dir", c.backend.replay_dir}}},
        {"fusion",
         {{"cluster_radius_m", c.fusion.cluster_radius_m},
          {"min_cluster_points", c.fusion.min_cluster_points},
          {"association_gate_m", c.fusion.association_gate_m},
          {"inclusion_radius_m", c.fusion.inclusion_radius_m}}},
        {"task",
         {{"task_text", c.task.task_text},
          {"lane_info", c.task.lane_info},
          {"lateral_bound_m", c.task.lateral_bound_m},
          {"steering_rate_min_dps", c.task.steering_rate_min_dps},
          {"steering_rate_max_dps", c.task.steering_rate_max_dps},
          {"horizon_s", c.task.horizon_s}}},
        {"rollout",
         {{"dt", c.rollout.dt},
          {"horizon_s", c.rollout.horizon_s},
          {"wheelbase_m", c.rollout.wheelbase_m},
          {"accelerate_mps2", c.rollout.accelerate_mps2},
          {"decelerate_mps2", c.rollout.decelerate_mps2},
          {"max_steer_rate_dps", c.rollout.max_steer_rate_dps},
          {"min_speed_mps", c.rollout.min_speed_mps}}}};
    const std::string text = j.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Instantiates the configured backend. http validates its credentials and
/// endpoint before any network traffic: the key comes from PLA_API_KEY only.
inline std::unique_ptr<reasoning::Backend> make_backend(const BackendSettings& settings,
                                                        const reasoning::TaskSpec& task) {
    if (settings.kind == "rule") return std::make_unique<reasoning::RuleBackend>(task);
    if (settings.kind == "replay") {
        if (settings.replay_dir.empty())
            throw ConfigError("replay backend needs backend.replay_dir");
        return std::make_unique<reasoning::ReplayBackend>(settings.replay_dir);
    }
    if (settings.kind == "http") {
        const char* key = std::getenv("PLA_API_KEY");
        if (!key || !*key) throw ConfigError("http backend needs PLA_API_KEY in the environment");
        reasoning::HttpBackendConfig http;
        http.base_url = settings.base_url;
        http.api_key = key;
        http.model = settings.model;
        http.timeout_s = static_cast<int>(settings.timeout_s);
        http.retries = settings.retries;
        http.max_in_flight = settings.max_in_flight;
        return std::make_unique<reasoning::HttpBackend>(http);
    }
    throw ConfigError("unknown backend.kind \"" + settings.kind + "\" (rule, replay, http)");
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open " + path.string() + " for writing");
    file << text;
    if (!file) throw IoError("failed writing " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << file.rdbuf();
    if (file.bad()) throw IoError("failed reading " + path.string());
    return std::move(ss).str();
}

inline std::string dump_doc(const nlohmann::json& j) { return j.dump(1, '\t') + "\n"; }

}  // namespace detail

/// Writes the run manifest consumed by the eval stage. Pure function of the
/// config, so re-running any stage reproduces it byte for byte.
inline void write_manifest(const RunConfig& config, const std::filesystem::path& out_dir) {
    std::string backend_name = config.backend.kind;
    const nlohmann::json j{{"version", "pla-manifest/1"},
                           {"backend", backend_name},
                           {"config_hash", config_hash(config)}};
    detail::write_text(out_dir / "manifest.json", detail::dump_doc(j));
}

/// Fuses every frame into its scene description and writes <id>.scene.txt.
inline std::vector<scene::SceneDescription> stage_fuse(
    const std::vector<scenario::FrameBundle>& frames, const RunConfig& config) {
    std::vector<scene::SceneDescription> scenes;
    scenes.reserve(frames.size());
    for (const auto& f : frames) {
        scenes.push_back(perception::fuse_frame(f.frame_id, {f.ego.position, f.ego.yaw},
                                                f.ego.velocity, f.ego.dimensions,
                                                f.lidar_detections, f.radar_points, config.fusion));
        detail::write_text(config.out_dir / (f.frame_id + ".scene.txt"),
                           scene::serialize_scene(scenes.back()));
    }
    return scenes;
}

struct PlanOutcome {
    std::vector<std::optional<reasoning::DrivingCommand>> commands;  // empty slot = frame failed
    std::vector<std::string> errors;                                 // "frame_id: what"
};

/// Queries the backend for every scene with a pool of `workers` threads and
/// writes prompt/response/command artifacts in frame order. Domain errors stop
/// the run unless keep_going is set, in which case they are collected.
inline PlanOutcome stage_plan(const std::vector<scenario::FrameBundle>& frames,
                              const std::vector<scene::SceneDescription>& scenes,
                              reasoning::Backend& backend, const RunConfig& config) {
    const std::size_t n = frames.size();
    const std::filesystem::path frames_dir =
        config.frames_path.has_parent_path() ? config.frames_path.parent_path()
                                             : std::filesystem::path(".");

    std::vector<reasoning::PromptBundle> prompts(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::pair<std::string, std::string>> refs;
        for (const auto& cam : frames[i].camera_images)
            refs.emplace_back(cam.name, (frames_dir / cam.path).string());
        prompts[i] = reasoning::build_prompt(scenes[i], config.task, std::move(refs));
    }

    std::vector<std::string> responses(n);
    std::vector<std::exception_ptr> failures(n);
    std::atomic<std::size_t> cursor{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= n) return;
            try {
                responses[i] = backend.plan(prompts[i]);
            } catch (...) {
                failures[i] = std::current_exception();
            }
        }
    };
    const std::size_t width = std::min<std::size_t>(std::max(config.workers, 1), std::max<std::size_t>(n, 1));
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < width; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    PlanOutcome out;
    out.commands.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        nlohmann::json images = nlohmann::json::array();
        for (const auto& [name, path] : prompts[i].image_refs)
            images.push_back({{"name", name}, {"path", path}});
        detail::write_text(config.out_dir / (frames[i].frame_id + ".prompt.json"),
                           detail::dump_doc({{"system", prompts[i].system_text},
                                             {"user", prompts[i].user_text},
                                             {"images", images}}));

        auto fail = [&](const std::string& what) {
            if (!config.keep_going)
                std::rethrow_exception(failures[i]);
            out.errors.push_back(frames[i].frame_id + ": " + what);
        };
        if (failures[i]) {
            try {
                std::rethrow_exception(failures[i]);
            } catch (const Error& e) {
                fail(e.what());
            }
            // anything that is not a domain error propagates regardless
            continue;
        }
        detail::write_text(config.out_dir / (frames[i].frame_id + ".response.txt"), responses[i]);
        try {
            out.commands[i] = reasoning::parse_command(responses[i]);
        } catch (const Error& e) {
            fail(e.what());
            continue;
        }
        detail::write_text(config.out_dir / (frames[i].frame_id + ".command.json"),
                           reasoning::command_to_json(*out.commands[i]) + "\n");
    }
    if (!out.errors.empty()) {
        nlohmann::json errs = nlohmann::json::array();
        for (const auto& e : out.errors) errs.push_back(e);
        detail::write_text(config.out_dir / "plan_errors.json", detail::dump_doc(errs));
    }
    return out;
}

/// Rolls every planned command into a trajectory artifact. Each artifact is
/// self-contained for the eval stage: predicted motion, the recorded future,
/// and the ego's world position for route plots.
inline void stage_rollout(const std::vector<scenario::FrameBundle>& frames,
                          const std::vector<scene::SceneDescription>& scenes,
                          const PlanOutcome& plan, const RunConfig& config) {
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (!plan.commands[i]) continue;
        const auto result = motion::rollout(scenes[i].ego.speed, 0.0, *plan.commands[i],
                                            config.rollout);
        nlohmann::json waypoints = nlohmann::json::array();
        for (const auto& w : result.trajectory.waypoints)
            waypoints.push_back({{"t", w.t},
                                 {"x", w.x},
                                 {"y", w.y},
                                 {"heading_rad", w.heading_rad},
                                 {"speed_mps", w.speed_mps}});
        nlohmann::json gt_waypoints = nlohmann::json::array();
        for (const auto& w : frames[i].ground_truth.waypoints_xy)
            gt_waypoints.push_back(nlohmann::json::array({w[0], w[1]}));

        const nlohmann::json doc{
            {"version", "pla-trajectory/1"},
            {"frame_id", frames[i].frame_id},
            {"ego_world_xy", nlohmann::json::array({frames[i].ego.position.x,
                                                    frames[i].ego.position.y})},
            {"predicted", {{"waypoints", waypoints}, {"steer_deg", result.steer_deg}}},
            {"ground_truth",
             {{"waypoints_xy", gt_waypoints},
              {"speed_mps", frames[i].ground_truth.speed_mps},
              {"steering_deg", frames[i].ground_truth.steering_deg}}}};
        detail::write_text(config.out_dir / (frames[i].frame_id + ".trajectory.json"),
                           detail::dump_doc(doc));
    }
}

/// Reloads command artifacts written by an earlier plan stage so rollout can
/// run standalone. Frames without a command file are skipped, mirroring how
/// keep_going leaves gaps.
inline PlanOutcome load_commands(const std::vector<scenario::FrameBundle>& frames,
                                 const std::filesystem::path& dir) {
    PlanOutcome out;
    out.commands.resize(frames.size());
    std::size_t found = 0;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto path = dir / (frames[i].frame_id + ".command.json");
        if (!std::filesystem::exists(path)) continue;
        out.commands[i] = reasoning::parse_command(detail::read_text(path));
        ++found;
    }
    if (found == 0)
        throw ConfigError("no command artifacts under " + dir.string() + " (run plan first)");
    return out;
}

namespace detail {

struct TrajectoryArtifact {
    eval::FrameRecord record;
    std::array<double, 2> ego_world_xy{};
};

inline TrajectoryArtifact load_trajectory(const std::filesystem::path& path) {
    const auto doc = nlohmann::json::parse(read_text(path), nullptr, false);
    const std::string p = path.string();
    if (doc.is_discarded() || !doc.is_object()) throw SchemaError(p, "not a JSON object");
    try {
        if (doc.at("version") != "pla-trajectory/1")
            throw SchemaError(p, "version must be \"pla-trajectory/1\"");
        TrajectoryArtifact art;
        art.record.frame_id = doc.at("frame_id").get<std::string>();
        art.ego_world_xy = {doc.at("ego_world_xy").at(0).get<double>(),
                            doc.at("ego_world_xy").at(1).get<double>()};
        const auto& pred = doc.at("predicted");
        for (const auto& w : pred.at("waypoints"))
            art.record.predicted_xy.push_back({w.at("x").get<double>(), w.at("y").get<double>()});
        const auto& steer = pred.at("steer_deg");
        if (!steer.is_array() || steer.empty()) throw SchemaError(p, "predicted.steer_deg");
        art.record.predicted_steering_deg = steer.back().get<double>();
        if (art.record.predicted_xy.empty()) throw SchemaError(p, "predicted.waypoints");
        const auto& last = pred.at("waypoints").back();
        art.record.predicted_speed_mps = last.at("speed_mps").get<double>();
        const auto& gt = doc.at("ground_truth");
        for (const auto& w : gt.at("waypoints_xy"))
            art.record.ground_truth_xy.push_back({w.at(0).get<double>(), w.at(1).get<double>()});
        art.record.ground_truth_speed_mps = gt.at("speed_mps").get<double>();
        art.record.ground_truth_steering_deg = gt.at("steering_deg").get<double>();
        return art;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(p, e.what());
    }
}

}  // namespace detail

/// Evaluates the trajectory artifacts under run_dir and writes report.json,
/// frames.csv and (optionally) the SVG plots into out_dir. Self-contained: the
/// artifacts carry everything the metrics need.
inline eval::EvaluationReport stage_eval(const std::filesystem::path& run_dir,
                                         const std::filesystem::path& out_dir, bool plots) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(run_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > 16 && name.substr(name.size() - 16) == ".trajectory.json")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw EmptyInput();

    std::vector<detail::TrajectoryArtifact> artifacts;
    artifacts.reserve(files.size());
    std::vector<eval::FrameRecord> records;
    records.reserve(files.size());
    for (const auto& f : files) {
        artifacts.push_back(detail::load_trajectory(f));
        records.push_back(artifacts.back().record);
    }

    auto report = eval::evaluate_run(records);
    report.backend = "unknown";
    report.config_hash = "";
    const auto manifest_path = run_dir / "manifest.json";
    if (std::filesystem::exists(manifest_path)) {
        const auto doc = nlohmann::json::parse(detail::read_text(manifest_path), nullptr, false);
        if (!doc.is_discarded() && doc.is_object()) {
            if (doc.contains("backend") && doc["backend"].is_string())
                report.backend = doc["backend"].get<std::string>();
            if (doc.contains("config_hash") && doc["config_hash"].is_string())
                report.config_hash = doc["config_hash"].get<std::string>();
        }
    }
    const auto errors_path = run_dir / "plan_errors.json";
    if (std::filesystem::exists(errors_path)) {
        const auto doc = nlohmann::json::parse(detail::read_text(errors_path), nullptr, false);
        if (!doc.is_discarded() && doc.is_array())
            for (const auto& e : doc)
                if (e.is_string()) report.errors.push_back(e.get<std::string>());
    }
    report.generated_at_unix_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                      std::chrono::system_clock::now().time_since_epoch())
                                      .count();

    detail::write_text(out_dir / "report.json", detail::dump_doc(eval::report_to_json(report)));
    detail::write_text(out_dir / "frames.csv", eval::frames_csv(report));

    if (plots) {
        std::vector<double> speed_pred, speed_gt, steer_pred, steer_gt;
        for (const auto& r : records) {
            speed_pred.push_back(r.predicted_speed_mps);
            speed_gt.push_back(r.ground_truth_speed_mps);
            steer_pred.push_back(r.predicted_steering_deg);
            steer_gt.push_back(r.ground_truth_steering_deg);
        }
        detail::write_text(out_dir / "scatter_speed.svg",
                           plots::emit_scatter(speed_pred, speed_gt, "speed (m/s)"));
        detail::write_text(out_dir / "scatter_steering.svg",
                           plots::emit_scatter(steer_pred, steer_gt, "steering (deg)"));
        if (artifacts.size() >= 2) {
            std::vector<eval::Point2> route;
            std::vector<double> steer_abs, ades, fdes;
            for (std::size_t i = 0; i < artifacts.size(); ++i) {
                route.push_back(artifacts[i].ego_world_xy);
                steer_abs.push_back(std::abs(records[i].predicted_steering_deg));
                ades.push_back(report.frames[i].ade_m);
                fdes.push_back(report.frames[i].fde_m);
            }
            detail::write_text(out_dir / "heatmap_steering.svg",
                               plots::emit_heatmap(route, steer_abs, "|steering| (deg)"));
            detail::write_text(out_dir / "heatmap_ade.svg",
                               plots::emit_heatmap(route, ades, "ADE (m)"));
            detail::write_text(out_dir / "heatmap_fde.svg",
                               plots::emit_heatmap(route, fdes, "FDE (m)"));
        }
    }
    return report;
}

/// The whole pipeline: load frames, fuse, plan, roll out, evaluate. Stage
/// composability holds by construction — this calls the exact stage functions
/// the subcommands expose, against the same artifact directory.
inline eval::EvaluationReport run_pipeline(RunConfig config) {
    config.validate();
    std::filesystem::create_directories(config.out_dir);
    const auto frames = scenario::load_frames(config.frames_path);
    if (frames.empty()) throw EmptyInput();

    write_manifest(config, config.out_dir);
    const auto scenes = stage_fuse(frames, config);
    const auto backend = make_backend(config.backend, config.task);
    const auto plan = stage_plan(frames, scenes, *backend, config);
    stage_rollout(frames, scenes, plan, config);
    return stage_eval(config.out_dir, config.out_dir, config.plots);
}

}  // namespace pla::pipeline
