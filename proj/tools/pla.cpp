#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "pla/pipeline.hpp"
#include "pla/scenario.hpp"

namespace fs = std::filesystem;

namespace {

void print_report(const pla::eval::EvaluationReport& report, const fs::path& out_dir) {
    std::printf("backend=%s config=%s frames=%zu errors=%zu\n", report.backend.c_str(),
                report.config_hash.c_str(), report.frames.size(), report.errors.size());
    std::printf("speed_mae=%.4f speed_r2=%.4f steering_mae=%.4f steering_r2=%.4f\n",
                report.speed_mae, report.speed_r2, report.steering_mae_deg, report.steering_r2);
    std::printf("ade=%.4f fde=%.4f\n", report.ade_m, report.fde_m);
    std::printf("report=%s\n", (out_dir / "report.json").string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"perception-language-action driving pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_path, frames_path, run_dir;
    int workers = 1;
    bool keep_going = false;
    std::uint64_t seed = 42;

    auto* opt_config = app.add_option("--config", config_path, "declarative run config (JSON)");
    auto* opt_out = app.add_option("--out", out_path, "output path (file for gen, directory otherwise)");
    auto* opt_workers = app.add_option("--workers", workers, "frame worker pool width");
    auto* opt_keep_going = app.add_flag("--keep-going", keep_going,
                                        "record per-frame failures instead of stopping");
    app.add_option("--seed", seed, "scenario seed (gen)");

    auto* gen = app.add_subcommand("gen", "generate the synthetic following scenario");
    std::size_t gen_count = 40;
    double gen_noise = 0.0, gen_dropout = 0.0, gen_dt = 0.1;
    gen->add_option("--count", gen_count, "number of frames");
    gen->add_option("--dt", gen_dt, "frame spacing in seconds");
    gen->add_option("--noise", gen_noise, "radar noise sigma in meters");
    gen->add_option("--dropout", gen_dropout, "detection dropout probability");

    auto* fuse = app.add_subcommand("fuse", "fuse frames into scene descriptions");
    auto* plan = app.add_subcommand("plan", "fuse, prompt the backend, parse commands");
    auto* rollout = app.add_subcommand("rollout", "roll planned commands into trajectories");
    auto* eval = app.add_subcommand("eval", "evaluate trajectory artifacts into a report");
    auto* run = app.add_subcommand("run", "full pipeline: fuse, plan, rollout, evaluate");

    std::string backend_kind, model, base_url, replay_dir;
    double timeout_s = 60;
    int retries = 2, max_in_flight = 2;
    for (CLI::App* sub : {plan, run}) {
        sub->add_option("--backend", backend_kind, "rule, replay, or http");
        sub->add_option("--model", model, "model name (http)");
        sub->add_option("--base-url", base_url, "chat-completions base URL (http)");
        sub->add_option("--replay-dir", replay_dir, "canned response dir (replay)");
        sub->add_option("--timeout", timeout_s, "request timeout seconds (http)");
        sub->add_option("--retries", retries, "extra attempts (http)");
        sub->add_option("--max-in-flight", max_in_flight, "concurrent request cap (http)");
    }
    for (CLI::App* sub : {fuse, plan, rollout, run})
        sub->add_option("--frames", frames_path, "frame bundle JSON")->required();
    eval->add_option("--run", run_dir, "directory holding trajectory artifacts")->required();
    bool no_plots = false;
    for (CLI::App* sub : {eval, run}) sub->add_flag("--no-plots", no_plots, "skip SVG emission");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        pla::pipeline::RunConfig config;
        if (opt_config->count()) pla::pipeline::apply_config_file(config, config_path);
        pla::pipeline::apply_env(config);
        if (opt_workers->count()) config.workers = workers;
        if (opt_keep_going->count()) config.keep_going = keep_going;
        CLI::App* active = nullptr;
        for (CLI::App* sub : {gen, fuse, plan, rollout, eval, run})
            if (sub->parsed()) active = sub;
        auto backend_flag = [&](const char* name) {
            return (active == plan || active == run) && active->count(name) > 0;
        };
        if (backend_flag("--backend")) config.backend.kind = backend_kind;
        if (backend_flag("--model")) config.backend.model = model;
        if (backend_flag("--base-url")) config.backend.base_url = base_url;
        if (backend_flag("--replay-dir")) config.backend.replay_dir = replay_dir;
        if (backend_flag("--timeout")) config.backend.timeout_s = timeout_s;
        if (backend_flag("--retries")) config.backend.retries = retries;
        if (backend_flag("--max-in-flight")) config.backend.max_in_flight = max_in_flight;
        if (no_plots) config.plots = false;
        try {
            config.validate();
        } catch (const pla::Error& e) {
            throw pla::ConfigError(e.what());
        }

        if (gen->parsed()) {
            if (!opt_out->count()) throw pla::ConfigError("gen needs --out <frames.json>");
            pla::scenario::ScenarioParams params;
            params.seed = seed;
            params.frame_count = gen_count;
            params.dt_s = gen_dt;
            params.noise_sigma_m = gen_noise;
            params.detection_dropout = gen_dropout;
            const auto frames = pla::scenario::generate_following_scenario(params);
            if (fs::path(out_path).has_parent_path())
                fs::create_directories(fs::path(out_path).parent_path());
            pla::scenario::save_frames(frames, out_path);
            std::printf("wrote %zu frames to %s\n", frames.size(), out_path.c_str());
            return 0;
        }

        if (eval->parsed()) {
            const fs::path out = opt_out->count() ? fs::path(out_path) : fs::path(run_dir);
            fs::create_directories(out);
            const auto report = pla::pipeline::stage_eval(run_dir, out, config.plots);
            print_report(report, out);
            return 0;
        }

        if (!opt_out->count()) throw pla::ConfigError("this subcommand needs --out <dir>");
        config.frames_path = frames_path;
        config.out_dir = out_path;

        if (run->parsed()) {
            const auto report = pla::pipeline::run_pipeline(config);
            print_report(report, config.out_dir);
            return 0;
        }

        fs::create_directories(config.out_dir);
        const auto frames = pla::scenario::load_frames(config.frames_path);
        pla::pipeline::write_manifest(config, config.out_dir);
        const auto scenes = pla::pipeline::stage_fuse(frames, config);
        if (fuse->parsed()) {
            std::printf("fused %zu frames into %s\n", frames.size(), out_path.c_str());
            return 0;
        }
        if (plan->parsed()) {
            const auto backend = pla::pipeline::make_backend(config.backend, config.task);
            const auto outcome = pla::pipeline::stage_plan(frames, scenes, *backend, config);
            std::size_t planned = 0;
            for (const auto& c : outcome.commands) planned += c.has_value();
            std::printf("planned %zu/%zu frames with backend %s\n", planned, frames.size(),
                        backend->name().c_str());
            return 0;
        }
        if (rollout->parsed()) {
            const auto outcome = pla::pipeline::load_commands(frames, config.out_dir);
            pla::pipeline::stage_rollout(frames, scenes, outcome, config);
            std::printf("rolled out trajectories into %s\n", out_path.c_str());
            return 0;
        }
        return 2;  // unreachable with require_subcommand(1)
    } catch (const pla::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const pla::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
