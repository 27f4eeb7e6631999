#include "gsm/cli.hpp"

#include "gsm/bench.hpp"
#include "gsm/engine.hpp"
#include "gsm/errors.hpp"
#include "gsm/stream_io.hpp"
#include "gsm/world.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <ostream>
#include <sstream>

namespace gsm::cli {

namespace {

world::TrajectoryScript trajectory_from_config(const config::RunConfig& config) {
    if (!config.traj_path.empty()) return world::load_script(config.traj_path);
    return world::make_revisit_trajectory(config.seed, config.traj_frames, config.traj_loops);
}

void require_out(const config::RunConfig& config) {
    if (config.out.empty()) throw ConfigError("no output path: set out= in the config or pass --out");
}

int guarded(std::ostream& err, const std::function<int()>& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace

int cmd_simulate(const config::RunConfig& config, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        require_out(config);
        const Intrinsics intr = config.intrinsics();
        const world::HeightField hf = world::generate_terrain(
            config.seed, config.terrain_extent, config.terrain_cell, config.terrain_roughness);
        const auto poses = world::unroll_trajectory(trajectory_from_config(config));

        world::RenderOptions render;
        render.noise.fraction = config.conf_noise_fraction;
        render.noise.seed = config.seed;

        stream::StreamWriter writer(config.out, intr);
        for (std::size_t i = 0; i < poses.size(); ++i) {
            auto [depth, conf] = world::render_depth(hf, poses[i], intr, render);
            writer.append(static_cast<std::uint32_t>(i), poses[i], depth, conf);
        }
        writer.finish();
        out << "frames " << poses.size() << '\n';
        out << "stream " << config.out << '\n';
        return kExitOk;
    });
}

int cmd_ingest(const config::RunConfig& config, const std::string& stream_path,
               std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        require_out(config);
        const stream::StreamManifest manifest = stream::read_manifest(stream_path);

        retrieval::RetrievalOptions ropts;
        ropts.working_downscale = config.retrieval_downscale;
        ropts.occlusion = config.occlusion;
        engine::SpatialMemoryEngine eng(manifest.intrinsics, config.store, config.k, ropts);

        for (std::size_t i = 0; i < manifest.frames.size(); ++i) {
            auto [depth, conf] = stream::read_frame(stream_path, manifest, i);
            eng.process(manifest.frames[i].id, manifest.frames[i].pose, depth, conf);
        }
        eng.flush();

        store::save_snapshot(eng.geometry(), eng.frames(), config.out);

        const std::string log_path = config.out + ".log";
        std::ofstream log(log_path, std::ios::trunc);
        if (!log) throw std::runtime_error("cannot open log for writing: " + log_path);
        log.precision(17);
        for (const engine::FrameDecision& d : eng.take_completed_decisions()) {
            log << d.frame_id << ' ' << (d.keyframe ? 1 : 0) << ' ' << d.coverage << ' '
                << d.applied_scale << ' ';
            if (d.retrieved_ids.empty()) {
                log << '-';
            } else {
                for (std::size_t i = 0; i < d.retrieved_ids.size(); ++i) {
                    if (i) log << ',';
                    log << d.retrieved_ids[i];
                }
            }
            log << '\n';
        }
        log.flush();
        if (!log) throw std::runtime_error("log write failed: " + log_path);

        out << "frames " << manifest.frames.size() << '\n';
        out << "keyframes " << eng.keyframe_count() << '\n';
        out << "points " << eng.geometry().point_count() << '\n';
        out << "snapshot " << config.out << '\n';
        out << "log " << log_path << '\n';
        return kExitOk;
    });
}

int cmd_retrieve(const RetrieveArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const store::Snapshot snap = store::load_snapshot(args.snapshot_path);

        // Query intrinsics travel with the engine configuration, not the
        // snapshot; use the defaults unless the stored store says otherwise.
        const Intrinsics intr = default_intrinsics();
        retrieval::RetrievalOptions ropts;
        ropts.working_downscale = args.downscale;
        ropts.occlusion = args.occlusion;

        const retrieval::RetrievalResult result =
            retrieval::point_to_frame_retrieve(args.pose, snap.geometry, intr, args.k, ropts);
        for (std::size_t i = 0; i < result.size(); ++i) {
            out << result.frame_ids[i] << ' ' << result.vote_counts[i] << '\n';
        }
        out << "query_us " << result.query_micros << '\n';
        return kExitOk;
    });
}

int cmd_bench(const config::RunConfig& config, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        require_out(config);
        const Intrinsics intr = config.intrinsics();
        const world::HeightField hf = world::generate_terrain(
            config.seed, config.terrain_extent, config.terrain_cell, config.terrain_roughness);

        // The bench drives its own trajectory long enough for bench_frames.
        const int loops = std::max(1, config.bench_frames / 80);
        const world::TrajectoryScript script =
            config.traj_path.empty()
                ? world::make_revisit_trajectory(config.seed, config.bench_frames, loops)
                : world::load_script(config.traj_path);

        const bench::BenchReport report = bench::run_efficiency_bench(
            hf, script, config.bench_frames, intr, config.store, config.bench_options());
        bench::emit_report(report, config.out);

        std::ofstream sidecar(config.out + ".config", std::ios::trunc);
        if (!sidecar) throw std::runtime_error("cannot write sidecar: " + config.out + ".config");
        config::write_config(sidecar, config);
        sidecar << "config_hash = " << report.config_hash << '\n';
        sidecar << "machine = " << report.machine << '\n';

        out << "report " << config.out << '\n';
        for (const bench::BucketRow& row : report.rows) {
            out << row.method << ' ' << row.range_start << '-' << row.range_end << " qps "
                << row.qps << " mem +" << row.mem_increment << " total " << row.mem_total << '\n';
        }
        return kExitOk;
    });
}

int cmd_snapshot_info(const std::string& snapshot_path, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const store::Snapshot snap = store::load_snapshot(snapshot_path);
        std::size_t keyframes = 0;
        for (const auto& f : snap.frames) {
            if (f.keyframe) ++keyframes;
        }
        out << "frames " << snap.frames.size() << '\n';
        out << "keyframes " << keyframes << '\n';
        out << "points " << snap.geometry.point_count() << '\n';
        out << "voxel_size " << snap.geometry.voxel_size() << '\n';
        out << "n_max " << snap.geometry.n_max() << '\n';
        out << "cells " << snap.geometry.cells().size() << '\n';
        return kExitOk;
    });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"geometry-indexed spatial memory engine"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::uint64_t seed_override = 0;
    bool have_seed = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key = value configuration file");
        cmd->add_option("--out", out_override, "output path (overrides config)");
        cmd->add_option("--seed", seed_override, "seed (overrides config)")
            ->each([&](const std::string&) { have_seed = true; });
    };

    auto load = [&]() {
        config::RunConfig config;
        if (!config_path.empty()) config = config::load_config(config_path);
        if (!out_override.empty()) config.out = out_override;
        if (have_seed) config.seed = seed_override;
        return config;
    };

    CLI::App* simulate = app.add_subcommand("simulate", "render a trajectory to a frame stream");
    add_common(simulate);

    CLI::App* ingest = app.add_subcommand("ingest", "replay a frame stream through the engine");
    add_common(ingest);
    std::string stream_path;
    ingest->add_option("--stream", stream_path, "frame stream directory")->required();

    CLI::App* retrieve = app.add_subcommand("retrieve", "query a snapshot from a pose");
    RetrieveArgs rargs;
    retrieve->add_option("--snapshot", rargs.snapshot_path, "snapshot file")->required();
    retrieve->add_option("--x", rargs.pose.x, "camera x");
    retrieve->add_option("--y", rargs.pose.y, "camera y");
    retrieve->add_option("--z", rargs.pose.z, "camera z");
    retrieve->add_option("--pitch", rargs.pose.pitch, "camera pitch (radians)");
    retrieve->add_option("--yaw", rargs.pose.yaw, "camera yaw (radians)");
    retrieve->add_option("--k", rargs.k, "frames to return");
    retrieve->add_option("--downscale", rargs.downscale, "z-buffer downscale factor");
    retrieve->add_flag("--no-occlusion{false}", rargs.occlusion, "frustum-only visibility");

    CLI::App* bench_cmd = app.add_subcommand("bench", "run the efficiency benchmark");
    add_common(bench_cmd);

    CLI::App* info = app.add_subcommand("snapshot-info", "describe a snapshot file");
    std::string info_path;
    info->add_option("--snapshot", info_path, "snapshot file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            // --help and friends print through CLI11's own machinery.
            std::ostringstream help;
            help << app.help();
            out << help.str();
            return kExitOk;
        }
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    return guarded(err, [&]() -> int {
        if (simulate->parsed()) return cmd_simulate(load(), out, err);
        if (ingest->parsed()) return cmd_ingest(load(), stream_path, out, err);
        if (retrieve->parsed()) return cmd_retrieve(rargs, out, err);
        if (bench_cmd->parsed()) return cmd_bench(load(), out, err);
        if (info->parsed()) return cmd_snapshot_info(info_path, out, err);
        err << "error: no subcommand\n";
        return kExitConfig;
    });
}

}  // namespace gsm::cli
