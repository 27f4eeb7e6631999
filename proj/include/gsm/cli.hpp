#pragma once

#include "gsm/config.hpp"

#include <iosfwd>
#include <string>

namespace gsm::cli {

/// Exit codes shared by every subcommand: 0 success, 2 configuration error,
/// 1 runtime error. stdout carries data, stderr carries diagnostics.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// Full command-line entry point (subcommands: simulate, ingest, retrieve,
/// bench, snapshot-info). Streams are injectable for testing.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Renders the configured trajectory to a frame-stream directory at
/// config.out (per-frame depth + confidence + manifest).
int cmd_simulate(const config::RunConfig& config, std::ostream& out, std::ostream& err);

/// Replays a frame stream through the engine; writes the snapshot to
/// config.out and a per-frame decision log to config.out + ".log"
/// (lines: <frame id> <is_keyframe> <coverage> <scale> <retrieved ids|->).
int cmd_ingest(const config::RunConfig& config, const std::string& stream_path,
               std::ostream& out, std::ostream& err);

struct RetrieveArgs {
    std::string snapshot_path;
    Pose pose;
    int k = 8;
    int downscale = 4;
    bool occlusion = true;
};

/// Loads a snapshot and runs one query; prints "<id> <count>" lines and a
/// final "query_us <t>" line.
int cmd_retrieve(const RetrieveArgs& args, std::ostream& out, std::ostream& err);

/// Runs the efficiency benchmark and writes the report CSV to config.out
/// plus a config echo sidecar at config.out + ".config".
int cmd_bench(const config::RunConfig& config, std::ostream& out, std::ostream& err);

int cmd_snapshot_info(const std::string& snapshot_path, std::ostream& out, std::ostream& err);

}  // namespace gsm::cli
