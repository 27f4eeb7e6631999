#pragma once

#include "gsm/bench.hpp"
#include "gsm/geometry.hpp"
#include "gsm/memory_store.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>

namespace gsm::config {

/// Everything a run needs, parsed from a flat key = value text file.
/// Unknown keys are rejected; every numeric parameter is range-checked.
/// All randomness in a run derives from the single seed.
struct RunConfig {
    std::uint64_t seed = 42;

    // terrain
    double terrain_extent = 256.0;
    double terrain_cell = 1.0;
    double terrain_roughness = 0.5;

    // camera
    int width = 384;
    int height = 224;
    double fov_deg = 70.0;

    // trajectory: either a script file or the built-in revisit generator
    std::string traj_path;
    int traj_frames = 200;
    int traj_loops = 1;

    // engine
    store::StoreParams store;
    int k = 8;
    bool occlusion = true;
    int retrieval_downscale = 4;

    // rendering
    double conf_noise_fraction = 0.0;

    // bench
    int bench_frames = 4000;
    int bench_bucket = 1000;
    int bench_warmup = 32;
    std::string bench_methods = "geometric,baseline";
    double baseline_probe_distance = 8.0;
    int bench_replicas = 1;

    std::string out;

    Intrinsics intrinsics() const;
    bench::BenchOptions bench_options() const;  // throws on bad method names
};

/// Parses `key = value` lines ('#' comments, blank lines allowed). Throws
/// ConfigError for unknown keys, malformed values, or out-of-range
/// parameters.
RunConfig parse_config(std::istream& is);
RunConfig load_config(const std::string& path);

/// Canonical echo of every parameter, suitable for reproducing the run.
void write_config(std::ostream& os, const RunConfig& config);

}  // namespace gsm::config
