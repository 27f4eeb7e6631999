#pragma once

#include "gsm/engine.hpp"
#include "gsm/world.hpp"

#include <set>
#include <string>
#include <vector>

namespace gsm::bench {

enum class Method { Geometric, PoseBaseline };

const char* method_name(Method m);
Method method_from_name(const std::string& name);  // throws std::invalid_argument

/// One (method, frame-range) row. Memory counts are frames held in the
/// memory bank: keyframes for the geometric method, every frame for the
/// baseline.
struct BucketRow {
    std::string method;
    int range_start = 0;
    int range_end = 0;          // exclusive
    double qps = 0.0;           // full per-frame pipeline for the geometric
                                // method, linear scan for the baseline
    double mem_increment = 0.0;
    double mem_total = 0.0;
    double ingest_us_mean = 0.0;    // geometric only; 0 for the baseline
    double retrieve_us_mean = 0.0;
};

struct BenchReport {
    std::vector<BucketRow> rows;
    std::string machine;
    std::string config_hash;
};

struct BenchOptions {
    int bucket = 1000;
    int warmup_frames = 32;       // excluded from the first bucket's timing
    std::set<Method> methods = {Method::Geometric, Method::PoseBaseline};
    int top_k = retrieval::kDefaultTopK;
    double baseline_probe_distance = 8.0;
    int replicas = 1;             // >1 runs independent trajectory copies on
                                  // separate threads (throughput studies)
};

/// Streams the trajectory over the terrain once per method. Every frame is
/// ingested (keyframe gate + window integration for the geometric engine;
/// store-all for the baseline) and one retrieval is timed. Depth rendering
/// stands in for the upstream depth network and is excluded from all
/// timings. Requires frames to be a multiple of the bucket size.
BenchReport run_efficiency_bench(const world::HeightField& hf,
                                 const world::TrajectoryScript& trajectory,
                                 int frames,
                                 const Intrinsics& intr,
                                 const store::StoreParams& params,
                                 const BenchOptions& opts = {});

/// CSV with the header
/// method,range_start,range_end,qps,mem_increment,mem_total
/// and one row per (method, bucket). Values are written with round-trip
/// precision.
void emit_report(const BenchReport& report, const std::string& path);
void write_report(std::ostream& os, const BenchReport& report);

/// Parses a CSV produced by emit_report. Component timings are not part of
/// the wire format and come back as 0.
BenchReport parse_report(std::istream& is);
BenchReport load_report(const std::string& path);

}  // namespace gsm::bench
