#include "gsm/bench.hpp"

#include "gsm/errors.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace gsm::bench {

namespace {

using Clock = std::chrono::steady_clock;

double micros_between(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double, std::micro>(b - a).count();
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct BucketAccumulator {
    double ingest_us = 0.0;
    double retrieve_us = 0.0;
    int timed_frames = 0;
    long mem_increment = 0;
};

struct MethodRun {
    std::vector<BucketAccumulator> buckets;
};

MethodRun run_geometric(const world::HeightField& hf,
                        const std::vector<Pose>& poses,
                        int frames,
                        const Intrinsics& intr,
                        const store::StoreParams& params,
                        const BenchOptions& opts) {
    MethodRun run;
    run.buckets.resize(static_cast<std::size_t>(frames / opts.bucket));
    engine::SpatialMemoryEngine eng(intr, params, opts.top_k);

    std::size_t prev_keyframes = 0;
    for (int f = 0; f < frames; ++f) {
        const Pose& pose = poses[static_cast<std::size_t>(f)];
        auto [depth, conf] = world::render_depth(hf, pose, intr);  // untimed

        const auto t0 = Clock::now();
        eng.process(static_cast<std::uint32_t>(f), pose, depth, conf);
        const auto t1 = Clock::now();
        eng.retrieve(pose, opts.top_k);
        const auto t2 = Clock::now();

        const int bucket = f / opts.bucket;
        auto& acc = run.buckets[static_cast<std::size_t>(bucket)];
        if (f >= opts.warmup_frames) {
            acc.ingest_us += micros_between(t0, t1);
            acc.retrieve_us += micros_between(t1, t2);
            ++acc.timed_frames;
        }
        const std::size_t kf = eng.keyframe_count();
        acc.mem_increment += static_cast<long>(kf - prev_keyframes);
        prev_keyframes = kf;
    }
    return run;
}

MethodRun run_baseline(const std::vector<Pose>& poses,
                       int frames,
                       const Intrinsics& intr,
                       const BenchOptions& opts) {
    MethodRun run;
    run.buckets.resize(static_cast<std::size_t>(frames / opts.bucket));

    std::vector<store::FrameRecord> bank;
    bank.reserve(static_cast<std::size_t>(frames));
    for (int f = 0; f < frames; ++f) {
        const Pose& pose = poses[static_cast<std::size_t>(f)];

        const auto t0 = Clock::now();
        bank.push_back({static_cast<std::uint32_t>(f), pose, false, std::nullopt, std::nullopt});
        retrieval::pose_baseline_retrieve(pose, bank, intr, opts.top_k,
                                          opts.baseline_probe_distance);
        const auto t1 = Clock::now();

        const int bucket = f / opts.bucket;
        auto& acc = run.buckets[static_cast<std::size_t>(bucket)];
        if (f >= opts.warmup_frames) {
            acc.retrieve_us += micros_between(t0, t1);
            ++acc.timed_frames;
        }
        acc.mem_increment += 1;
    }
    return run;
}

std::string machine_descriptor() {
    std::ostringstream os;
    os << "cpp" << __cplusplus << " hw_threads=" << std::thread::hardware_concurrency();
    return os.str();
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string config_hash(int frames, const Intrinsics& intr, const store::StoreParams& p,
                        const BenchOptions& opts) {
    std::ostringstream os;
    os << frames << '|' << intr.width << 'x' << intr.height << '|' << intr.fx << '|'
       << p.voxel_size << '|' << p.n_max << '|' << p.theta_novel << '|' << p.tau_hist << '|'
       << p.w_rec << '|' << p.overlap << '|' << opts.bucket << '|' << opts.warmup_frames << '|'
       << opts.top_k;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(os.str())));
    return buf;
}

void append_rows(BenchReport& report, Method method, const MethodRun& run,
                 int bucket_size) {
    double cumulative = 0.0;
    for (std::size_t b = 0; b < run.buckets.size(); ++b) {
        const BucketAccumulator& acc = run.buckets[b];
        BucketRow row;
        row.method = method_name(method);
        row.range_start = static_cast<int>(b) * bucket_size;
        row.range_end = row.range_start + bucket_size;
        const double total_us = acc.ingest_us + acc.retrieve_us;
        row.qps = (acc.timed_frames > 0 && total_us > 0.0)
                      ? acc.timed_frames * 1e6 / total_us
                      : 0.0;
        row.ingest_us_mean = acc.timed_frames > 0 ? acc.ingest_us / acc.timed_frames : 0.0;
        row.retrieve_us_mean = acc.timed_frames > 0 ? acc.retrieve_us / acc.timed_frames : 0.0;
        row.mem_increment = static_cast<double>(acc.mem_increment);
        cumulative += row.mem_increment;
        row.mem_total = cumulative;
        report.rows.push_back(std::move(row));
    }
}

}  // namespace

const char* method_name(Method m) {
    return m == Method::Geometric ? "geometric" : "baseline";
}

Method method_from_name(const std::string& name) {
    if (name == "geometric") return Method::Geometric;
    if (name == "baseline" || name == "pose_baseline") return Method::PoseBaseline;
    throw std::invalid_argument("unknown bench method: " + name);
}

BenchReport run_efficiency_bench(const world::HeightField& hf,
                                 const world::TrajectoryScript& trajectory,
                                 int frames,
                                 const Intrinsics& intr,
                                 const store::StoreParams& params,
                                 const BenchOptions& opts) {
    if (opts.bucket < 1 || frames < 1 || frames % opts.bucket != 0) {
        throw std::invalid_argument("run_efficiency_bench: frames must be a positive multiple of bucket");
    }
    if (opts.replicas < 1) {
        throw std::invalid_argument("run_efficiency_bench: replicas must be >= 1");
    }

    BenchReport report;
    report.machine = machine_descriptor();
    report.config_hash = config_hash(frames, intr, params, opts);
    if (opts.methods.empty()) return report;

    std::vector<Pose> poses = world::unroll_trajectory(trajectory);
    if (static_cast<int>(poses.size()) < frames) {
        throw std::invalid_argument("run_efficiency_bench: trajectory shorter than frame count");
    }
    poses.resize(static_cast<std::size_t>(frames));

    auto run_method = [&](Method m) {
        return m == Method::Geometric ? run_geometric(hf, poses, frames, intr, params, opts)
                                      : run_baseline(poses, frames, intr, opts);
    };

    for (Method m : opts.methods) {
        MethodRun merged;
        if (opts.replicas == 1) {
            merged = run_method(m);
        } else {
            // Replicated runs stress throughput; buckets aggregate across
            // replicas, memory counts stay per-replica.
            std::vector<MethodRun> runs(static_cast<std::size_t>(opts.replicas));
            std::vector<std::thread> workers;
            workers.reserve(runs.size());
            for (std::size_t i = 0; i < runs.size(); ++i) {
                workers.emplace_back([&, i] { runs[i] = run_method(m); });
            }
            for (auto& w : workers) w.join();
            merged = runs.front();
            for (std::size_t i = 1; i < runs.size(); ++i) {
                for (std::size_t b = 0; b < merged.buckets.size(); ++b) {
                    merged.buckets[b].ingest_us += runs[i].buckets[b].ingest_us;
                    merged.buckets[b].retrieve_us += runs[i].buckets[b].retrieve_us;
                    merged.buckets[b].timed_frames += runs[i].buckets[b].timed_frames;
                }
            }
        }
        append_rows(report, m, merged, opts.bucket);
    }
    return report;
}

void write_report(std::ostream& os, const BenchReport& report) {
    os << "method,range_start,range_end,qps,mem_increment,mem_total\n";
    for (const BucketRow& row : report.rows) {
        os << row.method << ',' << row.range_start << ',' << row.range_end << ','
           << format_double(row.qps) << ',' << format_double(row.mem_increment) << ','
           << format_double(row.mem_total) << '\n';
    }
}

void emit_report(const BenchReport& report, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open report for writing: " + path);
    write_report(os, report);
    os.flush();
    if (!os) throw std::runtime_error("report write failed: " + path);
}

BenchReport parse_report(std::istream& is) {
    BenchReport report;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(is, line)) throw FormatError("report: empty file", 0);
    ++line_no;
    if (line != "method,range_start,range_end,qps,mem_increment,mem_total") {
        throw FormatError("report: bad header", line_no);
    }
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        BucketRow row;
        std::string field;
        auto next = [&](const char* what) {
            if (!std::getline(ls, field, ',')) {
                throw FormatError(std::string("report: missing field ") + what, line_no);
            }
            return field;
        };
        row.method = next("method");
        try {
            row.range_start = std::stoi(next("range_start"));
            row.range_end = std::stoi(next("range_end"));
            row.qps = std::stod(next("qps"));
            row.mem_increment = std::stod(next("mem_increment"));
            row.mem_total = std::stod(next("mem_total"));
        } catch (const std::exception&) {
            throw FormatError("report: malformed numeric field", line_no);
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

BenchReport load_report(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open report: " + path);
    return parse_report(is);
}

}  // namespace gsm::bench
