#include "gsm/config.hpp"

#include "gsm/errors.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>

namespace gsm::config {

Intrinsics RunConfig::intrinsics() const {
    return Intrinsics::from_fov(width, height, fov_deg * std::numbers::pi / 180.0);
}

bench::BenchOptions RunConfig::bench_options() const {
    bench::BenchOptions opts;
    opts.bucket = bench_bucket;
    opts.warmup_frames = bench_warmup;
    opts.top_k = k;
    opts.baseline_probe_distance = baseline_probe_distance;
    opts.replicas = bench_replicas;
    opts.methods.clear();
    std::istringstream ms(bench_methods);
    std::string name;
    while (std::getline(ms, name, ',')) {
        if (name.empty()) continue;
        try {
            opts.methods.insert(bench::method_from_name(name));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    return opts;
}

namespace {

struct Field {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename T>
T parse_value(const std::string& key, const std::string& raw);

template <>
double parse_value<double>(const std::string& key, const std::string& raw) {
    std::size_t pos = 0;
    double v;
    try {
        v = std::stod(raw, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config: bad numeric value for " + key + ": '" + raw + "'");
    }
    if (pos != raw.size() || !std::isfinite(v)) {
        throw ConfigError("config: bad numeric value for " + key + ": '" + raw + "'");
    }
    return v;
}

template <>
int parse_value<int>(const std::string& key, const std::string& raw) {
    std::size_t pos = 0;
    long v;
    try {
        v = std::stol(raw, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer value for " + key + ": '" + raw + "'");
    }
    if (pos != raw.size()) throw ConfigError("config: bad integer value for " + key + ": '" + raw + "'");
    return static_cast<int>(v);
}

template <>
std::uint64_t parse_value<std::uint64_t>(const std::string& key, const std::string& raw) {
    std::size_t pos = 0;
    unsigned long long v;
    try {
        v = std::stoull(raw, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer value for " + key + ": '" + raw + "'");
    }
    if (pos != raw.size()) throw ConfigError("config: bad integer value for " + key + ": '" + raw + "'");
    return v;
}

template <>
bool parse_value<bool>(const std::string& key, const std::string& raw) {
    if (raw == "1" || raw == "true") return true;
    if (raw == "0" || raw == "false") return false;
    throw ConfigError("config: bad boolean value for " + key + ": '" + raw + "'");
}

template <>
std::string parse_value<std::string>(const std::string&, const std::string& raw) {
    return raw;
}

std::string format_value(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}
std::string format_value(int v) { return std::to_string(v); }
std::string format_value(std::uint64_t v) { return std::to_string(v); }
std::string format_value(bool v) { return v ? "1" : "0"; }
std::string format_value(const std::string& v) { return v; }

const std::map<std::string, Field>& schema() {
    static const std::map<std::string, Field> fields = [] {
        std::map<std::string, Field> m;
        auto add = [&m](const std::string& key, auto member) {
            using T = std::remove_reference_t<decltype(std::declval<RunConfig&>().*member)>;
            m[key] = Field{
                [key, member](RunConfig& c, const std::string& raw) {
                    c.*member = parse_value<T>(key, raw);
                },
                [member](const RunConfig& c) { return format_value(c.*member); },
            };
        };
        auto add_store = [&m](const std::string& key, auto member) {
            using T = std::remove_reference_t<decltype(std::declval<store::StoreParams&>().*member)>;
            m[key] = Field{
                [key, member](RunConfig& c, const std::string& raw) {
                    c.store.*member = parse_value<T>(key, raw);
                },
                [member](const RunConfig& c) { return format_value(c.store.*member); },
            };
        };
        add("seed", &RunConfig::seed);
        add("terrain_extent", &RunConfig::terrain_extent);
        add("terrain_cell", &RunConfig::terrain_cell);
        add("terrain_roughness", &RunConfig::terrain_roughness);
        add("width", &RunConfig::width);
        add("height", &RunConfig::height);
        add("fov_deg", &RunConfig::fov_deg);
        add("traj_path", &RunConfig::traj_path);
        add("traj_frames", &RunConfig::traj_frames);
        add("traj_loops", &RunConfig::traj_loops);
        add("k", &RunConfig::k);
        add("occlusion", &RunConfig::occlusion);
        add("retrieval_downscale", &RunConfig::retrieval_downscale);
        add("conf_noise_fraction", &RunConfig::conf_noise_fraction);
        add("bench_frames", &RunConfig::bench_frames);
        add("bench_bucket", &RunConfig::bench_bucket);
        add("bench_warmup", &RunConfig::bench_warmup);
        add("bench_methods", &RunConfig::bench_methods);
        add("baseline_probe_distance", &RunConfig::baseline_probe_distance);
        add("bench_replicas", &RunConfig::bench_replicas);
        add("out", &RunConfig::out);
        add_store("voxel_size", &store::StoreParams::voxel_size);
        add_store("n_max", &store::StoreParams::n_max);
        add_store("theta_novel", &store::StoreParams::theta_novel);
        add_store("tau_hist", &store::StoreParams::tau_hist);
        add_store("coverage_downscale", &store::StoreParams::coverage_downscale);
        add_store("w_rec", &store::StoreParams::w_rec);
        add_store("overlap", &store::StoreParams::overlap);
        add_store("tau_min", &store::StoreParams::tau_min);
        add_store("keep_fraction", &store::StoreParams::keep_fraction);
        return m;
    }();
    return fields;
}

void check_range(bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
}

void validate(const RunConfig& c) {
    check_range(c.terrain_extent > 0.0, "terrain_extent must be positive");
    check_range(c.terrain_cell > 0.0, "terrain_cell must be positive");
    check_range(c.terrain_roughness >= 0.0, "terrain_roughness must be non-negative");
    check_range(c.width > 0 && c.height > 0, "image dimensions must be positive");
    check_range(c.fov_deg > 0.0 && c.fov_deg < 180.0, "fov_deg must be in (0, 180)");
    check_range(c.traj_frames >= 2, "traj_frames must be >= 2");
    check_range(c.traj_loops >= 0, "traj_loops must be non-negative");
    check_range(c.k >= 1, "k must be >= 1");
    check_range(c.retrieval_downscale >= 1, "retrieval_downscale must be >= 1");
    check_range(c.conf_noise_fraction >= 0.0 && c.conf_noise_fraction <= 1.0,
                "conf_noise_fraction must be in [0, 1]");
    check_range(c.bench_frames >= 1, "bench_frames must be >= 1");
    check_range(c.bench_bucket >= 1, "bench_bucket must be >= 1");
    check_range(c.bench_frames % c.bench_bucket == 0, "bench_frames must be a multiple of bench_bucket");
    check_range(c.bench_warmup >= 0, "bench_warmup must be non-negative");
    check_range(c.baseline_probe_distance > 0.0, "baseline_probe_distance must be positive");
    check_range(c.bench_replicas >= 1, "bench_replicas must be >= 1");
    check_range(c.store.voxel_size > 0.0, "voxel_size must be positive");
    check_range(c.store.n_max >= 1, "n_max must be >= 1");
    check_range(c.store.theta_novel >= 0.0 && c.store.theta_novel <= 1.0,
                "theta_novel must be in [0, 1]");
    check_range(c.store.tau_hist >= 0, "tau_hist must be non-negative");
    check_range(c.store.coverage_downscale >= 1, "coverage_downscale must be >= 1");
    check_range(c.store.w_rec >= 1, "w_rec must be >= 1");
    check_range(c.store.overlap >= 0 && c.store.overlap < c.store.w_rec,
                "overlap must be in [0, w_rec)");
    check_range(c.store.tau_min >= 0.0 && c.store.tau_min <= 1.0, "tau_min must be in [0, 1]");
    check_range(c.store.keep_fraction > 0.0 && c.store.keep_fraction <= 1.0,
                "keep_fraction must be in (0, 1]");
}

}  // namespace

RunConfig parse_config(std::istream& is) {
    RunConfig config;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = schema().find(key);
        if (it == schema().end()) {
            throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
        it->second.set(config, value);
    }
    validate(config);
    return config;
}

RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config: " + path);
    return parse_config(is);
}

void write_config(std::ostream& os, const RunConfig& config) {
    for (const auto& [key, field] : schema()) {
        os << key << " = " << field.get(config) << '\n';
    }
}

}  // namespace gsm::config
