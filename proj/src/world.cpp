#include "gsm/world.hpp"

#include "gsm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace gsm::world {

namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double hash_to_unit(std::uint64_t h) {
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::uint64_t lattice_hash(std::uint64_t seed, int octave, std::int64_t ix, std::int64_t iz) {
    std::uint64_t h = mix64(seed + 0x632BE59BD9B4E019ULL * static_cast<std::uint64_t>(octave + 1));
    h = mix64(h ^ (static_cast<std::uint64_t>(ix) * 0x9E3779B97F4A7C15ULL));
    h = mix64(h ^ (static_cast<std::uint64_t>(iz) * 0xC2B2AE3D27D4EB4FULL));
    return h;
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

// Smoothly interpolated lattice noise in [0, 1).
double value_noise(std::uint64_t seed, int octave, double px, double pz) {
    const double fx = std::floor(px);
    const double fz = std::floor(pz);
    const auto ix = static_cast<std::int64_t>(fx);
    const auto iz = static_cast<std::int64_t>(fz);
    const double tx = fade(px - fx);
    const double tz = fade(pz - fz);

    const double v00 = hash_to_unit(lattice_hash(seed, octave, ix, iz));
    const double v10 = hash_to_unit(lattice_hash(seed, octave, ix + 1, iz));
    const double v01 = hash_to_unit(lattice_hash(seed, octave, ix, iz + 1));
    const double v11 = hash_to_unit(lattice_hash(seed, octave, ix + 1, iz + 1));

    const double a = v00 + (v10 - v00) * tx;
    const double b = v01 + (v11 - v01) * tx;
    return a + (b - a) * tz;
}

constexpr int kOctaves = 4;
constexpr double kBaseFeatureSize = 32.0;  // meters
constexpr double kBaseAmplitude = 8.0;     // meters at roughness 1

double terrain_height(std::uint64_t seed, double roughness, double x, double z) {
    double h = 0.0;
    double amp = roughness * kBaseAmplitude;
    double freq = 1.0 / kBaseFeatureSize;
    for (int o = 0; o < kOctaves; ++o) {
        h += amp * (2.0 * value_noise(seed, o, x * freq, z * freq) - 1.0);
        amp *= 0.5;
        freq *= 2.0;
    }
    return h;
}

}  // namespace

bool HeightField::contains(double x, double z) const {
    return x >= min_coord() && x <= max_coord() && z >= min_coord() && z <= max_coord();
}

double HeightField::height_at(double x, double z) const {
    const double gx = (x - min_coord()) / cell;
    const double gz = (z - min_coord()) / cell;
    int i = static_cast<int>(std::floor(gx));
    int j = static_cast<int>(std::floor(gz));
    i = std::clamp(i, 0, nodes - 2);
    j = std::clamp(j, 0, nodes - 2);
    const double tx = gx - i;
    const double tz = gz - j;
    const double h00 = elevation[static_cast<std::size_t>(j) * nodes + i];
    const double h10 = elevation[static_cast<std::size_t>(j) * nodes + i + 1];
    const double h01 = elevation[static_cast<std::size_t>(j + 1) * nodes + i];
    const double h11 = elevation[static_cast<std::size_t>(j + 1) * nodes + i + 1];
    const double a = h00 + (h10 - h00) * tx;
    const double b = h01 + (h11 - h01) * tx;
    return a + (b - a) * tz;
}

double HeightField::min_elevation() const {
    return *std::min_element(elevation.begin(), elevation.end());
}

double HeightField::max_elevation() const {
    return *std::max_element(elevation.begin(), elevation.end());
}

HeightField generate_terrain(std::uint64_t seed, double extent, double cell, double roughness) {
    if (!(extent > 0.0) || !(cell > 0.0)) {
        throw std::invalid_argument("generate_terrain: extent and cell must be positive");
    }
    HeightField hf;
    hf.extent = extent;
    hf.cell = cell;
    hf.seed = seed;
    hf.nodes = static_cast<int>(std::llround(extent / cell)) + 1;
    hf.elevation.resize(static_cast<std::size_t>(hf.nodes) * hf.nodes);
    for (int j = 0; j < hf.nodes; ++j) {
        const double z = hf.min_coord() + j * cell;
        for (int i = 0; i < hf.nodes; ++i) {
            const double x = hf.min_coord() + i * cell;
            hf.elevation[static_cast<std::size_t>(j) * hf.nodes + i] =
                roughness == 0.0 ? 0.0 : terrain_height(seed, roughness, x, z);
        }
    }
    return hf;
}

const char* action_name(Action a) {
    switch (a) {
        case Action::Forward: return "forward";
        case Action::Back: return "back";
        case Action::Left: return "left";
        case Action::Right: return "right";
        case Action::TurnLeft: return "turn_left";
        case Action::TurnRight: return "turn_right";
        case Action::LookUp: return "look_up";
        case Action::LookDown: return "look_down";
    }
    return "?";
}

std::vector<Pose> unroll_trajectory(const TrajectoryScript& script) {
    if (script.actions.empty()) {
        throw std::invalid_argument("unroll_trajectory: empty action list");
    }
    script.initial.validate();

    std::vector<Pose> poses;
    poses.reserve(script.actions.size() + 1);
    Pose p = script.initial;
    poses.push_back(p);
    for (Action a : script.actions) {
        const double fx = std::sin(p.yaw);
        const double fz = std::cos(p.yaw);
        switch (a) {
            case Action::Forward:
                p.x += script.step_move * fx;
                p.z += script.step_move * fz;
                break;
            case Action::Back:
                p.x -= script.step_move * fx;
                p.z -= script.step_move * fz;
                break;
            case Action::Left:
                p.x += script.step_move * fz;
                p.z -= script.step_move * fx;
                break;
            case Action::Right:
                p.x -= script.step_move * fz;
                p.z += script.step_move * fx;
                break;
            case Action::TurnLeft:
                p.yaw = normalize_angle(p.yaw + script.step_turn);
                break;
            case Action::TurnRight:
                p.yaw = normalize_angle(p.yaw - script.step_turn);
                break;
            case Action::LookUp:
                p.pitch = std::clamp(p.pitch - script.step_turn, -kPi / 2.0, kPi / 2.0);
                break;
            case Action::LookDown:
                p.pitch = std::clamp(p.pitch + script.step_turn, -kPi / 2.0, kPi / 2.0);
                break;
        }
        poses.push_back(p);
    }
    return poses;
}

TrajectoryScript make_revisit_trajectory(std::uint64_t seed, int length, int loop_count) {
    if (length < 2) throw std::invalid_argument("make_revisit_trajectory: length < 2");
    if (loop_count < 0 || length < 2 * loop_count) {
        throw std::invalid_argument("make_revisit_trajectory: length < 2 * loop_count");
    }

    TrajectoryScript script;
    script.step_move = 1.0;
    script.step_turn = kPi / 8.0;
    script.initial = Pose{0.0, 12.0, 0.0, 0.5, 0.0};

    const int total_actions = length - 1;
    auto& acts = script.actions;

    if (loop_count == 0) {
        acts.assign(static_cast<std::size_t>(total_actions), Action::Forward);
        return script;
    }

    // Each loop: walk out, do a half turn (8 steps of pi/8), walk back, half
    // turn again to restore the heading, then rotate pi/2 (4 steps) so the
    // next loop takes a fresh corridor. Headings cycle through the four
    // compass directions; the seed picks the turn handedness.
    const bool left_handed = (mix64(seed) & 1u) == 0u;
    const Action turn = left_handed ? Action::TurnLeft : Action::TurnRight;
    const int budget = total_actions / loop_count;
    const int overhead = 8 + 8 + 4;
    const int out_steps = std::max(1, (budget - overhead) / 2);

    for (int loop = 0; loop < loop_count; ++loop) {
        for (int i = 0; i < out_steps; ++i) acts.push_back(Action::Forward);
        for (int i = 0; i < 8; ++i) acts.push_back(turn);
        for (int i = 0; i < out_steps; ++i) acts.push_back(Action::Forward);
        for (int i = 0; i < 8; ++i) acts.push_back(turn);
        for (int i = 0; i < 4; ++i) acts.push_back(turn);
    }
    // Pad or trim to the requested length. Padding turns in place at the
    // start position, which stays inside already-covered ground.
    while (static_cast<int>(acts.size()) < total_actions) acts.push_back(turn);
    acts.resize(static_cast<std::size_t>(total_actions));
    return script;
}

std::pair<DepthMap, ConfidenceMap> render_depth(const HeightField& hf,
                                                const Pose& pose,
                                                const Intrinsics& intr,
                                                const RenderOptions& opts) {
    pose.validate();
    intr.validate();
    if (!hf.contains(pose.x, pose.z)) {
        throw std::out_of_range("render_depth: pose outside terrain extent");
    }

    const Eigen::Matrix3d cam_to_world = rotation_from_pitch_yaw(pose.pitch, pose.yaw);
    const double max_range = opts.max_range > 0.0 ? opts.max_range : 2.0 * hf.extent;
    const double step = hf.cell * 0.5;
    const double max_elev = hf.max_elevation();

    const double ox = pose.x, oy = pose.y, oz = pose.z;
    const double min_c = hf.min_coord(), max_c = hf.max_coord();
    const double inv_cell = 1.0 / hf.cell;
    const int nodes = hf.nodes;
    const double* elev = hf.elevation.data();

    // Bilinear terrain height; caller guarantees (x, z) inside the extent.
    auto height = [&](double x, double z) {
        const double gx = (x - min_c) * inv_cell;
        const double gz = (z - min_c) * inv_cell;
        int i = static_cast<int>(gx);
        int j = static_cast<int>(gz);
        i = std::min(i, nodes - 2);
        j = std::min(j, nodes - 2);
        const double tx = gx - i;
        const double tz = gz - j;
        const double* row = elev + static_cast<std::size_t>(j) * nodes + i;
        const double a = row[0] + (row[1] - row[0]) * tx;
        const double b = row[nodes] + (row[nodes + 1] - row[nodes]) * tx;
        return a + (b - a) * tz;
    };

    DepthMap depth(intr.width, intr.height, 0.0f);
    ConfidenceMap conf(intr.width, intr.height, 0.0f);

    for (int v = 0; v < intr.height; ++v) {
        for (int u = 0; u < intr.width; ++u) {
            const Eigen::Vector3d dir_cam((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
            const Eigen::Vector3d wv = cam_to_world * dir_cam;
            const double wx = wv.x(), wy = wv.y(), wz = wv.z();
            const double w_norm = wv.norm();

            // The ray parameter s is the camera-frame depth: p(s) = C + s*w
            // with w_z = 1 in camera coordinates.
            double s = opts.near_plane;
            {
                const double px = ox + s * wx, pz = oz + s * wz;
                if (px < min_c || px > max_c || pz < min_c || pz > max_c) continue;
                if (oy + s * wy <= height(px, pz)) continue;  // underground at near plane
            }

            const double grow = 0.025 / w_norm;
            const double base = step / w_norm;
            double hit = -1.0;
            double s_prev = s;
            while (true) {
                // Step length grows with distance; the bisection below
                // recovers the exact crossing.
                s += std::max(base, grow * s * w_norm);
                if (s * w_norm > max_range) break;
                const double px = ox + s * wx, py = oy + s * wy, pz = oz + s * wz;
                if (px < min_c || px > max_c || pz < min_c || pz > max_c) break;
                if (py > max_elev && wy >= 0.0) break;  // escaped upward
                if (py <= height(px, pz)) {
                    // Bisect the crossing in (s_prev, s].
                    double lo = s_prev, hi = s;
                    for (int it = 0; it < 48; ++it) {
                        const double mid = 0.5 * (lo + hi);
                        if (oy + mid * wy <= height(ox + mid * wx, oz + mid * wz)) hi = mid;
                        else lo = mid;
                    }
                    hit = hi;
                    break;
                }
                s_prev = s;
            }
            if (hit < 0.0) continue;

            depth.at(v, u) = static_cast<float>(hit);
            float c = 1.0f;
            if (opts.noise.fraction > 0.0) {
                const std::uint64_t h = mix64(mix64(opts.noise.seed ^ 0xA24BAED4963EE407ULL) ^
                                              (static_cast<std::uint64_t>(v) << 32 | static_cast<std::uint32_t>(u)));
                if (hash_to_unit(h) < opts.noise.fraction) {
                    c = static_cast<float>(0.3 + 0.7 * hash_to_unit(mix64(h)));
                }
            }
            conf.at(v, u) = c;
        }
    }
    return {std::move(depth), std::move(conf)};
}

void write_script(std::ostream& os, const TrajectoryScript& script) {
    os.precision(17);
    os << "pose " << script.initial.x << ' ' << script.initial.y << ' ' << script.initial.z
       << ' ' << script.initial.pitch << ' ' << script.initial.yaw << '\n';
    os << "step_move " << script.step_move << '\n';
    os << "step_turn " << script.step_turn << '\n';
    for (Action a : script.actions) os << action_name(a) << '\n';
}

TrajectoryScript read_script(std::istream& is) {
    TrajectoryScript script;
    bool have_pose = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "pose") {
            if (!(ls >> script.initial.x >> script.initial.y >> script.initial.z >>
                  script.initial.pitch >> script.initial.yaw)) {
                throw FormatError("script: malformed pose line", line_no);
            }
            have_pose = true;
        } else if (tok == "step_move") {
            if (!(ls >> script.step_move)) throw FormatError("script: malformed step_move", line_no);
        } else if (tok == "step_turn") {
            if (!(ls >> script.step_turn)) throw FormatError("script: malformed step_turn", line_no);
        } else if (tok == "forward") {
            script.actions.push_back(Action::Forward);
        } else if (tok == "back") {
            script.actions.push_back(Action::Back);
        } else if (tok == "left") {
            script.actions.push_back(Action::Left);
        } else if (tok == "right") {
            script.actions.push_back(Action::Right);
        } else if (tok == "turn_left") {
            script.actions.push_back(Action::TurnLeft);
        } else if (tok == "turn_right") {
            script.actions.push_back(Action::TurnRight);
        } else if (tok == "look_up") {
            script.actions.push_back(Action::LookUp);
        } else if (tok == "look_down") {
            script.actions.push_back(Action::LookDown);
        } else {
            throw FormatError("script: unknown token '" + tok + "'", line_no);
        }
    }
    if (!have_pose || script.actions.empty()) {
        throw FormatError("script: missing pose header or actions", line_no);
    }
    return script;
}

TrajectoryScript load_script(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open script: " + path);
    return read_script(is);
}

}  // namespace gsm::world
