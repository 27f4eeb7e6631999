#pragma once

#include "gsm/geometry.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace gsm::world {

/// Procedural terrain: a square grid of elevations over a centered x-z
/// extent. Generation is a pure function of (seed, params) and reproduces
/// bit-for-bit.
struct HeightField {
    double extent = 0.0;     // side length in meters, centered on the origin
    double cell = 1.0;       // grid spacing in meters
    std::uint64_t seed = 0;
    int nodes = 0;           // nodes per side
    std::vector<double> elevation;  // nodes x nodes, row-major over (z, x)

    double min_coord() const { return -extent / 2.0; }
    double max_coord() const { return extent / 2.0; }
    bool contains(double x, double z) const;

    /// Bilinear elevation at (x, z). Caller must check contains() first.
    double height_at(double x, double z) const;

    double min_elevation() const;
    double max_elevation() const;
};

/// Value-noise terrain. roughness scales amplitude; 0 gives a flat plane
/// at elevation 0. Throws std::invalid_argument on non-positive extent/cell.
HeightField generate_terrain(std::uint64_t seed, double extent, double cell, double roughness);

enum class Action : std::uint8_t {
    Forward,
    Back,
    Left,
    Right,
    TurnLeft,
    TurnRight,
    LookUp,
    LookDown,
};

const char* action_name(Action a);

/// A scripted camera path: an initial pose plus a list of discrete actions.
/// Translations move in the yaw-aligned ground plane; turns adjust yaw by
/// step_turn, look actions adjust pitch (clamped to [-pi/2, pi/2]).
struct TrajectoryScript {
    Pose initial;
    double step_move = 1.0;   // meters per move action
    double step_turn = 0.0;   // radians per turn/look action
    std::vector<Action> actions;
};

/// Applies the script, returning actions.size() + 1 poses (initial first).
std::vector<Pose> unroll_trajectory(const TrajectoryScript& script);

/// Builds a script of `length` poses that repeatedly walks out-and-back
/// corridors from the start position, re-entering previously covered view
/// frusta at least loop_count times. loop_count 0 gives a straight
/// exploration path with no revisit. Deterministic in seed.
TrajectoryScript make_revisit_trajectory(std::uint64_t seed, int length, int loop_count);

/// Optional confidence degradation for rendered frames: a seeded fraction
/// of pixels gets its confidence drawn uniformly from [0.3, 1.0] instead
/// of 1.0.
struct ConfidenceNoise {
    double fraction = 0.0;
    std::uint64_t seed = 0;
};

struct RenderOptions {
    double near_plane = 0.01;
    double max_range = 0.0;   // 0 = 2x terrain extent
    ConfidenceNoise noise;
};

/// Ray-marches the heightfield from the pose. Sky and out-of-range pixels
/// get depth 0 (invalid) with confidence 0; hits get the camera-frame z
/// depth with confidence 1 (optionally attenuated by the noise model).
/// Throws std::out_of_range if the pose is outside the terrain extent.
std::pair<DepthMap, ConfidenceMap> render_depth(const HeightField& hf,
                                                const Pose& pose,
                                                const Intrinsics& intr,
                                                const RenderOptions& opts = {});

/// Line-oriented script serialization:
///   pose <x> <y> <z> <pitch> <yaw>
///   step_move <meters>
///   step_turn <radians>
///   <action>            (one token per line: forward, back, left, right,
///                        turn_left, turn_right, look_up, look_down)
void write_script(std::ostream& os, const TrajectoryScript& script);
TrajectoryScript read_script(std::istream& is);
TrajectoryScript load_script(const std::string& path);

}  // namespace gsm::world
