#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <vector>

namespace gsm {

// Coordinate conventions used throughout the engine:
//   World frame: right-handed, +y up.
//   Camera frame: +x along increasing pixel column u, +y along increasing
//   row v, +z the viewing direction.
//   yaw rotates about world +y (yaw 0 looks along +z, positive yaw turns
//   the forward axis toward +x); pitch rotates about the camera x axis,
//   positive pitch tilts the view downward (pitch +pi/2 looks straight down).
//   Rotations compose as q_yaw * q_pitch (pitch applied first).

/// Camera position and view direction. Pitch stays in [-pi/2, pi/2]; no
/// roll. Scripted trajectories keep yaw normalized to [-pi, pi); any finite
/// yaw is accepted (rotations are periodic).
struct Pose {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double pitch = 0.0;
    double yaw = 0.0;

    Eigen::Vector3d position() const { return {x, y, z}; }

    /// Throws std::invalid_argument on non-finite fields or pitch out of range.
    void validate() const;
};

/// Wraps an angle into [-pi, pi).
double normalize_angle(double a);

/// Pinhole camera parameters, in pixels.
struct Intrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    /// Square-pixel intrinsics from a horizontal field of view, principal
    /// point at the image center.
    static Intrinsics from_fov(int width, int height, double hfov_radians);

    /// Intrinsics for an image downscaled by an integer factor.
    Intrinsics downscaled(int factor) const;

    void validate() const;
};

/// Default camera: 70 degree horizontal field of view at 384x224.
Intrinsics default_intrinsics();

/// Row-major scalar image. Depth values are meters; entries below
/// kMinValidDepth mark invalid pixels (sky, missing data).
template <typename T>
struct Grid {
    int width = 0;
    int height = 0;
    std::vector<T> data;

    Grid() = default;
    Grid(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    T& at(int v, int u) { return data[static_cast<std::size_t>(v) * width + u]; }
    const T& at(int v, int u) const { return data[static_cast<std::size_t>(v) * width + u]; }
    std::size_t size() const { return data.size(); }
    bool same_shape(int w, int h) const { return width == w && height == h; }
};

using DepthMap = Grid<float>;
using ConfidenceMap = Grid<float>;

inline constexpr float kMinValidDepth = 1e-6f;

/// World-to-camera rigid transform. Rotation block is orthonormal,
/// bottom row exactly (0,0,0,1).
class Extrinsics {
public:
    Extrinsics() : matrix_(Eigen::Matrix4d::Identity()) {}

    static Extrinsics from_pose(const Pose& pose);

    const Eigen::Matrix4d& matrix() const { return matrix_; }
    Eigen::Matrix3d rotation() const { return matrix_.topLeftCorner<3, 3>(); }
    Eigen::Vector3d translation() const { return matrix_.topRightCorner<3, 1>(); }

    /// Camera center C in world coordinates (E * [C;1] = origin).
    Eigen::Vector3d camera_center() const;

    Eigen::Vector3d world_to_camera(const Eigen::Vector3d& p) const;
    Eigen::Vector3d camera_to_world(const Eigen::Vector3d& p) const;

private:
    Eigen::Matrix4d matrix_;
};

/// Camera-to-world rotation for a pitch/yaw view direction, computed as the
/// quaternion composition q_yaw (about world up) * q_pitch (about camera x)
/// converted to a matrix.
Eigen::Matrix3d rotation_from_pitch_yaw(double pitch, double yaw);

Extrinsics extrinsics_from_pose(const Pose& pose);

/// One back-projected depth pixel in world coordinates, tagged with the
/// frame that observed it.
struct WorldPoint {
    Eigen::Vector3d position;
    std::uint32_t source_id = 0;
    float confidence = 1.0f;
};

/// Lifts every valid depth pixel (depth >= kMinValidDepth) to a world point.
/// Pixel (u, v, d) maps to camera coordinates ((u-cx)d/fx, (v-cy)d/fy, d)
/// and then through the inverse extrinsics.
/// Throws std::invalid_argument if depth/confidence dimensions disagree
/// with the intrinsics.
std::vector<WorldPoint> backproject(const DepthMap& depth,
                                    const ConfidenceMap& confidence,
                                    const Intrinsics& intr,
                                    const Extrinsics& ext,
                                    std::uint32_t frame_id);

/// Forward pinhole projection of one point.
struct ProjectedPoint {
    double u = 0.0;
    double v = 0.0;
    double depth = 0.0;       // camera-frame z
    std::size_t point_index = 0;
};

/// Projects points into the image, keeping only those with positive camera
/// depth that land inside [0,width) x [0,height).
std::vector<ProjectedPoint> project_points(const std::vector<WorldPoint>& points,
                                           const Intrinsics& intr,
                                           const Extrinsics& ext);

/// Per-pixel ray as (unit direction, moment = camera_center x direction),
/// both in world coordinates.
struct PluckerRay {
    Eigen::Vector3d direction;
    Eigen::Vector3d moment;
};

struct PluckerRayMap {
    int width = 0;
    int height = 0;
    std::vector<PluckerRay> rays;

    const PluckerRay& at(int v, int u) const {
        return rays[static_cast<std::size_t>(v) * width + u];
    }
};

PluckerRayMap plucker_rays(const Intrinsics& intr, const Extrinsics& ext);

}  // namespace gsm
