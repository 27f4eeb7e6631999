#include "gsm/geometry.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gsm {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kHalfPi = std::numbers::pi / 2.0;
}  // namespace

double normalize_angle(double a) {
    double r = std::fmod(a + kPi, 2.0 * kPi);
    if (r < 0.0) r += 2.0 * kPi;
    return r - kPi;
}

void Pose::validate() const {
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) ||
        !std::isfinite(pitch) || !std::isfinite(yaw)) {
        throw std::invalid_argument("Pose: non-finite field");
    }
    if (pitch < -kHalfPi - 1e-12 || pitch > kHalfPi + 1e-12) {
        throw std::invalid_argument("Pose: pitch outside [-pi/2, pi/2]");
    }
}

Intrinsics Intrinsics::from_fov(int width, int height, double hfov_radians) {
    if (width <= 0 || height <= 0 || hfov_radians <= 0.0 || hfov_radians >= kPi) {
        throw std::invalid_argument("Intrinsics::from_fov: bad arguments");
    }
    Intrinsics intr;
    intr.width = width;
    intr.height = height;
    intr.fx = (width / 2.0) / std::tan(hfov_radians / 2.0);
    intr.fy = intr.fx;
    intr.cx = width / 2.0;
    intr.cy = height / 2.0;
    return intr;
}

Intrinsics Intrinsics::downscaled(int factor) const {
    if (factor < 1) throw std::invalid_argument("Intrinsics::downscaled: factor < 1");
    Intrinsics out;
    out.width = width / factor;
    out.height = height / factor;
    const double s = 1.0 / factor;
    out.fx = fx * s;
    out.fy = fy * s;
    out.cx = cx * s;
    out.cy = cy * s;
    return out;
}

void Intrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("Intrinsics: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw std::invalid_argument("Intrinsics: empty image");
    if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height) {
        throw std::invalid_argument("Intrinsics: principal point outside image");
    }
}

Intrinsics default_intrinsics() {
    return Intrinsics::from_fov(384, 224, 70.0 * kPi / 180.0);
}

Eigen::Matrix3d rotation_from_pitch_yaw(double pitch, double yaw) {
    if (!std::isfinite(pitch) || !std::isfinite(yaw)) {
        throw std::invalid_argument("rotation_from_pitch_yaw: non-finite angle");
    }
    const Eigen::Quaterniond q_yaw(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()));
    const Eigen::Quaterniond q_pitch(Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitX()));
    return (q_yaw * q_pitch).toRotationMatrix();
}

Extrinsics Extrinsics::from_pose(const Pose& pose) {
    pose.validate();
    const Eigen::Matrix3d cam_to_world = rotation_from_pitch_yaw(pose.pitch, pose.yaw);
    const Eigen::Matrix3d r = cam_to_world.transpose();
    Extrinsics ext;
    ext.matrix_.setIdentity();
    ext.matrix_.topLeftCorner<3, 3>() = r;
    ext.matrix_.topRightCorner<3, 1>() = -r * pose.position();
    return ext;
}

Eigen::Vector3d Extrinsics::camera_center() const {
    return -rotation().transpose() * translation();
}

Eigen::Vector3d Extrinsics::world_to_camera(const Eigen::Vector3d& p) const {
    return rotation() * p + translation();
}

Eigen::Vector3d Extrinsics::camera_to_world(const Eigen::Vector3d& p) const {
    return rotation().transpose() * (p - translation());
}

Extrinsics extrinsics_from_pose(const Pose& pose) {
    return Extrinsics::from_pose(pose);
}

std::vector<WorldPoint> backproject(const DepthMap& depth,
                                    const ConfidenceMap& confidence,
                                    const Intrinsics& intr,
                                    const Extrinsics& ext,
                                    std::uint32_t frame_id) {
    if (!depth.same_shape(intr.width, intr.height) ||
        !confidence.same_shape(intr.width, intr.height)) {
        throw std::invalid_argument("backproject: grid dimensions do not match intrinsics");
    }
    const Eigen::Matrix3d cam_to_world = ext.rotation().transpose();
    const Eigen::Vector3d center = ext.camera_center();

    std::vector<WorldPoint> points;
    points.reserve(depth.size());
    for (int v = 0; v < intr.height; ++v) {
        for (int u = 0; u < intr.width; ++u) {
            const float d = depth.at(v, u);
            if (d < kMinValidDepth) continue;
            const Eigen::Vector3d cam((u - intr.cx) * d / intr.fx,
                                      (v - intr.cy) * d / intr.fy,
                                      d);
            points.push_back({cam_to_world * cam + center, frame_id, confidence.at(v, u)});
        }
    }
    return points;
}

std::vector<ProjectedPoint> project_points(const std::vector<WorldPoint>& points,
                                           const Intrinsics& intr,
                                           const Extrinsics& ext) {
    const Eigen::Matrix3d r = ext.rotation();
    const Eigen::Vector3d t = ext.translation();

    std::vector<ProjectedPoint> out;
    out.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Eigen::Vector3d cam = r * points[i].position + t;
        if (cam.z() <= 0.0) continue;
        const double u = intr.fx * cam.x() / cam.z() + intr.cx;
        const double v = intr.fy * cam.y() / cam.z() + intr.cy;
        if (u < 0.0 || u >= intr.width || v < 0.0 || v >= intr.height) continue;
        out.push_back({u, v, cam.z(), i});
    }
    return out;
}

PluckerRayMap plucker_rays(const Intrinsics& intr, const Extrinsics& ext) {
    intr.validate();
    const Eigen::Matrix3d cam_to_world = ext.rotation().transpose();
    const Eigen::Vector3d center = ext.camera_center();

    PluckerRayMap map;
    map.width = intr.width;
    map.height = intr.height;
    map.rays.resize(static_cast<std::size_t>(intr.width) * intr.height);
    for (int v = 0; v < intr.height; ++v) {
        for (int u = 0; u < intr.width; ++u) {
            const Eigen::Vector3d cam((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
            const Eigen::Vector3d dir = (cam_to_world * cam).normalized();
            map.rays[static_cast<std::size_t>(v) * intr.width + u] = {dir, center.cross(dir)};
        }
    }
    return map;
}

}  // namespace gsm
