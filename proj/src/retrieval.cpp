#include "gsm/retrieval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace gsm::retrieval {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t micros_since(Clock::time_point start) {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - start).count());
}

// Votes -> top-k frame list, ordered by count descending then id ascending.
RetrievalResult rank_votes(const std::unordered_map<std::uint32_t, std::uint32_t>& votes, int k) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> ranked(votes.begin(), votes.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (ranked.size() > static_cast<std::size_t>(k)) ranked.resize(static_cast<std::size_t>(k));

    RetrievalResult result;
    result.frame_ids.reserve(ranked.size());
    result.vote_counts.reserve(ranked.size());
    for (const auto& [id, count] : ranked) {
        result.frame_ids.push_back(id);
        result.vote_counts.push_back(count);
    }
    return result;
}

struct Candidate {
    float depth;
    std::size_t pixel;
    std::uint32_t source_id;
};

RetrievalResult vote_candidates(std::vector<Candidate>& candidates,
                                std::vector<float>& zbuf,
                                bool occlusion,
                                int k) {
    std::unordered_map<std::uint32_t, std::uint32_t> votes;
    if (occlusion) {
        for (const Candidate& c : candidates) {
            if (c.depth < zbuf[c.pixel]) zbuf[c.pixel] = c.depth;
        }
        for (const Candidate& c : candidates) {
            const float front = zbuf[c.pixel];
            if (static_cast<double>(c.depth) <=
                static_cast<double>(front) + store::depth_tolerance(front)) {
                ++votes[c.source_id];
            }
        }
    } else {
        for (const Candidate& c : candidates) ++votes[c.source_id];
    }
    return rank_votes(votes, k);
}

}  // namespace

RetrievalResult point_to_frame_retrieve(const Pose& pose,
                                        const store::GlobalGeometry& geo,
                                        const Intrinsics& intr,
                                        int k,
                                        const RetrievalOptions& opts) {
    if (k < 1) throw std::invalid_argument("point_to_frame_retrieve: k must be >= 1");
    const auto start = Clock::now();

    const Intrinsics working = intr.downscaled(opts.working_downscale);
    const Extrinsics ext = extrinsics_from_pose(pose);
    const Eigen::Matrix3d r = ext.rotation();
    const Eigen::Vector3d t = ext.translation();
    const double radius = geo.voxel_size() * std::sqrt(3.0) / 2.0;

    Eigen::Vector3d planes[4] = {
        {working.fx, 0.0, working.cx},
        {-working.fx, 0.0, static_cast<double>(working.width) - working.cx},
        {0.0, working.fy, working.cy},
        {0.0, -working.fy, static_cast<double>(working.height) - working.cy},
    };
    for (auto& p : planes) p.normalize();

    std::vector<Candidate> candidates;
    const auto& points = geo.points();
    for (const auto& [key, cell] : geo.cells()) {
        // Conservative sphere-frustum cull per voxel cell; a point inside
        // the frustum always lives in a cell that passes this test.
        const Eigen::Vector3d center_cam = r * geo.cell_center(key) + t;
        if (center_cam.z() + radius <= 0.0) continue;
        bool outside = false;
        for (int i = 0; i < 4 && !outside; ++i) {
            if (planes[i].dot(center_cam) < -radius) outside = true;
        }
        if (outside) continue;

        for (std::uint32_t idx : cell.indices) {
            const store::StoredPoint& p = points[idx];
            const Eigen::Vector3d cam = r * Eigen::Vector3d(p.x, p.y, p.z) + t;
            if (cam.z() <= 0.0) continue;
            const double u = working.fx * cam.x() / cam.z() + working.cx;
            const double v = working.fy * cam.y() / cam.z() + working.cy;
            if (u < 0.0 || u >= working.width || v < 0.0 || v >= working.height) continue;
            const std::size_t pix =
                static_cast<std::size_t>(static_cast<int>(v)) * working.width + static_cast<int>(u);
            candidates.push_back({static_cast<float>(cam.z()), pix, p.source_id});
        }
    }

    std::vector<float> zbuf(static_cast<std::size_t>(working.width) * working.height,
                            std::numeric_limits<float>::infinity());
    RetrievalResult result = vote_candidates(candidates, zbuf, opts.occlusion, k);
    result.query_micros = micros_since(start);
    return result;
}

RetrievalResult brute_force_oracle(const Pose& pose,
                                   const store::GlobalGeometry& geo,
                                   const Intrinsics& intr,
                                   int k,
                                   const RetrievalOptions& opts) {
    if (k < 1) throw std::invalid_argument("brute_force_oracle: k must be >= 1");
    const auto start = Clock::now();

    const Intrinsics working = intr.downscaled(opts.working_downscale);
    const Extrinsics ext = extrinsics_from_pose(pose);
    const Eigen::Matrix3d r = ext.rotation();
    const Eigen::Vector3d t = ext.translation();

    std::vector<Candidate> candidates;
    candidates.reserve(geo.point_count());
    for (const store::StoredPoint& p : geo.points()) {
        const Eigen::Vector3d cam = r * Eigen::Vector3d(p.x, p.y, p.z) + t;
        if (cam.z() <= 0.0) continue;
        const double u = working.fx * cam.x() / cam.z() + working.cx;
        const double v = working.fy * cam.y() / cam.z() + working.cy;
        if (u < 0.0 || u >= working.width || v < 0.0 || v >= working.height) continue;
        const std::size_t pix =
            static_cast<std::size_t>(static_cast<int>(v)) * working.width + static_cast<int>(u);
        candidates.push_back({static_cast<float>(cam.z()), pix, p.source_id});
    }

    std::vector<float> zbuf(static_cast<std::size_t>(working.width) * working.height,
                            std::numeric_limits<float>::infinity());
    RetrievalResult result = vote_candidates(candidates, zbuf, opts.occlusion, k);
    result.query_micros = micros_since(start);
    return result;
}

double frustum_overlap_score(const Pose& query,
                             const Pose& target,
                             const Intrinsics& intr,
                             double probe_distance) {
    const Eigen::Matrix3d cam_to_world = rotation_from_pitch_yaw(query.pitch, query.yaw);
    const Eigen::Vector3d origin = query.position();
    const Extrinsics target_ext = extrinsics_from_pose(target);

    int inside = 0;
    for (int j = 0; j < 8; ++j) {
        for (int i = 0; i < 8; ++i) {
            const double u = (i + 0.5) * intr.width / 8.0;
            const double v = (j + 0.5) * intr.height / 8.0;
            const Eigen::Vector3d dir_cam((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
            const Eigen::Vector3d probe = origin + probe_distance * (cam_to_world * dir_cam).normalized();
            const Eigen::Vector3d cam = target_ext.world_to_camera(probe);
            if (cam.z() <= 0.0) continue;
            const double pu = intr.fx * cam.x() / cam.z() + intr.cx;
            const double pv = intr.fy * cam.y() / cam.z() + intr.cy;
            if (pu >= 0.0 && pu < intr.width && pv >= 0.0 && pv < intr.height) ++inside;
        }
    }
    return inside / 64.0;
}

RetrievalResult pose_baseline_retrieve(const Pose& pose,
                                       const std::vector<store::FrameRecord>& all_frames,
                                       const Intrinsics& intr,
                                       int k,
                                       double probe_distance) {
    if (k < 1) throw std::invalid_argument("pose_baseline_retrieve: k must be >= 1");
    const auto start = Clock::now();

    std::unordered_map<std::uint32_t, std::uint32_t> votes;
    for (const store::FrameRecord& f : all_frames) {
        const double score = frustum_overlap_score(pose, f.pose, intr, probe_distance);
        const auto inside = static_cast<std::uint32_t>(std::lround(score * 64.0));
        if (inside > 0) votes[f.id] = inside;
    }
    RetrievalResult result = rank_votes(votes, k);
    result.query_micros = micros_since(start);
    return result;
}

}  // namespace gsm::retrieval
