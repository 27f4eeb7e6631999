#pragma once

#include "gsm/geometry.hpp"
#include "gsm/memory_store.hpp"

#include <cstdint>
#include <vector>

namespace gsm::retrieval {

inline constexpr int kDefaultTopK = 8;

/// Frames most frequently referenced by the points visible from a query
/// pose, ordered by descending vote count (ties prefer the lower frame id).
struct RetrievalResult {
    std::vector<std::uint32_t> frame_ids;
    std::vector<std::uint32_t> vote_counts;
    std::uint64_t query_micros = 0;

    std::size_t size() const { return frame_ids.size(); }
    bool empty() const { return frame_ids.empty(); }
};

struct RetrievalOptions {
    int working_downscale = 4;   // z-buffer resolution = intrinsics / N
    bool occlusion = true;       // false: frustum membership only
};

/// Point-to-frame retrieval. Projects the global cloud into the query view
/// (walking only voxel cells that intersect the frustum), resolves
/// visibility with a z-buffer at the working resolution (front-most point
/// per pixel wins, anything within the depth tolerance of it stays
/// visible), then votes by source frame id. Returns at most k frames;
/// an empty store yields an empty result.
RetrievalResult point_to_frame_retrieve(const Pose& pose,
                                        const store::GlobalGeometry& geo,
                                        const Intrinsics& intr,
                                        int k = kDefaultTopK,
                                        const RetrievalOptions& opts = {});

/// Reference implementation: exhaustively projects every stored point with
/// a dense z-buffer over the full working frame and no spatial-index
/// shortcuts. Same visibility contract as the fast path.
RetrievalResult brute_force_oracle(const Pose& pose,
                                   const store::GlobalGeometry& geo,
                                   const Intrinsics& intr,
                                   int k = kDefaultTopK,
                                   const RetrievalOptions& opts = {});

/// Fraction of a fixed 8x8 grid of query-frustum sample points (taken at
/// probe_distance along each pixel ray) that fall inside the target pose's
/// view frustum.
double frustum_overlap_score(const Pose& query,
                             const Pose& target,
                             const Intrinsics& intr,
                             double probe_distance = 8.0);

/// Linear-scan baseline: scores every stored frame by frustum overlap with
/// the query and returns the top k (ties prefer the lower frame id). The
/// baseline store keeps every frame, so cost grows with sequence length.
RetrievalResult pose_baseline_retrieve(const Pose& pose,
                                       const std::vector<store::FrameRecord>& all_frames,
                                       const Intrinsics& intr,
                                       int k = kDefaultTopK,
                                       double probe_distance = 8.0);

}  // namespace gsm::retrieval
