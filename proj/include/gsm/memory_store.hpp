#pragma once

#include "gsm/geometry.hpp"
#include "gsm/scale_alignment.hpp"

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace gsm::store {

/// Tunables for the spatial memory. Defaults bound per-cell density while
/// keeping multi-frame provenance within each cell.
struct StoreParams {
    double voxel_size = 0.5;          // meters
    int n_max = 4;                    // points kept per voxel cell
    double theta_novel = 0.15;        // keyframe gate threshold on novel coverage
    int tau_hist = 8;                 // minimum retrieved-history count
    int coverage_downscale = 4;       // coverage z-buffer at 1/N resolution
    int w_rec = 8;                    // keyframes per reconstruction window
    int overlap = 2;                  // keyframes carried between windows
    int max_pending_age = 64;         // frames a partial window may wait
                                      // before integrating anyway (0 = only
                                      // at capacity or stream end)
    double tau_min = scale::kDefaultTauMin;
    double keep_fraction = scale::kDefaultKeepFraction;
    std::size_t min_scale_pairs = scale::kMinCorrespondences;
};

/// Depth agreement tolerance used by coverage and visibility z-buffers.
inline double depth_tolerance(double depth) {
    return std::max(0.05, 0.02 * depth);
}

/// One observed frame. Non-keyframes keep only pose metadata; keyframes
/// additionally retain their (scale-aligned) depth and confidence payloads.
struct FrameRecord {
    std::uint32_t id = 0;
    Pose pose;
    bool keyframe = false;
    std::optional<DepthMap> depth;       // aligned scale; keyframes only
    std::optional<ConfidenceMap> confidence;
};

/// Point storage layout (also the snapshot wire layout).
struct StoredPoint {
    float x = 0.0f, y = 0.0f, z = 0.0f;
    std::uint32_t source_id = 0;
    float confidence = 0.0f;
};

/// The voxel-indexed global point cloud. Every point carries its source
/// frame id; each cell holds at most n_max points, ranked by confidence
/// (ties prefer the lower frame id, then earlier insertion).
class GlobalGeometry {
public:
    GlobalGeometry() = default;
    GlobalGeometry(double voxel_size, int n_max);

    double voxel_size() const { return voxel_size_; }
    int n_max() const { return n_max_; }
    const std::vector<StoredPoint>& points() const { return points_; }
    std::size_t point_count() const { return points_.size(); }
    bool empty() const { return points_.empty(); }

    /// Inserts with the per-cell cap. Exact duplicates (same position bits,
    /// source and confidence) are absorbed. Returns true if the cloud gained
    /// a point (including replacement of a weaker one).
    bool insert(const StoredPoint& p);
    void insert_all(const std::vector<WorldPoint>& pts);

    std::int64_t cell_of(float coord) const;
    std::uint64_t cell_key(const StoredPoint& p) const;

    struct Cell {
        std::vector<std::uint32_t> indices;  // into points_
    };
    const std::unordered_map<std::uint64_t, Cell>& cells() const { return cells_; }

    /// Decoded cell center in world coordinates.
    Eigen::Vector3d cell_center(std::uint64_t key) const;

    /// Rebuilds the voxel index from the point array (used after load).
    void rebuild_index();

    /// Checks cell membership + cap invariants; throws std::logic_error on
    /// violation. Test support.
    void check_invariants() const;

private:
    double voxel_size_ = 0.5;
    int n_max_ = 4;
    std::vector<StoredPoint> points_;
    std::unordered_map<std::uint64_t, Cell> cells_;
};

/// Fraction of the frame's valid depth pixels not explained by rendering
/// the existing global cloud from this pose (z-buffer at the working
/// resolution, agreement within depth_tolerance). Empty geometry -> 1.0;
/// a frame with no valid pixels -> 0.0.
double novel_coverage(const Pose& pose,
                      const DepthMap& depth,
                      const GlobalGeometry& geo,
                      const Intrinsics& intr,
                      int coverage_downscale = 4);

/// The pure admission predicate: novel coverage meets the threshold, or
/// too little history has been retrieved.
inline bool keyframe_decision(double coverage, int retrieval_count,
                              double theta_novel, int tau_hist) {
    return coverage >= theta_novel || retrieval_count < tau_hist;
}

bool is_keyframe(const Pose& pose,
                 const DepthMap& depth,
                 const GlobalGeometry& geo,
                 const Intrinsics& intr,
                 int retrieval_count,
                 double theta_novel,
                 int tau_hist,
                 int coverage_downscale = 4);

/// Keyframes waiting for joint processing, plus the overlap frames carried
/// from the previous window (raw depth at stream scale and aligned depth at
/// global scale) that anchor cross-window scale alignment.
struct ProcessingWindow {
    struct PendingFrame {
        std::uint32_t id = 0;
        Pose pose;
        DepthMap raw_depth;
        ConfidenceMap confidence;
    };
    struct OverlapFrame {
        std::uint32_t id = 0;
        DepthMap raw_depth;
        DepthMap aligned_depth;
        ConfidenceMap confidence;
    };

    std::vector<PendingFrame> pending;
    std::vector<OverlapFrame> carried;
    std::vector<std::uint32_t> retrieved_ids;

    bool at_capacity(int w_rec) const { return static_cast<int>(pending.size()) >= w_rec; }
};

struct IntegrationResult {
    double applied_scale = 1.0;
    bool scale_fallback = false;     // degenerate correspondences -> s = 1
    std::size_t correspondences = 0;
    std::size_t points_added = 0;
    std::vector<std::uint32_t> integrated_ids;
};

/// Jointly processes the window: detects overlap with the global store,
/// estimates one multiplicative depth scale from the overlap frames
/// (falling back to 1 when degenerate), back-projects each pending keyframe
/// at the aligned scale and integrates the points under the voxel cap.
/// window_scale simulates window-relative depth (every incoming raw depth is
/// multiplied by it before alignment; the estimator should undo it).
/// On return the window holds only the new carried overlap frames.
IntegrationResult integrate_window(ProcessingWindow& window,
                                   GlobalGeometry& geo,
                                   const std::set<std::uint32_t>& global_frame_ids,
                                   const Intrinsics& intr,
                                   const StoreParams& params,
                                   double window_scale = 1.0,
                                   std::vector<FrameRecord>* frame_sink = nullptr);

/// Per-cell cap as a standalone operation: keeps the n_max highest-confidence
/// points per voxel cell (ties prefer lower frame id, then input order) and
/// returns survivors in input order.
std::vector<StoredPoint> voxel_downsample(const std::vector<StoredPoint>& points,
                                          double voxel_size,
                                          int n_max);

/// Snapshot file: magic "GMEM", version u16, little-endian throughout.
/// Frame table (id u32, keyframe u8, pose 5 x f64), point table
/// (3 x f32 position, u32 source, f32 confidence), voxel params. The voxel
/// index is rebuilt on load. Corrupt or truncated files raise FormatError
/// with the failing byte offset.
void save_snapshot(const GlobalGeometry& geo,
                   const std::vector<FrameRecord>& frames,
                   const std::string& path);

struct Snapshot {
    GlobalGeometry geometry;
    std::vector<FrameRecord> frames;  // payloads are not persisted
};

Snapshot load_snapshot(const std::string& path);

}  // namespace gsm::store
