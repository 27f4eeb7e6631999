#include "gsm/memory_store.hpp"

#include "gsm/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace gsm::store {

namespace {

constexpr std::uint64_t kAxisBias = 1ULL << 20;   // 21-bit signed cells per axis
constexpr std::uint64_t kAxisMask = (1ULL << 21) - 1;

// Candidate a beats b when it has higher confidence, or equal confidence
// and a lower frame id. Equal confidence and id keeps the incumbent.
bool stronger(const StoredPoint& a, const StoredPoint& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.source_id < b.source_id;
}

bool identical(const StoredPoint& a, const StoredPoint& b) {
    return std::bit_cast<std::uint32_t>(a.x) == std::bit_cast<std::uint32_t>(b.x) &&
           std::bit_cast<std::uint32_t>(a.y) == std::bit_cast<std::uint32_t>(b.y) &&
           std::bit_cast<std::uint32_t>(a.z) == std::bit_cast<std::uint32_t>(b.z) &&
           a.source_id == b.source_id &&
           std::bit_cast<std::uint32_t>(a.confidence) == std::bit_cast<std::uint32_t>(b.confidence);
}

}  // namespace

GlobalGeometry::GlobalGeometry(double voxel_size, int n_max)
    : voxel_size_(voxel_size), n_max_(n_max) {
    if (!(voxel_size > 0.0)) throw std::invalid_argument("GlobalGeometry: voxel_size must be positive");
    if (n_max < 1) throw std::invalid_argument("GlobalGeometry: n_max must be >= 1");
}

std::int64_t GlobalGeometry::cell_of(float coord) const {
    return static_cast<std::int64_t>(std::floor(static_cast<double>(coord) / voxel_size_));
}

std::uint64_t GlobalGeometry::cell_key(const StoredPoint& p) const {
    const std::uint64_t ux = (static_cast<std::uint64_t>(cell_of(p.x) + kAxisBias)) & kAxisMask;
    const std::uint64_t uy = (static_cast<std::uint64_t>(cell_of(p.y) + kAxisBias)) & kAxisMask;
    const std::uint64_t uz = (static_cast<std::uint64_t>(cell_of(p.z) + kAxisBias)) & kAxisMask;
    return (ux << 42) | (uy << 21) | uz;
}

Eigen::Vector3d GlobalGeometry::cell_center(std::uint64_t key) const {
    const auto ix = static_cast<std::int64_t>((key >> 42) & kAxisMask) - static_cast<std::int64_t>(kAxisBias);
    const auto iy = static_cast<std::int64_t>((key >> 21) & kAxisMask) - static_cast<std::int64_t>(kAxisBias);
    const auto iz = static_cast<std::int64_t>(key & kAxisMask) - static_cast<std::int64_t>(kAxisBias);
    return {(ix + 0.5) * voxel_size_, (iy + 0.5) * voxel_size_, (iz + 0.5) * voxel_size_};
}

bool GlobalGeometry::insert(const StoredPoint& p) {
    Cell& cell = cells_[cell_key(p)];
    for (std::uint32_t idx : cell.indices) {
        if (identical(points_[idx], p)) return false;
    }
    if (static_cast<int>(cell.indices.size()) < n_max_) {
        cell.indices.push_back(static_cast<std::uint32_t>(points_.size()));
        points_.push_back(p);
        return true;
    }
    // Cell full: replace the weakest incumbent if the candidate beats it.
    // Ties walk to the later slot so earlier insertions survive.
    std::uint32_t weakest_slot = 0;
    for (std::uint32_t i = 1; i < cell.indices.size(); ++i) {
        if (!stronger(points_[cell.indices[i]], points_[cell.indices[weakest_slot]])) {
            weakest_slot = i;
        }
    }
    const std::uint32_t victim = cell.indices[weakest_slot];
    if (stronger(p, points_[victim])) {
        points_[victim] = p;
        return true;
    }
    return false;
}

void GlobalGeometry::insert_all(const std::vector<WorldPoint>& pts) {
    for (const WorldPoint& wp : pts) {
        insert(StoredPoint{static_cast<float>(wp.position.x()),
                           static_cast<float>(wp.position.y()),
                           static_cast<float>(wp.position.z()),
                           wp.source_id,
                           wp.confidence});
    }
}

void GlobalGeometry::rebuild_index() {
    cells_.clear();
    for (std::uint32_t i = 0; i < points_.size(); ++i) {
        cells_[cell_key(points_[i])].indices.push_back(i);
    }
}

void GlobalGeometry::check_invariants() const {
    std::size_t indexed = 0;
    for (const auto& [key, cell] : cells_) {
        if (static_cast<int>(cell.indices.size()) > n_max_) {
            throw std::logic_error("voxel cell exceeds n_max");
        }
        for (std::uint32_t idx : cell.indices) {
            if (idx >= points_.size()) throw std::logic_error("voxel index out of range");
            if (cell_key(points_[idx]) != key) throw std::logic_error("point indexed in wrong cell");
        }
        indexed += cell.indices.size();
    }
    if (indexed != points_.size()) throw std::logic_error("voxel index does not cover all points");
}

namespace {

// Coverage z-buffer render of the global cloud at a downscaled resolution.
// Walks the voxel index and projects only cells whose bounding sphere
// intersects the view frustum, which keeps the cost proportional to the
// visible spatial coverage. Each point is splatted over its voxel's
// projected footprint: the cap keeps at most n_max points per voxel, so a
// single survivor must stand in for the whole cell.
struct CloudRender {
    Intrinsics intr;                 // working resolution
    std::vector<float> zbuf;         // +inf where empty
};

CloudRender render_cloud_zbuffer(const GlobalGeometry& geo,
                                 const Extrinsics& ext,
                                 const Intrinsics& working) {
    CloudRender out;
    out.intr = working;
    out.zbuf.assign(static_cast<std::size_t>(working.width) * working.height,
                    std::numeric_limits<float>::infinity());

    const Eigen::Matrix3d r = ext.rotation();
    const Eigen::Vector3d t = ext.translation();
    const double radius = geo.voxel_size() * std::sqrt(3.0) / 2.0;
    constexpr int kMaxSplat = 8;  // near-field footprint clamp, in pixels

    // Inward-pointing frustum plane normals in camera space:
    // u >= 0, u <= W, v >= 0, v <= H.
    Eigen::Vector3d planes[4] = {
        {working.fx, 0.0, working.cx},
        {-working.fx, 0.0, static_cast<double>(working.width) - working.cx},
        {0.0, working.fy, working.cy},
        {0.0, -working.fy, static_cast<double>(working.height) - working.cy},
    };
    for (auto& p : planes) p.normalize();

    const auto& points = geo.points();
    for (const auto& [key, cell] : geo.cells()) {
        const Eigen::Vector3d center_cam = r * geo.cell_center(key) + t;
        if (center_cam.z() + radius <= 0.0) continue;
        bool outside = false;
        for (int i = 0; i < 4 && !outside; ++i) {
            if (planes[i].dot(center_cam) < -radius) outside = true;
        }
        if (outside) continue;

        for (std::uint32_t idx : cell.indices) {
            const StoredPoint& p = points[idx];
            const Eigen::Vector3d cam = r * Eigen::Vector3d(p.x, p.y, p.z) + t;
            if (cam.z() <= 0.0) continue;
            const double u = working.fx * cam.x() / cam.z() + working.cx;
            const double v = working.fy * cam.y() / cam.z() + working.cy;
            const int cu = static_cast<int>(std::floor(u));
            const int cv = static_cast<int>(std::floor(v));
            const int ru = std::min(kMaxSplat, static_cast<int>(
                0.5 * geo.voxel_size() * working.fx / cam.z()));
            const int rv = std::min(kMaxSplat, static_cast<int>(
                0.5 * geo.voxel_size() * working.fy / cam.z()));
            const int u0 = std::max(0, cu - ru);
            const int u1 = std::min(working.width - 1, cu + ru);
            const int v0 = std::max(0, cv - rv);
            const int v1 = std::min(working.height - 1, cv + rv);
            if (u1 < u0 || v1 < v0) continue;
            const float z = static_cast<float>(cam.z());
            for (int vv = v0; vv <= v1; ++vv) {
                for (int uu = u0; uu <= u1; ++uu) {
                    float& slot = out.zbuf[static_cast<std::size_t>(vv) * working.width + uu];
                    if (z < slot) slot = z;
                }
            }
        }
    }
    return out;
}

}  // namespace

double novel_coverage(const Pose& pose,
                      const DepthMap& depth,
                      const GlobalGeometry& geo,
                      const Intrinsics& intr,
                      int coverage_downscale) {
    if (!depth.same_shape(intr.width, intr.height)) {
        throw std::invalid_argument("novel_coverage: depth does not match intrinsics");
    }
    const Intrinsics working = intr.downscaled(coverage_downscale);
    const Extrinsics ext = extrinsics_from_pose(pose);

    std::size_t valid = 0, uncovered = 0;
    if (geo.empty()) {
        for (int vq = 0; vq < working.height; ++vq) {
            for (int uq = 0; uq < working.width; ++uq) {
                if (depth.at(vq * coverage_downscale, uq * coverage_downscale) >= kMinValidDepth) {
                    ++valid;
                }
            }
        }
        return valid == 0 ? 0.0 : 1.0;
    }

    const CloudRender render = render_cloud_zbuffer(geo, ext, working);
    for (int vq = 0; vq < working.height; ++vq) {
        for (int uq = 0; uq < working.width; ++uq) {
            const float d = depth.at(vq * coverage_downscale, uq * coverage_downscale);
            if (d < kMinValidDepth) continue;
            ++valid;
            const float zb = render.zbuf[static_cast<std::size_t>(vq) * working.width + uq];
            const bool covered = std::isfinite(zb) &&
                                 std::abs(static_cast<double>(zb) - static_cast<double>(d)) <=
                                     depth_tolerance(d);
            if (!covered) ++uncovered;
        }
    }
    if (valid == 0) return 0.0;
    return static_cast<double>(uncovered) / static_cast<double>(valid);
}

bool is_keyframe(const Pose& pose,
                 const DepthMap& depth,
                 const GlobalGeometry& geo,
                 const Intrinsics& intr,
                 int retrieval_count,
                 double theta_novel,
                 int tau_hist,
                 int coverage_downscale) {
    const double cov = novel_coverage(pose, depth, geo, intr, coverage_downscale);
    return keyframe_decision(cov, retrieval_count, theta_novel, tau_hist);
}

IntegrationResult integrate_window(ProcessingWindow& window,
                                   GlobalGeometry& geo,
                                   const std::set<std::uint32_t>& global_frame_ids,
                                   const Intrinsics& intr,
                                   const StoreParams& params,
                                   double window_scale,
                                   std::vector<FrameRecord>* frame_sink) {
    IntegrationResult result;
    if (window.pending.empty()) {
        window.carried.clear();
        return result;
    }

    std::set<std::uint32_t> window_ids;
    for (const auto& f : window.pending) window_ids.insert(f.id);
    for (const auto& f : window.carried) window_ids.insert(f.id);
    const std::set<std::uint32_t> overlap = scale::detect_overlap(window_ids, global_frame_ids);

    // Pool correspondences across all overlap frames: stored aligned depth
    // against the window-scale re-observation.
    scale::CorrespondenceSet pooled;
    for (const auto& carried : window.carried) {
        if (!overlap.contains(carried.id)) continue;
        DepthMap reobserved = carried.raw_depth;
        for (float& d : reobserved.data) {
            if (d >= kMinValidDepth) d = static_cast<float>(d * window_scale);
        }
        pooled.append(scale::filter_correspondences(carried.aligned_depth, reobserved,
                                                    carried.confidence, carried.confidence,
                                                    params.tau_min, params.keep_fraction));
    }
    result.correspondences = pooled.size();

    // Empty overlap (first window) or a degenerate fit falls back to s = 1.
    double s = 1.0;
    result.scale_fallback = true;
    if (!overlap.empty()) {
        try {
            s = scale::estimate_scale(pooled, params.min_scale_pairs);
            result.scale_fallback = false;
        } catch (const DegenerateCorrespondences&) {
            s = 1.0;
        }
    }
    result.applied_scale = s;

    const std::size_t before = geo.point_count();
    std::vector<ProcessingWindow::OverlapFrame> next_carried;
    for (std::size_t i = 0; i < window.pending.size(); ++i) {
        auto& frame = window.pending[i];
        DepthMap window_depth = frame.raw_depth;
        if (window_scale != 1.0) {
            for (float& d : window_depth.data) {
                if (d >= kMinValidDepth) d = static_cast<float>(d * window_scale);
            }
        }
        DepthMap aligned = scale::apply_scale(window_depth, s);
        geo.insert_all(backproject(aligned, frame.confidence, intr,
                                   extrinsics_from_pose(frame.pose), frame.id));
        result.integrated_ids.push_back(frame.id);

        if (static_cast<int>(window.pending.size() - i) <= params.overlap) {
            next_carried.push_back({frame.id, frame.raw_depth, aligned, frame.confidence});
        }
        if (frame_sink) {
            FrameRecord rec;
            rec.id = frame.id;
            rec.pose = frame.pose;
            rec.keyframe = true;
            rec.depth = std::move(aligned);
            rec.confidence = frame.confidence;
            frame_sink->push_back(std::move(rec));
        }
    }
    result.points_added = geo.point_count() - before;

    window.pending.clear();
    window.retrieved_ids.clear();
    window.carried = std::move(next_carried);
    return result;
}

std::vector<StoredPoint> voxel_downsample(const std::vector<StoredPoint>& points,
                                          double voxel_size,
                                          int n_max) {
    if (!(voxel_size > 0.0)) throw std::invalid_argument("voxel_downsample: voxel_size must be positive");
    if (n_max < 1) throw std::invalid_argument("voxel_downsample: n_max must be >= 1");

    // Group input indices by cell, absorbing exact duplicates (first
    // occurrence wins).
    const GlobalGeometry keyer(voxel_size, n_max);
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells;
    for (std::size_t in = 0; in < points.size(); ++in) {
        auto& cell = cells[keyer.cell_key(points[in])];
        bool dup = false;
        for (std::size_t j : cell) {
            if (identical(points[j], points[in])) { dup = true; break; }
        }
        if (!dup) cell.push_back(in);
    }

    // Per cell keep the n_max best by (confidence desc, frame id asc,
    // input order), then restore input order across cells.
    std::vector<std::size_t> kept;
    for (auto& [key, cell] : cells) {
        std::sort(cell.begin(), cell.end(), [&](std::size_t a, std::size_t b) {
            if (stronger(points[a], points[b])) return true;
            if (stronger(points[b], points[a])) return false;
            return a < b;
        });
        const std::size_t take = std::min(cell.size(), static_cast<std::size_t>(n_max));
        kept.insert(kept.end(), cell.begin(), cell.begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::sort(kept.begin(), kept.end());

    std::vector<StoredPoint> out;
    out.reserve(kept.size());
    for (std::size_t i : kept) out.push_back(points[i]);
    return out;
}

// ---- snapshot I/O ----------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'G', 'M', 'E', 'M'};
constexpr std::uint16_t kVersion = 1;

class Writer {
public:
    explicit Writer(std::ostream& os) : os_(os) {}

    void u8(std::uint8_t v) { raw(&v, 1); }
    void u16(std::uint16_t v) { le(v); }
    void u32(std::uint32_t v) { le(v); }
    void u64(std::uint64_t v) { le(v); }
    void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
    void raw(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

private:
    template <typename T>
    void le(T v) {
        unsigned char buf[sizeof(T)];
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
        }
        raw(buf, sizeof(T));
    }

    std::ostream& os_;
};

class Reader {
public:
    explicit Reader(std::istream& is) : is_(is) {}

    std::size_t offset() const { return offset_; }

    std::uint8_t u8() { std::uint8_t v; raw(&v, 1); return v; }
    std::uint16_t u16() { return le<std::uint16_t>(); }
    std::uint32_t u32() { return le<std::uint32_t>(); }
    std::uint64_t u64() { return le<std::uint64_t>(); }
    float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
    double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }

    void raw(void* p, std::size_t n) {
        is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n) {
            throw FormatError("snapshot: truncated file", offset_);
        }
        offset_ += n;
    }

    bool at_eof() {
        is_.peek();
        return is_.eof();
    }

private:
    template <typename T>
    T le() {
        unsigned char buf[sizeof(T)];
        raw(buf, sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v = static_cast<T>(v | (static_cast<T>(buf[i]) << (8 * i)));
        }
        return v;
    }

    std::istream& is_;
    std::size_t offset_ = 0;
};

}  // namespace

void save_snapshot(const GlobalGeometry& geo,
                   const std::vector<FrameRecord>& frames,
                   const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open snapshot for writing: " + path);
    Writer w(os);
    w.raw(kMagic, 4);
    w.u16(kVersion);
    w.u16(0);  // reserved
    w.f64(geo.voxel_size());
    w.u32(static_cast<std::uint32_t>(geo.n_max()));
    w.u32(static_cast<std::uint32_t>(frames.size()));
    for (const FrameRecord& f : frames) {
        w.u32(f.id);
        w.u8(f.keyframe ? 1 : 0);
        w.u8(0); w.u8(0); w.u8(0);
        w.f64(f.pose.x);
        w.f64(f.pose.y);
        w.f64(f.pose.z);
        w.f64(f.pose.pitch);
        w.f64(f.pose.yaw);
    }
    w.u64(geo.point_count());
    for (const StoredPoint& p : geo.points()) {
        w.f32(p.x);
        w.f32(p.y);
        w.f32(p.z);
        w.u32(p.source_id);
        w.f32(p.confidence);
    }
    os.flush();
    if (!os) throw std::runtime_error("snapshot write failed: " + path);
}

Snapshot load_snapshot(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open snapshot: " + path);
    Reader r(is);

    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("snapshot: bad magic bytes", 0);
    }
    const std::uint16_t version = r.u16();
    if (version != kVersion) {
        throw FormatError("snapshot: unsupported version " + std::to_string(version), 4);
    }
    r.u16();  // reserved

    const double voxel_size = r.f64();
    const auto n_max = static_cast<int>(r.u32());
    if (!(voxel_size > 0.0) || n_max < 1) {
        throw FormatError("snapshot: invalid voxel parameters", 8);
    }

    Snapshot snap;
    const std::uint32_t frame_count = r.u32();
    snap.frames.reserve(frame_count);
    for (std::uint32_t i = 0; i < frame_count; ++i) {
        FrameRecord f;
        f.id = r.u32();
        f.keyframe = r.u8() != 0;
        r.u8(); r.u8(); r.u8();
        f.pose.x = r.f64();
        f.pose.y = r.f64();
        f.pose.z = r.f64();
        f.pose.pitch = r.f64();
        f.pose.yaw = r.f64();
        snap.frames.push_back(std::move(f));
    }

    const std::uint64_t point_count = r.u64();
    std::vector<StoredPoint> points;
    points.reserve(point_count);
    for (std::uint64_t i = 0; i < point_count; ++i) {
        StoredPoint p;
        p.x = r.f32();
        p.y = r.f32();
        p.z = r.f32();
        p.source_id = r.u32();
        p.confidence = r.f32();
        points.push_back(p);
    }
    if (!r.at_eof()) {
        throw FormatError("snapshot: trailing data", r.offset());
    }

    // Re-insert preserving stored order; the index is derived state.
    GlobalGeometry geo(voxel_size, n_max);
    for (const StoredPoint& p : points) geo.insert(p);
    if (geo.point_count() != points.size()) {
        throw FormatError("snapshot: point table violates the voxel cap", r.offset());
    }
    snap.geometry = std::move(geo);
    return snap;
}

}  // namespace gsm::store
