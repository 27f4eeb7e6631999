#pragma once

#include "gsm/geometry.hpp"
#include "gsm/memory_store.hpp"
#include "gsm/retrieval.hpp"

#include <cstdint>
#include <functional>
#include <set>
#include <vector>

namespace gsm::engine {

/// Per-frame decision record emitted by the streaming pipeline.
struct FrameDecision {
    std::uint32_t frame_id = 0;
    bool keyframe = false;
    double coverage = 0.0;
    double applied_scale = 1.0;           // scale of the window that integrated
                                          // this frame; 1.0 for non-keyframes
    std::vector<std::uint32_t> retrieved_ids;
};

/// Streaming spatial memory: gates each incoming frame (novel coverage or
/// thin history), buffers admitted keyframes into reconstruction windows,
/// scale-aligns each window against the carried overlap frames and
/// integrates it into the voxel-indexed global cloud. Single writer;
/// retrieval reads an immutable view of the store between process() calls.
class SpatialMemoryEngine {
public:
    SpatialMemoryEngine(const Intrinsics& intr,
                        const store::StoreParams& params,
                        int top_k = retrieval::kDefaultTopK,
                        retrieval::RetrievalOptions retrieval_opts = {});

    /// Ingests one frame; returns the gate decision. Decisions for admitted
    /// keyframes are completed (scale filled in) when their window
    /// integrates; take_completed_decisions() drains them in frame order.
    FrameDecision process(std::uint32_t frame_id,
                          const Pose& pose,
                          const DepthMap& depth,
                          const ConfidenceMap& confidence);

    /// Integrates any partially filled window. Call at end of stream.
    void flush();

    /// Decisions whose scale factor is final, in frame-id order.
    std::vector<FrameDecision> take_completed_decisions();

    const store::GlobalGeometry& geometry() const { return geometry_; }
    const std::vector<store::FrameRecord>& frames() const { return frames_; }
    std::size_t keyframe_count() const { return keyframe_count_; }
    const store::StoreParams& params() const { return params_; }
    const Intrinsics& intrinsics() const { return intr_; }

    retrieval::RetrievalResult retrieve(const Pose& pose, int k) const;

    /// Simulates window-relative depth (as produced by a relative-depth
    /// network): every window's incoming depths are multiplied by
    /// fn(window_index) before alignment. Tests and ablations only.
    void set_window_scale_injection(std::function<double(int)> fn) {
        window_scale_fn_ = std::move(fn);
    }

private:
    void integrate_pending();

    Intrinsics intr_;
    store::StoreParams params_;
    int top_k_;
    retrieval::RetrievalOptions retrieval_opts_;

    store::GlobalGeometry geometry_;
    std::vector<store::FrameRecord> frames_;
    std::set<std::uint32_t> integrated_ids_;
    store::ProcessingWindow window_;
    std::size_t keyframe_count_ = 0;
    int window_index_ = 0;
    std::function<double(int)> window_scale_fn_;

    std::vector<FrameDecision> pending_decisions_;  // waiting for a window scale
    std::vector<FrameDecision> completed_decisions_;
    std::uint32_t last_frame_id_ = 0;
    std::uint32_t first_pending_frame_ = 0;
    bool any_frame_ = false;
};

}  // namespace gsm::engine
