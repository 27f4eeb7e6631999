#include "gsm/engine.hpp"

#include <algorithm>
#include <stdexcept>

namespace gsm::engine {

SpatialMemoryEngine::SpatialMemoryEngine(const Intrinsics& intr,
                                         const store::StoreParams& params,
                                         int top_k,
                                         retrieval::RetrievalOptions retrieval_opts)
    : intr_(intr),
      params_(params),
      top_k_(top_k),
      retrieval_opts_(retrieval_opts),
      geometry_(params.voxel_size, params.n_max) {
    intr_.validate();
    if (params.w_rec < 1) throw std::invalid_argument("SpatialMemoryEngine: w_rec must be >= 1");
    if (params.overlap < 0 || params.overlap >= params.w_rec) {
        throw std::invalid_argument("SpatialMemoryEngine: overlap must be in [0, w_rec)");
    }
    if (top_k < 1) throw std::invalid_argument("SpatialMemoryEngine: top_k must be >= 1");
}

FrameDecision SpatialMemoryEngine::process(std::uint32_t frame_id,
                                           const Pose& pose,
                                           const DepthMap& depth,
                                           const ConfidenceMap& confidence) {
    if (any_frame_ && frame_id <= last_frame_id_) {
        throw std::invalid_argument("SpatialMemoryEngine: frame ids must be strictly increasing");
    }
    any_frame_ = true;
    last_frame_id_ = frame_id;

    const retrieval::RetrievalResult retrieved =
        retrieval::point_to_frame_retrieve(pose, geometry_, intr_, top_k_, retrieval_opts_);
    const double coverage =
        store::novel_coverage(pose, depth, geometry_, intr_, params_.coverage_downscale);
    const bool keyframe = store::keyframe_decision(coverage, static_cast<int>(retrieved.size()),
                                                   params_.theta_novel, params_.tau_hist);

    // The frame table stays in id order; keyframe payloads are attached when
    // their window integrates.
    frames_.push_back({frame_id, pose, keyframe, std::nullopt, std::nullopt});

    FrameDecision decision;
    decision.frame_id = frame_id;
    decision.keyframe = keyframe;
    decision.coverage = coverage;
    decision.retrieved_ids = retrieved.frame_ids;

    if (keyframe) {
        ++keyframe_count_;
        if (window_.pending.empty()) first_pending_frame_ = frame_id;
        window_.pending.push_back({frame_id, pose, depth, confidence});
        for (std::uint32_t id : retrieved.frame_ids) window_.retrieved_ids.push_back(id);
        pending_decisions_.push_back(decision);
        if (window_.at_capacity(params_.w_rec)) integrate_pending();
    } else {
        decision.applied_scale = 1.0;
        completed_decisions_.push_back(decision);
    }
    // A partial window is not allowed to sit forever; stale pending
    // keyframes leave their coverage invisible to the gate.
    if (!window_.pending.empty() && params_.max_pending_age > 0 &&
        frame_id - first_pending_frame_ >= static_cast<std::uint32_t>(params_.max_pending_age)) {
        integrate_pending();
    }
    return decision;
}

void SpatialMemoryEngine::integrate_pending() {
    if (window_.pending.empty()) return;
    const double injected = window_scale_fn_ ? window_scale_fn_(window_index_) : 1.0;
    std::vector<store::FrameRecord> integrated;
    const store::IntegrationResult result = store::integrate_window(
        window_, geometry_, integrated_ids_, intr_, params_, injected, &integrated);
    ++window_index_;

    for (store::FrameRecord& rec : integrated) {
        integrated_ids_.insert(rec.id);
        auto it = std::lower_bound(frames_.begin(), frames_.end(), rec.id,
                                   [](const store::FrameRecord& f, std::uint32_t id) {
                                       return f.id < id;
                                   });
        if (it != frames_.end() && it->id == rec.id) {
            it->depth = std::move(rec.depth);
            it->confidence = std::move(rec.confidence);
        }
    }

    for (FrameDecision& d : pending_decisions_) {
        d.applied_scale = result.applied_scale;
        completed_decisions_.push_back(std::move(d));
    }
    pending_decisions_.clear();
}

void SpatialMemoryEngine::flush() {
    integrate_pending();
}

std::vector<FrameDecision> SpatialMemoryEngine::take_completed_decisions() {
    std::sort(completed_decisions_.begin(), completed_decisions_.end(),
              [](const FrameDecision& a, const FrameDecision& b) {
                  return a.frame_id < b.frame_id;
              });
    std::vector<FrameDecision> out = std::move(completed_decisions_);
    completed_decisions_.clear();
    return out;
}

retrieval::RetrievalResult SpatialMemoryEngine::retrieve(const Pose& pose, int k) const {
    return retrieval::point_to_frame_retrieve(pose, geometry_, intr_, k, retrieval_opts_);
}

}  // namespace gsm::engine
