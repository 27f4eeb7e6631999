#pragma once

#include "gsm/geometry.hpp"

#include <cstdint>
#include <set>
#include <vector>

namespace gsm::scale {

inline constexpr double kDefaultTauMin = 0.1;
inline constexpr double kDefaultKeepFraction = 0.6;

/// Minimum number of surviving pixel pairs before the window-alignment
/// pipeline trusts the fit; below this the caller falls back to scale 1.
inline constexpr std::size_t kMinCorrespondences = 32;

/// Depth value pairs surviving the filter chain, with per-stage retention
/// counts for diagnostics. Values are held in double precision so the
/// closed-form fit is limited only by the inputs, not the container.
struct CorrespondenceSet {
    std::vector<double> old_depth;
    std::vector<double> new_depth;

    std::size_t total_pixels = 0;
    std::size_t after_validity = 0;     // both depths valid
    std::size_t after_confidence = 0;   // both confidences >= tau_min
    std::size_t after_percentile = 0;   // both in the top keep_fraction

    std::size_t size() const { return old_depth.size(); }
    bool empty() const { return old_depth.empty(); }

    void append(const CorrespondenceSet& other);
};

/// Frames shared between the incoming window and the global store.
std::set<std::uint32_t> detect_overlap(const std::set<std::uint32_t>& window_frame_ids,
                                       const std::set<std::uint32_t>& global_frame_ids);

/// Three-stage correspondence filter:
///   1. drop pixels where either depth is invalid (< 1e-6),
///   2. drop pixels where either confidence is below tau_min,
///   3. keep pixels at or above the (1 - keep_fraction) confidence
///      percentile, computed independently per map (nearest-rank over the
///      stage-2 survivors) and intersected.
/// Throws std::invalid_argument on dimension mismatch or parameters out of
/// range.
CorrespondenceSet filter_correspondences(const DepthMap& old_depth,
                                         const DepthMap& new_depth,
                                         const ConfidenceMap& old_conf,
                                         const ConfidenceMap& new_conf,
                                         double tau_min = kDefaultTauMin,
                                         double keep_fraction = kDefaultKeepFraction);

/// Closed-form least-squares scale s minimizing sum((old - s*new)^2):
/// s = sum(old*new) / sum(new^2).
/// Throws DegenerateCorrespondences when the set has fewer than min_pairs
/// entries or the denominator vanishes.
double estimate_scale(const CorrespondenceSet& corr, std::size_t min_pairs = 1);

/// Multiplies every valid entry by s; invalid entries stay bit-identical.
/// Throws std::invalid_argument for s <= 0.
std::vector<DepthMap> apply_scale(const std::vector<DepthMap>& depths, double s);
DepthMap apply_scale(const DepthMap& depth, double s);

}  // namespace gsm::scale
