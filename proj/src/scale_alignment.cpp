#include "gsm/scale_alignment.hpp"

#include "gsm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gsm::scale {

void CorrespondenceSet::append(const CorrespondenceSet& other) {
    old_depth.insert(old_depth.end(), other.old_depth.begin(), other.old_depth.end());
    new_depth.insert(new_depth.end(), other.new_depth.begin(), other.new_depth.end());
    total_pixels += other.total_pixels;
    after_validity += other.after_validity;
    after_confidence += other.after_confidence;
    after_percentile += other.after_percentile;
}

std::set<std::uint32_t> detect_overlap(const std::set<std::uint32_t>& window_frame_ids,
                                       const std::set<std::uint32_t>& global_frame_ids) {
    std::set<std::uint32_t> overlap;
    std::set_intersection(window_frame_ids.begin(), window_frame_ids.end(),
                          global_frame_ids.begin(), global_frame_ids.end(),
                          std::inserter(overlap, overlap.begin()));
    return overlap;
}

namespace {

// Nearest-rank percentile over an unsorted sample: the smallest value with
// at least ceil(q * n) samples at or below it. q = 0 yields the minimum so
// a keep_fraction of 1 retains everything.
float nearest_rank_threshold(std::vector<float> values, double q) {
    const std::size_t n = values.size();
    std::size_t rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    if (rank > 0) --rank;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank), values.end());
    return values[rank];
}

}  // namespace

CorrespondenceSet filter_correspondences(const DepthMap& old_depth,
                                         const DepthMap& new_depth,
                                         const ConfidenceMap& old_conf,
                                         const ConfidenceMap& new_conf,
                                         double tau_min,
                                         double keep_fraction) {
    const int w = old_depth.width, h = old_depth.height;
    if (!new_depth.same_shape(w, h) || !old_conf.same_shape(w, h) || !new_conf.same_shape(w, h)) {
        throw std::invalid_argument("filter_correspondences: grid dimensions differ");
    }
    if (tau_min < 0.0 || tau_min > 1.0) {
        throw std::invalid_argument("filter_correspondences: tau_min outside [0, 1]");
    }
    if (!(keep_fraction > 0.0) || keep_fraction > 1.0) {
        throw std::invalid_argument("filter_correspondences: keep_fraction outside (0, 1]");
    }

    CorrespondenceSet out;
    out.total_pixels = old_depth.size();

    // Stages 1 + 2 in one pass; remember survivors for the percentile stage.
    std::vector<std::size_t> survivors;
    survivors.reserve(out.total_pixels);
    std::vector<float> conf_old_kept, conf_new_kept;
    for (std::size_t i = 0; i < out.total_pixels; ++i) {
        if (old_depth.data[i] < kMinValidDepth || new_depth.data[i] < kMinValidDepth) continue;
        ++out.after_validity;
        if (old_conf.data[i] < tau_min || new_conf.data[i] < tau_min) continue;
        ++out.after_confidence;
        survivors.push_back(i);
        conf_old_kept.push_back(old_conf.data[i]);
        conf_new_kept.push_back(new_conf.data[i]);
    }
    if (survivors.empty()) return out;

    const double q = 1.0 - keep_fraction;
    const float thr_old = nearest_rank_threshold(conf_old_kept, q);
    const float thr_new = nearest_rank_threshold(conf_new_kept, q);

    for (std::size_t i : survivors) {
        if (old_conf.data[i] >= thr_old && new_conf.data[i] >= thr_new) {
            out.old_depth.push_back(old_depth.data[i]);
            out.new_depth.push_back(new_depth.data[i]);
        }
    }
    out.after_percentile = out.old_depth.size();
    return out;
}

double estimate_scale(const CorrespondenceSet& corr, std::size_t min_pairs) {
    if (corr.size() < std::max<std::size_t>(min_pairs, 1)) {
        throw DegenerateCorrespondences("estimate_scale: too few correspondences (" +
                                        std::to_string(corr.size()) + ")");
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < corr.size(); ++i) {
        num += corr.old_depth[i] * corr.new_depth[i];
        den += corr.new_depth[i] * corr.new_depth[i];
    }
    if (den <= 0.0) {
        throw DegenerateCorrespondences("estimate_scale: zero denominator");
    }
    return num / den;
}

DepthMap apply_scale(const DepthMap& depth, double s) {
    if (!(s > 0.0)) throw std::invalid_argument("apply_scale: scale must be positive");
    DepthMap out = depth;
    for (float& d : out.data) {
        if (d >= kMinValidDepth) d = static_cast<float>(d * s);
    }
    return out;
}

std::vector<DepthMap> apply_scale(const std::vector<DepthMap>& depths, double s) {
    std::vector<DepthMap> out;
    out.reserve(depths.size());
    for (const DepthMap& d : depths) out.push_back(apply_scale(d, s));
    return out;
}

}  // namespace gsm::scale
