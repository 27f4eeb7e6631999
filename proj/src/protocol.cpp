#include "gsm/protocol.hpp"

#include <algorithm>
#include <ostream>
#include <random>
#include <set>
#include <stdexcept>

namespace gsm::protocol {

const char* window_mode_name(WindowMode mode) {
    return mode == WindowMode::Spatial ? "spatial" : "extended";
}

WindowMode select_mode(const retrieval::RetrievalResult& retrieved, int tau_hist) {
    return static_cast<int>(retrieved.size()) >= tau_hist ? WindowMode::Spatial
                                                          : WindowMode::Extended;
}

namespace {

// Frame index at offset `back` steps before t, clamping into [0, t-1] by
// repeating the earliest frame when the sequence is still short.
std::uint32_t history_index(std::uint32_t t, std::uint32_t back) {
    return back >= t ? 0u : t - back;
}

}  // namespace

ContextWindow build_context_window(std::uint32_t t,
                                   const retrieval::RetrievalResult& retrieved,
                                   WindowMode mode,
                                   int context_length) {
    if (context_length < 2 || context_length % 2 != 0) {
        throw std::invalid_argument("build_context_window: context length must be even and >= 2");
    }
    if (t == 0) throw std::invalid_argument("build_context_window: no history before frame 0");

    const int half = context_length / 2;
    ContextWindow window;
    window.mode = mode;
    window.fixed_count = half;
    window.slots.reserve(static_cast<std::size_t>(context_length));

    // Fixed recent half: [t - L/2, t - 1], ascending.
    for (int i = half; i >= 1; --i) {
        window.slots.push_back(history_index(t, static_cast<std::uint32_t>(i)));
    }

    std::set<std::uint32_t> used(window.slots.begin(), window.slots.end());

    if (mode == WindowMode::Extended) {
        // [t - L, t - L/2 - 1] ascending, appended after the fixed half.
        for (int i = context_length; i > half; --i) {
            window.slots.push_back(history_index(t, static_cast<std::uint32_t>(i)));
        }
        return window;
    }

    // Spatial: retrieved ids in retrieval order, skipping any already in the
    // fixed half, then back-fill from the extended history (most recent
    // first), reaching further back if that is exhausted too.
    std::vector<std::uint32_t> second;
    for (std::uint32_t id : retrieved.frame_ids) {
        if (static_cast<int>(second.size()) >= half) break;
        if (used.contains(id)) continue;
        second.push_back(id);
        used.insert(id);
    }
    std::uint32_t back = static_cast<std::uint32_t>(half) + 1;
    while (static_cast<int>(second.size()) < half) {
        const std::uint32_t idx = history_index(t, back);
        if (!used.contains(idx)) {
            second.push_back(idx);
            used.insert(idx);
        } else if (idx == 0 && back >= t) {
            // Earliest frame already used: repeat it to keep |window| = L.
            second.push_back(0);
        }
        ++back;
    }
    window.slots.insert(window.slots.end(), second.begin(), second.end());
    return window;
}

ChainResult run_cft(const std::vector<FramePayload>& video,
                    const std::vector<Conditioning>& conditioning,
                    int steps,
                    int window_size,
                    PredictorInterface& predictor,
                    std::uint64_t noise_seed) {
    if (steps < 1) throw std::invalid_argument("run_cft: steps must be >= 1");
    if (window_size < 1) throw std::invalid_argument("run_cft: window size must be >= 1");
    if (video.size() < static_cast<std::size_t>(steps) + window_size - 1) {
        throw std::invalid_argument("run_cft: video shorter than steps + window - 1 frames");
    }
    if (conditioning.size() < static_cast<std::size_t>(steps)) {
        throw std::invalid_argument("run_cft: conditioning shorter than step count");
    }

    std::mt19937_64 rng(noise_seed);
    auto sample_noise = [&rng]() {
        // Uniform in [0, 1); raw engine output keeps this reproducible
        // across standard library implementations.
        return static_cast<double>(rng() >> 11) * 0x1.0p-53;
    };

    std::unordered_map<std::uint32_t, FramePayload> predicted;
    ChainResult result;
    double total_loss = 0.0;

    for (int j = 0; j < steps; ++j) {
        StepTrace step;
        step.step = j;

        std::vector<FramePayload> window;
        window.reserve(static_cast<std::size_t>(window_size));
        for (int k = j; k <= j + window_size - 1; ++k) {
            const auto idx = static_cast<std::uint32_t>(k);
            const auto it = predicted.find(idx);
            if (it != predicted.end()) {
                window.push_back(it->second);
                step.slots.push_back({idx, SlotOrigin::Predicted});
            } else {
                window.push_back(video[static_cast<std::size_t>(k)]);
                step.slots.push_back({idx, SlotOrigin::GroundTruth});
            }
        }

        step.loss = predictor.training_loss(window, conditioning[static_cast<std::size_t>(j)],
                                            sample_noise());
        total_loss += step.loss;

        if (j < steps - 1) {
            FramePayload denoised =
                predictor.denoise(window, conditioning[static_cast<std::size_t>(j)]);
            predicted[static_cast<std::uint32_t>(j + window_size - 1)] = std::move(denoised);
            step.denoised = true;
        }
        result.trace.push_back(std::move(step));
    }

    result.chain_loss = total_loss / steps;
    result.predicted_indices.reserve(predicted.size());
    for (const auto& [idx, payload] : predicted) result.predicted_indices.push_back(idx);
    std::sort(result.predicted_indices.begin(), result.predicted_indices.end());
    return result;
}

void write_trace(std::ostream& os, const ChainResult& result) {
    for (const StepTrace& step : result.trace) {
        for (std::size_t slot = 0; slot < step.slots.size(); ++slot) {
            os << step.step << ' ' << slot << ' ' << step.slots[slot].frame_index << ' '
               << (step.slots[slot].origin == SlotOrigin::Predicted ? "pred" : "gt") << '\n';
        }
    }
}

}  // namespace gsm::protocol
