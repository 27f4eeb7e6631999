#pragma once

#include "gsm/memory_store.hpp"
#include "gsm/retrieval.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace gsm::protocol {

inline constexpr int kDefaultContextLength = 16;  // L

enum class WindowMode : std::uint8_t { Spatial, Extended };

const char* window_mode_name(WindowMode mode);

/// L conditioning slots: the first L/2 are the fixed recent frames, the
/// last L/2 are either retrieved spatial memory or extended temporal
/// history. Early in a sequence (t < L) missing history repeats the
/// earliest frame.
struct ContextWindow {
    std::vector<std::uint32_t> slots;
    WindowMode mode = WindowMode::Extended;
    int fixed_count = 0;   // leading slots holding the recent frames
};

/// Spatial mode places the retrieved ids (in retrieval order) in the second
/// half, back-filling from the extended temporal history when retrieval
/// returned fewer than L/2 frames; duplicates are skipped. Extended mode
/// takes the L/2 frames preceding the fixed half.
ContextWindow build_context_window(std::uint32_t t,
                                   const retrieval::RetrievalResult& retrieved,
                                   WindowMode mode,
                                   int context_length = kDefaultContextLength);

/// Spatial when retrieval produced at least tau_hist frames, else extended.
WindowMode select_mode(const retrieval::RetrievalResult& retrieved, int tau_hist);

/// Opaque frame payload; the orchestrator never inspects the content.
using FramePayload = std::vector<std::uint8_t>;
using Conditioning = std::vector<std::uint8_t>;

/// The behavior contract for the model under training: a per-window loss
/// and a gradient-free denoised final frame. Implementations must be
/// deterministic under a fixed seed.
class PredictorInterface {
public:
    virtual ~PredictorInterface() = default;

    /// Training loss for one window at the sampled noise level.
    virtual double training_loss(std::span<const FramePayload> window,
                                 const Conditioning& cond,
                                 double noise_level) = 0;

    /// Denoises the final window frame with no gradient tracking.
    virtual FramePayload denoise(std::span<const FramePayload> window,
                                 const Conditioning& cond) = 0;
};

enum class SlotOrigin : std::uint8_t { GroundTruth, Predicted };

struct SlotTrace {
    std::uint32_t frame_index = 0;
    SlotOrigin origin = SlotOrigin::GroundTruth;
};

struct StepTrace {
    int step = 0;
    std::vector<SlotTrace> slots;
    double loss = 0.0;
    bool denoised = false;        // a gradient-free denoise ran after this step
};

struct ChainResult {
    double chain_loss = 0.0;      // mean of per-step losses
    std::vector<StepTrace> trace;
    std::vector<std::uint32_t> predicted_indices;  // keys of F_pred at the end
};

/// Chained forward training over T sliding windows of size W. Window j
/// spans frames [j, j+W-1]; slots already predicted by earlier steps use
/// the stored prediction, the rest use ground truth. After every step but
/// the last, the final window frame is denoised without gradients and
/// stored for subsequent windows. Noise levels are drawn from a seeded
/// uniform sampler, one per step.
/// Throws std::invalid_argument when video.size() < T + W - 1 or
/// conditioning.size() < T.
ChainResult run_cft(const std::vector<FramePayload>& video,
                    const std::vector<Conditioning>& conditioning,
                    int steps,
                    int window_size,
                    PredictorInterface& predictor,
                    std::uint64_t noise_seed = 0);

/// Line-delimited trace export: "<step> <slot> <frame> <gt|pred>".
void write_trace(std::ostream& os, const ChainResult& result);

/// A predictor for tests and dry runs: loss is constant 1.0 and denoise
/// returns the ground-truth frame, so chaining is a fixpoint.
class IdentityStubPredictor : public PredictorInterface {
public:
    explicit IdentityStubPredictor(const std::vector<FramePayload>& video, int window_size)
        : video_(video), window_size_(window_size) {}

    double training_loss(std::span<const FramePayload>, const Conditioning&, double) override {
        ++loss_calls_;
        return 1.0;
    }

    FramePayload denoise(std::span<const FramePayload>, const Conditioning&) override {
        ++denoise_calls_;
        // The window's last slot index equals step + window_size - 1.
        return video_[static_cast<std::size_t>(denoise_calls_ - 1) + window_size_ - 1];
    }

    int loss_calls() const { return loss_calls_; }
    int denoise_calls() const { return denoise_calls_; }

private:
    const std::vector<FramePayload>& video_;
    int window_size_;
    int loss_calls_ = 0;
    int denoise_calls_ = 0;
};

}  // namespace gsm::protocol
