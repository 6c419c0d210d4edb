#pragma once

#include <cstdint>
#include <vector>

#include "fluxshard/cache.hpp"
#include "fluxshard/motion.hpp"
#include "fluxshard/refnet.hpp"
#include "fluxshard/reuse.hpp"
#include "fluxshard/rfap.hpp"
#include "fluxshard/tensor.hpp"
#include "fluxshard/wire.hpp"

namespace fluxshard {

struct PipelineOptions {
    bool rfap = true;            // structural consistency forcing
    bool per_layer_rfap = false; // ablation: check at every layer instead of once
    bool remap = true;           // MV-guided cache remapping (off: in-place reuse)
    bool sparse = true;          // off: recompute every position (transport unchanged)
};

struct FrameStats {
    uint64_t frame_id = 0;
    bool cold_start = false;
    int s0_count = 0;
    double reuse_ratio = 0.0;    // 1 - |S0| / (H*W)
    double compute_ratio = 0.0;  // flops-weighted recompute share across layers
    int rfap_flagged = 0;        // structural flags (input-res; per-layer mode: summed)
    std::vector<int> layer_counts;
    double ms_mv = 0.0;      // stage 1, filled by the driver
    double ms_decide = 0.0;  // stages 2-3, filled by the driver
    double ms_infer = 0.0;   // stage 4 sparse evaluation
    double ms_update = 0.0;  // cache remap + merge
};

struct FrameResult {
    FeatureMap output;  // final layer
    FrameStats stats;
};

// Dispatch-layer recompute set for the current frame against one endpoint's
// state, honoring the remap ablation (in-place mode compares unaligned).
// Unseeded caches force the full set.
RecomputeMask compute_dispatch_set(const NetworkSpec& net, const ThresholdVector& tau,
                                   const PipelineOptions& opt, const EndpointCache& cache,
                                   const FeatureMap& frame, const AccumMV& field);

// Runs one frame through the per-layer reuse pipeline and updates the cache
// in place (including the accumulator reset). `field` is the displacement
// accumulated since this endpoint last processed a frame; `s0` the dispatch
// recompute set. Unseeded caches take the dense path and seed themselves.
FrameResult sparse_forward(const NetworkSpec& net, const ThresholdVector& tau,
                           const PipelineOptions& opt, EndpointCache& cache,
                           const FeatureMap& frame, const AccumMV& field,
                           const RecomputeMask& s0, uint64_t frame_id);

// Applies a decoded offload payload to a cache: the server's execution path,
// and byte-for-byte the client's replica update. An unseeded cache accepts
// only a full-mask payload (dense re-seed); anything else raises DesyncError.
FrameResult apply_offload(const NetworkSpec& net, const ThresholdVector& tau,
                          const PipelineOptions& opt, EndpointCache& cache,
                          const OffloadPayload& payload);

}  // namespace fluxshard
