#pragma once

#include "fluxshard/motion.hpp"
#include "fluxshard/refnet.hpp"
#include "fluxshard/tensor.hpp"

namespace fluxshard {

// Input-resolution structural consistency check. A position fails when
//   1. any pixel inside the centered (2*floor(r_max/2)+1)-square window
//      carries a different displacement, or is invalid, or
//   2. its own displacement is invalid or not divisible by s_max in both
//      components.
// Every flagged position marks content that cannot be reused through any
// spatial kernel of the network, regardless of depth.
RecomputeMask rfap_input_check(const AccumMV& field, int r_max, int s_max);

// Per-layer variant (ablation): flags output positions of `layer` whose
// input-grid receptive field carries non-uniform or invalid displacements,
// or whose output-grid displacement is inconsistent with the input-grid
// displacement divided by the stride.
RecomputeMask rfap_per_layer_check(const AccumMV& field_in, const AccumMV& field_out,
                                   const LayerSpec& layer);

// Where the input-level flags enter the network: the first layer whose
// kernel extent exceeds one. The mask is OR-reduced onto that layer's input
// grid. The dispatch-layer set is never modified. A network with no spatial
// layer yields an inactive plan.
struct RfapPlan {
    bool active = false;
    int layer_index = -1;      // index into net.layers
    RecomputeMask mask;        // at that layer's input grid
};
RfapPlan merge_rfap(const RecomputeMask& input_flags, const NetworkSpec& net);

// OR-reduction of a full-resolution mask onto a grid coarsened by `s`
// (each coarse cell covers an s x s block).
RecomputeMask mask_or_reduce(const RecomputeMask& m, int s);

}  // namespace fluxshard
