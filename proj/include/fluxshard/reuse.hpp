#pragma once

#include <string>
#include <vector>

#include "fluxshard/motion.hpp"
#include "fluxshard/refnet.hpp"
#include "fluxshard/tensor.hpp"

namespace fluxshard {

// Per-layer reuse thresholds. tau0 guards the dispatch (identity) layer;
// layer[l] guards layers[l] of the network (zero for unprofiled layers).
struct ThresholdVector {
    float tau0 = 0.0f;
    std::vector<float> layer;

    static ThresholdVector zeros(int num_layers) {
        ThresholdVector t;
        t.layer.assign(size_t(num_layers), 0.0f);
        return t;
    }
};

// Calibration result file: "tau0=<v>" plus one "tau[<l>]=<v>" per layer,
// with '#' comment lines carrying provenance.
void save_thresholds(const ThresholdVector& t, const std::string& path,
                     const std::vector<std::string>& provenance = {});
ThresholdVector load_thresholds(const std::string& path, int num_layers);

// Dispatch-layer recompute set: position (i,j) is set when the accumulated
// field is invalid there, or when the current frame differs from the
// MV-aligned input cache by more than tau0 in any channel (identity operator,
// so the norm divisor is 1).
RecomputeMask dispatch_recompute_set(const FeatureMap& frame, const FeatureMap& input_cache,
                                     const AccumMV& field, float tau0);

// Positions of layer l's output grid whose receptive field intersects the
// previous layer's recompute set.
RecomputeMask propagate_candidates(const RecomputeMask& s_prev, const LayerSpec& layer);

// Drops candidates whose receptive-field difference between the assembled
// current input and the MV-aligned cached input is within tau_l / ||w||_1.
// Candidates with any invalid field position inside the receptive field are
// always kept.
RecomputeMask truncate_candidates(const RecomputeMask& candidates, const FeatureMap& assembled,
                                  const FeatureMap& cached_input, const AccumMV& field_in,
                                  const LayerSpec& layer, float tau_l, float w_l1);

}  // namespace fluxshard
