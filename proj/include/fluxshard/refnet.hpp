#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fluxshard/tensor.hpp"

namespace fluxshard {

enum class LayerKind { kConv, kPointwise, kActivation, kPool, kBatchNormAffine };
enum class ActKind { kReLU, kLeaky, kIdentity };

struct LayerSpec {
    LayerKind kind = LayerKind::kActivation;
    ActKind act = ActKind::kReLU;  // activation layers only
    int kernel = 1;                // conv/pool spatial extent
    int stride = 1;
    int in_ch = 0;   // resolved at build time
    int out_ch = 0;  // resolved at build time
    bool profiled = false;

    // Spatial window relative to the output anchor (i*stride, j*stride),
    // inclusive offsets on the layer's input grid. Conv: [-r, r] with zero
    // padding; pool: [0, k-1] unpadded; everything else: [0, 0].
    int win_lo = 0, win_hi = 0;

    // conv: out_ch * kernel^2 * in_ch, kernel row-major, channel-innermost.
    // pointwise: out_ch * in_ch. bn: scale[out_ch] then shift[out_ch].
    std::vector<float> weights;
    std::vector<float> bias;  // conv/pointwise, per out channel

    int radius() const { return kind == LayerKind::kConv ? (kernel - 1) / 2 : 0; }
    int window_extent() const { return win_hi - win_lo + 1; }
};

struct NetworkSpec {
    int in_h = 0, in_w = 0, in_c = 0;
    uint64_t seed = 0;
    std::vector<LayerSpec> layers;

    // Per-layer output grid dims and channel counts (index l = layer l, 1-based
    // semantics stored 0-based: grid_h[l] is the output grid of layers[l]).
    std::vector<int> grid_h, grid_w, channels;

    int num_layers() const { return int(layers.size()); }
    std::string canonical_text() const;  // stable serialization for hashing
    uint64_t config_hash() const;
};

// Geometry of receptive fields at input resolution.
struct NetGeometry {
    int r_max = 0;  // largest receptive-field extent across layers
    int s_max = 1;  // largest cumulative stride product
    std::vector<int> extent;        // per layer, input-resolution RF extent
    std::vector<int> cum_stride_in;   // stride product before layer l
    std::vector<int> cum_stride_out;  // stride product through layer l
};

// Parses the text configuration format:
//   seed=<u64>
//   input=<H>x<W>x<C>
//   conv k=3 s=2 out=16
//   relu profiled=true
//   pointwise out=8
//   pool k=2 s=2
//   bn
// and resolves channel counts. Raises ConfigError with the line number on any
// malformed or unsupported directive.
NetworkSpec parse_network(const std::string& text);
NetworkSpec load_network(const std::string& path);

// Fills deterministic weights (uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]
// from the spec seed) and validates stride divisibility against the input
// dims. Same seed always yields identical weights.
void build_network(NetworkSpec& net);

// Convenience: parse + build.
NetworkSpec make_network(const std::string& text);

// The stock 8-layer benchmark topology for the given input size.
std::string default_network_text(int h = 128, int w = 128, int c = 3, uint64_t seed = 42);

// Full forward pass; returns every layer's output, outputs[l] for layers[l].
std::vector<FeatureMap> dense_forward(const NetworkSpec& net, const FeatureMap& input);

// Computes layer l's outputs only at the set positions of the output-grid
// mask, writing them into `out` (which must already have the output shape).
void eval_layer_at(const NetworkSpec& net, int l, const FeatureMap& input,
                   const RecomputeMask& positions, FeatureMap& out);

// Operator norm used by the reuse bound: max over output channels of the L1
// norm of the flattened kernel. Activations and pools are 1-Lipschitz;
// the affine normalization layer contributes max |scale|.
float weight_l1(const LayerSpec& layer);

NetGeometry effective_geometry(const NetworkSpec& net);

// Per-output-position arithmetic cost (flops) of layer l, and the dense total.
double layer_cost_per_position(const NetworkSpec& net, int l);
double dense_cost(const NetworkSpec& net);

}  // namespace fluxshard
