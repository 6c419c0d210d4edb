#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fluxshard/motion.hpp"
#include "fluxshard/refnet.hpp"
#include "fluxshard/tensor.hpp"

namespace fluxshard {

// Values for an explicit set of positions (all channels per position),
// flattened in position order.
struct SparseValues {
    int channels = 0;
    std::vector<std::pair<int, int>> pos;
    std::vector<float> values;

    size_t count() const { return pos.size(); }
};

// Gathers map values at the set positions of the mask, raster order.
SparseValues sparse_from_map(const FeatureMap& map, const RecomputeMask& mask);

// One endpoint's reuse state: the dispatch-layer input cache, one cached
// output per network layer, and the displacement accumulated since this
// endpoint last processed a frame.
struct EndpointCache {
    FeatureMap input_cache;
    std::vector<FeatureMap> layer_cache;
    AccumMV accum;
    bool seeded = false;
    uint64_t last_update_frame = 0;

    // Allocates zeroed caches and an identity accumulator for the net's shapes.
    static EndpointCache make(const NetworkSpec& net);

    // Installs a dense pass as the cache contents (cold-start seeding).
    void seed(const FeatureMap& input, const std::vector<FeatureMap>& outputs, uint64_t frame_id);

    // CRC32 over all cache float bits, for cheap divergence audits.
    uint32_t crc() const;

    // Debug snapshot: per-map dims header + raw float32 blobs.
    void dump(const std::string& path) const;
    static EndpointCache load(const std::string& path, const NetworkSpec& net);
};

// Backward-warped copies of every cache level, with per-level out-of-bounds
// masks. Level l uses the accumulator downsampled by the cumulative stride
// through layer l; the input cache uses the accumulator directly.
struct RemappedCaches {
    FeatureMap input;
    RecomputeMask input_oob;
    std::vector<FeatureMap> layers;
    std::vector<RecomputeMask> layer_oob;
    std::vector<AccumMV> field_out;  // accumulator at each layer's output grid
};
RemappedCaches remap_cache(const EndpointCache& cache, const AccumMV& field, const NetworkSpec& net);

// Overwrites the set positions of `remapped` with the fresh values; every set
// position must be covered exactly once and fresh values may not lie outside
// the set (logic errors indicate a broken pipeline invariant).
FeatureMap merge_cache(const FeatureMap& remapped, const SparseValues& fresh, const RecomputeMask& s);

}  // namespace fluxshard
