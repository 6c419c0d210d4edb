#pragma once

#include <string>
#include <utility>

#include "fluxshard/common.hpp"
#include "fluxshard/refnet.hpp"
#include "fluxshard/tensor.hpp"

namespace testutil {

// Every value drawn independently; distinct positions almost surely differ,
// which makes block matching unambiguous.
inline fluxshard::FeatureMap noise_map(int h, int w, int c, uint64_t seed) {
    fluxshard::FeatureMap m(h, w, c);
    fluxshard::Rng rng(seed);
    for (float& v : m.data) v = float(rng.next_unit());
    return m;
}

// Two frames of the same content under a global integer shift. The current
// frame's content at (i,j) came from the previous frame at (i-dy, j-dx):
// exactly the backward displacement (dy,dx) everywhere.
inline std::pair<fluxshard::FeatureMap, fluxshard::FeatureMap> shifted_pair(
    int h, int w, int c, uint64_t seed, int dy, int dx, int margin = 8) {
    const fluxshard::FeatureMap canvas = noise_map(h + 2 * margin, w + 2 * margin, c, seed);
    fluxshard::FeatureMap prev(h, w, c), cur(h, w, c);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int ch = 0; ch < c; ++ch) {
                prev.at(i, j, ch) = canvas.at(margin + i, margin + j, ch);
                cur.at(i, j, ch) = canvas.at(margin + i - dy, margin + j - dx, ch);
            }
    return {std::move(prev), std::move(cur)};
}

// Small two-conv topology for fast pipeline tests (32x32x3 input).
inline std::string tiny_net_text(uint64_t seed = 5) {
    std::string t;
    t += "seed=" + std::to_string(seed) + "\n";
    t += "input=32x32x3\n";
    t += "conv k=3 s=1 out=4\n";
    t += "relu profiled=true\n";
    t += "conv k=3 s=2 out=4\n";
    t += "relu\n";
    return t;
}

inline fluxshard::NetworkSpec tiny_net(uint64_t seed = 5) {
    return fluxshard::make_network(tiny_net_text(seed));
}

}  // namespace testutil
