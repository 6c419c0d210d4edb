#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace fluxshard {

// Axis-aligned half-open pixel rectangle [y0,y1) x [x0,x1).
struct Rect {
    int y0 = 0, x0 = 0, y1 = 0, x1 = 0;

    bool empty() const { return y1 <= y0 || x1 <= x0; }
    bool contains(int y, int x) const { return y >= y0 && y < y1 && x >= x0 && x < x1; }
    int area() const { return empty() ? 0 : (y1 - y0) * (x1 - x0); }
};

// Dense float32 feature map, channel-innermost: index = (i*w + j)*c + ch.
struct FeatureMap {
    int h = 0, w = 0, c = 0;
    std::vector<float> data;

    FeatureMap() = default;
    FeatureMap(int h_, int w_, int c_, float fill = 0.0f);

    float& at(int i, int j, int ch) { return data[(size_t(i) * w + j) * c + ch]; }
    float at(int i, int j, int ch) const { return data[(size_t(i) * w + j) * c + ch]; }
    size_t size() const { return data.size(); }
    bool same_shape(const FeatureMap& o) const { return h == o.h && w == o.w && c == o.c; }
    bool in_bounds(int i, int j) const { return i >= 0 && i < h && j >= 0 && j < w; }
};

// Per-position recompute flags on an h x w grid.
struct RecomputeMask {
    int h = 0, w = 0;
    std::vector<uint8_t> bits;

    RecomputeMask() = default;
    RecomputeMask(int h_, int w_, bool fill = false)
        : h(h_), w(w_), bits(size_t(h_) * w_, fill ? 1 : 0) {}

    bool get(int i, int j) const { return bits[size_t(i) * w + j] != 0; }
    void set(int i, int j, bool v = true) { bits[size_t(i) * w + j] = v ? 1 : 0; }
    bool same_shape(const RecomputeMask& o) const { return h == o.h && w == o.w; }
};

// Allocates an h x w x c map filled with `fill`; validates dims and finiteness.
FeatureMap new_feature_map(int h, int w, int c, float fill = 0.0f);

// max_{k} |a(p_k) - b(q_k)| over explicit position pairs; channels reduced by max.
float max_abs_diff(const FeatureMap& a, const FeatureMap& b,
                   const std::vector<std::pair<std::pair<int, int>, std::pair<int, int>>>& at);

// Whole-map max abs difference (shapes must match).
float max_abs_diff(const FeatureMap& a, const FeatureMap& b);

RecomputeMask mask_union(const RecomputeMask& a, const RecomputeMask& b);
int mask_count(const RecomputeMask& m);

// Chebyshev dilation by radius r, clipped at the borders.
RecomputeMask mask_dilate(const RecomputeMask& m, int r);

}  // namespace fluxshard
