#include "fluxshard/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fluxshard {

FeatureMap::FeatureMap(int h_, int w_, int c_, float fill)
    : h(h_), w(w_), c(c_), data(size_t(h_) * w_ * c_, fill) {}

FeatureMap new_feature_map(int h, int w, int c, float fill) {
    if (h <= 0 || w <= 0 || c <= 0) throw std::invalid_argument("feature map dims must be positive");
    if (!std::isfinite(fill)) throw std::invalid_argument("feature map fill must be finite");
    return FeatureMap(h, w, c, fill);
}

float max_abs_diff(const FeatureMap& a, const FeatureMap& b,
                   const std::vector<std::pair<std::pair<int, int>, std::pair<int, int>>>& at) {
    if (a.c != b.c) throw std::invalid_argument("max_abs_diff: channel mismatch");
    float worst = 0.0f;
    for (const auto& [pa, pb] : at) {
        if (!a.in_bounds(pa.first, pa.second) || !b.in_bounds(pb.first, pb.second))
            throw std::invalid_argument("max_abs_diff: position out of bounds");
        for (int ch = 0; ch < a.c; ++ch)
            worst = std::max(worst, std::fabs(a.at(pa.first, pa.second, ch) - b.at(pb.first, pb.second, ch)));
    }
    return worst;
}

float max_abs_diff(const FeatureMap& a, const FeatureMap& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    float worst = 0.0f;
    for (size_t i = 0; i < a.data.size(); ++i) worst = std::max(worst, std::fabs(a.data[i] - b.data[i]));
    return worst;
}

RecomputeMask mask_union(const RecomputeMask& a, const RecomputeMask& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("mask_union: shape mismatch");
    RecomputeMask out(a.h, a.w);
    for (size_t i = 0; i < a.bits.size(); ++i) out.bits[i] = a.bits[i] | b.bits[i];
    return out;
}

int mask_count(const RecomputeMask& m) {
    int n = 0;
    for (uint8_t b : m.bits) n += b;
    return n;
}

RecomputeMask mask_dilate(const RecomputeMask& m, int r) {
    if (r < 0) throw std::invalid_argument("mask_dilate: negative radius");
    if (r == 0) return m;
    RecomputeMask out(m.h, m.w);
    for (int i = 0; i < m.h; ++i)
        for (int j = 0; j < m.w; ++j) {
            if (!m.get(i, j)) continue;
            const int y0 = std::max(0, i - r), y1 = std::min(m.h - 1, i + r);
            const int x0 = std::max(0, j - r), x1 = std::min(m.w - 1, j + r);
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) out.set(y, x);
        }
    return out;
}

}  // namespace fluxshard
