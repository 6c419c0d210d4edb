#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fluxshard/tensor.hpp"

namespace fluxshard {

// Sentinel block displacement marking "no coherent motion" in block-granular
// fields (real displacements satisfy |d| < 2^15 by construction).
constexpr int16_t kInvalidMv = INT16_MIN;

// Block-granular motion field. Convention is backward: the content of the
// current block at (bi,bj) came from reference position (y - dy, x - dx).
struct MVField {
    int block_size = 16;
    int grid_h = 0, grid_w = 0;
    std::vector<int16_t> dy, dx;  // grid_h * grid_w, row-major

    MVField() = default;
    MVField(int grid_h_, int grid_w_, int block = 16)
        : block_size(block), grid_h(grid_h_), grid_w(grid_w_),
          dy(size_t(grid_h_) * grid_w_, 0), dx(size_t(grid_h_) * grid_w_, 0) {}

    size_t idx(int bi, int bj) const { return size_t(bi) * grid_w + bj; }
    int16_t dy_at(int bi, int bj) const { return dy[idx(bi, bj)]; }
    int16_t dx_at(int bi, int bj) const { return dx[idx(bi, bj)]; }
    void set(int bi, int bj, int16_t dy_, int16_t dx_) {
        dy[idx(bi, bj)] = dy_;
        dx[idx(bi, bj)] = dx_;
    }
    // Block lookup for a pixel position.
    void at_pixel(int i, int j, int& ody, int& odx) const {
        const size_t k = idx(i / block_size, j / block_size);
        ody = dy[k];
        odx = dx[k];
    }
};

// Per-pixel accumulated displacement with validity flags. Invariant: every
// valid pixel's backward source (i - dy, j - dx) lies in bounds.
struct AccumMV {
    int h = 0, w = 0;
    std::vector<int32_t> dy, dx;
    std::vector<uint8_t> valid;

    AccumMV() = default;
    AccumMV(int h_, int w_)
        : h(h_), w(w_), dy(size_t(h_) * w_, 0), dx(size_t(h_) * w_, 0), valid(size_t(h_) * w_, 1) {}

    size_t idx(int i, int j) const { return size_t(i) * w + j; }
    bool is_valid(int i, int j) const { return valid[idx(i, j)] != 0; }
    bool in_bounds(int i, int j) const { return i >= 0 && i < h && j >= 0 && j < w; }
};

// Exhaustive block matching: per block, SAD over integer displacements with
// |dy|,|dx| <= search_radius whose full reference window is in bounds.
// Deterministic tie-break: smallest |dy|+|dx|, then dy, then dx.
MVField estimate_mv(const FeatureMap& cur, const FeatureMap& ref, int block_size, int search_radius);

// Composes a new block field onto an accumulated field:
//   out(i,j) = acc((i,j) - new(i,j)) + new(i,j).
// Falls back to new(i,j) (marked invalid) when the lookup source is out of
// bounds or invalid; any result whose backward target leaves the frame is
// also marked invalid.
AccumMV accumulate(const AccumMV& acc, const MVField& next);

// Zero displacement, all valid.
AccumMV reset(int h, int w);

// Stride-s field for a downsampled grid: samples at (i*s, j*s), divides by s
// rounding toward zero; valid only when the source is valid and both
// components are divisible by s.
AccumMV downsample_field(const AccumMV& acc, int s);

// Backward warp: out(i,j,:) = src(i - dy, j - dx, :) for valid in-bounds
// sources; otherwise copies src(i,j,:) and flags the position in oob.
struct WarpResult {
    FeatureMap map;
    RecomputeMask oob;
};
WarpResult warp_backward(const FeatureMap& src, const AccumMV& field);

// Reduces a per-pixel accumulated field to one displacement per block for
// transport. Blocks that are not uniformly valid with a single displacement
// value (or whose displacement exceeds int16 range) become kInvalidMv.
MVField blockify(const AccumMV& acc, int block_size);

// Expands a block field (possibly containing kInvalidMv) back to a per-pixel
// field over h x w; the backward-target bounds rule is re-applied.
AccumMV expand_blocks(const MVField& field, int h, int w);

// Most frequent block displacement; ties broken by smallest |dy|+|dx|, then
// dy, then dx. Invalid-sentinel blocks are excluded (falls back to (0,0) if
// every block is invalid).
std::pair<int16_t, int16_t> modal_mv(const MVField& field);

// Makes every block carry the same displacement.
MVField uniform_field(const MVField& like, int16_t dy, int16_t dx);

// Block-field fixture format: magic "FSMV", version u16 (=1), block u16,
// grid_h u32, grid_w u32, then int16 (dy,dx) pairs row-major, little-endian.
void save_mv_field(const MVField& f, const std::string& path);
MVField load_mv_field(const std::string& path);

}  // namespace fluxshard
