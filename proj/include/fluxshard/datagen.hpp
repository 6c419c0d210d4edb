#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fluxshard/motion.hpp"
#include "fluxshard/tensor.hpp"

namespace fluxshard {

// Synthetic benchmark scenarios. All content derives from oversized textured
// canvases so motion reveals coherent new material rather than repeats.
//   static      unchanged frames
//   pan         whole frame translates by (dy, dx) per frame
//   two_region  background pans by (dy, dx); a fixed box pans its own content
//               by (fg_dy, fg_dx) — block displacements disagree at the seam
//   reveal      an expanding centered patch overwrites static background
//   scramble    every 16x16 block independently re-jitters within +-jitter px
//               per frame (codec-hostile: successive displacements exceed any
//               small search radius)
struct ScenarioSpec {
    std::string name = "pan";
    int frames = 50;
    int h = 128, w = 128, c = 3;
    uint64_t seed = 1;
    int dy = 0, dx = 0;        // pan; two_region background
    int fg_dy = 0, fg_dx = 0;  // two_region foreground box
    int jitter = 24;           // scramble amplitude
    int grow = 2;              // reveal: half-size growth per frame
};

// A generated sequence plus its per-frame ground-truth block motion.
// true_motion[t] describes frame t+1 relative to frame t; blocks whose
// content is not a coherent translation carry the invalid sentinel.
struct GeneratedSequence {
    ScenarioSpec spec;
    std::vector<FeatureMap> frames;
    std::vector<MVField> true_motion;
};

GeneratedSequence generate_scenario(const ScenarioSpec& spec);

// Textured canvas: bilinear value noise (lattice 8 px) blended 70/30 with
// white noise, clamped to [0,1].
FeatureMap noise_canvas(int h, int w, int c, uint64_t seed);

// Flat binary frame file: magic "FSFM" | version u16 | H u32 | W u32 | C u32
// | float32 data, little-endian.
void save_frame(const FeatureMap& map, const std::string& path);
FeatureMap load_frame(const std::string& path);

// Writes frame_%04d.fsfm files plus manifest.json (scenario parameters,
// frame file list, and ground-truth block motion) into `dir`.
void write_scenario(const ScenarioSpec& spec, const std::string& dir);

// Reads a directory produced by write_scenario.
GeneratedSequence load_scenario(const std::string& dir);

// Population standard deviation of the valid ground-truth displacement
// components, a scenario's motion-intensity summary.
double motion_std(const std::vector<MVField>& true_motion);

}  // namespace fluxshard
