#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "fluxshard/pipeline.hpp"
#include "fluxshard/refnet.hpp"
#include "fluxshard/reuse.hpp"
#include "fluxshard/tensor.hpp"

namespace fluxshard {

// Raised when no candidate threshold (not even 0) fits the accuracy budget.
struct CalibrationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Similarity of a sparse-pipeline output to the dense reference:
//   1 - min(1, ||s - d||_1 / (||d||_1 + 1e-9)).
// Equals 1.0 iff the outputs match exactly.
double fidelity(const FeatureMap& sparse_out, const FeatureMap& dense_out);

// Splits the admissible fidelity drop (1 - alpha) between the dispatch stage
// and the profiled layers: dispatch gets split_ratio of it, the remainder is
// divided evenly across the num_profiled layer stages.
struct BudgetSplit {
    double dispatch = 0.0;
    std::vector<double> per_layer;
};
BudgetSplit budget_split(double alpha, int num_profiled, double split_ratio);

struct CalibrationConfig {
    double alpha = 0.97;
    double split_ratio = 2.0 / 3.0;  // budget share of the dispatch stage
    // Ascending per-stage candidate grid; must start at 0.
    std::vector<float> candidates = {0.0f, 1e-3f, 3e-3f, 1e-2f, 3e-2f, 1e-1f};
    int block_size = 16;
    int search_radius = 8;
    PipelineOptions options;
    std::vector<std::vector<FeatureMap>> sequences;
};

// Replays the sparse pipeline over every sequence with the given thresholds.
// fidelity / compute_ratio are means over all warm (non-seeding) frames,
// pooled across sequences; a replay with no warm frames reports {1.0, 0.0}.
struct ReplayStats {
    double fidelity = 1.0;
    double compute_ratio = 0.0;
    int frames = 0;
};
ReplayStats replay(const NetworkSpec& net, const ThresholdVector& tau,
                   const CalibrationConfig& cfg);

struct CalibrationOutcome {
    ThresholdVector thresholds;
    double fidelity = 1.0;       // replayed at the selected thresholds
    double compute_ratio = 0.0;  // ditto
    int evaluations = 0;         // candidate replays performed
    std::vector<int> stage_layers;  // layer index per stage; -1 = dispatch
};

// Greedy per-stage calibration: stages are the dispatch layer followed by the
// profiled layers in network order. Each stage evaluates every candidate
// (earlier stages fixed at their selections, later stages at 0) and selects
// the largest one whose mean fidelity drop stays within the running budget
// through that stage. Deterministic given inputs.
CalibrationOutcome calibrate(const NetworkSpec& net, const CalibrationConfig& cfg);

}  // namespace fluxshard
