#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fluxshard/dispatch.hpp"

namespace fluxshard {

// Aggregate of a benchmark run. Means exclude the initialization frame
// (frame 0), which is always a dense seed.
struct RunSummary {
    size_t frames = 0;  // frames included in the means
    double cloud_fraction = 0.0;
    double mean_rho_e = 0.0, mean_rho_c = 0.0;
    double mean_reuse = 0.0, mean_compute = 0.0;
    double mean_tx_bytes = 0.0;
    double mean_t_est = 0.0, mean_t_realized = 0.0;
    double mean_fidelity = 1.0;
    size_t fallbacks = 0;
};

RunSummary summarize(const std::vector<FrameRecord>& records);

// Metrics CSV. Header:
//   frame,mode,endpoint,rho_e,rho_c,reuse,compute_ratio,tx_bytes,T_est_ms,T_realized_ms,fidelity
// one row per frame plus a trailing summary row (frame column "mean",
// endpoint "-") carrying the means excluding frame 0. Reals use fixed %.6f,
// so identical runs serialize byte-identically.
void write_metrics_csv(const std::vector<FrameRecord>& records, const std::string& path);

// Reads rows back (the summary row is skipped).
std::vector<FrameRecord> load_metrics_csv(const std::string& path);

// Fixed-width text table over named summaries, for the report command.
std::string format_summary_table(const std::vector<std::pair<std::string, RunSummary>>& rows);

}  // namespace fluxshard
