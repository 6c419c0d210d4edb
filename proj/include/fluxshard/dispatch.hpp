#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fluxshard/cache.hpp"
#include "fluxshard/link_sim.hpp"
#include "fluxshard/pipeline.hpp"
#include "fluxshard/refnet.hpp"
#include "fluxshard/reuse.hpp"
#include "fluxshard/server.hpp"
#include "fluxshard/wire.hpp"

namespace fluxshard {

// Piecewise-linear latency-vs-workload curve, clamped at both ends. Measured
// curves may wobble, so monotonicity is optional (see isotonic()).
struct LatencyModel {
    std::vector<double> rho;  // strictly ascending, within [0,1]
    std::vector<double> ms;   // positive

    double at(double r) const;

    // Replaces ms with its least-squares non-decreasing fit (pool adjacent
    // violators), for callers that want a monotone curve.
    void isotonic();

    // Synthetic defaults: a fixed-overhead intercept plus the measured dense
    // endpoint of each device class.
    static LatencyModel synthetic_edge();   // (0, 50) .. (1, 446.8)
    static LatencyModel synthetic_cloud();  // (0, 5) .. (1, 27.6)

    // CSV with header "rho,latency_ms".
    static LatencyModel from_csv(const std::string& path);
    void save_csv(const std::string& path) const;
};

double estimate_edge(const LatencyModel& model, double rho_e);

// f_cloud(rho) + payload transfer at the estimated bandwidth + propagation.
double estimate_cloud(const LatencyModel& model, double rho_c, size_t payload_bytes,
                      double bhat_bps, double propagation_ms);

// Exponentially weighted moving average of uplink throughput samples. The
// first sample sets the estimate directly; non-positive samples are ignored
// with a warning.
struct BandwidthEstimator {
    double weight = 0.3;
    double bhat_bps = 0.0;
    bool primed = false;

    void update(double sample_bps);
};

enum class Endpoint { kEdge, kCloud };

// Edge iff it is faster by more than the margin; ties and near-ties go to the
// cloud to spare edge energy.
Endpoint decide(double t_edge_ms, double t_cloud_ms, double epsilon_ms);

const char* endpoint_name(Endpoint e);

enum class RunMode { kFluxshard, kDense, kFixedCoord, kGlobalShift };

const char* mode_name(RunMode m);
RunMode parse_mode(const std::string& name);

struct DriverConfig {
    RunMode mode = RunMode::kFluxshard;
    PipelineOptions options;
    bool edge_only = false;
    bool measure_fidelity = true;  // per-frame dense reference comparison
    double epsilon_ms = 5.0;
    double ewma_weight = 0.3;
    double propagation_ms = 20.0;
    int block_size = 16;
    int search_radius = 8;
};

// One benchmark CSV row plus diagnostics.
struct FrameRecord {
    uint64_t frame = 0;
    RunMode mode = RunMode::kFluxshard;
    Endpoint endpoint = Endpoint::kEdge;
    double rho_e = 0.0, rho_c = 0.0;
    double reuse = 0.0;
    double compute_ratio = 0.0;
    size_t tx_bytes = 0;  // 0 on edge frames
    double t_est_ms = 0.0, t_realized_ms = 0.0;
    double fidelity = 1.0;

    // Not CSV columns:
    double t_edge_est_ms = 0.0, t_cloud_est_ms = 0.0;
    bool fallback = false;    // cloud attempt failed, frame ran on edge
    bool cold_start = false;  // executed endpoint seeded on this frame
    int rfap_flagged = 0;
    double mirror_divergence = 0.0;  // |local mirror - server output|, cloud frames
};

// Sequential per-stream driver: extracts motion, keeps the dual edge/cloud
// dispatch-layer states, estimates both latencies, routes the frame, executes
// it (locally or through the offload transport + deterministic local mirror),
// and advances the virtual clock by the realized latency.
class FrameDriver {
  public:
    FrameDriver(NetworkSpec net, ThresholdVector tau, DriverConfig cfg, LatencyModel edge_model,
                LatencyModel cloud_model, LinkTrace trace);

    // Routes offloads through an external transport (e.g. TcpClient) instead
    // of the internal loopback server. Not owned; must outlive the driver.
    void set_transport(OffloadTransport* transport);

    FrameRecord run_frame(const FeatureMap& frame);

    double virtual_now_ms() const { return now_ms_; }
    uint64_t frames_processed() const { return next_frame_; }
    double max_mirror_divergence() const { return max_mirror_divergence_; }
    const EndpointCache& edge_cache() const { return edge_; }
    const EndpointCache& cloud_cache() const { return cloud_; }
    const NetworkSpec& net() const { return net_; }

  private:
    MVField motion_for_mode(const FeatureMap& frame);

    NetworkSpec net_;
    ThresholdVector tau_;
    DriverConfig cfg_;
    LatencyModel edge_model_, cloud_model_;
    LinkTrace trace_;

    std::unique_ptr<ServerCore> loopback_core_;
    std::unique_ptr<LoopbackTransport> loopback_;
    OffloadTransport* transport_ = nullptr;

    EndpointCache edge_, cloud_;
    BandwidthEstimator bw_;
    FeatureMap prev_;
    bool have_prev_ = false;
    uint64_t next_frame_ = 0;
    double now_ms_ = 0.0;
    double max_mirror_divergence_ = 0.0;
};

}  // namespace fluxshard
