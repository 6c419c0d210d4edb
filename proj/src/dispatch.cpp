#include "fluxshard/dispatch.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "fluxshard/calibration.hpp"
#include "fluxshard/common.hpp"
#include "fluxshard/motion.hpp"

namespace fluxshard {

double LatencyModel::at(double r) const {
    if (rho.size() < 2) throw std::invalid_argument("latency model needs >= 2 points");
    if (r <= rho.front()) return ms.front();
    if (r >= rho.back()) return ms.back();
    size_t hi = 1;
    while (rho[hi] < r) ++hi;
    const double t = (r - rho[hi - 1]) / (rho[hi] - rho[hi - 1]);
    return ms[hi - 1] + t * (ms[hi] - ms[hi - 1]);
}

void LatencyModel::isotonic() {
    // Pool adjacent violators with equal weights.
    std::vector<double> stack_level;
    std::vector<double> stack_weight;
    std::vector<size_t> stack_count;
    for (size_t i = 0; i < ms.size(); ++i) {
        double lv = ms[i], wt = 1.0;
        size_t ct = 1;
        while (!stack_level.empty() && stack_level.back() > lv) {
            lv = (stack_level.back() * stack_weight.back() + lv * wt) /
                 (stack_weight.back() + wt);
            wt += stack_weight.back();
            ct += stack_count.back();
            stack_level.pop_back();
            stack_weight.pop_back();
            stack_count.pop_back();
        }
        stack_level.push_back(lv);
        stack_weight.push_back(wt);
        stack_count.push_back(ct);
    }
    size_t k = 0;
    for (size_t b = 0; b < stack_level.size(); ++b)
        for (size_t j = 0; j < stack_count[b]; ++j) ms[k++] = stack_level[b];
}

LatencyModel LatencyModel::synthetic_edge() { return {{0.0, 1.0}, {50.0, 446.8}}; }
LatencyModel LatencyModel::synthetic_cloud() { return {{0.0, 1.0}, {5.0, 27.6}}; }

LatencyModel LatencyModel::from_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open latency profile: " + path);
    LatencyModel m;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (lineno == 1 && line.find("rho") != std::string::npos) continue;
        double r = 0.0, t = 0.0;
        if (std::sscanf(line.c_str(), "%lf,%lf", &r, &t) != 2)
            throw ConfigError(path + ": bad profile row at line " + std::to_string(lineno));
        m.rho.push_back(r);
        m.ms.push_back(t);
    }
    if (m.rho.size() < 2) throw ConfigError(path + ": latency profile needs >= 2 points");
    for (size_t i = 0; i < m.rho.size(); ++i) {
        if (m.rho[i] < 0.0 || m.rho[i] > 1.0)
            throw ConfigError(path + ": rho outside [0,1]");
        if (m.ms[i] <= 0.0) throw ConfigError(path + ": latency must be positive");
        if (i > 0 && m.rho[i] <= m.rho[i - 1])
            throw ConfigError(path + ": rho values must be strictly ascending");
    }
    return m;
}

void LatencyModel::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write latency profile: " + path);
    out << "rho,latency_ms\n";
    char buf[64];
    for (size_t i = 0; i < rho.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f\n", rho[i], ms[i]);
        out << buf;
    }
}

double estimate_edge(const LatencyModel& model, double rho_e) { return model.at(rho_e); }

double estimate_cloud(const LatencyModel& model, double rho_c, size_t payload_bytes,
                      double bhat_bps, double propagation_ms) {
    if (bhat_bps <= 0.0) throw std::invalid_argument("estimate_cloud: bandwidth must be positive");
    const double transfer_ms = double(payload_bytes) * 8.0 / bhat_bps * 1000.0;
    return model.at(rho_c) + transfer_ms + propagation_ms;
}

void BandwidthEstimator::update(double sample_bps) {
    if (sample_bps <= 0.0) {
        FS_LOG(kWarn, "ignoring non-positive bandwidth sample %g", sample_bps);
        return;
    }
    if (!primed) {
        bhat_bps = sample_bps;
        primed = true;
        return;
    }
    bhat_bps = weight * sample_bps + (1.0 - weight) * bhat_bps;
}

Endpoint decide(double t_edge_ms, double t_cloud_ms, double epsilon_ms) {
    return t_edge_ms < t_cloud_ms - epsilon_ms ? Endpoint::kEdge : Endpoint::kCloud;
}

const char* endpoint_name(Endpoint e) { return e == Endpoint::kEdge ? "edge" : "cloud"; }

const char* mode_name(RunMode m) {
    switch (m) {
        case RunMode::kFluxshard: return "fluxshard";
        case RunMode::kDense: return "dense";
        case RunMode::kFixedCoord: return "fixed-coord";
        case RunMode::kGlobalShift: return "global-shift";
    }
    return "?";
}

RunMode parse_mode(const std::string& name) {
    std::string s = name;
    for (char& c : s)
        if (c == '_') c = '-';
    if (s == "fluxshard") return RunMode::kFluxshard;
    if (s == "dense") return RunMode::kDense;
    if (s == "fixed-coord") return RunMode::kFixedCoord;
    if (s == "global-shift") return RunMode::kGlobalShift;
    throw ConfigError("unknown mode: " + name);
}

FrameDriver::FrameDriver(NetworkSpec net, ThresholdVector tau, DriverConfig cfg,
                         LatencyModel edge_model, LatencyModel cloud_model, LinkTrace trace)
    : net_(std::move(net)), tau_(std::move(tau)), cfg_(cfg), edge_model_(std::move(edge_model)),
      cloud_model_(std::move(cloud_model)), trace_(std::move(trace)),
      edge_(EndpointCache::make(net_)), cloud_(EndpointCache::make(net_)) {
    bw_.weight = cfg_.ewma_weight;
    loopback_core_ = std::make_unique<ServerCore>(net_, tau_, cfg_.options);
    loopback_ = std::make_unique<LoopbackTransport>(*loopback_core_, 1);
    transport_ = loopback_.get();
}

void FrameDriver::set_transport(OffloadTransport* transport) {
    transport_ = transport != nullptr ? transport : loopback_.get();
}

MVField FrameDriver::motion_for_mode(const FeatureMap& frame) {
    const int gh = frame.h / cfg_.block_size, gw = frame.w / cfg_.block_size;
    if (!have_prev_ || cfg_.mode == RunMode::kDense || cfg_.mode == RunMode::kFixedCoord)
        return MVField(gh, gw, cfg_.block_size);
    MVField est = estimate_mv(frame, prev_, cfg_.block_size, cfg_.search_radius);
    if (cfg_.mode == RunMode::kGlobalShift) {
        const auto [dy, dx] = modal_mv(est);
        return uniform_field(est, dy, dx);
    }
    return est;
}

FrameRecord FrameDriver::run_frame(const FeatureMap& frame) {
    if (frame.h != net_.in_h || frame.w != net_.in_w || frame.c != net_.in_c)
        throw std::invalid_argument("run_frame: frame shape mismatch");
    if (frame.h % cfg_.block_size != 0 || frame.w % cfg_.block_size != 0)
        throw std::invalid_argument("run_frame: dims must be multiples of the block size");

    FrameRecord rec;
    rec.frame = next_frame_;
    rec.mode = cfg_.mode;
    const uint64_t frame_id = next_frame_++;
    const double n_positions = double(frame.h) * frame.w;

    // Stage 1: motion extraction and dual accumulation. Both endpoint states
    // advance their accumulators every frame; only the executed endpoint gets
    // its cache (and accumulator) refreshed below.
    const MVField blocks = motion_for_mode(frame);
    edge_.accum = accumulate(edge_.accum, blocks);
    cloud_.accum = accumulate(cloud_.accum, blocks);

    // Stage 2: dual workload estimation. The cloud path quantizes its
    // accumulated field to transport blocks first so both sides of the wire
    // derive identical state.
    const RecomputeMask s0_edge =
        cfg_.mode == RunMode::kDense
            ? RecomputeMask(frame.h, frame.w, true)
            : compute_dispatch_set(net_, tau_, cfg_.options, edge_, frame, edge_.accum);
    const MVField cloud_blocks = blockify(cloud_.accum, cfg_.block_size);
    const AccumMV cloud_field = expand_blocks(cloud_blocks, frame.h, frame.w);
    const RecomputeMask s0_cloud =
        cfg_.mode == RunMode::kDense
            ? RecomputeMask(frame.h, frame.w, true)
            : compute_dispatch_set(net_, tau_, cfg_.options, cloud_, frame, cloud_field);

    OffloadPayload payload = build_payload(frame_id, frame, cloud_blocks, s0_cloud);
    const size_t n_px = payload.pixels.size() / 3;
    rec.tx_bytes = encoded_offload_size(frame.h, frame.w, n_px, cfg_.block_size);
    rec.rho_e = mask_count(s0_edge) / n_positions;
    rec.rho_c = double(n_px) / n_positions;

    // Stage 3: latency estimation and the routing decision.
    bw_.update(trace_.bandwidth_at(now_ms_));
    rec.t_edge_est_ms = estimate_edge(edge_model_, rec.rho_e);
    rec.t_cloud_est_ms =
        estimate_cloud(cloud_model_, rec.rho_c, rec.tx_bytes, bw_.bhat_bps, cfg_.propagation_ms);
    rec.endpoint = cfg_.edge_only ? Endpoint::kEdge
                                  : decide(rec.t_edge_est_ms, rec.t_cloud_est_ms, cfg_.epsilon_ms);

    // Stage 4: execute on the chosen endpoint.
    FeatureMap output;
    if (rec.endpoint == Endpoint::kCloud) {
        bool ok = false;
        try {
            OffloadResponse resp = transport_->offload(payload);
            if (resp.status != WireStatus::kOk) {
                FS_LOG(kWarn, "frame %llu: server reported status %u, falling back to edge",
                       (unsigned long long)frame_id, unsigned(resp.status));
            } else {
                // Deterministic local mirror of the server-side update.
                FrameResult mirror = apply_offload(net_, tau_, cfg_.options, cloud_, payload);
                rec.mirror_divergence = double(max_abs_diff(mirror.output, resp.output));
                if (rec.mirror_divergence > max_mirror_divergence_)
                    max_mirror_divergence_ = rec.mirror_divergence;
                if (rec.mirror_divergence > 1e-3) {
                    FS_LOG(kError, "frame %llu: mirror diverged from server by %g",
                           (unsigned long long)frame_id, rec.mirror_divergence);
                    cloud_ = EndpointCache::make(net_);
                }
                rec.cold_start = mirror.stats.cold_start;
                rec.rfap_flagged = mirror.stats.rfap_flagged;
                rec.reuse = mirror.stats.reuse_ratio;
                rec.compute_ratio = mirror.stats.compute_ratio;
                rec.t_est_ms = rec.t_cloud_est_ms;
                rec.t_realized_ms =
                    cloud_model_.at(rec.rho_c) +
                    transfer_time(trace_, rec.tx_bytes, now_ms_, cfg_.propagation_ms);
                output = std::move(resp.output);
                ok = true;
            }
        } catch (const std::exception& e) {
            FS_LOG(kWarn, "frame %llu: offload failed (%s), falling back to edge",
                   (unsigned long long)frame_id, e.what());
        }
        if (!ok) {
            // The server-side outcome is unknown; drop the replica so the next
            // offload re-seeds it with a full frame.
            cloud_ = EndpointCache::make(net_);
            rec.fallback = true;
            rec.endpoint = Endpoint::kEdge;
        }
    }

    if (rec.endpoint == Endpoint::kEdge) {
        FrameResult r =
            sparse_forward(net_, tau_, cfg_.options, edge_, frame, edge_.accum, s0_edge, frame_id);
        rec.cold_start = r.stats.cold_start;
        rec.rfap_flagged = r.stats.rfap_flagged;
        rec.reuse = r.stats.reuse_ratio;
        rec.compute_ratio = r.stats.compute_ratio;
        rec.t_est_ms = rec.t_edge_est_ms;
        rec.t_realized_ms = rec.t_edge_est_ms;
        rec.tx_bytes = 0;
        output = std::move(r.output);
    }

    now_ms_ += rec.t_realized_ms;
    if (cfg_.measure_fidelity)
        rec.fidelity = fidelity(output, dense_forward(net_, frame).back());
    prev_ = frame;
    have_prev_ = true;
    return rec;
}

}  // namespace fluxshard
