// End-to-end acceptance suite. Each numbered section wires the public pieces
// together the way the CLI does and verifies one externally meaningful
// property of the whole system, printing a single pass/fail line. The
// process exits nonzero if any section fails. All tolerances are stated
// inline next to the checks they guard.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fluxshard/cache.hpp"
#include "fluxshard/calibration.hpp"
#include "fluxshard/datagen.hpp"
#include "fluxshard/dispatch.hpp"
#include "fluxshard/link_sim.hpp"
#include "fluxshard/motion.hpp"
#include "fluxshard/pipeline.hpp"
#include "fluxshard/refnet.hpp"
#include "fluxshard/report.hpp"
#include "fluxshard/reuse.hpp"
#include "fluxshard/rfap.hpp"
#include "fluxshard/server.hpp"
#include "fluxshard/tensor.hpp"
#include "fluxshard/wire.hpp"

using namespace fluxshard;

namespace {

// ---------------------------------------------------------------------------
// Harness
// ---------------------------------------------------------------------------

struct Section {
    std::vector<std::string> failures;
    std::string detail;  // appended to the pass/fail line

    void require(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
};

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return std::string(buf);
}

// ---------------------------------------------------------------------------
// Shared sequence driver: the same per-frame loop the benchmark replay uses,
// kept local so the checks below do not depend on the code they judge for
// anything but the operations under test.
// ---------------------------------------------------------------------------

struct SeqMetrics {
    std::vector<double> max_err;   // warm frames, vs the dense reference
    std::vector<double> fidelity;  // warm frames
    std::vector<double> compute;   // warm frames
    std::vector<double> reuse;     // warm frames
};

SeqMetrics drive_sequence(const NetworkSpec& net, const ThresholdVector& tau,
                          const PipelineOptions& opt, const std::vector<FeatureMap>& frames,
                          int block, int radius, bool against_dense) {
    SeqMetrics m;
    EndpointCache cache = EndpointCache::make(net);
    const FeatureMap* prev = nullptr;
    for (size_t t = 0; t < frames.size(); ++t) {
        const FeatureMap& frame = frames[t];
        if (!cache.seeded) {
            RecomputeMask full(frame.h, frame.w, true);
            sparse_forward(net, tau, opt, cache, frame, cache.accum, full, t);
        } else {
            const MVField mv = estimate_mv(frame, *prev, block, radius);
            cache.accum = accumulate(cache.accum, mv);
            const AccumMV field = cache.accum;
            const RecomputeMask s0 = compute_dispatch_set(net, tau, opt, cache, frame, field);
            FrameResult r = sparse_forward(net, tau, opt, cache, frame, field, s0, t);
            m.compute.push_back(r.stats.compute_ratio);
            m.reuse.push_back(r.stats.reuse_ratio);
            if (against_dense) {
                const FeatureMap dense = dense_forward(net, frame).back();
                m.max_err.push_back(double(max_abs_diff(r.output, dense)));
                m.fidelity.push_back(fidelity(r.output, dense));
            }
        }
        prev = &frame;
    }
    return m;
}

std::vector<FeatureMap> scenario_frames(const std::string& name, int frames, int h, int w,
                                        uint64_t seed, int dy, int dx, int fg_dy = 0,
                                        int fg_dx = 0) {
    ScenarioSpec spec;
    spec.name = name;
    spec.frames = frames;
    spec.h = h;
    spec.w = w;
    spec.c = 3;
    spec.seed = seed;
    spec.dy = dy;
    spec.dx = dx;
    spec.fg_dy = fg_dy;
    spec.fg_dx = fg_dx;
    return generate_scenario(spec).frames;
}

// Frames with a spatially ramped low-amplitude perturbation on top of a slow
// pan. The reusable-difference magnitude then varies smoothly across the
// frame, so tightening or loosening thresholds moves the reuse boundary
// gradually instead of all at once — which is what a calibration sweep needs
// to resolve distinct accuracy targets.
std::vector<FeatureMap> ramped_noise_pan(int h, int w, int frames, uint64_t seed, double amp) {
    ScenarioSpec spec;
    spec.name = "pan";
    spec.frames = frames;
    spec.h = h;
    spec.w = w;
    spec.c = 3;
    spec.seed = seed;
    spec.dy = 0;
    spec.dx = 2;
    std::vector<FeatureMap> out = generate_scenario(spec).frames;
    for (size_t t = 0; t < out.size(); ++t) {
        const FeatureMap pert = noise_canvas(h, w, 3, seed * 977 + t);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                const double scale = amp * double(j) / double(w - 1);
                for (int ch = 0; ch < 3; ++ch)
                    out[t].at(i, j, ch) += float(scale * (pert.at(i, j, ch) - 0.5f));
            }
    }
    return out;
}

// ---------------------------------------------------------------------------
// 1. Zero-threshold outputs match dense execution, offloaded frames included
// ---------------------------------------------------------------------------

void check_exactness(Section& s) {
    const double t_start = now_s();
    const NetworkSpec net = make_network(default_network_text(128, 128, 3, 42));
    const ThresholdVector tau = ThresholdVector::zeros(net.num_layers());
    const PipelineOptions opt;  // reuse, alignment checks, remapping all on

    struct Case {
        const char* name;
        int dy, dx, fg_dy, fg_dx;
        uint64_t seed;
    };
    const Case cases[] = {
        {"pan", 0, 2, 0, 0, 11},
        {"two_region", 0, 2, 2, 0, 12},
        {"reveal", 0, 0, 0, 0, 13},
        {"scramble", 0, 0, 0, 0, 14},
    };
    const int kFrames = 50;
    const double kTol = 1e-4;

    TcpServer server(net, tau, opt);
    const int port = server.start("127.0.0.1", 0);

    double worst = 0.0;
    int frames_checked = 0, offloaded = 0;
    for (size_t k = 0; k < 4; ++k) {
        const Case& c = cases[k];
        const std::vector<FeatureMap> frames =
            scenario_frames(c.name, kFrames, 128, 128, c.seed, c.dy, c.dx, c.fg_dy, c.fg_dx);

        DriverConfig cfg;
        cfg.mode = RunMode::kFluxshard;
        cfg.options = opt;
        cfg.edge_only = false;
        cfg.measure_fidelity = false;
        FrameDriver driver(net, tau, cfg, LatencyModel::synthetic_edge(),
                           LatencyModel::synthetic_cloud(), generate_trace("medium", 30.0, 7));
        TcpClient client("127.0.0.1", port, 100 + k, session_hash(net, tau));
        driver.set_transport(&client);

        int cloud_frames = 0;
        double case_worst = 0.0;
        for (const FeatureMap& frame : frames) {
            const FrameRecord rec = driver.run_frame(frame);
            const FeatureMap dense = dense_forward(net, frame).back();
            const EndpointCache& executed =
                rec.endpoint == Endpoint::kCloud ? driver.cloud_cache() : driver.edge_cache();
            const double err = double(max_abs_diff(executed.layer_cache.back(), dense));
            case_worst = std::max(case_worst, err);
            ++frames_checked;
            if (rec.endpoint == Endpoint::kCloud) {
                ++cloud_frames;
                s.require(rec.mirror_divergence <= 1e-6,
                          fmt("%s frame %llu: replica drifted %.3g from the server output",
                              c.name, (unsigned long long)rec.frame, rec.mirror_divergence));
            }
            s.require(!rec.fallback, fmt("%s frame %llu: offload fell back to edge", c.name,
                                         (unsigned long long)rec.frame));
        }
        offloaded += cloud_frames;
        worst = std::max(worst, case_worst);
        s.require(case_worst <= kTol,
                  fmt("%s: max |output - dense| = %.3g exceeds %.0e", c.name, case_worst, kTol));
        s.require(cloud_frames >= 1, fmt("%s: no frame was offloaded", c.name));
    }

    // The edge execution path at zero thresholds, without any offloading.
    {
        const std::vector<FeatureMap> frames = scenario_frames("pan", 20, 128, 128, 15, 0, 2);
        const SeqMetrics m = drive_sequence(net, tau, opt, frames, 16, 8, true);
        const double edge_worst =
            m.max_err.empty() ? 0.0 : *std::max_element(m.max_err.begin(), m.max_err.end());
        worst = std::max(worst, edge_worst);
        frames_checked += int(frames.size());
        s.require(edge_worst <= kTol,
                  fmt("edge-only pan: max |output - dense| = %.3g exceeds %.0e", edge_worst, kTol));
    }

    server.stop();
    const double elapsed = now_s() - t_start;
    s.require(elapsed < 120.0, fmt("exactness sweep took %.1fs (budget 120s)", elapsed));
    s.detail = fmt("%d frames, %d offloaded, max err %.2e, %.1fs", frames_checked, offloaded,
                   worst, elapsed);
}

// ---------------------------------------------------------------------------
// 2. The alignment check is what prevents mixed-motion corruption
// ---------------------------------------------------------------------------

void check_alignment_necessity(Section& s) {
    const NetworkSpec net = make_network(default_network_text(64, 64, 3, 42));
    const std::vector<FeatureMap> frames =
        scenario_frames("two_region", 24, 64, 64, 41, 0, 2, 2, 0);

    CalibrationConfig ccfg;
    ccfg.alpha = 0.97;
    ccfg.sequences = {frames};
    const CalibrationOutcome cal = calibrate(net, ccfg);

    PipelineOptions with_check;  // defaults: alignment check on
    PipelineOptions without_check = with_check;
    without_check.rfap = false;

    const SeqMetrics on = drive_sequence(net, cal.thresholds, with_check, frames, 16, 8, true);
    const SeqMetrics off = drive_sequence(net, cal.thresholds, without_check, frames, 16, 8, true);

    const double e_on = *std::max_element(on.max_err.begin(), on.max_err.end());
    const double e_off = *std::max_element(off.max_err.begin(), off.max_err.end());
    const double fid_on = mean(on.fidelity);

    s.require(fid_on >= ccfg.alpha,
              fmt("checked run fidelity %.4f fell below the calibrated budget %.2f", fid_on,
                  ccfg.alpha));
    s.require(e_off >= 10.0 * e_on,
              fmt("disabling the check changed max error only %.3g -> %.3g (< 10x)", e_on, e_off));
    s.require(e_off > 1e-4, fmt("unchecked error %.3g too small to be meaningful", e_off));
    s.detail = fmt("max err %.2e with check vs %.2e without (%.0fx), fidelity %.4f", e_on, e_off,
                   e_on > 0 ? e_off / e_on : INFINITY, fid_on);
}

// ---------------------------------------------------------------------------
// 3. Compacted consistency flags cover per-layer flags, and cost less
// ---------------------------------------------------------------------------

std::string random_net_text(std::mt19937& rng) {
    auto pick = [&](int lo, int hi) { return lo + int(rng() % uint32_t(hi - lo + 1)); };
    const int dims[] = {16, 24, 32};
    const int h = dims[rng() % 3];
    const int c = pick(1, 3);
    std::ostringstream out;
    out << "seed=" << (rng() % 100000) << "\n";
    out << "input=" << h << "x" << h << "x" << c << "\n";
    int cum_stride = 1;
    bool has_spatial = false;
    const int n = pick(2, 5);
    for (int l = 0; l < n; ++l) {
        switch (rng() % 5) {
            case 0: {
                const int k = (rng() % 2) ? 3 : 5;
                const int st = (rng() % 2 && cum_stride < 4) ? 2 : 1;
                out << "conv k=" << k << " s=" << st << " out=" << pick(2, 4) << "\n";
                cum_stride *= st;
                has_spatial = true;
                break;
            }
            case 1:
                out << "relu" << ((rng() % 2) ? " profiled=true" : "") << "\n";
                break;
            case 2:
                if (cum_stride < 4) {
                    out << "pool k=2 s=2\n";  // non-overlapping pooling only
                    cum_stride *= 2;
                    has_spatial = true;
                } else {
                    out << "bn\n";
                }
                break;
            case 3:
                out << "pointwise out=" << pick(2, 4) << "\n";
                break;
            default:
                out << "bn\n";
                break;
        }
    }
    if (!has_spatial) out << "conv k=3 s=1 out=2\n";
    return out.str();
}

AccumMV random_field(std::mt19937& rng, int h, int w) {
    AccumMV acc(h, w);
    auto d_range = [&](int span) { return int(rng() % uint32_t(2 * span + 1)) - span; };
    const int style = int(rng() % 3);
    if (style == 0) {
        // Tile-structured: constant displacement per tile, some tiles invalid.
        const int tile = (rng() % 2) ? 4 : 8;
        for (int bi = 0; bi < (h + tile - 1) / tile; ++bi)
            for (int bj = 0; bj < (w + tile - 1) / tile; ++bj) {
                const bool invalid = rng() % 100 < 15;
                const int dy = d_range(4), dx = d_range(4);
                for (int i = bi * tile; i < std::min(h, (bi + 1) * tile); ++i)
                    for (int j = bj * tile; j < std::min(w, (bj + 1) * tile); ++j) {
                        const size_t k = acc.idx(i, j);
                        acc.dy[k] = dy;
                        acc.dx[k] = dx;
                        acc.valid[k] = invalid ? 0 : 1;
                    }
            }
    } else if (style == 1) {
        // Independent per-pixel displacements.
        for (size_t k = 0; k < acc.dy.size(); ++k) {
            acc.dy[k] = d_range(3);
            acc.dx[k] = d_range(3);
            acc.valid[k] = rng() % 100 < 10 ? 0 : 1;
        }
    } else {
        // Two uniform halves with a vertical seam.
        const int split = w / 2 + d_range(w / 4);
        const int dy_l = d_range(4), dx_l = d_range(4);
        const int dy_r = d_range(4), dx_r = d_range(4);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                const size_t k = acc.idx(i, j);
                acc.dy[k] = j < split ? dy_l : dy_r;
                acc.dx[k] = j < split ? dx_l : dx_r;
            }
    }
    // Restore the field invariant: a valid pixel's backward source is in
    // bounds.
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const size_t k = acc.idx(i, j);
            if (!acc.in_bounds(i - acc.dy[k], j - acc.dx[k])) acc.valid[k] = 0;
        }
    return acc;
}

void check_flag_dominance(Section& s) {
    // Part 1: brute-force containment. Wherever the per-layer check raises a
    // flag, the compacted input-resolution check must have flagged at least
    // one input position in the region that output covers.
    std::mt19937 rng(20240817);
    int nets_checked = 0, flags_checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const NetworkSpec net = make_network(random_net_text(rng));
        const NetGeometry geo = effective_geometry(net);
        const AccumMV acc = random_field(rng, net.in_h, net.in_w);
        const RecomputeMask compacted = rfap_input_check(acc, geo.r_max, geo.s_max);
        ++nets_checked;
        for (int l = 0; l < net.num_layers(); ++l) {
            if (net.layers[l].window_extent() <= 1) continue;
            const AccumMV fin = downsample_field(acc, geo.cum_stride_in[l]);
            const AccumMV fout = downsample_field(acc, geo.cum_stride_out[l]);
            const RecomputeMask flags = rfap_per_layer_check(fin, fout, net.layers[l]);
            const int so = geo.cum_stride_out[l];
            for (int oi = 0; oi < flags.h; ++oi)
                for (int oj = 0; oj < flags.w; ++oj) {
                    if (!flags.get(oi, oj)) continue;
                    ++flags_checked;
                    bool covered = false;
                    for (int i = oi * so; i < (oi + 1) * so && !covered; ++i)
                        for (int j = oj * so; j < (oj + 1) * so; ++j)
                            if (compacted.get(i, j)) {
                                covered = true;
                                break;
                            }
                    if (!covered)
                        s.require(false, fmt("trial %d layer %d: per-layer flag at (%d,%d) has no "
                                             "compacted counterpart",
                                             trial, l, oi, oj));
                }
        }
    }

    // Part 2: running the check once at input resolution must not cost more
    // than re-running it at every layer, across the benchmark scenario
    // families at calibrated thresholds.
    const NetworkSpec net = make_network(default_network_text(64, 64, 3, 42));
    struct Bench {
        const char* name;
        std::vector<FeatureMap> frames;
    };
    std::vector<Bench> benches;
    benches.push_back({"pan", scenario_frames("pan", 16, 64, 64, 51, 0, 4)});
    benches.push_back({"two_region", scenario_frames("two_region", 16, 64, 64, 52, 0, 4, 4, 0)});
    benches.push_back({"reveal", scenario_frames("reveal", 16, 64, 64, 53, 0, 0)});
    benches.push_back({"scramble", scenario_frames("scramble", 16, 64, 64, 54, 0, 0)});

    CalibrationConfig ccfg;
    ccfg.alpha = 0.97;
    for (const Bench& b : benches) ccfg.sequences.push_back(b.frames);
    const CalibrationOutcome cal = calibrate(net, ccfg);

    std::string costs;
    for (const Bench& b : benches) {
        CalibrationConfig one = ccfg;
        one.sequences = {b.frames};
        CalibrationConfig per_layer = one;
        per_layer.options.per_layer_rfap = true;
        const ReplayStats compact_stats = replay(net, cal.thresholds, one);
        const ReplayStats layered_stats = replay(net, cal.thresholds, per_layer);
        s.require(compact_stats.compute_ratio <= layered_stats.compute_ratio + 1e-9,
                  fmt("%s: compacted compute %.4f > per-layer %.4f", b.name,
                      compact_stats.compute_ratio, layered_stats.compute_ratio));
        costs += fmt(" %s %.3f/%.3f", b.name, compact_stats.compute_ratio,
                     layered_stats.compute_ratio);
    }
    s.detail = fmt("%d nets, %d flags contained; compute compact/per-layer:%s", nets_checked,
                   flags_checked, costs.c_str());
}

// ---------------------------------------------------------------------------
// 4. Cache remapping is what keeps moving content reusable
// ---------------------------------------------------------------------------

void check_remap_necessity(Section& s) {
    const NetworkSpec net = make_network(default_network_text(64, 64, 3, 42));
    const std::vector<FeatureMap> frames = scenario_frames("pan", 61, 64, 64, 21, 0, 2);

    CalibrationConfig ccfg;
    ccfg.alpha = 0.97;
    ccfg.sequences = {
        std::vector<FeatureMap>(frames.begin(), frames.begin() + 25)};  // calibration prefix
    const CalibrationOutcome cal = calibrate(net, ccfg);

    PipelineOptions aligned;  // remapping on
    PipelineOptions in_place = aligned;
    in_place.remap = false;

    const SeqMetrics def = drive_sequence(net, cal.thresholds, aligned, frames, 16, 8, false);
    const SeqMetrics nores = drive_sequence(net, cal.thresholds, in_place, frames, 16, 8, false);

    const double last_def = def.compute.back();
    const double last_nores = nores.compute.back();
    s.require(last_nores > 2.0 * last_def,
              fmt("frame %zu compute: in-place %.3f not > 2x aligned %.3f", def.compute.size(),
                  last_nores, last_def));
    for (size_t t = 1; t < nores.compute.size(); ++t)
        s.require(nores.compute[t] + 1e-9 >= nores.compute[t - 1],
                  fmt("in-place compute dipped at warm frame %zu: %.4f -> %.4f", t,
                      nores.compute[t - 1], nores.compute[t]));
    s.detail = fmt("frame-60 compute %.3f aligned vs %.3f in-place (%.1fx)", last_def, last_nores,
                   last_def > 0 ? last_nores / last_def : INFINITY);
}

// ---------------------------------------------------------------------------
// 5. Reuse survives motion only with motion-aware dispatch
// ---------------------------------------------------------------------------

void check_motion_robustness(Section& s) {
    const NetworkSpec net = make_network(default_network_text(128, 128, 3, 42));
    ThresholdVector tau = ThresholdVector::zeros(net.num_layers());
    tau.tau0 = 0.02f;
    const int shifts[] = {0, 8, 24};
    const RunMode modes[] = {RunMode::kFluxshard, RunMode::kGlobalShift, RunMode::kFixedCoord};

    double reuse[3][3] = {};
    for (int si = 0; si < 3; ++si) {
        const std::vector<FeatureMap> frames =
            scenario_frames("pan", 8, 128, 128, 31 + shifts[si], 0, shifts[si]);
        for (int mi = 0; mi < 3; ++mi) {
            DriverConfig cfg;
            cfg.mode = modes[mi];
            cfg.edge_only = true;
            cfg.measure_fidelity = false;
            cfg.search_radius = 26;  // wider than the largest tested shift
            FrameDriver driver(net, tau, cfg, LatencyModel::synthetic_edge(),
                               LatencyModel::synthetic_cloud(), generate_trace("medium", 10.0, 3));
            std::vector<double> per_frame;
            for (size_t t = 0; t < frames.size(); ++t) {
                const FrameRecord rec = driver.run_frame(frames[t]);
                if (t > 0) per_frame.push_back(rec.reuse);
            }
            reuse[mi][si] = mean(per_frame);
        }
    }

    for (int si = 0; si < 3; ++si) {
        s.require(reuse[0][si] + 1e-9 >= reuse[1][si],
                  fmt("shift %d: motion-aware reuse %.3f < single-shift reuse %.3f", shifts[si],
                      reuse[0][si], reuse[1][si]));
        s.require(reuse[1][si] + 1e-9 >= reuse[2][si],
                  fmt("shift %d: single-shift reuse %.3f < fixed-position reuse %.3f", shifts[si],
                      reuse[1][si], reuse[2][si]));
    }
    s.require(reuse[2][2] < 0.35,
              fmt("fixed-position reuse at 24 px/frame is %.3f, expected < 0.35", reuse[2][2]));
    s.require(reuse[0][2] >= 0.55,
              fmt("motion-aware reuse at 24 px/frame is %.3f, expected >= 0.55", reuse[0][2]));
    s.detail = fmt("reuse at 0/8/24 px: aware %.2f/%.2f/%.2f, single %.2f/%.2f/%.2f, fixed "
                   "%.2f/%.2f/%.2f",
                   reuse[0][0], reuse[0][1], reuse[0][2], reuse[1][0], reuse[1][1], reuse[1][2],
                   reuse[2][0], reuse[2][1], reuse[2][2]);
}

// ---------------------------------------------------------------------------
// 6. Transport metadata overhead is exact and resolution-invariant
// ---------------------------------------------------------------------------

void check_metadata_arithmetic(Section& s) {
    // One int16 pair per 16x16 block over 3-channel uint8 pixels is 1/192 of
    // the frame; one bit per 2x2 cell is 1/96. Both scale with the pixel
    // count, so their sum is the same at every resolution.
    const double expected = 1.0 / 192.0 + 1.0 / 96.0;  // = 0.015625 exactly
    for (int dim : {128, 512, 1024}) {
        s.require(metadata_fraction(dim, dim) == expected,
                  fmt("%dx%d metadata fraction %.9f != %.9f", dim, dim,
                      metadata_fraction(dim, dim), expected));
        s.require(mv_section_bytes(dim, dim) == size_t(dim / 16) * size_t(dim / 16) * 4,
                  fmt("%d: motion section bytes mismatch", dim));
        s.require(mask_section_bytes(dim, dim) == size_t(dim / 2) * size_t(dim / 2) / 8,
                  fmt("%d: mask section bytes mismatch", dim));
    }

    // The closed-form encoded size must equal what the encoder emits.
    std::mt19937 rng(77);
    for (int trial = 0; trial < 3; ++trial) {
        const int h = 64, w = 128;
        const FeatureMap frame = noise_canvas(h, w, 3, 300 + trial);
        RecomputeMask mask(h, w);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                if (rng() % 4 == 0) mask.set(i, j);
        const MVField mv(h / 16, w / 16, 16);
        const OffloadPayload p = build_payload(trial, frame, mv, mask);
        const size_t expect_bytes = encoded_offload_size(h, w, p.pixels.size() / 3);
        s.require(encode_offload(p).size() == expect_bytes,
                  fmt("trial %d: encoded size %zu != computed %zu", trial,
                      encode_offload(p).size(), expect_bytes));
    }
    s.detail = fmt("fraction %.6f at 128/512/1024, encoded sizes match closed form", expected);
}

// ---------------------------------------------------------------------------
// 7. Threshold calibration meets its accuracy budget greedily
// ---------------------------------------------------------------------------

void check_calibration_contract(Section& s) {
    const NetworkSpec net = make_network(default_network_text(48, 48, 3, 42));
    CalibrationConfig cfg;
    cfg.sequences = {ramped_noise_pan(48, 48, 13, 71, 0.012)};
    cfg.candidates = {0.0f,    1e-4f,   2e-4f,   4e-4f,  8e-4f,  1.6e-3f, 3.2e-3f,
                      6.4e-3f, 1e-2f,   1.6e-2f, 2.4e-2f, 3.6e-2f, 5e-2f,  7.5e-2f};

    double computes[3] = {};
    const double alphas[3] = {0.95, 0.97, 0.99};
    CalibrationOutcome mid;
    for (int a = 0; a < 3; ++a) {
        CalibrationConfig c = cfg;
        c.alpha = alphas[a];
        const CalibrationOutcome out = calibrate(net, c);
        computes[a] = out.compute_ratio;
        if (a == 1) mid = out;
        s.require(out.fidelity >= alphas[a],
                  fmt("alpha %.2f: replayed fidelity %.4f below target", alphas[a], out.fidelity));
    }
    {
        CalibrationConfig c = cfg;
        c.alpha = 0.97;
        const ReplayStats again = replay(net, mid.thresholds, c);
        s.require(again.fidelity >= 0.97,
                  fmt("independent replay fidelity %.4f below 0.97", again.fidelity));
    }
    s.require(computes[2] > computes[1] && computes[1] > computes[0],
              fmt("compute vs accuracy target not strictly ordered: %.4f (0.95) %.4f (0.97) %.4f "
                  "(0.99)",
                  computes[0], computes[1], computes[2]));

    // Greedy maximality, verified exhaustively on a two-stage instance: each
    // stage must select the largest candidate whose fidelity drop fits the
    // running budget, earlier stages fixed, later stages at zero.
    const NetworkSpec small = make_network(
        "seed=7\ninput=32x32x3\nconv k=3 s=1 out=6\nrelu profiled=true\nconv k=3 s=2 "
        "out=8\nrelu\n");
    CalibrationConfig scfg;
    scfg.alpha = 0.97;
    scfg.sequences = {ramped_noise_pan(32, 32, 11, 73, 0.012)};
    const CalibrationOutcome got = calibrate(small, scfg);
    s.require(got.stage_layers == std::vector<int>({-1, 1}),
              "two-stage instance produced unexpected stages");

    const double b1 = scfg.split_ratio * (1.0 - scfg.alpha);
    const double b2 = (1.0 - scfg.alpha);
    float want0 = -1.0f, want1 = -1.0f;
    for (float c : scfg.candidates) {
        ThresholdVector t = ThresholdVector::zeros(small.num_layers());
        t.tau0 = c;
        if (1.0 - replay(small, t, scfg).fidelity <= b1) want0 = c;
    }
    for (float c : scfg.candidates) {
        ThresholdVector t = ThresholdVector::zeros(small.num_layers());
        t.tau0 = want0;
        t.layer[1] = c;
        if (1.0 - replay(small, t, scfg).fidelity <= b2) want1 = c;
    }
    s.require(got.thresholds.tau0 == want0,
              fmt("dispatch threshold %.4g is not the largest feasible %.4g",
                  got.thresholds.tau0, want0));
    s.require(got.thresholds.layer[1] == want1,
              fmt("layer threshold %.4g is not the largest feasible %.4g", got.thresholds.layer[1],
                  want1));
    s.detail = fmt("compute %.3f/%.3f/%.3f for targets .95/.97/.99; two-stage picks (%g, %g)",
                   computes[0], computes[1], computes[2], double(want0), double(want1));
}

// ---------------------------------------------------------------------------
// 8. Endpoint routing follows the latency rule and reacts to bandwidth
// ---------------------------------------------------------------------------

void check_dispatch_rule(Section& s) {
    std::mt19937 rng(4242);
    std::uniform_real_distribution<double> lat(0.0, 500.0), margin(0.0, 20.0);
    int mismatches = 0;
    for (int i = 0; i < 10000; ++i) {
        const double te = lat(rng), tc = lat(rng), eps = margin(rng);
        const bool want_edge = te < tc - eps;
        if ((decide(te, tc, eps) == Endpoint::kEdge) != want_edge) ++mismatches;
    }
    s.require(mismatches == 0, fmt("%d of 10000 routing decisions disagree with the rule",
                                   mismatches));
    s.require(decide(100.0, 100.0, 0.0) == Endpoint::kCloud, "exact tie must go to the cloud");
    s.require(decide(100.0, 105.0, 5.0) == Endpoint::kCloud,
              "edge faster by exactly the margin must go to the cloud");
    s.require(decide(99.0, 105.0, 5.0) == Endpoint::kEdge,
              "edge faster than margin must stay on edge");

    // Congested uplink with nothing reusable: the full-frame payloads must
    // push at least one frame onto the edge device.
    const NetworkSpec net = make_network(default_network_text(128, 128, 3, 42));
    ThresholdVector tau = ThresholdVector::zeros(net.num_layers());
    tau.tau0 = 0.01f;
    int edge_frames = 0;
    {
        const std::vector<FeatureMap> frames =
            scenario_frames("scramble", 60, 128, 128, 81, 0, 0);
        DriverConfig cfg;
        cfg.measure_fidelity = false;
        FrameDriver driver(net, tau, cfg, LatencyModel::synthetic_edge(),
                           LatencyModel::synthetic_cloud(), generate_trace("low", 60.0, 1));
        for (const FeatureMap& f : frames) {
            const FrameRecord rec = driver.run_frame(f);
            if (rec.endpoint == Endpoint::kEdge && !rec.fallback) ++edge_frames;
        }
        s.require(edge_frames >= 1, "congested uplink never routed a frame to the edge");
    }

    // Fast uplink with small payloads: nearly everything belongs in the cloud.
    int cloud_frames = 0, total = 0;
    {
        const NetworkSpec net64 = make_network(default_network_text(64, 64, 3, 42));
        ThresholdVector tau64 = ThresholdVector::zeros(net64.num_layers());
        tau64.tau0 = 0.01f;
        const std::vector<FeatureMap> frames = scenario_frames("pan", 40, 64, 64, 82, 0, 2);
        DriverConfig cfg;
        cfg.measure_fidelity = false;
        FrameDriver driver(net64, tau64, cfg, LatencyModel::synthetic_edge(),
                           LatencyModel::synthetic_cloud(), generate_trace("high", 30.0, 9));
        for (const FeatureMap& f : frames) {
            const FrameRecord rec = driver.run_frame(f);
            ++total;
            if (rec.endpoint == Endpoint::kCloud) ++cloud_frames;
        }
        s.require(cloud_frames >= int(std::ceil(0.95 * total)),
                  fmt("fast uplink sent only %d of %d frames to the cloud", cloud_frames, total));
    }
    s.detail = fmt("10000 rule checks clean; %d edge frames on congested link, %d/%d cloud on "
                   "fast link",
                   edge_frames, cloud_frames, total);
}

// ---------------------------------------------------------------------------
// 9. Wire format round-trips exactly and rejects every single-byte corruption
// ---------------------------------------------------------------------------

OffloadPayload random_payload(std::mt19937& rng, int h, int w, uint64_t frame_id,
                              double density) {
    const FeatureMap frame = noise_canvas(h, w, 3, rng());
    MVField mv(h / 16, w / 16, 16);
    for (size_t k = 0; k < mv.dy.size(); ++k) {
        if (rng() % 10 == 0) {
            mv.dy[k] = kInvalidMv;
            mv.dx[k] = kInvalidMv;
        } else {
            mv.dy[k] = int16_t(int(rng() % 81) - 40);
            mv.dx[k] = int16_t(int(rng() % 81) - 40);
        }
    }
    RecomputeMask mask(h, w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            if (double(rng() % 1000) < density * 1000.0) mask.set(i, j);
    return build_payload(frame_id, frame, mv, mask);
}

void check_wire_conformance(Section& s) {
    std::mt19937 rng(990011);
    const int hs[] = {32, 48, 64, 96, 128};
    int round_trips = 0;
    for (int i = 0; i < 1000; ++i) {
        const int h = hs[rng() % 5], w = hs[rng() % 5];
        const double density[] = {0.0, 0.03, 0.25, 1.0};
        const OffloadPayload p = random_payload(rng, h, w, rng(), density[rng() % 4]);
        const std::vector<uint8_t> bytes = encode_offload(p);
        const OffloadPayload q = decode_offload(bytes);
        const bool fields_equal = q.frame_id == p.frame_id && q.h == p.h && q.w == p.w &&
                                  q.block_size == p.block_size && q.mv.dy == p.mv.dy &&
                                  q.mv.dx == p.mv.dx && q.mask_bytes == p.mask_bytes &&
                                  q.pixels.size() == p.pixels.size() &&
                                  std::memcmp(q.pixels.data(), p.pixels.data(),
                                              p.pixels.size() * sizeof(float)) == 0;
        const bool bytes_equal = encode_offload(q) == bytes;
        if (fields_equal && bytes_equal) ++round_trips;
        if (!fields_equal)
            s.require(false, fmt("payload %d (%dx%d) decoded fields differ", i, h, w));
        if (!bytes_equal)
            s.require(false, fmt("payload %d (%dx%d) re-encoded bytes differ", i, h, w));
    }

    // Corrupting any single byte of a message must be rejected.
    size_t corruptions = 0, undetected = 0;
    for (int i = 0; i < 8; ++i) {
        const double density[] = {0.0, 0.05, 0.3, 1.0};
        const OffloadPayload p = random_payload(rng, 32, 32, 5000 + i, density[i % 4]);
        std::vector<uint8_t> bytes = encode_offload(p);
        decode_offload(bytes);  // must be valid before corruption
        for (size_t b = 0; b < bytes.size(); ++b) {
            std::vector<uint8_t> bad = bytes;
            bad[b] ^= 0xA5;
            ++corruptions;
            try {
                decode_offload(bad);
                ++undetected;
                if (undetected <= 5)
                    s.require(false, fmt("payload %d: corrupt byte %zu of %zu went undetected", i,
                                         b, bytes.size()));
            } catch (const std::exception&) {
                // rejected, as required
            }
        }
    }
    s.require(undetected == 0, fmt("%zu corrupted messages decoded successfully", undetected));

    // Replica audit: a long offloaded run must keep the client-side replica
    // byte-close to what the server computed.
    const NetworkSpec net = make_network(default_network_text(64, 64, 3, 42));
    ThresholdVector tau = ThresholdVector::zeros(net.num_layers());
    tau.tau0 = 0.01f;
    const std::vector<FeatureMap> frames = scenario_frames("pan", 101, 64, 64, 83, 0, 2);
    DriverConfig cfg;
    cfg.measure_fidelity = false;
    FrameDriver driver(net, tau, cfg, LatencyModel::synthetic_edge(),
                       LatencyModel::synthetic_cloud(), generate_trace("high", 30.0, 10));
    int cloud = 0;
    for (const FeatureMap& f : frames)
        if (driver.run_frame(f).endpoint == Endpoint::kCloud) ++cloud;
    s.require(cloud >= 95, fmt("only %d of 101 frames were offloaded", cloud));
    s.require(driver.max_mirror_divergence() <= 1e-6,
              fmt("replica diverged from server output by %.3g", driver.max_mirror_divergence()));
    s.detail = fmt("%d round-trips exact, %zu corruptions all rejected, replica drift %.1e over "
                   "%d offloads",
                   round_trips, corruptions, driver.max_mirror_divergence(), cloud);
}

// ---------------------------------------------------------------------------
// 10. Identical configurations reproduce identical benchmark output
// ---------------------------------------------------------------------------

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void check_determinism(Section& s) {
    ScenarioSpec spec;
    spec.name = "two_region";
    spec.frames = 31;
    spec.h = spec.w = 64;
    spec.seed = 91;
    spec.dy = 0;
    spec.dx = 2;
    spec.fg_dy = 2;
    spec.fg_dx = 0;
    const GeneratedSequence seq_a = generate_scenario(spec);
    const GeneratedSequence seq_b = generate_scenario(spec);
    bool frames_identical = seq_a.frames.size() == seq_b.frames.size();
    for (size_t t = 0; frames_identical && t < seq_a.frames.size(); ++t)
        frames_identical = std::memcmp(seq_a.frames[t].data.data(), seq_b.frames[t].data.data(),
                                       seq_a.frames[t].data.size() * sizeof(float)) == 0;
    s.require(frames_identical, "regenerating a scenario changed its frames");

    const LinkTrace trace_a = generate_trace("medium", 20.0, 12);
    const LinkTrace trace_b = generate_trace("medium", 20.0, 12);
    s.require(trace_a.t_ms == trace_b.t_ms && trace_a.bps == trace_b.bps,
              "regenerating a bandwidth trace changed it");

    const NetworkSpec net = make_network(default_network_text(64, 64, 3, 42));
    ThresholdVector tau = ThresholdVector::zeros(net.num_layers());
    tau.tau0 = 0.01f;
    auto run_once = [&]() {
        DriverConfig cfg;
        cfg.measure_fidelity = true;
        FrameDriver driver(net, tau, cfg, LatencyModel::synthetic_edge(),
                           LatencyModel::synthetic_cloud(), generate_trace("medium", 20.0, 12));
        std::vector<FrameRecord> recs;
        for (const FeatureMap& f : seq_a.frames) recs.push_back(driver.run_frame(f));
        return recs;
    };
    const std::vector<FrameRecord> run_a = run_once();
    const std::vector<FrameRecord> run_b = run_once();
    const std::string path_a = "acceptance_metrics_a.tmp.csv";
    const std::string path_b = "acceptance_metrics_b.tmp.csv";
    write_metrics_csv(run_a, path_a);
    write_metrics_csv(run_b, path_b);
    const std::string csv_a = slurp(path_a), csv_b = slurp(path_b);
    std::remove(path_a.c_str());
    std::remove(path_b.c_str());
    s.require(!csv_a.empty(), "first benchmark CSV is empty");
    s.require(csv_a == csv_b, "two identically configured runs produced different CSVs");
    s.detail = fmt("%zu-frame runs byte-identical (%zu-byte CSVs)", run_a.size(), csv_a.size());
}

}  // namespace

int main() {
    struct Entry {
        const char* label;
        void (*fn)(Section&);
    };
    const Entry entries[] = {
        {"zero-threshold outputs match dense execution", check_exactness},
        {"alignment check prevents mixed-motion corruption", check_alignment_necessity},
        {"compacted consistency flags cover per-layer flags", check_flag_dominance},
        {"cache remapping keeps moving content reusable", check_remap_necessity},
        {"reuse survives motion only with motion-aware dispatch", check_motion_robustness},
        {"transport metadata overhead is exact and flat across sizes", check_metadata_arithmetic},
        {"threshold calibration meets its accuracy budget greedily", check_calibration_contract},
        {"endpoint routing follows the latency rule", check_dispatch_rule},
        {"wire format round-trips and rejects corruption", check_wire_conformance},
        {"identical configurations reproduce identical output", check_determinism},
    };

    int failed = 0;
    for (size_t i = 0; i < sizeof(entries) / sizeof(entries[0]); ++i) {
        Section s;
        const double t0 = now_s();
        try {
            entries[i].fn(s);
        } catch (const std::exception& e) {
            s.require(false, fmt("unhandled exception: %s", e.what()));
        }
        const double dt = now_s() - t0;
        if (s.failures.empty()) {
            std::printf("%2zu. %-58s ok    %s [%.1fs]\n", i + 1, entries[i].label,
                        s.detail.c_str(), dt);
        } else {
            ++failed;
            std::printf("%2zu. %-58s FAIL  [%.1fs]\n", i + 1, entries[i].label, dt);
            for (const std::string& f : s.failures) std::printf("      - %s\n", f.c_str());
        }
        std::fflush(stdout);
    }
    if (failed == 0)
        std::printf("all %zu acceptance checks passed\n", sizeof(entries) / sizeof(entries[0]));
    else
        std::printf("%d acceptance check(s) FAILED\n", failed);
    return failed == 0 ? 0 : 1;
}
