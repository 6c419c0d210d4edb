#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "fluxshard/calibration.hpp"
#include "fluxshard/common.hpp"
#include "fluxshard/datagen.hpp"
#include "fluxshard/dispatch.hpp"
#include "fluxshard/link_sim.hpp"
#include "fluxshard/refnet.hpp"
#include "fluxshard/report.hpp"
#include "fluxshard/server.hpp"

namespace fs = fluxshard;

namespace {

fs::NetworkSpec make_net(const std::string& net_path, int h, int w, int c, uint64_t seed) {
    if (!net_path.empty()) return fs::load_network(net_path);
    return fs::make_network(fs::default_network_text(h, w, c, seed));
}

fs::LinkTrace make_trace(const std::string& spec, double seconds, uint64_t seed) {
    if (spec == "low" || spec == "medium" || spec == "high")
        return fs::generate_trace(spec, seconds, seed);
    return fs::load_trace(spec);
}

fs::ThresholdVector make_thresholds(const std::string& path, int num_layers) {
    if (path.empty()) return fs::ThresholdVector::zeros(num_layers);
    return fs::load_thresholds(path, num_layers);
}

struct AblationFlags {
    bool no_rfap = false;
    bool per_layer_rfap = false;
    bool no_remap = false;
    bool no_sparse = false;

    fs::PipelineOptions to_options() const {
        fs::PipelineOptions opt;
        opt.rfap = !no_rfap;
        opt.per_layer_rfap = per_layer_rfap;
        opt.remap = !no_remap;
        opt.sparse = !no_sparse;
        return opt;
    }
};

void add_ablation_flags(CLI::App* cmd, AblationFlags& a) {
    cmd->add_flag("--no-rfap", a.no_rfap, "disable the receptive-field consistency check");
    cmd->add_flag("--per-layer-rfap", a.per_layer_rfap,
                  "run the consistency check per layer instead of once at input level");
    cmd->add_flag("--no-remap", a.no_remap, "skip motion-aligned cache remapping");
    cmd->add_flag("--no-sparse", a.no_sparse, "recompute every position on the chosen endpoint");
}

int cmd_datagen(const std::string& scenario, int frames, int h, int w, uint64_t seed, int dy,
                int dx, int fg_dy, int fg_dx, int jitter, int grow, const std::string& out) {
    fs::ScenarioSpec spec;
    spec.name = scenario;
    spec.frames = frames;
    spec.h = h;
    spec.w = w;
    spec.seed = seed;
    spec.dy = dy;
    spec.dx = dx;
    spec.fg_dy = fg_dy;
    spec.fg_dx = fg_dx;
    spec.jitter = jitter;
    spec.grow = grow;
    fs::write_scenario(spec, out);
    const fs::GeneratedSequence seq = fs::load_scenario(out);
    std::printf("wrote %d frames (%dx%dx%d, scenario %s, motion std %.2f px) to %s\n",
                spec.frames, spec.h, spec.w, spec.c, spec.name.c_str(),
                fs::motion_std(seq.true_motion), out.c_str());
    return 0;
}

int cmd_run(const std::string& seq_dir, const std::string& net_path,
            const std::string& thresholds_path, const std::string& mode_name,
            const AblationFlags& ablate, bool edge_only, const std::string& trace_spec,
            double trace_seconds, uint64_t seed, int search_radius, double epsilon,
            double ewma_weight, double propagation_ms, const std::string& server_addr,
            uint64_t client_id, int frames_limit, bool no_fidelity, const std::string& out_csv,
            const std::string& edge_profile, const std::string& cloud_profile) {
    const fs::GeneratedSequence seq = fs::load_scenario(seq_dir);
    if (seq.frames.empty()) throw fs::ConfigError("sequence has no frames");
    const fs::FeatureMap& f0 = seq.frames.front();

    fs::NetworkSpec net = make_net(net_path, f0.h, f0.w, f0.c, 42);
    fs::ThresholdVector tau = make_thresholds(thresholds_path, net.num_layers());

    fs::DriverConfig cfg;
    cfg.mode = fs::parse_mode(mode_name);
    cfg.options = ablate.to_options();
    cfg.edge_only = edge_only;
    cfg.measure_fidelity = !no_fidelity;
    cfg.epsilon_ms = epsilon;
    cfg.ewma_weight = ewma_weight;
    cfg.propagation_ms = propagation_ms;
    cfg.search_radius = search_radius;

    fs::LatencyModel edge_model = edge_profile.empty() ? fs::LatencyModel::synthetic_edge()
                                                       : fs::LatencyModel::from_csv(edge_profile);
    fs::LatencyModel cloud_model = cloud_profile.empty()
                                       ? fs::LatencyModel::synthetic_cloud()
                                       : fs::LatencyModel::from_csv(cloud_profile);
    fs::LinkTrace trace = make_trace(trace_spec, trace_seconds, seed);

    fs::FrameDriver driver(net, tau, cfg, edge_model, cloud_model, trace);

    std::unique_ptr<fs::TcpClient> client;
    if (!server_addr.empty()) {
        const size_t colon = server_addr.rfind(':');
        if (colon == std::string::npos)
            throw fs::ConfigError("--server expects host:port, got " + server_addr);
        const std::string host = server_addr.substr(0, colon);
        const int port = std::stoi(server_addr.substr(colon + 1));
        client = std::make_unique<fs::TcpClient>(host, port, client_id,
                                                 fs::session_hash(net, tau));
        driver.set_transport(client.get());
    }

    const int n = frames_limit > 0 ? std::min<int>(frames_limit, int(seq.frames.size()))
                                   : int(seq.frames.size());
    std::vector<fs::FrameRecord> records;
    records.reserve(size_t(n));
    for (int t = 0; t < n; ++t) records.push_back(driver.run_frame(seq.frames[size_t(t)]));

    if (!out_csv.empty()) fs::write_metrics_csv(records, out_csv);
    const fs::RunSummary summary = fs::summarize(records);
    std::fputs(fs::format_summary_table({{seq.spec.name + "/" + mode_name, summary}}).c_str(),
               stdout);
    if (driver.max_mirror_divergence() > 0.0)
        std::printf("max mirror divergence: %.3g\n", driver.max_mirror_divergence());
    return 0;
}

int cmd_calibrate(const std::vector<std::string>& seq_dirs, const std::string& net_path,
                  double alpha, double split_ratio, int search_radius, uint64_t net_seed,
                  const std::string& out_path) {
    if (seq_dirs.empty()) throw fs::ConfigError("calibrate needs at least one --seq directory");
    fs::CalibrationConfig cfg;
    cfg.alpha = alpha;
    cfg.split_ratio = split_ratio;
    cfg.search_radius = search_radius;
    std::vector<std::string> names;
    for (const std::string& dir : seq_dirs) {
        fs::GeneratedSequence seq = fs::load_scenario(dir);
        names.push_back(seq.spec.name);
        cfg.sequences.push_back(std::move(seq.frames));
    }
    const fs::FeatureMap& f0 = cfg.sequences.front().front();
    const fs::NetworkSpec net = make_net(net_path, f0.h, f0.w, f0.c, net_seed);

    const fs::CalibrationOutcome outcome = fs::calibrate(net, cfg);

    std::vector<std::string> provenance;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "alpha=%.6g split_ratio=%.6g search_radius=%d", alpha,
                  split_ratio, search_radius);
    provenance.emplace_back(buf);
    std::string seqs = "sequences:";
    for (const std::string& s : names) seqs += " " + s;
    provenance.push_back(seqs);
    std::snprintf(buf, sizeof(buf), "replayed fidelity=%.6f compute_ratio=%.6f evaluations=%d",
                  outcome.fidelity, outcome.compute_ratio, outcome.evaluations);
    provenance.emplace_back(buf);
    fs::save_thresholds(outcome.thresholds, out_path, provenance);

    std::printf("tau0=%g", double(outcome.thresholds.tau0));
    for (int l : outcome.stage_layers)
        if (l >= 0) std::printf(" tau[%d]=%g", l, double(outcome.thresholds.layer[size_t(l)]));
    std::printf("\nfidelity=%.6f compute_ratio=%.6f (%d evaluations) -> %s\n", outcome.fidelity,
                outcome.compute_ratio, outcome.evaluations, out_path.c_str());
    return 0;
}

int cmd_profile(const std::string& net_path, const std::string& endpoint, int steps, int repeats,
                bool wallclock, bool monotone, uint64_t seed, const std::string& out_path) {
    fs::LatencyModel base = endpoint == "cloud" ? fs::LatencyModel::synthetic_cloud()
                                                : fs::LatencyModel::synthetic_edge();
    fs::LatencyModel model;
    if (!wallclock) {
        for (int k = 0; k < steps; ++k) {
            const double rho = double(k) / (steps - 1);
            model.rho.push_back(rho);
            model.ms.push_back(base.at(rho));
        }
    } else {
        fs::NetworkSpec net = make_net(net_path, 128, 128, 3, 42);
        fs::ThresholdVector tau = fs::ThresholdVector::zeros(net.num_layers());
        fs::PipelineOptions opt;
        fs::ScenarioSpec sspec;
        sspec.name = "pan";
        sspec.frames = 2;
        sspec.h = net.in_h;
        sspec.w = net.in_w;
        sspec.seed = seed;
        sspec.dy = 1;
        sspec.dx = 1;
        const fs::GeneratedSequence seq = fs::generate_scenario(sspec);
        for (int k = 0; k < steps; ++k) {
            const double rho = double(k) / (steps - 1);
            // Recompute-set density forced to rho with a seeded position draw.
            fs::Rng rng(seed + uint64_t(k));
            fs::RecomputeMask s0(net.in_h, net.in_w);
            const int want = int(rho * net.in_h * net.in_w + 0.5);
            int placed = 0;
            while (placed < want) {
                const int i = int(rng.next_int(0, net.in_h - 1));
                const int j = int(rng.next_int(0, net.in_w - 1));
                if (!s0.get(i, j)) {
                    s0.set(i, j);
                    ++placed;
                }
            }
            double best = 1e300;
            for (int rep = 0; rep < repeats; ++rep) {
                fs::EndpointCache cache = fs::EndpointCache::make(net);
                fs::RecomputeMask full(net.in_h, net.in_w, true);
                fs::sparse_forward(net, tau, opt, cache, seq.frames[0], cache.accum, full, 0);
                fs::MVField mv(net.in_h / 16, net.in_w / 16, 16);
                cache.accum = fs::accumulate(cache.accum, mv);
                const auto t0 = std::chrono::steady_clock::now();
                fs::sparse_forward(net, tau, opt, cache, seq.frames[1], cache.accum, s0, 1);
                const auto t1 = std::chrono::steady_clock::now();
                best = std::min(best,
                                std::chrono::duration<double, std::milli>(t1 - t0).count());
            }
            model.rho.push_back(rho);
            model.ms.push_back(best);
        }
    }
    if (monotone) model.isotonic();
    model.save_csv(out_path);
    std::printf("wrote %zu profile points to %s\n", model.rho.size(), out_path.c_str());
    return 0;
}

int cmd_serve(const std::string& net_path, const std::string& thresholds_path,
              const AblationFlags& ablate, const std::string& host, int port, int h, int w,
              uint64_t net_seed) {
    fs::NetworkSpec net = make_net(net_path, h, w, 3, net_seed);
    fs::ThresholdVector tau = make_thresholds(thresholds_path, net.num_layers());
    fs::TcpServer server(net, tau, ablate.to_options());
    const int bound = server.start(host, port);
    std::printf("serving on %s:%d (config hash %016llx)\n", host.c_str(), bound,
                (unsigned long long)server.core().hash());
    std::fflush(stdout);
    for (;;) std::this_thread::sleep_for(std::chrono::seconds(3600));
    return 0;
}

int cmd_report(const std::vector<std::string>& csvs, const std::string& out_path) {
    if (csvs.empty()) throw fs::ConfigError("report needs at least one metrics CSV");
    std::vector<std::pair<std::string, fs::RunSummary>> rows;
    for (const std::string& path : csvs) {
        const std::vector<fs::FrameRecord> records = fs::load_metrics_csv(path);
        rows.emplace_back(std::filesystem::path(path).stem().string(), fs::summarize(records));
    }
    const std::string table = fs::format_summary_table(rows);
    std::fputs(table.c_str(), stdout);
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw fs::ConfigError("cannot write report: " + out_path);
        out << table;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"motion-aware feature-cache reuse for edge-cloud video inference"};
    app.require_subcommand(1);

    // datagen
    std::string dg_scenario = "pan", dg_out = "sequence";
    int dg_frames = 50, dg_h = 128, dg_w = 128;
    int dg_dy = 0, dg_dx = 2, dg_fg_dy = 0, dg_fg_dx = 0, dg_jitter = 24, dg_grow = 2;
    uint64_t dg_seed = 1;
    auto* dg = app.add_subcommand("datagen", "generate a synthetic frame sequence");
    dg->add_option("--scenario", dg_scenario,
                   "static | pan | two_region | reveal | scramble");
    dg->add_option("--frames", dg_frames, "frame count")->check(CLI::PositiveNumber);
    dg->add_option("--height", dg_h, "frame height")->check(CLI::PositiveNumber);
    dg->add_option("--width", dg_w, "frame width")->check(CLI::PositiveNumber);
    dg->add_option("--seed", dg_seed, "content seed");
    dg->add_option("--dy", dg_dy, "vertical shift per frame");
    dg->add_option("--dx", dg_dx, "horizontal shift per frame");
    dg->add_option("--fg-dy", dg_fg_dy, "foreground vertical shift (two_region)");
    dg->add_option("--fg-dx", dg_fg_dx, "foreground horizontal shift (two_region)");
    dg->add_option("--jitter", dg_jitter, "per-block jitter amplitude (scramble)");
    dg->add_option("--grow", dg_grow, "patch growth per frame (reveal)");
    dg->add_option("--out", dg_out, "output directory")->required();

    // run
    std::string rn_seq, rn_net, rn_thresholds, rn_mode = "fluxshard", rn_trace = "medium";
    std::string rn_server, rn_out, rn_edge_profile, rn_cloud_profile;
    AblationFlags rn_ablate;
    bool rn_edge_only = false, rn_no_fidelity = false;
    double rn_trace_seconds = 120.0, rn_epsilon = 5.0, rn_ewma = 0.3, rn_prop = 20.0;
    uint64_t rn_seed = 7, rn_client = 1;
    int rn_radius = 8, rn_frames = 0;
    auto* rn = app.add_subcommand("run", "run the pipeline over a sequence");
    rn->add_option("--seq", rn_seq, "sequence directory (from datagen)")->required();
    rn->add_option("--net", rn_net, "network config file (default: built-in topology)");
    rn->add_option("--thresholds", rn_thresholds, "calibrated thresholds file (default: zeros)");
    rn->add_option("--mode", rn_mode, "fluxshard | dense | fixed-coord | global-shift");
    add_ablation_flags(rn, rn_ablate);
    rn->add_flag("--edge-only", rn_edge_only, "never offload");
    rn->add_option("--trace", rn_trace, "bandwidth trace CSV, or tier: low | medium | high");
    rn->add_option("--trace-seconds", rn_trace_seconds, "generated trace length");
    rn->add_option("--seed", rn_seed, "trace generation seed");
    rn->add_option("--search-radius", rn_radius, "motion search radius (px)");
    rn->add_option("--epsilon", rn_epsilon, "cloud-preference margin (ms)");
    rn->add_option("--ewma-weight", rn_ewma, "bandwidth smoothing weight");
    rn->add_option("--propagation-ms", rn_prop, "one-way propagation delay");
    rn->add_option("--server", rn_server, "offload to host:port instead of in-process");
    rn->add_option("--client-id", rn_client, "session id for the remote server");
    rn->add_option("--frames", rn_frames, "process only the first N frames");
    rn->add_flag("--no-fidelity", rn_no_fidelity, "skip the per-frame dense reference");
    rn->add_option("--edge-profile", rn_edge_profile, "edge latency profile CSV");
    rn->add_option("--cloud-profile", rn_cloud_profile, "cloud latency profile CSV");
    rn->add_option("--out", rn_out, "metrics CSV path");

    // calibrate
    std::vector<std::string> cl_seqs;
    std::string cl_net, cl_out = "thresholds.txt";
    double cl_alpha = 0.97, cl_split = 2.0 / 3.0;
    int cl_radius = 8;
    uint64_t cl_net_seed = 42;
    auto* cl = app.add_subcommand("calibrate", "pick reuse thresholds under a fidelity budget");
    cl->add_option("--seq", cl_seqs, "calibration sequence directory (repeatable)")->required();
    cl->add_option("--net", cl_net, "network config file");
    cl->add_option("--alpha", cl_alpha, "fidelity retention target in (0,1]");
    cl->add_option("--split-ratio", cl_split, "budget share of the dispatch stage");
    cl->add_option("--search-radius", cl_radius, "motion search radius (px)");
    cl->add_option("--net-seed", cl_net_seed, "seed for the built-in topology");
    cl->add_option("--out", cl_out, "thresholds output file");

    // profile
    std::string pf_net, pf_endpoint = "edge", pf_out = "profile.csv";
    int pf_steps = 5, pf_repeats = 3;
    bool pf_wallclock = false, pf_monotone = false;
    uint64_t pf_seed = 3;
    auto* pf = app.add_subcommand("profile", "emit a latency-vs-workload profile CSV");
    pf->add_option("--net", pf_net, "network config file");
    pf->add_option("--endpoint", pf_endpoint, "edge | cloud (selects the synthetic base curve)");
    pf->add_option("--steps", pf_steps, "sweep points")->check(CLI::Range(2, 101));
    pf->add_option("--repeats", pf_repeats, "timing repetitions per point");
    pf->add_flag("--wallclock", pf_wallclock, "measure wall-clock sparse execution");
    pf->add_flag("--monotone", pf_monotone, "apply an isotonic fit to the curve");
    pf->add_option("--seed", pf_seed, "workload placement seed");
    pf->add_option("--out", pf_out, "profile CSV path");

    // serve
    std::string sv_net, sv_thresholds, sv_host = "127.0.0.1";
    AblationFlags sv_ablate;
    int sv_port = 7461, sv_h = 128, sv_w = 128;
    uint64_t sv_net_seed = 42;
    auto* sv = app.add_subcommand("serve", "run the offload inference server");
    sv->add_option("--net", sv_net, "network config file");
    sv->add_option("--thresholds", sv_thresholds, "thresholds file (must match clients)");
    add_ablation_flags(sv, sv_ablate);
    sv->add_option("--host", sv_host, "bind address");
    sv->add_option("--port", sv_port, "bind port (0 = ephemeral)");
    sv->add_option("--height", sv_h, "input height for the built-in topology");
    sv->add_option("--width", sv_w, "input width for the built-in topology");
    sv->add_option("--net-seed", sv_net_seed, "seed for the built-in topology");

    // report
    std::vector<std::string> rp_csvs;
    std::string rp_out;
    auto* rp = app.add_subcommand("report", "aggregate metrics CSVs into a summary table");
    rp->add_option("csvs", rp_csvs, "metrics CSV files")->required();
    rp->add_option("--out", rp_out, "also write the table to this path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (dg->parsed())
            return cmd_datagen(dg_scenario, dg_frames, dg_h, dg_w, dg_seed, dg_dy, dg_dx,
                               dg_fg_dy, dg_fg_dx, dg_jitter, dg_grow, dg_out);
        if (rn->parsed())
            return cmd_run(rn_seq, rn_net, rn_thresholds, rn_mode, rn_ablate, rn_edge_only,
                           rn_trace, rn_trace_seconds, rn_seed, rn_radius, rn_epsilon, rn_ewma,
                           rn_prop, rn_server, rn_client, rn_frames, rn_no_fidelity, rn_out,
                           rn_edge_profile, rn_cloud_profile);
        if (cl->parsed())
            return cmd_calibrate(cl_seqs, cl_net, cl_alpha, cl_split, cl_radius, cl_net_seed,
                                 cl_out);
        if (pf->parsed())
            return cmd_profile(pf_net, pf_endpoint, pf_steps, pf_repeats, pf_wallclock,
                               pf_monotone, pf_seed, pf_out);
        if (sv->parsed())
            return cmd_serve(sv_net, sv_thresholds, sv_ablate, sv_host, sv_port, sv_h, sv_w,
                             sv_net_seed);
        if (rp->parsed()) return cmd_report(rp_csvs, rp_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
