#include "fluxshard/calibration.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "fluxshard/cache.hpp"
#include "fluxshard/common.hpp"
#include "fluxshard/motion.hpp"

namespace fluxshard {

double fidelity(const FeatureMap& sparse_out, const FeatureMap& dense_out) {
    if (!sparse_out.same_shape(dense_out))
        throw std::invalid_argument("fidelity: shape mismatch");
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < dense_out.data.size(); ++i) {
        num += std::fabs(double(sparse_out.data[i]) - double(dense_out.data[i]));
        den += std::fabs(double(dense_out.data[i]));
    }
    const double ratio = num / (den + 1e-9);
    return 1.0 - (ratio < 1.0 ? ratio : 1.0);
}

BudgetSplit budget_split(double alpha, int num_profiled, double split_ratio) {
    const double drop = 1.0 - alpha;
    BudgetSplit b;
    b.dispatch = split_ratio * drop;
    if (num_profiled > 0)
        b.per_layer.assign(size_t(num_profiled), (1.0 - split_ratio) * drop / num_profiled);
    return b;
}

ReplayStats replay(const NetworkSpec& net, const ThresholdVector& tau,
                   const CalibrationConfig& cfg) {
    ReplayStats out;
    double fid_sum = 0.0, ratio_sum = 0.0;
    for (const std::vector<FeatureMap>& seq : cfg.sequences) {
        EndpointCache cache = EndpointCache::make(net);
        const FeatureMap* prev = nullptr;
        for (size_t t = 0; t < seq.size(); ++t) {
            const FeatureMap& frame = seq[t];
            if (!cache.seeded) {
                RecomputeMask full(frame.h, frame.w, true);
                sparse_forward(net, tau, cfg.options, cache, frame, cache.accum, full, t);
            } else {
                const MVField mv =
                    estimate_mv(frame, *prev, cfg.block_size, cfg.search_radius);
                cache.accum = accumulate(cache.accum, mv);
                const AccumMV field = cache.accum;
                const RecomputeMask s0 =
                    compute_dispatch_set(net, tau, cfg.options, cache, frame, field);
                FrameResult r =
                    sparse_forward(net, tau, cfg.options, cache, frame, field, s0, t);
                const FeatureMap dense_ref = dense_forward(net, frame).back();
                fid_sum += fidelity(r.output, dense_ref);
                ratio_sum += r.stats.compute_ratio;
                out.frames += 1;
            }
            prev = &frame;
        }
    }
    if (out.frames > 0) {
        out.fidelity = fid_sum / out.frames;
        out.compute_ratio = ratio_sum / out.frames;
    }
    return out;
}

CalibrationOutcome calibrate(const NetworkSpec& net, const CalibrationConfig& cfg) {
    if (cfg.sequences.empty())
        throw std::invalid_argument("calibrate: no calibration sequences");
    if (cfg.candidates.empty() || cfg.candidates.front() != 0.0f)
        throw std::invalid_argument("calibrate: candidate grid must start at 0");
    for (size_t i = 1; i < cfg.candidates.size(); ++i)
        if (cfg.candidates[i] <= cfg.candidates[i - 1])
            throw std::invalid_argument("calibrate: candidates must be ascending");
    if (cfg.alpha <= 0.0 || cfg.alpha > 1.0)
        throw std::invalid_argument("calibrate: alpha must lie in (0, 1]");
    if (cfg.split_ratio <= 0.0 || cfg.split_ratio >= 1.0)
        throw std::invalid_argument("calibrate: split_ratio must lie in (0, 1)");

    CalibrationOutcome out;
    out.stage_layers.push_back(-1);
    for (int l = 0; l < net.num_layers(); ++l)
        if (net.layers[l].profiled) out.stage_layers.push_back(l);

    const BudgetSplit budgets =
        budget_split(cfg.alpha, int(out.stage_layers.size()) - 1, cfg.split_ratio);

    ThresholdVector chosen = ThresholdVector::zeros(net.num_layers());
    double running_budget = 0.0;
    for (size_t stage = 0; stage < out.stage_layers.size(); ++stage) {
        const int layer = out.stage_layers[stage];
        running_budget += stage == 0 ? budgets.dispatch : budgets.per_layer[stage - 1];
        int best = -1;
        for (size_t c = 0; c < cfg.candidates.size(); ++c) {
            ThresholdVector trial = chosen;
            if (layer < 0)
                trial.tau0 = cfg.candidates[c];
            else
                trial.layer[layer] = cfg.candidates[c];
            const ReplayStats stats = replay(net, trial, cfg);
            out.evaluations += 1;
            const double drop = 1.0 - stats.fidelity;
            FS_LOG(kDebug, "calibrate stage %zu candidate %g: drop %.6f budget %.6f",
                   stage, double(cfg.candidates[c]), drop, running_budget);
            if (drop <= running_budget) best = int(c);
        }
        if (best < 0) {
            char msg[128];
            std::snprintf(msg, sizeof(msg),
                          "calibration infeasible at stage %zu (layer %d): no candidate fits "
                          "budget %.6g",
                          stage, layer, running_budget);
            throw CalibrationError(msg);
        }
        if (layer < 0)
            chosen.tau0 = cfg.candidates[best];
        else
            chosen.layer[layer] = cfg.candidates[best];
        FS_LOG(kInfo, "calibrate stage %zu (layer %d) -> %g", stage, layer,
               double(cfg.candidates[best]));
    }

    const ReplayStats final_stats = replay(net, chosen, cfg);
    out.thresholds = chosen;
    out.fidelity = final_stats.fidelity;
    out.compute_ratio = final_stats.compute_ratio;
    return out;
}

}  // namespace fluxshard
