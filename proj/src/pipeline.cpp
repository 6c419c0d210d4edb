#include "fluxshard/pipeline.hpp"

#include <chrono>
#include <stdexcept>

#include "fluxshard/common.hpp"

namespace fluxshard {

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

FrameResult dense_seed(const NetworkSpec& net, EndpointCache& cache, const FeatureMap& frame,
                       uint64_t frame_id) {
    const double t0 = now_ms();
    std::vector<FeatureMap> outs = dense_forward(net, frame);
    FrameResult r;
    r.stats.frame_id = frame_id;
    r.stats.cold_start = true;
    r.stats.s0_count = frame.h * frame.w;
    r.stats.reuse_ratio = 0.0;
    r.stats.compute_ratio = 1.0;
    for (int l = 0; l < net.num_layers(); ++l)
        r.stats.layer_counts.push_back(net.grid_h[l] * net.grid_w[l]);
    r.stats.ms_infer = now_ms() - t0;
    r.output = outs.back();
    cache.seed(frame, outs, frame_id);
    return r;
}

// Shared stage-4 core: consumes the already-assembled dispatch-layer output
// and runs the per-layer candidate/truncate/evaluate/merge loop.
FrameResult run_layers(const NetworkSpec& net, const ThresholdVector& tau,
                       const PipelineOptions& opt, EndpointCache& cache,
                       const AccumMV& true_field, const AccumMV& align_field,
                       const RecomputeMask& s0, FeatureMap assembled0, uint64_t frame_id,
                       double ms_remap, RemappedCaches remapped, const RfapPlan& plan,
                       int rfap_input_count) {
    if (int(tau.layer.size()) != net.num_layers())
        throw std::invalid_argument("sparse_forward: threshold count mismatch");

    FrameResult r;
    r.stats.frame_id = frame_id;
    r.stats.s0_count = mask_count(s0);
    r.stats.reuse_ratio = 1.0 - double(r.stats.s0_count) / (double(net.in_h) * net.in_w);
    r.stats.rfap_flagged = rfap_input_count;
    r.stats.ms_update = ms_remap;

    const NetGeometry geo = effective_geometry(net);
    const double t_infer = now_ms();

    std::vector<FeatureMap> new_caches;
    new_caches.reserve(net.layers.size());
    RecomputeMask s_prev = s0;
    const FeatureMap* assembled_prev = &assembled0;
    double num = 0.0, den = 0.0;

    for (int l = 0; l < net.num_layers(); ++l) {
        const LayerSpec& layer = net.layers[l];
        RecomputeMask sl(net.grid_h[l], net.grid_w[l]);
        if (!opt.sparse) {
            sl = RecomputeMask(net.grid_h[l], net.grid_w[l], true);
        } else {
            // Content candidates, thresholded by the layer's operator norm.
            const RecomputeMask candidates = propagate_candidates(s_prev, layer);
            const FeatureMap& cached_input = l == 0 ? cache.input_cache : cache.layer_cache[l - 1];
            const AccumMV& field_in = l == 0 ? align_field : remapped.field_out[l - 1];
            sl = truncate_candidates(candidates, *assembled_prev, cached_input, field_in, layer,
                                     tau.layer[l], weight_l1(layer));
            // Structural flags bypass truncation: a consistent-looking value
            // difference of zero says nothing when the receptive field mixes
            // displacements.
            if (plan.active && plan.layer_index == l)
                sl = mask_union(sl, propagate_candidates(plan.mask, layer));
            if (opt.rfap && opt.per_layer_rfap && layer.window_extent() > 1) {
                const AccumMV fin = downsample_field(true_field, geo.cum_stride_in[l]);
                const AccumMV fout = downsample_field(true_field, geo.cum_stride_out[l]);
                const RecomputeMask flags = rfap_per_layer_check(fin, fout, layer);
                r.stats.rfap_flagged += mask_count(flags);
                sl = mask_union(sl, flags);
            }
            // Positions whose warped cache value had no valid source carry
            // garbage and are never reusable.
            sl = mask_union(sl, remapped.layer_oob[l]);
        }

        FeatureMap out = remapped.layers[l];  // reuse branch of the merge
        eval_layer_at(net, l, *assembled_prev, sl, out);
        new_caches.push_back(std::move(out));

        const int count = mask_count(sl);
        r.stats.layer_counts.push_back(count);
        const double cost = layer_cost_per_position(net, l);
        num += cost * count;
        den += cost * double(net.grid_h[l]) * net.grid_w[l];
        s_prev = std::move(sl);
        assembled_prev = &new_caches.back();
    }

    r.stats.compute_ratio = den > 0 ? num / den : 0.0;
    r.stats.ms_infer = now_ms() - t_infer;

    const double t_update = now_ms();
    cache.input_cache = std::move(assembled0);
    cache.layer_cache = std::move(new_caches);
    cache.accum = reset(net.in_h, net.in_w);
    cache.last_update_frame = frame_id;
    r.stats.ms_update += now_ms() - t_update;
    r.output = cache.layer_cache.back();
    return r;
}

}  // namespace

RecomputeMask compute_dispatch_set(const NetworkSpec&, const ThresholdVector& tau,
                                   const PipelineOptions& opt, const EndpointCache& cache,
                                   const FeatureMap& frame, const AccumMV& field) {
    if (!cache.seeded) return RecomputeMask(frame.h, frame.w, true);
    if (opt.remap) return dispatch_recompute_set(frame, cache.input_cache, field, tau.tau0);
    return dispatch_recompute_set(frame, cache.input_cache, reset(frame.h, frame.w), tau.tau0);
}

FrameResult sparse_forward(const NetworkSpec& net, const ThresholdVector& tau,
                           const PipelineOptions& opt, EndpointCache& cache,
                           const FeatureMap& frame, const AccumMV& field,
                           const RecomputeMask& s0, uint64_t frame_id) {
    if (frame.h != net.in_h || frame.w != net.in_w || frame.c != net.in_c)
        throw std::invalid_argument("sparse_forward: frame shape mismatch");
    if (!cache.seeded) return dense_seed(net, cache, frame, frame_id);

    const AccumMV align_field = opt.remap ? field : reset(frame.h, frame.w);
    RfapPlan plan;
    int rfap_count = 0;
    if (opt.rfap && !opt.per_layer_rfap) {
        const NetGeometry geo = effective_geometry(net);
        const RecomputeMask flags = rfap_input_check(field, geo.r_max, geo.s_max);
        rfap_count = mask_count(flags);
        plan = merge_rfap(flags, net);
    }

    const double t0 = now_ms();
    RemappedCaches remapped = remap_cache(cache, align_field, net);
    FeatureMap assembled0 = merge_cache(remapped.input, sparse_from_map(frame, s0), s0);
    const double ms_remap = now_ms() - t0;

    return run_layers(net, tau, opt, cache, field, align_field, s0, std::move(assembled0),
                      frame_id, ms_remap, std::move(remapped), plan, rfap_count);
}

FrameResult apply_offload(const NetworkSpec& net, const ThresholdVector& tau,
                          const PipelineOptions& opt, EndpointCache& cache,
                          const OffloadPayload& payload) {
    if (payload.h != net.in_h || payload.w != net.in_w)
        throw std::invalid_argument("apply_offload: payload dims mismatch");
    const RecomputeMask s0 = unpack_mask(payload.mask_bytes, payload.h, payload.w);
    const int n_set = mask_count(s0);
    if (payload.pixels.size() != size_t(n_set) * 3)
        throw ProtocolError("apply_offload: pixel count mismatch");

    if (!cache.seeded) {
        if (n_set != payload.h * payload.w)
            throw DesyncError("offload onto an unseeded cache requires a full frame");
        FeatureMap frame(payload.h, payload.w, 3);
        frame.data.assign(payload.pixels.begin(), payload.pixels.end());
        return dense_seed(net, cache, frame, payload.frame_id);
    }

    const AccumMV field = expand_blocks(payload.mv, payload.h, payload.w);
    const AccumMV align_field = opt.remap ? field : reset(payload.h, payload.w);
    RfapPlan plan;
    int rfap_count = 0;
    if (opt.rfap && !opt.per_layer_rfap) {
        const NetGeometry geo = effective_geometry(net);
        const RecomputeMask flags = rfap_input_check(field, geo.r_max, geo.s_max);
        rfap_count = mask_count(flags);
        plan = merge_rfap(flags, net);
    }

    const double t0 = now_ms();
    RemappedCaches remapped = remap_cache(cache, align_field, net);
    SparseValues fresh;
    fresh.channels = 3;
    fresh.values = payload.pixels;
    for (int i = 0; i < payload.h; ++i)
        for (int j = 0; j < payload.w; ++j)
            if (s0.get(i, j)) fresh.pos.emplace_back(i, j);
    FeatureMap assembled0 = merge_cache(remapped.input, fresh, s0);
    const double ms_remap = now_ms() - t0;

    return run_layers(net, tau, opt, cache, field, align_field, s0, std::move(assembled0),
                      payload.frame_id, ms_remap, std::move(remapped), plan, rfap_count);
}

}  // namespace fluxshard
