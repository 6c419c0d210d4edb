#include "fluxshard/rfap.hpp"

#include <algorithm>
#include <stdexcept>

namespace fluxshard {

RecomputeMask rfap_input_check(const AccumMV& field, int r_max, int s_max) {
    if (r_max < 1 || s_max < 1) throw std::invalid_argument("rfap_input_check: bad geometry");
    const int reach = r_max / 2;
    RecomputeMask out(field.h, field.w);
    for (int i = 0; i < field.h; ++i) {
        for (int j = 0; j < field.w; ++j) {
            const size_t k = field.idx(i, j);
            const int32_t dy = field.dy[k], dx = field.dx[k];
            if (!field.valid[k] || dy % s_max != 0 || dx % s_max != 0) {
                out.set(i, j);
                continue;
            }
            // Zero padding never moves with the content, so a window that
            // overhangs the frame border mixes displacements unless the
            // anchor itself is static.
            if ((dy != 0 || dx != 0) &&
                (i - reach < 0 || i + reach >= field.h || j - reach < 0 || j + reach >= field.w)) {
                out.set(i, j);
                continue;
            }
            const int y0 = std::max(0, i - reach), y1 = std::min(field.h - 1, i + reach);
            const int x0 = std::max(0, j - reach), x1 = std::min(field.w - 1, j + reach);
            bool flag = false;
            for (int y = y0; y <= y1 && !flag; ++y) {
                const size_t row = field.idx(y, x0);
                for (int x = 0; x <= x1 - x0; ++x) {
                    if (!field.valid[row + x] || field.dy[row + x] != dy || field.dx[row + x] != dx) {
                        flag = true;
                        break;
                    }
                }
            }
            if (flag) out.set(i, j);
        }
    }
    return out;
}

RecomputeMask rfap_per_layer_check(const AccumMV& field_in, const AccumMV& field_out,
                                   const LayerSpec& layer) {
    const int s = layer.stride;
    if (field_in.h != field_out.h * s || field_in.w != field_out.w * s)
        throw std::invalid_argument("rfap_per_layer_check: grid mismatch");
    RecomputeMask out(field_out.h, field_out.w);
    for (int i = 0; i < out.h; ++i) {
        for (int j = 0; j < out.w; ++j) {
            const size_t ko = field_out.idx(i, j);
            if (!field_out.valid[ko]) {
                out.set(i, j);
                continue;
            }
            // Anchor displacement on the input grid must divide down to the
            // output-grid displacement exactly.
            const size_t ka = field_in.idx(i * s, j * s);
            if (!field_in.valid[ka] || field_in.dy[ka] % s != 0 || field_in.dx[ka] % s != 0 ||
                field_in.dy[ka] / s != field_out.dy[ko] || field_in.dx[ka] / s != field_out.dx[ko]) {
                out.set(i, j);
                continue;
            }
            // Uniformity across the receptive field on the input grid. A
            // window overhanging the grid border reads zero padding, which is
            // static, so a moving anchor there is already inconsistent.
            const int32_t dy = field_in.dy[ka], dx = field_in.dx[ka];
            if ((dy != 0 || dx != 0) &&
                (i * s + layer.win_lo < 0 || i * s + layer.win_hi >= field_in.h ||
                 j * s + layer.win_lo < 0 || j * s + layer.win_hi >= field_in.w)) {
                out.set(i, j);
                continue;
            }
            const int p0 = std::max(0, i * s + layer.win_lo), p1 = std::min(field_in.h - 1, i * s + layer.win_hi);
            const int q0 = std::max(0, j * s + layer.win_lo), q1 = std::min(field_in.w - 1, j * s + layer.win_hi);
            bool flag = false;
            for (int p = p0; p <= p1 && !flag; ++p) {
                for (int q = q0; q <= q1; ++q) {
                    const size_t k = field_in.idx(p, q);
                    if (!field_in.valid[k] || field_in.dy[k] != dy || field_in.dx[k] != dx) {
                        flag = true;
                        break;
                    }
                }
            }
            if (flag) out.set(i, j);
        }
    }
    return out;
}

RecomputeMask mask_or_reduce(const RecomputeMask& m, int s) {
    if (s <= 0) throw std::invalid_argument("mask_or_reduce: bad stride");
    if (s == 1) return m;
    if (m.h % s != 0 || m.w % s != 0)
        throw std::invalid_argument("mask_or_reduce: dims not divisible");
    RecomputeMask out(m.h / s, m.w / s);
    for (int i = 0; i < m.h; ++i)
        for (int j = 0; j < m.w; ++j)
            if (m.get(i, j)) out.set(i / s, j / s);
    return out;
}

RfapPlan merge_rfap(const RecomputeMask& input_flags, const NetworkSpec& net) {
    if (input_flags.h != net.in_h || input_flags.w != net.in_w)
        throw std::invalid_argument("merge_rfap: mask dims mismatch");
    RfapPlan plan;
    int cum = 1;
    for (int l = 0; l < net.num_layers(); ++l) {
        if (net.layers[l].window_extent() > 1) {
            plan.active = true;
            plan.layer_index = l;
            plan.mask = mask_or_reduce(input_flags, cum);
            return plan;
        }
        cum *= net.layers[l].stride;
    }
    return plan;  // no spatial layer anywhere
}

}  // namespace fluxshard
