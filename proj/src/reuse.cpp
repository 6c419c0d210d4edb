#include "fluxshard/reuse.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "fluxshard/common.hpp"

namespace fluxshard {

void save_thresholds(const ThresholdVector& t, const std::string& path,
                     const std::vector<std::string>& provenance) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    for (const std::string& line : provenance) out << "# " << line << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", double(t.tau0));
    out << "tau0=" << buf << "\n";
    for (size_t l = 0; l < t.layer.size(); ++l) {
        std::snprintf(buf, sizeof buf, "%.9g", double(t.layer[l]));
        out << "tau[" << l << "]=" << buf << "\n";
    }
}

ThresholdVector load_thresholds(const std::string& path, int num_layers) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open thresholds: " + path);
    ThresholdVector t = ThresholdVector::zeros(num_layers);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::string s;
        for (char c : line)
            if (!std::isspace(static_cast<unsigned char>(c))) s += c;
        if (s.empty()) continue;
        float v = 0.0f;
        int l = -1;
        if (std::sscanf(s.c_str(), "tau0=%f", &v) == 1) {
            t.tau0 = v;
        } else if (std::sscanf(s.c_str(), "tau[%d]=%f", &l, &v) == 2) {
            if (l < 0 || l >= num_layers)
                throw ConfigError("thresholds line " + std::to_string(line_no) + ": layer index out of range");
            t.layer[size_t(l)] = v;
        } else {
            throw ConfigError("thresholds line " + std::to_string(line_no) + ": unrecognized entry");
        }
        if (v < 0.0f)
            throw ConfigError("thresholds line " + std::to_string(line_no) + ": negative threshold");
    }
    return t;
}

RecomputeMask dispatch_recompute_set(const FeatureMap& frame, const FeatureMap& input_cache,
                                     const AccumMV& field, float tau0) {
    if (!frame.same_shape(input_cache)) throw std::invalid_argument("dispatch_recompute_set: shape mismatch");
    if (field.h != frame.h || field.w != frame.w)
        throw std::invalid_argument("dispatch_recompute_set: field dims mismatch");
    if (tau0 < 0.0f) throw std::invalid_argument("dispatch_recompute_set: negative threshold");

    RecomputeMask out(frame.h, frame.w);
    for (int i = 0; i < frame.h; ++i) {
        for (int j = 0; j < frame.w; ++j) {
            const size_t k = field.idx(i, j);
            const int si = i - field.dy[k], sj = j - field.dx[k];
            if (!field.valid[k] || !frame.in_bounds(si, sj)) {
                out.set(i, j);
                continue;
            }
            const float* a = &frame.data[(size_t(i) * frame.w + j) * frame.c];
            const float* b = &input_cache.data[(size_t(si) * frame.w + sj) * frame.c];
            for (int c = 0; c < frame.c; ++c) {
                if (std::fabs(a[c] - b[c]) > tau0) {
                    out.set(i, j);
                    break;
                }
            }
        }
    }
    return out;
}

namespace {
inline int floor_div(int a, int b) {
    const int q = a / b, r = a % b;
    return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}
inline int ceil_div(int a, int b) { return -floor_div(-a, b); }
}  // namespace

RecomputeMask propagate_candidates(const RecomputeMask& s_prev, const LayerSpec& layer) {
    const int s = layer.stride;
    if (s_prev.h % s != 0 || s_prev.w % s != 0)
        throw std::invalid_argument("propagate_candidates: dims not divisible by stride");
    RecomputeMask out(s_prev.h / s, s_prev.w / s);
    const int lo = layer.win_lo, hi = layer.win_hi;
    for (int p = 0; p < s_prev.h; ++p) {
        // Output rows i with i*s + lo <= p <= i*s + hi.
        const int i0 = std::max(0, ceil_div(p - hi, s));
        const int i1 = std::min(out.h - 1, floor_div(p - lo, s));
        if (i0 > i1) continue;
        for (int q = 0; q < s_prev.w; ++q) {
            if (!s_prev.get(p, q)) continue;
            const int j0 = std::max(0, ceil_div(q - hi, s));
            const int j1 = std::min(out.w - 1, floor_div(q - lo, s));
            for (int i = i0; i <= i1; ++i)
                for (int j = j0; j <= j1; ++j) out.set(i, j);
        }
    }
    return out;
}

RecomputeMask truncate_candidates(const RecomputeMask& candidates, const FeatureMap& assembled,
                                  const FeatureMap& cached_input, const AccumMV& field_in,
                                  const LayerSpec& layer, float tau_l, float w_l1) {
    if (!assembled.same_shape(cached_input))
        throw std::invalid_argument("truncate_candidates: input shape mismatch");
    if (field_in.h != assembled.h || field_in.w != assembled.w)
        throw std::invalid_argument("truncate_candidates: field dims mismatch");
    if (tau_l < 0.0f) throw std::invalid_argument("truncate_candidates: negative threshold");

    const float bound = w_l1 > 0.0f ? tau_l / w_l1 : std::numeric_limits<float>::infinity();
    const int s = layer.stride;
    RecomputeMask out(candidates.h, candidates.w);

    for (int i = 0; i < candidates.h; ++i) {
        for (int j = 0; j < candidates.w; ++j) {
            if (!candidates.get(i, j)) continue;
            // The anchor cell is always inside the window; an invalid anchor
            // means there is no coherent source for this output at all.
            const size_t ka = field_in.idx(i * s, j * s);
            if (!field_in.valid[ka]) {
                out.set(i, j);
                continue;
            }
            const int ady = field_in.dy[ka], adx = field_in.dx[ka];
            float dmax = 0.0f;
            bool keep = false;
            for (int p = i * s + layer.win_lo; p <= i * s + layer.win_hi && !keep; ++p) {
                for (int q = j * s + layer.win_lo; q <= j * s + layer.win_hi; ++q) {
                    if (p < 0 || p >= assembled.h || q < 0 || q >= assembled.w) {
                        // Zero-padded cell. The aligned source computation saw
                        // real content at this offset whenever its shifted
                        // window stayed inside the frame; that content must be
                        // within the bound of zero for the output to carry over.
                        const int sp = p - ady, sq = q - adx;
                        if (assembled.in_bounds(sp, sq)) {
                            const float* b =
                                &cached_input.data[(size_t(sp) * assembled.w + sq) * assembled.c];
                            for (int c = 0; c < assembled.c; ++c)
                                dmax = std::max(dmax, std::fabs(b[c]));
                            if (dmax > bound) {
                                keep = true;
                                break;
                            }
                        }
                        continue;
                    }
                    const size_t k = field_in.idx(p, q);
                    const int sp = p - field_in.dy[k], sq = q - field_in.dx[k];
                    if (!field_in.valid[k] || !assembled.in_bounds(sp, sq)) {
                        keep = true;
                        break;
                    }
                    const float* a = &assembled.data[(size_t(p) * assembled.w + q) * assembled.c];
                    const float* b = &cached_input.data[(size_t(sp) * assembled.w + sq) * assembled.c];
                    for (int c = 0; c < assembled.c; ++c)
                        dmax = std::max(dmax, std::fabs(a[c] - b[c]));
                    if (dmax > bound) {
                        keep = true;
                        break;
                    }
                }
            }
            if (keep || dmax > bound) out.set(i, j);
        }
    }
    return out;
}

}  // namespace fluxshard
