#include "fluxshard/refnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fluxshard/common.hpp"

namespace fluxshard {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream is(line);
    std::vector<std::string> toks;
    std::string t;
    while (is >> t) toks.push_back(t);
    return toks;
}

[[noreturn]] void fail(int line_no, const std::string& msg) {
    throw ConfigError("network config line " + std::to_string(line_no) + ": " + msg);
}

// Parses "key=value" and returns value or fails.
std::string kv(const std::string& tok, const std::string& key, int line_no) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos || tok.substr(0, eq) != key)
        fail(line_no, "expected " + key + "=<value>, got '" + tok + "'");
    return tok.substr(eq + 1);
}

int to_int(const std::string& s, int line_no) {
    try {
        size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (...) {
        fail(line_no, "bad integer '" + s + "'");
    }
}

bool parse_profiled(const std::vector<std::string>& toks, size_t from, int line_no) {
    bool profiled = false;
    for (size_t i = from; i < toks.size(); ++i) {
        const std::string v = kv(toks[i], "profiled", line_no);
        if (v == "true")
            profiled = true;
        else if (v == "false")
            profiled = false;
        else
            fail(line_no, "profiled must be true or false");
    }
    return profiled;
}

const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::kConv: return "conv";
        case LayerKind::kPointwise: return "pointwise";
        case LayerKind::kActivation: return "act";
        case LayerKind::kPool: return "pool";
        case LayerKind::kBatchNormAffine: return "bn";
    }
    return "?";
}

}  // namespace

NetworkSpec parse_network(const std::string& text) {
    NetworkSpec net;
    bool have_input = false;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto toks = split_ws(line);
        if (toks.empty()) continue;
        const std::string& head = toks[0];

        if (head.rfind("seed=", 0) == 0) {
            try {
                net.seed = std::stoull(head.substr(5));
            } catch (...) {
                fail(line_no, "bad seed");
            }
            continue;
        }
        if (head.rfind("input=", 0) == 0) {
            int h = 0, w = 0, c = 0;
            if (std::sscanf(head.c_str() + 6, "%dx%dx%d", &h, &w, &c) != 3 || h <= 0 || w <= 0 || c <= 0)
                fail(line_no, "input must be <H>x<W>x<C>");
            net.in_h = h;
            net.in_w = w;
            net.in_c = c;
            have_input = true;
            continue;
        }

        LayerSpec layer;
        if (head == "conv") {
            layer.kind = LayerKind::kConv;
            if (toks.size() != 4) fail(line_no, "conv needs k=, s=, out=");
            layer.kernel = to_int(kv(toks[1], "k", line_no), line_no);
            layer.stride = to_int(kv(toks[2], "s", line_no), line_no);
            layer.out_ch = to_int(kv(toks[3], "out", line_no), line_no);
            if (layer.kernel < 1 || layer.kernel % 2 == 0) fail(line_no, "conv kernel must be odd and >= 1");
            if (layer.stride < 1) fail(line_no, "conv stride must be >= 1");
            if (layer.kernel == 1 && layer.stride > 1)
                fail(line_no, "strided 1x1 conv is not supported (anchor drift)");
            if (layer.out_ch < 1) fail(line_no, "conv out channels must be >= 1");
            layer.win_lo = -layer.radius();
            layer.win_hi = layer.radius();
        } else if (head == "pointwise") {
            layer.kind = LayerKind::kPointwise;
            if (toks.size() != 2) fail(line_no, "pointwise needs out=");
            layer.out_ch = to_int(kv(toks[1], "out", line_no), line_no);
            if (layer.out_ch < 1) fail(line_no, "pointwise out channels must be >= 1");
        } else if (head == "pool") {
            layer.kind = LayerKind::kPool;
            if (toks.size() != 3) fail(line_no, "pool needs k=, s=");
            layer.kernel = to_int(kv(toks[1], "k", line_no), line_no);
            layer.stride = to_int(kv(toks[2], "s", line_no), line_no);
            if (layer.kernel < 2) fail(line_no, "pool kernel must be >= 2");
            if (layer.kernel > layer.stride) fail(line_no, "pool kernel must not exceed stride");
            layer.win_lo = 0;
            layer.win_hi = layer.kernel - 1;
        } else if (head == "relu" || head == "leaky" || head == "identity") {
            layer.kind = LayerKind::kActivation;
            layer.act = head == "relu" ? ActKind::kReLU
                                       : head == "leaky" ? ActKind::kLeaky : ActKind::kIdentity;
            layer.profiled = parse_profiled(toks, 1, line_no);
        } else if (head == "bn") {
            layer.kind = LayerKind::kBatchNormAffine;
            if (toks.size() != 1) fail(line_no, "bn takes no arguments");
        } else {
            fail(line_no, "unknown directive '" + head + "'");
        }
        net.layers.push_back(layer);
    }
    if (!have_input) throw ConfigError("network config: missing input=<H>x<W>x<C>");
    if (net.layers.empty()) throw ConfigError("network config: no layers");

    // Resolve channel counts and output grids.
    int ch = net.in_c, h = net.in_h, w = net.in_w;
    for (size_t l = 0; l < net.layers.size(); ++l) {
        LayerSpec& layer = net.layers[l];
        layer.in_ch = ch;
        if (layer.kind == LayerKind::kConv || layer.kind == LayerKind::kPointwise)
            ch = layer.out_ch;
        else
            layer.out_ch = ch;
        if (h % layer.stride != 0 || w % layer.stride != 0)
            throw ConfigError("network config: layer " + std::to_string(l + 1) + " stride " +
                              std::to_string(layer.stride) + " does not divide " +
                              std::to_string(h) + "x" + std::to_string(w));
        h /= layer.stride;
        w /= layer.stride;
        net.grid_h.push_back(h);
        net.grid_w.push_back(w);
        net.channels.push_back(ch);
    }
    return net;
}

NetworkSpec load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open network config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    NetworkSpec net = parse_network(ss.str());
    build_network(net);
    return net;
}

void build_network(NetworkSpec& net) {
    Rng rng(net.seed);
    for (LayerSpec& layer : net.layers) {
        switch (layer.kind) {
            case LayerKind::kConv: {
                const int fan_in = layer.kernel * layer.kernel * layer.in_ch;
                const float a = 1.0f / std::sqrt(float(fan_in));
                layer.weights.resize(size_t(layer.out_ch) * layer.kernel * layer.kernel * layer.in_ch);
                for (float& v : layer.weights) v = float(rng.next_range(-a, a));
                layer.bias.assign(size_t(layer.out_ch), 0.0f);
                for (float& v : layer.bias) v = float(rng.next_range(-a, a));
                break;
            }
            case LayerKind::kPointwise: {
                const float a = 1.0f / std::sqrt(float(layer.in_ch));
                layer.weights.resize(size_t(layer.out_ch) * layer.in_ch);
                for (float& v : layer.weights) v = float(rng.next_range(-a, a));
                layer.bias.assign(size_t(layer.out_ch), 0.0f);
                for (float& v : layer.bias) v = float(rng.next_range(-a, a));
                break;
            }
            case LayerKind::kBatchNormAffine: {
                layer.weights.resize(size_t(layer.out_ch) * 2);
                for (int c = 0; c < layer.out_ch; ++c)
                    layer.weights[c] = float(rng.next_range(0.5, 1.5));  // scale
                for (int c = 0; c < layer.out_ch; ++c)
                    layer.weights[size_t(layer.out_ch) + c] = float(rng.next_range(-0.5, 0.5));  // shift
                break;
            }
            default:
                break;
        }
    }
}

NetworkSpec make_network(const std::string& text) {
    NetworkSpec net = parse_network(text);
    build_network(net);
    return net;
}

std::string default_network_text(int h, int w, int c, uint64_t seed) {
    std::ostringstream os;
    os << "seed=" << seed << "\n";
    os << "input=" << h << "x" << w << "x" << c << "\n";
    os << "conv k=3 s=1 out=16\n";
    os << "relu profiled=true\n";
    os << "conv k=3 s=2 out=16\n";
    os << "relu\n";
    os << "pointwise out=8\n";
    os << "relu profiled=true\n";
    os << "conv k=3 s=2 out=32\n";
    os << "relu\n";
    return os.str();
}

std::string NetworkSpec::canonical_text() const {
    std::ostringstream os;
    os << "seed=" << seed << ";input=" << in_h << "x" << in_w << "x" << in_c << ";";
    for (const LayerSpec& l : layers) {
        os << kind_name(l.kind);
        if (l.kind == LayerKind::kConv) os << " k=" << l.kernel << " s=" << l.stride << " out=" << l.out_ch;
        if (l.kind == LayerKind::kPointwise) os << " out=" << l.out_ch;
        if (l.kind == LayerKind::kPool) os << " k=" << l.kernel << " s=" << l.stride;
        if (l.kind == LayerKind::kActivation)
            os << (l.act == ActKind::kReLU ? " relu" : l.act == ActKind::kLeaky ? " leaky" : " identity")
               << " profiled=" << (l.profiled ? 1 : 0);
        os << ";";
    }
    return os.str();
}

uint64_t NetworkSpec::config_hash() const { return fnv1a64(canonical_text()); }

std::vector<FeatureMap> dense_forward(const NetworkSpec& net, const FeatureMap& input) {
    if (input.h != net.in_h || input.w != net.in_w || input.c != net.in_c)
        throw std::invalid_argument("dense_forward: input shape mismatch");
    std::vector<FeatureMap> outs;
    outs.reserve(net.layers.size());
    const FeatureMap* cur = &input;
    for (int l = 0; l < net.num_layers(); ++l) {
        FeatureMap out(net.grid_h[l], net.grid_w[l], net.channels[l]);
        RecomputeMask full(out.h, out.w, true);
        eval_layer_at(net, l, *cur, full, out);
        outs.push_back(std::move(out));
        cur = &outs.back();
    }
    return outs;
}

void eval_layer_at(const NetworkSpec& net, int l, const FeatureMap& input,
                   const RecomputeMask& positions, FeatureMap& out) {
    const LayerSpec& layer = net.layers[l];
    if (out.h != net.grid_h[l] || out.w != net.grid_w[l] || out.c != net.channels[l])
        throw std::invalid_argument("eval_layer_at: output shape mismatch");
    if (positions.h != out.h || positions.w != out.w)
        throw std::invalid_argument("eval_layer_at: mask shape mismatch");
    if (input.c != layer.in_ch) throw std::invalid_argument("eval_layer_at: input channel mismatch");

    const int s = layer.stride;
    switch (layer.kind) {
        case LayerKind::kConv: {
            const int r = layer.radius(), k = layer.kernel, ic = layer.in_ch, oc = layer.out_ch;
            for (int i = 0; i < out.h; ++i) {
                for (int j = 0; j < out.w; ++j) {
                    if (!positions.get(i, j)) continue;
                    float* dst = &out.data[(size_t(i) * out.w + j) * oc];
                    for (int o = 0; o < oc; ++o) dst[o] = layer.bias[o];
                    const int cy = i * s, cx = j * s;
                    for (int u = 0; u < k; ++u) {
                        const int y = cy + u - r;
                        if (y < 0 || y >= input.h) continue;
                        for (int v = 0; v < k; ++v) {
                            const int x = cx + v - r;
                            if (x < 0 || x >= input.w) continue;
                            const float* src = &input.data[(size_t(y) * input.w + x) * ic];
                            const size_t wbase = (size_t(u) * k + v) * ic;
                            for (int o = 0; o < oc; ++o) {
                                const float* wp = &layer.weights[(size_t(o) * k * k) * ic + wbase];
                                float acc = 0.0f;
                                for (int ci = 0; ci < ic; ++ci) acc += wp[ci] * src[ci];
                                dst[o] += acc;
                            }
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::kPointwise: {
            const int ic = layer.in_ch, oc = layer.out_ch;
            for (int i = 0; i < out.h; ++i)
                for (int j = 0; j < out.w; ++j) {
                    if (!positions.get(i, j)) continue;
                    const float* src = &input.data[(size_t(i) * input.w + j) * ic];
                    float* dst = &out.data[(size_t(i) * out.w + j) * oc];
                    for (int o = 0; o < oc; ++o) {
                        const float* wp = &layer.weights[size_t(o) * ic];
                        float acc = layer.bias[o];
                        for (int ci = 0; ci < ic; ++ci) acc += wp[ci] * src[ci];
                        dst[o] = acc;
                    }
                }
            break;
        }
        case LayerKind::kActivation: {
            const int ch = layer.out_ch;
            for (int i = 0; i < out.h; ++i)
                for (int j = 0; j < out.w; ++j) {
                    if (!positions.get(i, j)) continue;
                    const float* src = &input.data[(size_t(i) * input.w + j) * ch];
                    float* dst = &out.data[(size_t(i) * out.w + j) * ch];
                    for (int c = 0; c < ch; ++c) {
                        const float x = src[c];
                        dst[c] = layer.act == ActKind::kReLU    ? (x > 0.0f ? x : 0.0f)
                                 : layer.act == ActKind::kLeaky ? (x > 0.0f ? x : 0.1f * x)
                                                                : x;
                    }
                }
            break;
        }
        case LayerKind::kPool: {
            const int ch = layer.out_ch, k = layer.kernel;
            for (int i = 0; i < out.h; ++i)
                for (int j = 0; j < out.w; ++j) {
                    if (!positions.get(i, j)) continue;
                    float* dst = &out.data[(size_t(i) * out.w + j) * ch];
                    for (int c = 0; c < ch; ++c) {
                        float best = -1e30f;
                        for (int u = 0; u < k; ++u) {
                            const int y = i * s + u;
                            if (y >= input.h) continue;
                            for (int v = 0; v < k; ++v) {
                                const int x = j * s + v;
                                if (x >= input.w) continue;
                                best = std::max(best, input.at(y, x, c));
                            }
                        }
                        dst[c] = best;
                    }
                }
            break;
        }
        case LayerKind::kBatchNormAffine: {
            const int ch = layer.out_ch;
            const float* scale = layer.weights.data();
            const float* shift = layer.weights.data() + ch;
            for (int i = 0; i < out.h; ++i)
                for (int j = 0; j < out.w; ++j) {
                    if (!positions.get(i, j)) continue;
                    const float* src = &input.data[(size_t(i) * input.w + j) * ch];
                    float* dst = &out.data[(size_t(i) * out.w + j) * ch];
                    for (int c = 0; c < ch; ++c) dst[c] = scale[c] * src[c] + shift[c];
                }
            break;
        }
    }
}

float weight_l1(const LayerSpec& layer) {
    switch (layer.kind) {
        case LayerKind::kConv: {
            const size_t per_out = size_t(layer.kernel) * layer.kernel * layer.in_ch;
            float worst = 0.0f;
            for (int o = 0; o < layer.out_ch; ++o) {
                float sum = 0.0f;
                for (size_t k = 0; k < per_out; ++k) sum += std::fabs(layer.weights[size_t(o) * per_out + k]);
                worst = std::max(worst, sum);
            }
            return worst;
        }
        case LayerKind::kPointwise: {
            float worst = 0.0f;
            for (int o = 0; o < layer.out_ch; ++o) {
                float sum = 0.0f;
                for (int ci = 0; ci < layer.in_ch; ++ci)
                    sum += std::fabs(layer.weights[size_t(o) * layer.in_ch + ci]);
                worst = std::max(worst, sum);
            }
            return worst;
        }
        case LayerKind::kBatchNormAffine: {
            float worst = 0.0f;
            for (int c = 0; c < layer.out_ch; ++c) worst = std::max(worst, std::fabs(layer.weights[c]));
            return worst;
        }
        case LayerKind::kActivation:
        case LayerKind::kPool:
            return 1.0f;  // 1-Lipschitz
    }
    return 1.0f;
}

NetGeometry effective_geometry(const NetworkSpec& net) {
    NetGeometry g;
    int cum = 1;
    int foot_lo = 0, foot_hi = 0;  // input-res footprint offsets around the anchor
    for (const LayerSpec& layer : net.layers) {
        g.cum_stride_in.push_back(cum);
        foot_lo += layer.win_lo * cum;
        foot_hi += layer.win_hi * cum;
        cum *= layer.stride;
        g.cum_stride_out.push_back(cum);
        g.extent.push_back(foot_hi - foot_lo + 1);
        g.r_max = std::max(g.r_max, g.extent.back());
        g.s_max = std::max(g.s_max, cum);
    }
    return g;
}

double layer_cost_per_position(const NetworkSpec& net, int l) {
    const LayerSpec& layer = net.layers[l];
    switch (layer.kind) {
        case LayerKind::kConv:
            return 2.0 * layer.kernel * layer.kernel * layer.in_ch * layer.out_ch;
        case LayerKind::kPointwise:
            return 2.0 * layer.in_ch * layer.out_ch;
        case LayerKind::kActivation:
            return 1.0 * layer.out_ch;
        case LayerKind::kPool:
            return 1.0 * layer.kernel * layer.kernel * layer.out_ch;
        case LayerKind::kBatchNormAffine:
            return 2.0 * layer.out_ch;
    }
    return 0.0;
}

double dense_cost(const NetworkSpec& net) {
    double total = 0.0;
    for (int l = 0; l < net.num_layers(); ++l)
        total += layer_cost_per_position(net, l) * double(net.grid_h[l]) * net.grid_w[l];
    return total;
}

}  // namespace fluxshard
