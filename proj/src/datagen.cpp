#include "fluxshard/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "fluxshard/common.hpp"

namespace fluxshard {

namespace {

struct Rect2 {
    int y0, x0, y1, x1;  // half-open
    bool contains(int y, int x) const { return y >= y0 && y < y1 && x >= x0 && x < x1; }
};

Rect2 occluder_rect(int h, int w, int half) {
    return {std::max(0, h / 2 - half), std::max(0, w / 2 - half), std::min(h, h / 2 + half),
            std::min(w, w / 2 + half)};
}

uint64_t stream_seed(uint64_t seed, const char* name) { return seed ^ fnv1a64(name, 2); }

}  // namespace

FeatureMap noise_canvas(int h, int w, int c, uint64_t seed) {
    const int cell = 8;
    const int gh = h / cell + 2, gw = w / cell + 2;
    Rng rng(seed);
    std::vector<float> lattice(size_t(gh) * gw * c);
    for (float& v : lattice) v = float(rng.next_unit());

    FeatureMap out(h, w, c);
    Rng white(seed ^ 0x5DEECE66DULL);
    for (int i = 0; i < h; ++i) {
        const int gi = i / cell;
        const float fy = float(i % cell) / cell;
        for (int j = 0; j < w; ++j) {
            const int gj = j / cell;
            const float fx = float(j % cell) / cell;
            for (int ch = 0; ch < c; ++ch) {
                auto lat = [&](int y, int x) {
                    return lattice[(size_t(y) * gw + x) * c + ch];
                };
                const float top = lat(gi, gj) * (1 - fx) + lat(gi, gj + 1) * fx;
                const float bot = lat(gi + 1, gj) * (1 - fx) + lat(gi + 1, gj + 1) * fx;
                const float smooth = top * (1 - fy) + bot * fy;
                const float v = 0.7f * smooth + 0.3f * float(white.next_unit());
                out.at(i, j, ch) = std::clamp(v, 0.0f, 1.0f);
            }
        }
    }
    return out;
}

GeneratedSequence generate_scenario(const ScenarioSpec& spec) {
    if (spec.frames < 1) throw ConfigError("scenario needs at least one frame");
    if (spec.h % 16 != 0 || spec.w % 16 != 0)
        throw ConfigError("scenario dims must be multiples of 16");
    const bool known = spec.name == "static" || spec.name == "pan" ||
                       spec.name == "two_region" || spec.name == "reveal" ||
                       spec.name == "scramble";
    if (!known) throw ConfigError("unknown scenario: " + spec.name);

    const int h = spec.h, w = spec.w, c = spec.c, block = 16;
    const int gh = h / block, gw = w / block;
    GeneratedSequence seq;
    seq.spec = spec;

    const int rate = std::max({std::abs(spec.dy), std::abs(spec.dx), std::abs(spec.fg_dy),
                               std::abs(spec.fg_dx)});
    const int margin = spec.name == "scramble" ? spec.jitter + 8 : spec.frames * rate + 8;
    const FeatureMap canvas = noise_canvas(h + 2 * margin, w + 2 * margin, c, spec.seed);

    if (spec.name == "static" || spec.name == "pan") {
        const int dy = spec.name == "static" ? 0 : spec.dy;
        const int dx = spec.name == "static" ? 0 : spec.dx;
        for (int t = 0; t < spec.frames; ++t) {
            FeatureMap f(h, w, c);
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j)
                    for (int ch = 0; ch < c; ++ch)
                        f.at(i, j, ch) = canvas.at(margin + i - t * dy, margin + j - t * dx, ch);
            seq.frames.push_back(std::move(f));
            if (t > 0) {
                MVField mv(gh, gw, block);
                for (size_t k = 0; k < mv.dy.size(); ++k) {
                    mv.dy[k] = int16_t(dy);
                    mv.dx[k] = int16_t(dx);
                }
                seq.true_motion.push_back(std::move(mv));
            }
        }
        return seq;
    }

    if (spec.name == "two_region") {
        const FeatureMap fg_canvas =
            noise_canvas(h + 2 * margin, w + 2 * margin, c, stream_seed(spec.seed, "fg"));
        // Deliberately not block-aligned so seam blocks mix both motions.
        const Rect2 box{h / 4 + 5, w / 4 + 5, h / 4 + 5 + h / 2, w / 4 + 5 + w / 2};
        for (int t = 0; t < spec.frames; ++t) {
            FeatureMap f(h, w, c);
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    const bool fg = box.contains(i, j);
                    const int sy = fg ? margin + i - t * spec.fg_dy : margin + i - t * spec.dy;
                    const int sx = fg ? margin + j - t * spec.fg_dx : margin + j - t * spec.dx;
                    for (int ch = 0; ch < c; ++ch)
                        f.at(i, j, ch) = (fg ? fg_canvas : canvas).at(sy, sx, ch);
                }
            seq.frames.push_back(std::move(f));
            if (t > 0) {
                MVField mv(gh, gw, block);
                for (int bi = 0; bi < gh; ++bi)
                    for (int bj = 0; bj < gw; ++bj) {
                        const int y0 = bi * block, x0 = bj * block;
                        int inside = 0;
                        for (int i = y0; i < y0 + block; ++i)
                            for (int j = x0; j < x0 + block; ++j)
                                inside += box.contains(i, j) ? 1 : 0;
                        if (inside == 0)
                            mv.set(bi, bj, int16_t(spec.dy), int16_t(spec.dx));
                        else if (inside == block * block)
                            mv.set(bi, bj, int16_t(spec.fg_dy), int16_t(spec.fg_dx));
                        else
                            mv.set(bi, bj, kInvalidMv, kInvalidMv);
                    }
                seq.true_motion.push_back(std::move(mv));
            }
        }
        return seq;
    }

    if (spec.name == "reveal") {
        const FeatureMap occ =
            noise_canvas(h, w, c, stream_seed(spec.seed, "oc"));
        auto rect_at = [&](int t) { return occluder_rect(h, w, 8 + t * spec.grow); };
        for (int t = 0; t < spec.frames; ++t) {
            const Rect2 r = rect_at(t);
            FeatureMap f(h, w, c);
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j)
                    for (int ch = 0; ch < c; ++ch)
                        f.at(i, j, ch) = r.contains(i, j) ? occ.at(i, j, ch)
                                                          : canvas.at(margin + i, margin + j, ch);
            seq.frames.push_back(std::move(f));
            if (t > 0) {
                const Rect2 prev = rect_at(t - 1);
                MVField mv(gh, gw, block);
                for (int bi = 0; bi < gh; ++bi)
                    for (int bj = 0; bj < gw; ++bj) {
                        bool changed = false;
                        for (int i = bi * block; i < (bi + 1) * block && !changed; ++i)
                            for (int j = bj * block; j < (bj + 1) * block && !changed; ++j)
                                changed = r.contains(i, j) != prev.contains(i, j);
                        if (changed) mv.set(bi, bj, kInvalidMv, kInvalidMv);
                    }
                seq.true_motion.push_back(std::move(mv));
            }
        }
        return seq;
    }

    // scramble: per-block absolute offsets a_t within +-jitter; successive
    // frames re-draw them, so block content translates by a_{t-1} - a_t.
    Rng rng(stream_seed(spec.seed, "sc"));
    std::vector<int> ay(size_t(gh) * gw, 0), ax(size_t(gh) * gw, 0);
    for (int t = 0; t < spec.frames; ++t) {
        std::vector<int> ny(ay.size()), nx(ax.size());
        for (size_t k = 0; k < ny.size(); ++k) {
            ny[k] = t == 0 ? 0 : int(rng.next_int(-spec.jitter, spec.jitter));
            nx[k] = t == 0 ? 0 : int(rng.next_int(-spec.jitter, spec.jitter));
        }
        FeatureMap f(h, w, c);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                const size_t k = size_t(i / block) * gw + (j / block);
                for (int ch = 0; ch < c; ++ch)
                    f.at(i, j, ch) = canvas.at(margin + i + ny[k], margin + j + nx[k], ch);
            }
        seq.frames.push_back(std::move(f));
        if (t > 0) {
            MVField mv(gh, gw, block);
            for (size_t k = 0; k < ny.size(); ++k) {
                mv.dy[k] = int16_t(ay[k] - ny[k]);
                mv.dx[k] = int16_t(ax[k] - nx[k]);
            }
            seq.true_motion.push_back(std::move(mv));
        }
        ay.swap(ny);
        ax.swap(nx);
    }
    return seq;
}

void save_frame(const FeatureMap& map, const std::string& path) {
    ByteWriter w;
    w.magic("FSFM");
    w.u16(1);
    w.u32(uint32_t(map.h));
    w.u32(uint32_t(map.w));
    w.u32(uint32_t(map.c));
    for (float v : map.data) w.f32(v);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write frame file: " + path);
    out.write(reinterpret_cast<const char*>(w.buf.data()), std::streamsize(w.buf.size()));
}

FeatureMap load_frame(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open frame file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    ByteReader r(bytes);
    r.expect_magic("FSFM", "frame file");
    if (r.u16() != 1) throw ProtocolError(path + ": unsupported frame version");
    const int h = int(r.u32()), w = int(r.u32()), c = int(r.u32());
    if (h <= 0 || w <= 0 || c <= 0) throw ProtocolError(path + ": bad dims");
    if (r.remaining() != size_t(h) * w * c * 4)
        throw ProtocolError(path + ": length mismatch");
    FeatureMap map(h, w, c);
    for (float& v : map.data) v = r.f32();
    return map;
}

void write_scenario(const ScenarioSpec& spec, const std::string& dir) {
    const GeneratedSequence seq = generate_scenario(spec);
    std::filesystem::create_directories(dir);

    nlohmann::ordered_json manifest;
    manifest["scenario"] = spec.name;
    manifest["frames"] = spec.frames;
    manifest["h"] = spec.h;
    manifest["w"] = spec.w;
    manifest["c"] = spec.c;
    manifest["seed"] = spec.seed;
    manifest["block_size"] = 16;
    manifest["params"] = {{"dy", spec.dy},         {"dx", spec.dx},   {"fg_dy", spec.fg_dy},
                          {"fg_dx", spec.fg_dx},   {"jitter", spec.jitter},
                          {"grow", spec.grow}};

    std::vector<std::string> files;
    for (int t = 0; t < spec.frames; ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04d.fsfm", t);
        files.emplace_back(name);
        save_frame(seq.frames[t], dir + "/" + name);
    }
    manifest["frame_files"] = files;

    nlohmann::ordered_json motion = nlohmann::ordered_json::array();
    for (const MVField& mv : seq.true_motion) {
        nlohmann::ordered_json grid = nlohmann::ordered_json::array();
        for (size_t k = 0; k < mv.dy.size(); ++k)
            grid.push_back({int(mv.dy[k]), int(mv.dx[k])});
        motion.push_back(grid);
    }
    manifest["true_motion"] = motion;

    std::ofstream out(dir + "/manifest.json");
    if (!out) throw ConfigError("cannot write manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

GeneratedSequence load_scenario(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw ConfigError("cannot open manifest in " + dir);
    nlohmann::json manifest;
    in >> manifest;

    GeneratedSequence seq;
    seq.spec.name = manifest.at("scenario").get<std::string>();
    seq.spec.frames = manifest.at("frames").get<int>();
    seq.spec.h = manifest.at("h").get<int>();
    seq.spec.w = manifest.at("w").get<int>();
    seq.spec.c = manifest.at("c").get<int>();
    seq.spec.seed = manifest.at("seed").get<uint64_t>();
    const auto& params = manifest.at("params");
    seq.spec.dy = params.at("dy").get<int>();
    seq.spec.dx = params.at("dx").get<int>();
    seq.spec.fg_dy = params.at("fg_dy").get<int>();
    seq.spec.fg_dx = params.at("fg_dx").get<int>();
    seq.spec.jitter = params.at("jitter").get<int>();
    seq.spec.grow = params.at("grow").get<int>();

    for (const auto& name : manifest.at("frame_files"))
        seq.frames.push_back(load_frame(dir + "/" + name.get<std::string>()));

    const int gh = seq.spec.h / 16, gw = seq.spec.w / 16;
    for (const auto& grid : manifest.at("true_motion")) {
        MVField mv(gh, gw, 16);
        if (int(grid.size()) != gh * gw)
            throw ConfigError(dir + ": true_motion grid size mismatch");
        for (int k = 0; k < gh * gw; ++k) {
            mv.dy[size_t(k)] = int16_t(grid[k][0].get<int>());
            mv.dx[size_t(k)] = int16_t(grid[k][1].get<int>());
        }
        seq.true_motion.push_back(std::move(mv));
    }
    return seq;
}

double motion_std(const std::vector<MVField>& true_motion) {
    double sum = 0.0, sq = 0.0;
    size_t n = 0;
    for (const MVField& mv : true_motion)
        for (size_t k = 0; k < mv.dy.size(); ++k) {
            if (mv.dy[k] == kInvalidMv || mv.dx[k] == kInvalidMv) continue;
            for (const double v : {double(mv.dy[k]), double(mv.dx[k])}) {
                sum += v;
                sq += v * v;
                ++n;
            }
        }
    if (n == 0) return 0.0;
    const double mean = sum / double(n);
    const double var = sq / double(n) - mean * mean;
    return var > 0.0 ? std::sqrt(var) : 0.0;
}

}  // namespace fluxshard
