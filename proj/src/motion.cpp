#include "fluxshard/motion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include "fluxshard/common.hpp"

namespace fluxshard {

namespace {

// All displacements in the search window, ordered by (|dy|+|dx|, dy, dx) so a
// strictly-improving scan realizes the documented tie-break for free.
std::vector<std::pair<int, int>> ordered_offsets(int radius) {
    std::vector<std::pair<int, int>> offs;
    offs.reserve(size_t(2 * radius + 1) * (2 * radius + 1));
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) offs.emplace_back(dy, dx);
    std::sort(offs.begin(), offs.end(), [](const auto& a, const auto& b) {
        const int ma = std::abs(a.first) + std::abs(a.second);
        const int mb = std::abs(b.first) + std::abs(b.second);
        if (ma != mb) return ma < mb;
        if (a.first != b.first) return a.first < b.first;
        return a.second < b.second;
    });
    return offs;
}

}  // namespace

MVField estimate_mv(const FeatureMap& cur, const FeatureMap& ref, int block_size, int search_radius) {
    if (!cur.same_shape(ref)) throw std::invalid_argument("estimate_mv: frame shape mismatch");
    if (block_size <= 0 || search_radius < 0) throw std::invalid_argument("estimate_mv: bad parameters");
    if (cur.h % block_size != 0 || cur.w % block_size != 0)
        throw std::invalid_argument("estimate_mv: dims must be divisible by block size");

    const int gh = cur.h / block_size, gw = cur.w / block_size;
    MVField out(gh, gw, block_size);
    const auto offs = ordered_offsets(search_radius);

    for (int bi = 0; bi < gh; ++bi) {
        for (int bj = 0; bj < gw; ++bj) {
            const int y0 = bi * block_size, x0 = bj * block_size;
            double best = 1e300;
            int best_dy = 0, best_dx = 0;
            for (const auto& [dy, dx] : offs) {
                const int ry = y0 - dy, rx = x0 - dx;
                if (ry < 0 || rx < 0 || ry + block_size > ref.h || rx + block_size > ref.w) continue;
                double sad = 0.0;
                for (int u = 0; u < block_size && sad < best; ++u) {
                    const float* cp = &cur.data[(size_t(y0 + u) * cur.w + x0) * cur.c];
                    const float* rp = &ref.data[(size_t(ry + u) * ref.w + rx) * ref.c];
                    const int row = block_size * cur.c;
                    for (int k = 0; k < row; ++k) sad += std::fabs(double(cp[k]) - double(rp[k]));
                }
                if (sad < best) {
                    best = sad;
                    best_dy = dy;
                    best_dx = dx;
                }
            }
            out.set(bi, bj, int16_t(best_dy), int16_t(best_dx));
        }
    }
    return out;
}

AccumMV accumulate(const AccumMV& acc, const MVField& next) {
    if (acc.h != next.grid_h * next.block_size || acc.w != next.grid_w * next.block_size)
        throw std::invalid_argument("accumulate: field dims mismatch");
    AccumMV out(acc.h, acc.w);
    for (int i = 0; i < acc.h; ++i) {
        for (int j = 0; j < acc.w; ++j) {
            int ndy, ndx;
            next.at_pixel(i, j, ndy, ndx);
            const int si = i - ndy, sj = j - ndx;
            int32_t dy, dx;
            bool src_ok;
            if (acc.in_bounds(si, sj) && acc.is_valid(si, sj)) {
                dy = acc.dy[acc.idx(si, sj)] + ndy;
                dx = acc.dx[acc.idx(si, sj)] + ndx;
                src_ok = true;
            } else {
                dy = ndy;
                dx = ndx;
                src_ok = false;
            }
            const size_t k = out.idx(i, j);
            out.dy[k] = dy;
            out.dx[k] = dx;
            out.valid[k] = (src_ok && out.in_bounds(i - dy, j - dx)) ? 1 : 0;
        }
    }
    return out;
}

AccumMV reset(int h, int w) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("reset: dims must be positive");
    return AccumMV(h, w);
}

AccumMV downsample_field(const AccumMV& acc, int s) {
    if (s <= 0) throw std::invalid_argument("downsample_field: stride must be positive");
    if (s == 1) return acc;
    if (acc.h % s != 0 || acc.w % s != 0)
        throw std::invalid_argument("downsample_field: dims not divisible by stride");
    AccumMV out(acc.h / s, acc.w / s);
    for (int i = 0; i < out.h; ++i) {
        for (int j = 0; j < out.w; ++j) {
            const size_t src = acc.idx(i * s, j * s);
            const int32_t dy = acc.dy[src], dx = acc.dx[src];
            const size_t k = out.idx(i, j);
            out.dy[k] = dy / s;  // trunc toward zero
            out.dx[k] = dx / s;
            out.valid[k] = (acc.valid[src] && dy % s == 0 && dx % s == 0) ? 1 : 0;
        }
    }
    return out;
}

WarpResult warp_backward(const FeatureMap& src, const AccumMV& field) {
    if (src.h != field.h || src.w != field.w)
        throw std::invalid_argument("warp_backward: field dims mismatch");
    WarpResult r{FeatureMap(src.h, src.w, src.c), RecomputeMask(src.h, src.w)};
    for (int i = 0; i < src.h; ++i) {
        for (int j = 0; j < src.w; ++j) {
            const size_t k = field.idx(i, j);
            const int si = i - field.dy[k], sj = j - field.dx[k];
            const bool ok = field.valid[k] && src.in_bounds(si, sj);
            const float* from = &src.data[(size_t(ok ? si : i) * src.w + (ok ? sj : j)) * src.c];
            float* to = &r.map.data[(size_t(i) * src.w + j) * src.c];
            std::copy(from, from + src.c, to);
            if (!ok) r.oob.set(i, j);
        }
    }
    return r;
}

MVField blockify(const AccumMV& acc, int block_size) {
    if (acc.h % block_size != 0 || acc.w % block_size != 0)
        throw std::invalid_argument("blockify: dims not divisible by block size");
    MVField out(acc.h / block_size, acc.w / block_size, block_size);
    for (int bi = 0; bi < out.grid_h; ++bi) {
        for (int bj = 0; bj < out.grid_w; ++bj) {
            const size_t first = acc.idx(bi * block_size, bj * block_size);
            const int32_t dy0 = acc.dy[first], dx0 = acc.dx[first];
            bool uniform = true;
            for (int u = 0; u < block_size && uniform; ++u) {
                for (int v = 0; v < block_size; ++v) {
                    const size_t k = acc.idx(bi * block_size + u, bj * block_size + v);
                    if (!acc.valid[k] || acc.dy[k] != dy0 || acc.dx[k] != dx0) {
                        uniform = false;
                        break;
                    }
                }
            }
            if (uniform && std::abs(dy0) < 32768 && std::abs(dx0) < 32768)
                out.set(bi, bj, int16_t(dy0), int16_t(dx0));
            else
                out.set(bi, bj, kInvalidMv, kInvalidMv);
        }
    }
    return out;
}

AccumMV expand_blocks(const MVField& field, int h, int w) {
    if (h != field.grid_h * field.block_size || w != field.grid_w * field.block_size)
        throw std::invalid_argument("expand_blocks: dims mismatch");
    AccumMV out(h, w);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            int dy, dx;
            field.at_pixel(i, j, dy, dx);
            const size_t k = out.idx(i, j);
            if (dy == kInvalidMv) {
                out.dy[k] = 0;
                out.dx[k] = 0;
                out.valid[k] = 0;
            } else {
                out.dy[k] = dy;
                out.dx[k] = dx;
                out.valid[k] = out.in_bounds(i - dy, j - dx) ? 1 : 0;
            }
        }
    }
    return out;
}

std::pair<int16_t, int16_t> modal_mv(const MVField& field) {
    std::map<std::pair<int16_t, int16_t>, int> counts;
    for (size_t k = 0; k < field.dy.size(); ++k)
        if (field.dy[k] != kInvalidMv) counts[{field.dy[k], field.dx[k]}]++;
    std::pair<int16_t, int16_t> best{0, 0};
    int best_n = -1;
    for (const auto& [mv, n] : counts) {
        if (n > best_n) {
            best = mv;
            best_n = n;
            continue;
        }
        if (n < best_n) continue;
        const int ma = std::abs(mv.first) + std::abs(mv.second);
        const int mb = std::abs(best.first) + std::abs(best.second);
        if (ma < mb || (ma == mb && (mv.first < best.first ||
                                     (mv.first == best.first && mv.second < best.second))))
            best = mv;
    }
    return best;
}

MVField uniform_field(const MVField& like, int16_t dy, int16_t dx) {
    MVField out(like.grid_h, like.grid_w, like.block_size);
    std::fill(out.dy.begin(), out.dy.end(), dy);
    std::fill(out.dx.begin(), out.dx.end(), dx);
    return out;
}

void save_mv_field(const MVField& f, const std::string& path) {
    ByteWriter bw;
    bw.magic("FSMV");
    bw.u16(1);
    bw.u16(uint16_t(f.block_size));
    bw.u32(uint32_t(f.grid_h));
    bw.u32(uint32_t(f.grid_w));
    for (size_t k = 0; k < f.dy.size(); ++k) {
        bw.i16(f.dy[k]);
        bw.i16(f.dx[k]);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out.write(reinterpret_cast<const char*>(bw.buf.data()), std::streamsize(bw.buf.size()));
}

MVField load_mv_field(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ByteReader br(buf);
    br.expect_magic("FSMV", "mv field file");
    const uint16_t ver = br.u16();
    if (ver != 1) throw ProtocolError("unsupported mv field file version");
    MVField f(0, 0);
    f.block_size = br.u16();
    f.grid_h = int(br.u32());
    f.grid_w = int(br.u32());
    if (f.block_size <= 0 || f.grid_h <= 0 || f.grid_w <= 0)
        throw ProtocolError("mv field file: bad dims");
    const size_t n = size_t(f.grid_h) * f.grid_w;
    if (br.remaining() != n * 4) throw ProtocolError("mv field file: length mismatch");
    f.dy.resize(n);
    f.dx.resize(n);
    for (size_t k = 0; k < n; ++k) {
        f.dy[k] = br.i16();
        f.dx[k] = br.i16();
    }
    return f;
}

}  // namespace fluxshard
