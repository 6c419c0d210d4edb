#include "fluxshard/cache.hpp"

#include <fstream>
#include <stdexcept>

#include "fluxshard/common.hpp"

namespace fluxshard {

SparseValues sparse_from_map(const FeatureMap& map, const RecomputeMask& mask) {
    if (mask.h != map.h || mask.w != map.w)
        throw std::invalid_argument("sparse_from_map: shape mismatch");
    SparseValues out;
    out.channels = map.c;
    for (int i = 0; i < map.h; ++i)
        for (int j = 0; j < map.w; ++j) {
            if (!mask.get(i, j)) continue;
            out.pos.emplace_back(i, j);
            const float* p = &map.data[(size_t(i) * map.w + j) * map.c];
            out.values.insert(out.values.end(), p, p + map.c);
        }
    return out;
}

EndpointCache EndpointCache::make(const NetworkSpec& net) {
    EndpointCache c;
    c.input_cache = FeatureMap(net.in_h, net.in_w, net.in_c);
    for (int l = 0; l < net.num_layers(); ++l)
        c.layer_cache.emplace_back(net.grid_h[l], net.grid_w[l], net.channels[l]);
    c.accum = reset(net.in_h, net.in_w);
    return c;
}

void EndpointCache::seed(const FeatureMap& input, const std::vector<FeatureMap>& outputs,
                         uint64_t frame_id) {
    if (outputs.size() != layer_cache.size())
        throw std::invalid_argument("seed: layer count mismatch");
    input_cache = input;
    layer_cache = outputs;
    accum = reset(input.h, input.w);
    seeded = true;
    last_update_frame = frame_id;
}

uint32_t EndpointCache::crc() const {
    uint32_t c = crc32(reinterpret_cast<const uint8_t*>(input_cache.data.data()),
                       input_cache.data.size() * 4);
    for (const FeatureMap& m : layer_cache)
        c = crc32(reinterpret_cast<const uint8_t*>(m.data.data()), m.data.size() * 4, c);
    return c;
}

void EndpointCache::dump(const std::string& path) const {
    ByteWriter bw;
    bw.magic("FSCS");
    bw.u16(1);
    bw.u64(last_update_frame);
    bw.u8(seeded ? 1 : 0);
    bw.u32(uint32_t(layer_cache.size()) + 1);
    auto put_map = [&bw](const FeatureMap& m) {
        bw.u32(uint32_t(m.h));
        bw.u32(uint32_t(m.w));
        bw.u32(uint32_t(m.c));
        bw.bytes(reinterpret_cast<const uint8_t*>(m.data.data()), m.data.size() * 4);
    };
    put_map(input_cache);
    for (const FeatureMap& m : layer_cache) put_map(m);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out.write(reinterpret_cast<const char*>(bw.buf.data()), std::streamsize(bw.buf.size()));
}

EndpointCache EndpointCache::load(const std::string& path, const NetworkSpec& net) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ByteReader br(buf);
    br.expect_magic("FSCS", "cache snapshot");
    if (br.u16() != 1) throw ProtocolError("unsupported cache snapshot version");
    EndpointCache c = EndpointCache::make(net);
    c.last_update_frame = br.u64();
    c.seeded = br.u8() != 0;
    const uint32_t n_maps = br.u32();
    if (n_maps != uint32_t(net.num_layers()) + 1)
        throw ProtocolError("cache snapshot: layer count mismatch");
    auto get_map = [&br](FeatureMap& m) {
        const int h = int(br.u32()), w = int(br.u32()), ch = int(br.u32());
        if (h != m.h || w != m.w || ch != m.c) throw ProtocolError("cache snapshot: shape mismatch");
        const auto raw = br.bytes(m.data.size() * 4);
        std::memcpy(m.data.data(), raw.data(), raw.size());
    };
    get_map(c.input_cache);
    for (FeatureMap& m : c.layer_cache) get_map(m);
    return c;
}

RemappedCaches remap_cache(const EndpointCache& cache, const AccumMV& field, const NetworkSpec& net) {
    RemappedCaches r;
    auto wi = warp_backward(cache.input_cache, field);
    r.input = std::move(wi.map);
    r.input_oob = std::move(wi.oob);
    const NetGeometry geo = effective_geometry(net);
    for (int l = 0; l < net.num_layers(); ++l) {
        AccumMV f = downsample_field(field, geo.cum_stride_out[l]);
        auto wl = warp_backward(cache.layer_cache[l], f);
        r.layers.push_back(std::move(wl.map));
        r.layer_oob.push_back(std::move(wl.oob));
        r.field_out.push_back(std::move(f));
    }
    return r;
}

FeatureMap merge_cache(const FeatureMap& remapped, const SparseValues& fresh, const RecomputeMask& s) {
    if (s.h != remapped.h || s.w != remapped.w)
        throw std::invalid_argument("merge_cache: mask shape mismatch");
    if (fresh.channels != remapped.c) throw std::invalid_argument("merge_cache: channel mismatch");
    FeatureMap out = remapped;
    RecomputeMask covered(s.h, s.w);
    for (size_t k = 0; k < fresh.pos.size(); ++k) {
        const auto [i, j] = fresh.pos[k];
        if (!remapped.in_bounds(i, j)) throw std::logic_error("merge_cache: fresh position out of bounds");
        if (!s.get(i, j)) throw std::logic_error("merge_cache: fresh value outside the recompute set");
        covered.set(i, j);
        const float* src = &fresh.values[k * size_t(fresh.channels)];
        float* dst = &out.data[(size_t(i) * out.w + j) * out.c];
        std::copy(src, src + fresh.channels, dst);
    }
    if (mask_count(covered) != mask_count(s))
        throw std::logic_error("merge_cache: missing fresh value for a set position");
    return out;
}

}  // namespace fluxshard
