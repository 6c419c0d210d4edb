#include "fluxshard/wire.hpp"

#include <stdexcept>

#include "fluxshard/common.hpp"

namespace fluxshard {

std::vector<uint8_t> pack_mask(const RecomputeMask& mask) {
    if (mask.h % 2 != 0 || mask.w % 2 != 0)
        throw std::invalid_argument("pack_mask: dims must be even");
    const int ch = mask.h / 2, cw = mask.w / 2;
    std::vector<uint8_t> out((size_t(ch) * cw + 7) / 8, 0);
    size_t bit = 0;
    for (int i = 0; i < ch; ++i) {
        for (int j = 0; j < cw; ++j, ++bit) {
            const bool v = mask.get(2 * i, 2 * j) || mask.get(2 * i, 2 * j + 1) ||
                           mask.get(2 * i + 1, 2 * j) || mask.get(2 * i + 1, 2 * j + 1);
            if (v) out[bit / 8] |= uint8_t(0x80u >> (bit % 8));
        }
    }
    return out;
}

RecomputeMask unpack_mask(const std::vector<uint8_t>& bytes, int h, int w) {
    if (h % 2 != 0 || w % 2 != 0) throw std::invalid_argument("unpack_mask: dims must be even");
    const int ch = h / 2, cw = w / 2;
    if (bytes.size() != (size_t(ch) * cw + 7) / 8)
        throw ProtocolError("unpack_mask: byte length mismatch");
    RecomputeMask out(h, w);
    size_t bit = 0;
    for (int i = 0; i < ch; ++i)
        for (int j = 0; j < cw; ++j, ++bit) {
            if (bytes[bit / 8] & (0x80u >> (bit % 8))) {
                out.set(2 * i, 2 * j);
                out.set(2 * i, 2 * j + 1);
                out.set(2 * i + 1, 2 * j);
                out.set(2 * i + 1, 2 * j + 1);
            }
        }
    return out;
}

OffloadPayload build_payload(uint64_t frame_id, const FeatureMap& frame, const MVField& mv,
                             const RecomputeMask& s0) {
    if (frame.c != 3) throw std::invalid_argument("build_payload: transport assumes 3 channels");
    if (s0.h != frame.h || s0.w != frame.w) throw std::invalid_argument("build_payload: mask mismatch");
    OffloadPayload p;
    p.frame_id = frame_id;
    p.h = frame.h;
    p.w = frame.w;
    p.block_size = mv.block_size;
    p.mv = mv;
    p.mask_bytes = pack_mask(s0);
    const RecomputeMask expanded = unpack_mask(p.mask_bytes, frame.h, frame.w);
    p.pixels.reserve(size_t(mask_count(expanded)) * 3);
    for (int i = 0; i < frame.h; ++i)
        for (int j = 0; j < frame.w; ++j) {
            if (!expanded.get(i, j)) continue;
            const float* v = &frame.data[(size_t(i) * frame.w + j) * 3];
            p.pixels.insert(p.pixels.end(), v, v + 3);
        }
    return p;
}

size_t mv_section_bytes(int h, int w, int block_size) {
    return size_t(h / block_size) * size_t(w / block_size) * 4;
}

size_t mask_section_bytes(int h, int w) { return (size_t(h / 2) * size_t(w / 2) + 7) / 8; }

size_t encoded_offload_size(int h, int w, size_t n_px, int block_size) {
    // magic + ver + frame_id + H + W + B + 3 section lengths + sections + crc
    return 4 + 2 + 8 + 4 + 4 + 2 + 12 + mv_section_bytes(h, w, block_size) +
           mask_section_bytes(h, w) + n_px * 12 + 4;
}

double metadata_fraction(int h, int w, int block_size) {
    return double(mv_section_bytes(h, w, block_size) + mask_section_bytes(h, w)) /
           (double(h) * double(w) * 3.0);
}

std::vector<uint8_t> encode_offload(const OffloadPayload& p) {
    if (p.h % 2 != 0 || p.w % 2 != 0) throw std::invalid_argument("encode_offload: dims must be even");
    if (p.mv.grid_h * p.mv.block_size != p.h || p.mv.grid_w * p.mv.block_size != p.w)
        throw std::invalid_argument("encode_offload: mv grid mismatch");
    if (p.mask_bytes.size() != mask_section_bytes(p.h, p.w))
        throw std::invalid_argument("encode_offload: mask length mismatch");
    if (p.pixels.size() % 3 != 0) throw std::invalid_argument("encode_offload: pixel count not 3-channel");

    ByteWriter body;
    body.u16(kWireVersion);
    body.u64(p.frame_id);
    body.u32(uint32_t(p.h));
    body.u32(uint32_t(p.w));
    body.u16(uint16_t(p.block_size));
    body.u32(uint32_t(p.mv.dy.size() * 4));
    body.u32(uint32_t(p.mask_bytes.size()));
    body.u32(uint32_t(p.pixels.size() * 4));
    for (size_t k = 0; k < p.mv.dy.size(); ++k) {
        body.i16(p.mv.dy[k]);
        body.i16(p.mv.dx[k]);
    }
    body.bytes(p.mask_bytes);
    for (float v : p.pixels) body.f32(v);

    ByteWriter out;
    out.magic("FSOF");
    out.bytes(body.buf);
    out.u32(crc32(body.buf));
    return out.buf;
}

OffloadPayload decode_offload(const std::vector<uint8_t>& bytes) {
    ByteReader br(bytes);
    br.expect_magic("FSOF", "offload frame");
    if (br.remaining() < 4) throw ProtocolError("offload frame: truncated");
    const size_t body_len = br.remaining() - 4;
    const uint32_t want = crc32(bytes.data() + 4, body_len);
    const uint32_t got = uint32_t(bytes[4 + body_len]) | uint32_t(bytes[5 + body_len]) << 8 |
                         uint32_t(bytes[6 + body_len]) << 16 | uint32_t(bytes[7 + body_len]) << 24;
    if (want != got) throw ProtocolError("offload frame: CRC mismatch");

    OffloadPayload p;
    const uint16_t ver = br.u16();
    if (ver != kWireVersion) throw ProtocolError("offload frame: unsupported version");
    p.frame_id = br.u64();
    p.h = int(br.u32());
    p.w = int(br.u32());
    p.block_size = br.u16();
    const uint32_t mv_len = br.u32(), mask_len = br.u32(), px_len = br.u32();
    if (p.h <= 0 || p.w <= 0 || p.block_size <= 0 || p.h % p.block_size != 0 || p.w % p.block_size != 0)
        throw ProtocolError("offload frame: bad dims");
    if (mv_len != mv_section_bytes(p.h, p.w, p.block_size))
        throw ProtocolError("offload frame: mv section length mismatch");
    if (mask_len != mask_section_bytes(p.h, p.w))
        throw ProtocolError("offload frame: mask section length mismatch");
    if (px_len % 12 != 0) throw ProtocolError("offload frame: pixel section not 3-channel float");
    if (4 + 2 + 8 + 4 + 4 + 2 + 12 + size_t(mv_len) + mask_len + px_len + 4 != bytes.size())
        throw ProtocolError("offload frame: total length mismatch");

    p.mv = MVField(p.h / p.block_size, p.w / p.block_size, p.block_size);
    for (size_t k = 0; k < p.mv.dy.size(); ++k) {
        p.mv.dy[k] = br.i16();
        p.mv.dx[k] = br.i16();
    }
    p.mask_bytes = br.bytes(mask_len);
    p.pixels.resize(px_len / 4);
    for (float& v : p.pixels) v = br.f32();

    // The pixel count must match the transported mask exactly.
    const RecomputeMask expanded = unpack_mask(p.mask_bytes, p.h, p.w);
    if (p.pixels.size() != size_t(mask_count(expanded)) * 3)
        throw ProtocolError("offload frame: pixel count does not match mask");
    return p;
}

std::vector<uint8_t> encode_hello(uint64_t client_id, uint64_t net_hash) {
    ByteWriter bw;
    bw.magic("FSHI");
    bw.u64(client_id);
    bw.u64(net_hash);
    return bw.buf;
}

void decode_hello(const std::vector<uint8_t>& bytes, uint64_t& client_id, uint64_t& net_hash) {
    ByteReader br(bytes);
    br.expect_magic("FSHI", "hello");
    client_id = br.u64();
    net_hash = br.u64();
    if (br.remaining() != 0) throw ProtocolError("hello: trailing bytes");
}

std::vector<uint8_t> encode_hello_ack(WireStatus status, bool session_known) {
    ByteWriter bw;
    bw.magic("FSHA");
    bw.u16(uint16_t(status));
    bw.u8(session_known ? 1 : 0);
    return bw.buf;
}

void decode_hello_ack(const std::vector<uint8_t>& bytes, WireStatus& status, bool& session_known) {
    ByteReader br(bytes);
    br.expect_magic("FSHA", "hello ack");
    status = WireStatus(br.u16());
    session_known = br.u8() != 0;
    if (br.remaining() != 0) throw ProtocolError("hello ack: trailing bytes");
}

std::vector<uint8_t> encode_response(const OffloadResponse& r) {
    ByteWriter body;
    body.u16(kWireVersion);
    body.u16(uint16_t(r.status));
    body.u64(r.frame_id);
    body.u32(uint32_t(r.output.h));
    body.u32(uint32_t(r.output.w));
    body.u32(uint32_t(r.output.c));
    body.f64(r.compute_ratio);
    body.u64(r.rfap_count);
    body.u32(r.cache_crc);
    for (float v : r.output.data) body.f32(v);

    ByteWriter out;
    out.magic("FSRE");
    out.bytes(body.buf);
    out.u32(crc32(body.buf));
    return out.buf;
}

OffloadResponse decode_response(const std::vector<uint8_t>& bytes) {
    ByteReader br(bytes);
    br.expect_magic("FSRE", "offload response");
    if (br.remaining() < 4) throw ProtocolError("offload response: truncated");
    const size_t body_len = br.remaining() - 4;
    const uint32_t want = crc32(bytes.data() + 4, body_len);
    const uint32_t got = uint32_t(bytes[4 + body_len]) | uint32_t(bytes[5 + body_len]) << 8 |
                         uint32_t(bytes[6 + body_len]) << 16 | uint32_t(bytes[7 + body_len]) << 24;
    if (want != got) throw ProtocolError("offload response: CRC mismatch");

    OffloadResponse r;
    if (br.u16() != kWireVersion) throw ProtocolError("offload response: unsupported version");
    r.status = WireStatus(br.u16());
    r.frame_id = br.u64();
    const int h = int(br.u32()), w = int(br.u32()), c = int(br.u32());
    r.compute_ratio = br.f64();
    r.rfap_count = br.u64();
    r.cache_crc = br.u32();
    if (h < 0 || w < 0 || c < 0) throw ProtocolError("offload response: bad dims");
    // The reader still holds the trailing CRC word alongside the sample data.
    if (br.remaining() != size_t(h) * w * c * 4 + 4)
        throw ProtocolError("offload response: length mismatch");
    if (h > 0) {
        r.output = FeatureMap(h, w, c);
        for (float& v : r.output.data) v = br.f32();
    }
    return r;
}

}  // namespace fluxshard
