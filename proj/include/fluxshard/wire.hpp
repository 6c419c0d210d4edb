#pragma once

#include <cstdint>
#include <vector>

#include "fluxshard/motion.hpp"
#include "fluxshard/tensor.hpp"

namespace fluxshard {

// Offload frame body layout (all little-endian):
//   magic "FSOF" | version u16 | frame_id u64 | H u32 | W u32 | B u16
//   | mv_len u32 | mask_len u32 | px_len u32 | mv | mask | px | CRC32 u32
// CRC covers everything between the magic and the CRC itself. The mv section
// is one int16 (dy,dx) pair per 16x16 block; the mask section is the 2x2
// OR-downsampled recompute set, bit-packed MSB-first; the px section carries
// float32 RGB for every set position of the *upsampled* mask in raster order.
constexpr uint16_t kWireVersion = 1;

enum class WireStatus : uint16_t {
    kOk = 0,
    kDesync = 1,
    kBadRequest = 2,
    kHashMismatch = 3,
};

struct OffloadPayload {
    uint64_t frame_id = 0;
    int h = 0, w = 0;
    int block_size = 16;
    MVField mv;                        // block-granular, may contain kInvalidMv
    std::vector<uint8_t> mask_bytes;   // packed 2x2-downsampled recompute set
    std::vector<float> pixels;         // values at unpacked mask positions
};

// 2x2 OR-downsample then MSB-first bit-pack (mask dims must be even).
std::vector<uint8_t> pack_mask(const RecomputeMask& mask);

// Inverse transport expansion: every set cell becomes a full 2x2 block, so
// the result is a superset of the original recompute set.
RecomputeMask unpack_mask(const std::vector<uint8_t>& bytes, int h, int w);

// Builds the payload for a frame: packs the recompute set, then gathers frame
// values at the unpacked (superset) positions.
OffloadPayload build_payload(uint64_t frame_id, const FeatureMap& frame, const MVField& mv,
                             const RecomputeMask& s0);

std::vector<uint8_t> encode_offload(const OffloadPayload& p);
OffloadPayload decode_offload(const std::vector<uint8_t>& bytes);

// Exact encoded length for a payload with `n_px` transmitted positions —
// kept in closed form so the dispatcher charges precisely what the wire
// carries.
size_t mv_section_bytes(int h, int w, int block_size = 16);
size_t mask_section_bytes(int h, int w);
size_t encoded_offload_size(int h, int w, size_t n_px, int block_size = 16);

// Fraction of a dense uint8 frame (h*w*3 bytes) taken by the MV and mask
// sections together.
double metadata_fraction(int h, int w, int block_size = 16);

// Session hello: magic "FSHI" | client_id u64 | net_config_hash u64.
std::vector<uint8_t> encode_hello(uint64_t client_id, uint64_t net_hash);
void decode_hello(const std::vector<uint8_t>& bytes, uint64_t& client_id, uint64_t& net_hash);

// Hello acknowledgment: magic "FSHA" | status u16 | session_known u8.
std::vector<uint8_t> encode_hello_ack(WireStatus status, bool session_known);
void decode_hello_ack(const std::vector<uint8_t>& bytes, WireStatus& status, bool& session_known);

// Per-frame response:
//   magic "FSRE" | version u16 | status u16 | frame_id u64 | H u32 | W u32
//   | C u32 | compute_ratio f64 | rfap_count u64 | cache_crc u32
//   | output f32 data | CRC32 u32  (CRC covers magic-exclusive body)
struct OffloadResponse {
    WireStatus status = WireStatus::kOk;
    uint64_t frame_id = 0;
    FeatureMap output;
    double compute_ratio = 0.0;
    uint64_t rfap_count = 0;
    uint32_t cache_crc = 0;
};

std::vector<uint8_t> encode_response(const OffloadResponse& r);
OffloadResponse decode_response(const std::vector<uint8_t>& bytes);

}  // namespace fluxshard
