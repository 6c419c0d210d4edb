#include <cstdio>
#include <stdexcept>

#include "doctest.h"
#include "fluxshard/common.hpp"
#include "fluxshard/motion.hpp"
#include "helpers.hpp"

using namespace fluxshard;

TEST_CASE("block matching recovers a global integer shift exactly") {
    const auto [prev, cur] = testutil::shifted_pair(64, 64, 1, 11, 2, 1, 8);
    const MVField f = estimate_mv(cur, prev, 16, 4);
    REQUIRE(f.grid_h == 4);
    REQUIRE(f.grid_w == 4);
    // Blocks whose true reference window lies fully inside the previous frame
    // must match it exactly (independent noise: zero SAD is unique).
    for (int bi = 1; bi < 4; ++bi)
        for (int bj = 1; bj < 4; ++bj) {
            CHECK(f.dy_at(bi, bj) == 2);
            CHECK(f.dx_at(bi, bj) == 1);
        }
}

TEST_CASE("block matching of identical frames settles on zero displacement") {
    const FeatureMap frame = testutil::noise_map(32, 32, 3, 3);
    const MVField f = estimate_mv(frame, frame, 16, 3);
    for (int bi = 0; bi < 2; ++bi)
        for (int bj = 0; bj < 2; ++bj) {
            CHECK(f.dy_at(bi, bj) == 0);  // zero SAD ties break toward |dy|+|dx| = 0
            CHECK(f.dx_at(bi, bj) == 0);
        }
}

TEST_CASE("accumulate composes displacements and tracks validity") {
    AccumMV acc = reset(32, 32);
    MVField step1(2, 2, 16);
    for (int b = 0; b < 4; ++b) {
        step1.dy[size_t(b)] = 1;
        step1.dx[size_t(b)] = 2;
    }
    acc = accumulate(acc, step1);
    CHECK(acc.dy[acc.idx(5, 5)] == 1);
    CHECK(acc.dx[acc.idx(5, 5)] == 2);
    CHECK(acc.is_valid(5, 5));
    // (0,0) looks up source (-1,-2): out of bounds, falls back to the step
    // value and is marked invalid.
    CHECK(!acc.is_valid(0, 0));
    CHECK(acc.dy[acc.idx(0, 0)] == 1);

    MVField step2(2, 2, 16);
    for (int b = 0; b < 4; ++b) {
        step2.dy[size_t(b)] = 2;
        step2.dx[size_t(b)] = -1;
    }
    const AccumMV acc2 = accumulate(acc, step2);
    // (10,10) <- acc(8,11)=(1,2) valid, composed = (3,1), target (7,9) in bounds.
    CHECK(acc2.dy[acc2.idx(10, 10)] == 3);
    CHECK(acc2.dx[acc2.idx(10, 10)] == 1);
    CHECK(acc2.is_valid(10, 10));
    // (2,31) looks up (0,32): out of bounds.
    CHECK(!acc2.is_valid(2, 31));
    CHECK(acc2.dy[acc2.idx(2, 31)] == 2);
    // (2,5) looks up (0,6), which step1 left invalid: invalid propagates.
    CHECK(!acc2.is_valid(2, 5));
}

TEST_CASE("accumulate treats the sentinel block as incoherent") {
    AccumMV acc = reset(32, 32);
    MVField step(2, 2, 16);
    step.set(0, 0, kInvalidMv, kInvalidMv);
    const AccumMV out = accumulate(acc, step);
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j) CHECK(!out.is_valid(i, j));
    CHECK(out.is_valid(20, 20));  // other blocks unaffected
}

TEST_CASE("accumulate rejects mismatched dims") {
    CHECK_THROWS_AS(accumulate(reset(32, 32), MVField(1, 2, 16)), std::invalid_argument);
}

TEST_CASE("blockify collapses uniform blocks and flags mixed ones") {
    AccumMV acc(32, 32);
    // block (0,0): uniform (1,1); block (0,1): uniform (2,0);
    // block (1,0): mixed; block (1,1): uniform but one pixel invalid.
    for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j) {
            const size_t k = acc.idx(i, j);
            if (i < 16 && j < 16) {
                acc.dy[k] = 1;
                acc.dx[k] = 1;
            } else if (i < 16) {
                acc.dy[k] = 2;
                acc.dx[k] = 0;
            } else if (j < 16) {
                acc.dy[k] = (i + j) % 2;
                acc.dx[k] = 0;
            } else {
                acc.dy[k] = 3;
                acc.dx[k] = 3;
            }
        }
    acc.valid[acc.idx(20, 20)] = 0;

    const MVField f = blockify(acc, 16);
    CHECK(f.dy_at(0, 0) == 1);
    CHECK(f.dx_at(0, 0) == 1);
    CHECK(f.dy_at(0, 1) == 2);
    CHECK(f.dx_at(0, 1) == 0);
    CHECK(f.dy_at(1, 0) == kInvalidMv);
    CHECK(f.dy_at(1, 1) == kInvalidMv);
}

TEST_CASE("expand_blocks re-applies the bounds rule") {
    MVField f(2, 2, 16);
    f.set(0, 0, 1, 1);
    f.set(0, 1, 2, 0);
    f.set(1, 0, kInvalidMv, kInvalidMv);
    f.set(1, 1, 3, 3);
    const AccumMV acc = expand_blocks(f, 32, 32);
    CHECK(acc.is_valid(5, 5));
    CHECK(acc.dy[acc.idx(5, 5)] == 1);
    CHECK(!acc.is_valid(0, 0));  // backward target (-1,-1) out of frame
    CHECK(!acc.is_valid(20, 5));  // sentinel block
    CHECK(acc.is_valid(20, 20));
    CHECK(acc.dx[acc.idx(20, 20)] == 3);
}

TEST_CASE("blockify then expand round-trips a block-uniform field") {
    // Displacements chosen so every backward target stays in frame: each
    // block is uniformly valid, which is what the coarsening preserves.
    AccumMV acc(32, 32);
    for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j) {
            const size_t k = acc.idx(i, j);
            acc.dy[k] = (i < 16) ? 0 : 2;
            acc.dx[k] = (j < 16) ? 0 : 1;
            acc.valid[k] = 1;
        }
    const AccumMV rt = expand_blocks(blockify(acc, 16), 32, 32);
    for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j) {
            CHECK(rt.dy[rt.idx(i, j)] == acc.dy[acc.idx(i, j)]);
            CHECK(rt.dx[rt.idx(i, j)] == acc.dx[acc.idx(i, j)]);
            CHECK(rt.valid[rt.idx(i, j)] == acc.valid[acc.idx(i, j)]);
        }
}

TEST_CASE("backward warp copies sources and flags the rest") {
    FeatureMap src(4, 4, 1);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) src.at(i, j, 0) = float(i * 4 + j);
    AccumMV field(4, 4);
    for (auto& d : field.dy) d = 1;  // uniform (1,0), row 0 has no source
    for (int j = 0; j < 4; ++j) field.valid[field.idx(0, j)] = 0;

    const WarpResult w = warp_backward(src, field);
    CHECK(w.map.at(2, 3, 0) == src.at(1, 3, 0));
    CHECK(w.map.at(1, 0, 0) == src.at(0, 0, 0));
    CHECK(!w.oob.get(2, 3));
    // Row 0: invalid field, value copied in place and flagged.
    CHECK(w.map.at(0, 2, 0) == src.at(0, 2, 0));
    CHECK(w.oob.get(0, 2));
    CHECK(mask_count(w.oob) == 4);
}

TEST_CASE("field downsampling keeps only stride-aligned displacements") {
    AccumMV acc(32, 32);
    for (auto& d : acc.dy) d = 2;
    for (auto& d : acc.dx) d = 4;
    AccumMV half = downsample_field(acc, 2);
    REQUIRE(half.h == 16);
    CHECK(half.dy[half.idx(3, 3)] == 1);
    CHECK(half.dx[half.idx(3, 3)] == 2);
    CHECK(half.is_valid(3, 3));

    for (auto& d : acc.dx) d = 3;  // not divisible by 2
    half = downsample_field(acc, 2);
    CHECK(!half.is_valid(3, 3));

    CHECK(downsample_field(acc, 1).h == 32);
    CHECK_THROWS_AS(downsample_field(AccumMV(30, 30), 4), std::invalid_argument);
}

TEST_CASE("modal displacement with deterministic tie-breaks") {
    MVField f(2, 2, 16);
    f.set(0, 0, 1, 1);
    f.set(0, 1, 1, 1);
    f.set(1, 0, 1, 1);
    f.set(1, 1, 2, 2);
    CHECK(modal_mv(f) == std::pair<int16_t, int16_t>{1, 1});

    MVField tie(2, 2, 16);
    tie.set(0, 0, 1, 1);
    tie.set(0, 1, 1, 1);
    tie.set(1, 0, 0, 2);
    tie.set(1, 1, 0, 2);
    // Count tie, |dy|+|dx| tie at 2: smaller dy wins.
    CHECK(modal_mv(tie) == std::pair<int16_t, int16_t>{0, 2});

    MVField inv(1, 2, 16);
    inv.set(0, 0, kInvalidMv, kInvalidMv);
    inv.set(0, 1, 4, 4);
    CHECK(modal_mv(inv) == std::pair<int16_t, int16_t>{4, 4});  // sentinel excluded
    inv.set(0, 1, kInvalidMv, kInvalidMv);
    CHECK(modal_mv(inv) == std::pair<int16_t, int16_t>{0, 0});  // all invalid
}

TEST_CASE("uniform_field stamps one displacement everywhere") {
    const MVField f = uniform_field(MVField(3, 2, 16), -2, 5);
    for (int bi = 0; bi < 3; ++bi)
        for (int bj = 0; bj < 2; ++bj) {
            CHECK(f.dy_at(bi, bj) == -2);
            CHECK(f.dx_at(bi, bj) == 5);
        }
}

TEST_CASE("block-field fixture files round-trip") {
    MVField f(2, 3, 16);
    f.set(0, 0, -7, 3);
    f.set(1, 2, kInvalidMv, 0);
    const std::string path = "mv_roundtrip.fsmv";
    save_mv_field(f, path);
    const MVField g = load_mv_field(path);
    CHECK(g.block_size == 16);
    CHECK(g.grid_h == 2);
    CHECK(g.grid_w == 3);
    CHECK(g.dy == f.dy);
    CHECK(g.dx == f.dx);

    // Corrupt the magic: must be rejected.
    {
        FILE* fp = std::fopen(path.c_str(), "r+b");
        REQUIRE(fp != nullptr);
        std::fputc('X', fp);
        std::fclose(fp);
    }
    CHECK_THROWS_AS(load_mv_field(path), ProtocolError);
    std::remove(path.c_str());
}
