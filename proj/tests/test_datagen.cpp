#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <utility>

#include "doctest.h"
#include "fluxshard/common.hpp"
#include "fluxshard/datagen.hpp"
#include "fluxshard/motion.hpp"
#include "fluxshard/tensor.hpp"

using namespace fluxshard;

namespace {

ScenarioSpec base_spec(const char* name, int frames, int h, int w, uint64_t seed) {
    ScenarioSpec s;
    s.name = name;
    s.frames = frames;
    s.h = h;
    s.w = w;
    s.seed = seed;
    return s;
}

}  // namespace

TEST_CASE("scenarios validate their parameters") {
    CHECK_THROWS_AS(generate_scenario(base_spec("wobble", 4, 32, 32, 1)), ConfigError);
    CHECK_THROWS_AS(generate_scenario(base_spec("pan", 0, 32, 32, 1)), ConfigError);
    CHECK_THROWS_AS(generate_scenario(base_spec("pan", 4, 20, 32, 1)), ConfigError);
}

TEST_CASE("generation is deterministic in the seed") {
    ScenarioSpec spec = base_spec("pan", 4, 32, 32, 9);
    spec.dy = 1;
    spec.dx = -2;
    const GeneratedSequence a = generate_scenario(spec);
    const GeneratedSequence b = generate_scenario(spec);
    spec.seed = 10;
    const GeneratedSequence c = generate_scenario(spec);

    REQUIRE(a.frames.size() == 4);
    REQUIRE(a.true_motion.size() == 3);
    for (size_t t = 0; t < 4; ++t) CHECK(a.frames[t].data == b.frames[t].data);
    CHECK(a.frames[0].data != c.frames[0].data);
}

TEST_CASE("noise canvases stay in the unit interval") {
    const FeatureMap m = noise_canvas(40, 24, 3, 77);
    CHECK(m.h == 40);
    CHECK(m.w == 24);
    for (float v : m.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("pan frames translate coherently and stamp a uniform truth") {
    ScenarioSpec spec = base_spec("pan", 5, 32, 32, 3);
    spec.dy = 2;
    spec.dx = -1;
    const GeneratedSequence seq = generate_scenario(spec);

    for (const MVField& mv : seq.true_motion)
        for (size_t k = 0; k < mv.dy.size(); ++k) {
            CHECK(mv.dy[k] == 2);
            CHECK(mv.dx[k] == -1);
        }

    // Backward convention: every current pixel equals the previous frame at
    // position minus displacement; the oversized canvas keeps this exact even
    // at the frame border.
    for (size_t t = 1; t < seq.frames.size(); ++t) {
        const FeatureMap& prev = seq.frames[t - 1];
        const FeatureMap& cur = seq.frames[t];
        for (int i = 0; i < 32; ++i)
            for (int j = 0; j < 32; ++j) {
                const int si = i - spec.dy, sj = j - spec.dx;
                if (si < 0 || si >= 32 || sj < 0 || sj >= 32) continue;
                for (int ch = 0; ch < 3; ++ch)
                    CHECK(cur.at(i, j, ch) == prev.at(si, sj, ch));
            }
    }

    const GeneratedSequence still = generate_scenario(base_spec("static", 3, 32, 32, 3));
    for (size_t t = 1; t < 3; ++t)
        CHECK(still.frames[t].data == still.frames[0].data);
}

TEST_CASE("two-region truth marks pure blocks with their motion and seam blocks invalid") {
    ScenarioSpec spec = base_spec("two_region", 3, 64, 64, 5);
    spec.dy = 0;
    spec.dx = 2;
    spec.fg_dy = 1;
    spec.fg_dx = -1;
    const GeneratedSequence seq = generate_scenario(spec);
    REQUIRE(seq.true_motion.size() == 2);
    const MVField& mv = seq.true_motion[0];

    // The box spans [21, 53) in both axes: block (0,0) is pure background,
    // (2,2) pure foreground, (1,1) straddles the seam.
    CHECK(mv.dy_at(0, 0) == 0);
    CHECK(mv.dx_at(0, 0) == 2);
    CHECK(mv.dy_at(2, 2) == 1);
    CHECK(mv.dx_at(2, 2) == -1);
    CHECK(mv.dy_at(1, 1) == kInvalidMv);

    int sentinels = 0;
    for (size_t k = 0; k < mv.dy.size(); ++k) sentinels += mv.dy[k] == kInvalidMv ? 1 : 0;
    CHECK(sentinels > 0);
    CHECK(sentinels < int(mv.dy.size()));

    // Pure blocks really do translate with their stamped displacement.
    const FeatureMap& prev = seq.frames[0];
    const FeatureMap& cur = seq.frames[1];
    for (int i = 32; i < 48; ++i)
        for (int j = 32; j < 48; ++j)
            CHECK(cur.at(i, j, 0) == prev.at(i - 1, j + 1, 0));
}

TEST_CASE("reveal marks exactly the blocks where occluder membership changes") {
    ScenarioSpec spec = base_spec("reveal", 2, 64, 64, 8);
    spec.grow = 2;
    const GeneratedSequence seq = generate_scenario(spec);
    REQUIRE(seq.true_motion.size() == 1);
    const MVField& mv = seq.true_motion[0];

    // The centered patch grows from [24,40) to [22,42): the changed ring
    // touches exactly the four central blocks.
    const std::set<std::pair<int, int>> expect = {{1, 1}, {1, 2}, {2, 1}, {2, 2}};
    for (int bi = 0; bi < 4; ++bi)
        for (int bj = 0; bj < 4; ++bj) {
            const bool invalid = mv.dy_at(bi, bj) == kInvalidMv;
            CHECK(invalid == (expect.count({bi, bj}) > 0));
            if (!invalid) {
                CHECK(mv.dy_at(bi, bj) == 0);
                CHECK(mv.dx_at(bi, bj) == 0);
            }
        }
}

TEST_CASE("scramble truth gives each block its own verifiable displacement") {
    ScenarioSpec spec = base_spec("scramble", 3, 32, 32, 17);
    spec.jitter = 6;
    const GeneratedSequence seq = generate_scenario(spec);
    REQUIRE(seq.true_motion.size() == 2);

    bool saw_nonzero = false;
    for (size_t t = 1; t < seq.frames.size(); ++t) {
        const MVField& mv = seq.true_motion[t - 1];
        const FeatureMap& prev = seq.frames[t - 1];
        const FeatureMap& cur = seq.frames[t];
        for (int bi = 0; bi < 2; ++bi)
            for (int bj = 0; bj < 2; ++bj) {
                const int dy = mv.dy_at(bi, bj), dx = mv.dx_at(bi, bj);
                CHECK(std::abs(dy) <= 2 * spec.jitter);
                CHECK(std::abs(dx) <= 2 * spec.jitter);
                if (dy != 0 || dx != 0) saw_nonzero = true;
                // The stamped displacement is exact wherever the backward
                // source stays inside the same block.
                for (int i = bi * 16; i < (bi + 1) * 16; ++i)
                    for (int j = bj * 16; j < (bj + 1) * 16; ++j) {
                        const int si = i - dy, sj = j - dx;
                        if (si < bi * 16 || si >= (bi + 1) * 16) continue;
                        if (sj < bj * 16 || sj >= (bj + 1) * 16) continue;
                        CHECK(cur.at(i, j, 1) == prev.at(si, sj, 1));
                    }
            }
    }
    CHECK(saw_nonzero);  // jitter 6 across 8 block-frames: all-zero is (1/13)^16
}

TEST_CASE("frame files round-trip bit-exactly and reject corruption") {
    const std::string path = "/tmp/fluxshard_test_frame.fsfm";
    const FeatureMap src = noise_canvas(24, 16, 3, 21);
    save_frame(src, path);
    const FeatureMap back = load_frame(path);
    CHECK(back.h == 24);
    CHECK(back.w == 16);
    CHECK(back.c == 3);
    CHECK(back.data == src.data);

    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.put('X');  // clobber the magic
    }
    CHECK_THROWS_AS(load_frame(path), ProtocolError);
    CHECK_THROWS_AS(load_frame("/tmp/fluxshard_missing.fsfm"), ConfigError);
    std::remove(path.c_str());
}

TEST_CASE("scenario directories reload to an identical sequence") {
    const std::string dir = "/tmp/fluxshard_test_scenario";
    std::filesystem::remove_all(dir);

    ScenarioSpec spec = base_spec("two_region", 3, 64, 64, 33);
    spec.dy = 1;
    spec.dx = 0;
    spec.fg_dy = -1;
    spec.fg_dx = 2;
    write_scenario(spec, dir);
    CHECK(std::filesystem::exists(dir + "/manifest.json"));
    CHECK(std::filesystem::exists(dir + "/frame_0002.fsfm"));

    const GeneratedSequence direct = generate_scenario(spec);
    const GeneratedSequence loaded = load_scenario(dir);
    CHECK(loaded.spec.name == "two_region");
    CHECK(loaded.spec.seed == 33);
    REQUIRE(loaded.frames.size() == direct.frames.size());
    for (size_t t = 0; t < direct.frames.size(); ++t)
        CHECK(loaded.frames[t].data == direct.frames[t].data);
    REQUIRE(loaded.true_motion.size() == direct.true_motion.size());
    for (size_t t = 0; t < direct.true_motion.size(); ++t) {
        CHECK(loaded.true_motion[t].dy == direct.true_motion[t].dy);  // sentinels included
        CHECK(loaded.true_motion[t].dx == direct.true_motion[t].dx);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("motion intensity is the population spread of valid components") {
    MVField mv(1, 2, 16);
    mv.set(0, 0, 0, 2);
    mv.set(0, 1, 0, 2);
    // Pooled components {0,2,0,2}: mean 1, variance 1.
    CHECK(motion_std({mv}) == doctest::Approx(1.0).epsilon(1e-12));

    MVField inv(1, 1, 16);
    inv.set(0, 0, kInvalidMv, kInvalidMv);
    CHECK(motion_std({inv}) == doctest::Approx(0.0));
    CHECK(motion_std({}) == doctest::Approx(0.0));
}
