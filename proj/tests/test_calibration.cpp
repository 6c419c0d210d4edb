#include <cmath>
#include <vector>

#include "doctest.h"
#include "fluxshard/calibration.hpp"
#include "fluxshard/datagen.hpp"
#include "fluxshard/refnet.hpp"
#include "fluxshard/tensor.hpp"
#include "helpers.hpp"

using namespace fluxshard;

TEST_CASE("fidelity is 1 for identical maps and degrades with L1 error") {
    FeatureMap d = testutil::noise_map(6, 6, 2, 11);
    CHECK(fidelity(d, d) == doctest::Approx(1.0).epsilon(1e-12));

    // Scale every element by 1.001: ||s - d||_1 = 0.001 * ||d||_1.
    FeatureMap s = d;
    double l1 = 0.0;
    for (float& v : s.data) {
        l1 += std::abs(double(v));
        v *= 1.001f;
    }
    const double expect = 1.0 - 0.001 * l1 / (l1 + 1e-9);
    CHECK(fidelity(s, d) == doctest::Approx(expect).epsilon(1e-6));

    // Zero reference with a nonzero candidate saturates the ratio at 1.
    FeatureMap zero = FeatureMap(6, 6, 2);
    CHECK(fidelity(d, zero) == doctest::Approx(0.0).epsilon(1e-12));

    FeatureMap bad = FeatureMap(5, 6, 2);
    CHECK_THROWS_AS(fidelity(bad, d), std::invalid_argument);
}

TEST_CASE("budget split hands the dispatch stage its share and divides the rest evenly") {
    const BudgetSplit a = budget_split(0.97, 2, 2.0 / 3.0);
    CHECK(a.dispatch == doctest::Approx(0.02).epsilon(1e-12));
    REQUIRE(a.per_layer.size() == 2);
    CHECK(a.per_layer[0] == doctest::Approx(0.005).epsilon(1e-12));
    CHECK(a.per_layer[1] == doctest::Approx(0.005).epsilon(1e-12));

    const BudgetSplit b = budget_split(0.95, 3, 0.9);
    CHECK(b.dispatch == doctest::Approx(0.045).epsilon(1e-12));
    REQUIRE(b.per_layer.size() == 3);
    for (double v : b.per_layer) CHECK(v == doctest::Approx(0.05 * 0.1 / 3.0).epsilon(1e-12));

    // No profiled layers: everything that is not dispatch simply vanishes.
    const BudgetSplit c = budget_split(0.9, 0, 0.5);
    CHECK(c.dispatch == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(c.per_layer.empty());
}

TEST_CASE("replay with no warm frames reports perfect fidelity and zero compute") {
    const NetworkSpec net = testutil::tiny_net();
    CalibrationConfig cfg;
    cfg.sequences.push_back({FeatureMap(32, 32, 3)});  // seed frame only
    const ReplayStats stats = replay(net, ThresholdVector::zeros(net.num_layers()), cfg);
    CHECK(stats.frames == 0);
    CHECK(stats.fidelity == doctest::Approx(1.0));
    CHECK(stats.compute_ratio == doctest::Approx(0.0));
}

TEST_CASE("calibrate validates its configuration") {
    const NetworkSpec net = testutil::tiny_net();
    CalibrationConfig cfg;
    CHECK_THROWS_AS(calibrate(net, cfg), std::invalid_argument);  // no sequences

    ScenarioSpec spec;
    spec.name = "pan";
    spec.frames = 3;
    spec.h = 32;
    spec.w = 32;
    spec.seed = 3;
    spec.dy = 0;
    spec.dx = 1;
    cfg.sequences.push_back(generate_scenario(spec).frames);

    CalibrationConfig bad = cfg;
    bad.candidates = {1e-3f, 1e-2f};  // must start at zero
    CHECK_THROWS_AS(calibrate(net, bad), std::invalid_argument);

    bad = cfg;
    bad.candidates = {0.0f, 1e-2f, 1e-3f};  // not ascending
    CHECK_THROWS_AS(calibrate(net, bad), std::invalid_argument);

    bad = cfg;
    bad.alpha = 0.0;
    CHECK_THROWS_AS(calibrate(net, bad), std::invalid_argument);
    bad.alpha = 1.5;
    CHECK_THROWS_AS(calibrate(net, bad), std::invalid_argument);

    bad = cfg;
    bad.split_ratio = 1.0;
    CHECK_THROWS_AS(calibrate(net, bad), std::invalid_argument);
}

TEST_CASE("calibrate picks the largest feasible candidate at every stage") {
    const NetworkSpec net = testutil::tiny_net();

    CalibrationConfig cfg;
    cfg.alpha = 0.97;
    cfg.split_ratio = 2.0 / 3.0;
    cfg.search_radius = 4;
    ScenarioSpec spec;
    spec.name = "pan";
    spec.frames = 5;
    spec.h = 32;
    spec.w = 32;
    spec.seed = 21;
    spec.dy = 1;
    spec.dx = 2;
    cfg.sequences.push_back(generate_scenario(spec).frames);

    const CalibrationOutcome outcome = calibrate(net, cfg);

    // Stage order: virtual dispatch layer first, then each profiled layer.
    REQUIRE(outcome.stage_layers == std::vector<int>{-1, 1});
    CHECK(outcome.evaluations == int(cfg.candidates.size()) * 2);

    // Re-derive the greedy selection with the public replay entry point.
    const BudgetSplit budgets = budget_split(cfg.alpha, 1, cfg.split_ratio);
    ThresholdVector expect = ThresholdVector::zeros(net.num_layers());
    double running = budgets.dispatch;
    int best = -1;
    for (size_t c = 0; c < cfg.candidates.size(); ++c) {
        ThresholdVector trial = expect;
        trial.tau0 = cfg.candidates[c];
        if (1.0 - replay(net, trial, cfg).fidelity <= running) best = int(c);
    }
    REQUIRE(best >= 0);
    expect.tau0 = cfg.candidates[best];

    running += budgets.per_layer[0];
    best = -1;
    for (size_t c = 0; c < cfg.candidates.size(); ++c) {
        ThresholdVector trial = expect;
        trial.layer[1] = cfg.candidates[c];
        if (1.0 - replay(net, trial, cfg).fidelity <= running) best = int(c);
    }
    REQUIRE(best >= 0);
    expect.layer[1] = cfg.candidates[best];

    CHECK(outcome.thresholds.tau0 == expect.tau0);
    CHECK(outcome.thresholds.layer == expect.layer);
    // Unprofiled layers stay at zero.
    CHECK(outcome.thresholds.layer[0] == 0.0f);

    const ReplayStats final_stats = replay(net, expect, cfg);
    CHECK(outcome.fidelity == doctest::Approx(final_stats.fidelity).epsilon(1e-12));
    CHECK(outcome.compute_ratio == doctest::Approx(final_stats.compute_ratio).epsilon(1e-12));
    CHECK(outcome.fidelity >= cfg.alpha);
}
