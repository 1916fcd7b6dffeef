#include <gtest/gtest.h>

#include "support/fixtures.h"
#include "swm/cka.h"
#include "swm/synth.h"

namespace swm {
namespace {

using testing::fixture_calib;
using testing::fixture_config;
using testing::patch_fixture;

// Frozen from the first verified run on the seed-42 fixtures.
constexpr double kGoldenEps3MinConsecutive = 0.99983233213424683;
constexpr double kGoldenEps0MinBlock = 0.99907845258712769;

TEST(Synth, ZeroEpsilonPatchLayersAreBitwiseEqual) {
    const Model m = patch_fixture(0.0, 0.05);
    for (std::size_t l = 4; l <= 6; ++l) {
        LayerParams a = m.layers[l];
        LayerParams b = m.layers[3];
        a.original_index = b.original_index = 0;
        EXPECT_EQ(a, b) << "layer " << l;
    }
    EXPECT_FALSE(m.layers[2].wq == m.layers[3].wq);
    EXPECT_FALSE(m.layers[7].wq == m.layers[6].wq);
}

TEST(Synth, Deterministic) {
    EXPECT_EQ(patch_fixture(1e-3, 0.1), patch_fixture(1e-3, 0.1));
    const Model other = synth_redundant(fixture_config(), {{3, 4, 1e-3}}, 0.1, 43);
    EXPECT_FALSE(other == patch_fixture(1e-3, 0.1));
}

TEST(Synth, EpsilonPerturbsPatchLayers) {
    const Model m = patch_fixture(1e-3, 0.1);
    const double diff = testing::max_rel_diff(m.layers[5].wq, m.layers[3].wq);
    EXPECT_GT(diff, 0.0);
    EXPECT_LT(diff, 1e-2);
}

TEST(Synth, LabelsAndResidualScale) {
    const Model m = patch_fixture(0.0, 0.25);
    EXPECT_NO_THROW(m.validate());
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        EXPECT_EQ(m.layers[l].original_index, l);
        EXPECT_EQ(m.layers[l].residual_scale, 0.25f);
    }
}

TEST(Synth, RejectsBadPatches) {
    const auto c = fixture_config();
    EXPECT_THROW(synth_redundant(c, {{3, 4, 0}, {5, 2, 0}}, 0.1, 1), ConfigError);
    EXPECT_THROW(synth_redundant(c, {{6, 4, 0}}, 0.1, 1), ConfigError);
    EXPECT_THROW(synth_redundant(c, {{2, 1, 0}}, 0.1, 1), ConfigError);
    EXPECT_THROW(synth_redundant(c, {{2, 2, -1}}, 0.1, 1), ConfigError);
    EXPECT_THROW(synth_redundant(c, {}, 0.0, 1), ConfigError);
    EXPECT_NO_THROW(synth_redundant(c, {{0, 2, 0}, {6, 2, 0}}, 0.1, 1));
}

TEST(Synth, ParsePatches) {
    const auto p = parse_patches("3:4:0.001,0:2:0");
    ASSERT_EQ(p.size(), 2u);
    EXPECT_EQ(p[0].start, 3u);
    EXPECT_EQ(p[0].length, 4u);
    EXPECT_DOUBLE_EQ(p[0].epsilon, 0.001);
    EXPECT_EQ(p[1].length, 2u);
    EXPECT_TRUE(parse_patches("").empty());
    EXPECT_THROW(parse_patches("3:4"), ConfigError);
    EXPECT_THROW(parse_patches("a:b:c"), ConfigError);
}

// Heatmap rows 4..7 are the outputs of patch layers 3..6.
double min_in_patch(const CkaMatrix& ck, bool consecutive_only) {
    double lo = 1.0;
    for (std::size_t i = 4; i <= 7; ++i)
        for (std::size_t j = i + 1; j <= 7; ++j)
            if (!consecutive_only || j == i + 1) lo = std::min(lo, double(ck.values(i, j)));
    return lo;
}

TEST(SynthFixture, PatchConsecutiveCkaAboveThreshold) {
    const CkaMatrix ck = layer_cka_matrix(patch_fixture(1e-3, 0.1), fixture_calib());
    const double got = min_in_patch(ck, true);
    EXPECT_GT(got, 0.99);
    EXPECT_NEAR(got, kGoldenEps3MinConsecutive, 1e-6);
}

TEST(SynthFixture, ZeroEpsilonPatchBlockAboveThreshold) {
    const CkaMatrix ck = layer_cka_matrix(patch_fixture(0.0, 0.05), fixture_calib());
    const double got = min_in_patch(ck, false);
    EXPECT_GE(got, 0.99);
    EXPECT_NEAR(got, kGoldenEps0MinBlock, 1e-6);
}

}  // namespace
}  // namespace swm
