#include <random>
#include <set>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace l0bound;
using namespace l0bound::testing;

TEST(Grid, DeltaIsCeilingOfInverseEpsilon)
{
    EXPECT_EQ(GridConfig::from_epsilon(1.0).delta, 1u);
    EXPECT_EQ(GridConfig::from_epsilon(0.25).delta, 4u);
    EXPECT_EQ(GridConfig::from_epsilon(0.1).delta, 10u);
    EXPECT_EQ(GridConfig::from_epsilon(0.3).delta, 4u);
    EXPECT_EQ(GridConfig::from_epsilon(0.5).values, (std::vector<double>{0.0, 0.5, 1.0}));
    EXPECT_THROW(GridConfig::from_epsilon(0.0), RangeError);
    EXPECT_THROW(GridConfig::from_epsilon(1.5), RangeError);
}

TEST(Subspaces, ExhaustiveIsLexicographic)
{
    const auto subs = enumerate_subspaces(4, 2, {});
    ASSERT_EQ(subs.size(), 6u);
    EXPECT_EQ(subs.front().dims, (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(subs[2].dims, (std::vector<std::size_t>{0, 3}));
    EXPECT_EQ(subs.back().dims, (std::vector<std::size_t>{2, 3}));
    EXPECT_THROW(enumerate_subspaces(3, 4, {}), RangeError);
    EXPECT_THROW(enumerate_subspaces(3, 0, {}), RangeError);
}

TEST(Subspaces, ExhaustiveBeyondCapIsCapacityError)
{
    EXPECT_THROW(enumerate_subspaces(30, 15, {SubspaceMode::exhaustive, 1000, 0}), CapacityError);
}

TEST(Subspaces, SampledDrawsAreDistinctSortedAndSeeded)
{
    for (std::size_t n : {12u, 40u}) {
        const SubspaceSource a{SubspaceMode::sampled, 50, 7};
        const auto first = enumerate_subspaces(n, 3, a);
        ASSERT_EQ(first.size(), 50u);
        EXPECT_TRUE(std::is_sorted(first.begin(), first.end()));
        EXPECT_EQ(std::set<SubspaceIndex>(first.begin(), first.end()).size(), 50u);
        for (const auto& s : first) {
            ASSERT_EQ(s.dims.size(), 3u);
            ASSERT_TRUE(std::is_sorted(s.dims.begin(), s.dims.end()));
            ASSERT_LT(s.dims.back(), n);
        }
        EXPECT_EQ(enumerate_subspaces(n, 3, a), first);
        EXPECT_NE(enumerate_subspaces(n, 3, {SubspaceMode::sampled, 50, 8}), first);
    }
    // when everything fits under the cap, sampling returns everything
    EXPECT_EQ(enumerate_subspaces(5, 2, {SubspaceMode::sampled, 100, 1}).size(), 10u);
}

TEST(Candidates, OriginalFirstThenOtherGridValues)
{
    const TensorND x0 = vec({0.3, 1.0});
    const TensorND c = build_candidates(x0, {{0}}, GridConfig::from_epsilon(0.5));
    EXPECT_EQ(c.shape(), (Shape{4, 2}));
    EXPECT_EQ(c.values(), (std::vector<double>{0.3, 1.0, 0.0, 1.0, 0.5, 1.0, 1.0, 1.0}));

    const TensorND d = build_candidates(x0, {{0, 1}}, GridConfig::from_epsilon(1.0));
    // 0.3 -> {0.3, 0, 1}; 1.0 -> {1.0, 0}; dims[0] is the slowest digit
    EXPECT_EQ(d.shape(), (Shape{6, 2}));
    EXPECT_EQ(d.values(), (std::vector<double>{0.3, 1.0, 0.3, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0}));
    EXPECT_THROW(build_candidates(x0, {{2}}, GridConfig::from_epsilon(1.0)), RangeError);
}

TEST(Candidates, ChannelsOfOnePixelVaryTogetherAsOneUnit)
{
    const TensorND x0({1, 2, 3}, std::vector<double>{0.5, 0.5, 0.5, 0, 0, 0});
    const TensorND c = build_candidates(x0, {{0}}, GridConfig::from_epsilon(1.0));
    EXPECT_EQ(c.extent(0), 27u);
    for (std::size_t i = 0; i < 27; ++i) {
        for (std::size_t k = 3; k < 6; ++k) ASSERT_EQ(c[i * 6 + k], 0.0);
    }
    const CandidateSpace space(x0.data(), 3, {{0}}, GridConfig::from_epsilon(1.0));
    EXPECT_EQ(space.weight(0), 0u);
    for (std::size_t i = 1; i < 27; ++i) ASSERT_EQ(space.weight(i), 1u);
}

TEST(Sensitivity, OnePixelLogitExample)
{
    const Model m = one_pixel_logit_model();
    const std::vector<TensorND> inputs{vec({1.0})};
    const auto batch = compute_sensitivity(m, inputs, 1, GridConfig::from_epsilon(0.5));
    const auto& sub = batch.inputs[0].subspaces.at(0);
    EXPECT_NEAR(sub.sensitivity, 0.2311, 1e-4);
    EXPECT_NEAR(sub.min_score, 0.5, 1e-12);
    EXPECT_EQ(sub.best, (SparsePerturbation{{0, 0.0}}));
    EXPECT_FALSE(sub.best_satisfied);
    EXPECT_FALSE(sub.witness);
    EXPECT_EQ(batch.queries, 4u);
}

TEST(Sensitivity, ConstantModelHasZeroSensitivityAndKeepsLexOrder)
{
    const Model m = constant_model(4);
    const std::vector<TensorND> inputs{vec({0.1, 0.2, 0.3, 0.4})};
    const auto batch = compute_sensitivity(m, inputs, 2, GridConfig::from_epsilon(0.5));
    const auto& s = batch.inputs[0];
    for (const auto& sub : s.subspaces) {
        EXPECT_EQ(sub.sensitivity, 0.0);
        EXPECT_TRUE(sub.best.empty());
    }
    EXPECT_EQ(s.ranking, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
}

TEST(Sensitivity, MatchesNaiveOracle)
{
    std::mt19937_64 rng(1234);
    for (int trial = 0; trial < 12; ++trial) {
        const std::size_t n = 3 + trial % 4;
        const Model m = random_mlp(rng, n, {5, 4}, 2 + trial % 2);
        std::vector<TensorND> inputs;
        for (int i = 0; i < 3; ++i) inputs.push_back(random_input(rng, n));
        for (double eps : {1.0, 0.5, 0.25}) {
            const GridConfig grid = GridConfig::from_epsilon(eps);
            for (std::size_t t = 1; t <= 2; ++t) {
                const auto batch = compute_sensitivity(m, inputs, t, grid);
                for (std::size_t i = 0; i < inputs.size(); ++i) {
                    const auto oracle = naive_sensitivity(m, inputs[i], t, grid.delta);
                    const auto& got = batch.inputs[i];
                    ASSERT_EQ(got.reference_score, oracle.reference);
                    ASSERT_EQ(got.subspaces.size(), oracle.subspaces.size());
                    for (std::size_t k = 0; k < got.subspaces.size(); ++k) {
                        ASSERT_EQ(got.subspaces[k].subspace.dims, oracle.subspaces[k].dims);
                        ASSERT_EQ(got.subspaces[k].sensitivity, oracle.subspaces[k].sensitivity);
                        SparsePerturbation expected;
                        for (const auto& [p, v] : oracle.subspaces[k].best) expected.set(p, v);
                        ASSERT_EQ(got.subspaces[k].best, expected);
                    }
                    ASSERT_EQ(got.ranking, oracle.ranking);
                }
            }
        }
    }
}

TEST(Sensitivity, IndependentOfChunkingAndWorkers)
{
    std::mt19937_64 rng(99);
    const Model m = random_mlp(rng, 6, {6}, 3);
    std::vector<TensorND> inputs;
    for (int i = 0; i < 4; ++i) inputs.push_back(random_input(rng, 6));
    const GridConfig grid = GridConfig::from_epsilon(0.25);
    const auto reference = compute_sensitivity(m, inputs, 2, grid, {}, {4096, 1});
    for (std::size_t chunk : {1u, 7u, 25u, 100u}) {
        for (std::size_t workers : {1u, 3u}) {
            const auto other = compute_sensitivity(m, inputs, 2, grid, {}, {chunk, workers});
            EXPECT_EQ(other.queries, reference.queries);
            for (std::size_t i = 0; i < inputs.size(); ++i) {
                ASSERT_EQ(other.inputs[i].ranking, reference.inputs[i].ranking);
                for (std::size_t k = 0; k < reference.inputs[i].subspaces.size(); ++k) {
                    const auto& a = other.inputs[i].subspaces[k];
                    const auto& b = reference.inputs[i].subspaces[k];
                    ASSERT_EQ(a.sensitivity, b.sensitivity);
                    ASSERT_EQ(a.best, b.best);
                    ASSERT_EQ(a.witness, b.witness);
                }
            }
        }
    }
}

TEST(Sensitivity, GrowsWithSubspaceInclusion)
{
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const Model m = random_mlp(rng, 5, {6, 4}, 2);
        const std::vector<TensorND> inputs{random_input(rng, 5)};
        const GridConfig grid = GridConfig::from_epsilon(0.5);
        const auto one = compute_sensitivity(m, inputs, 1, grid);
        const auto two = compute_sensitivity(m, inputs, 2, grid);
        for (const auto& pair : two.inputs[0].subspaces) {
            for (std::size_t d : pair.subspace.dims) {
                ASSERT_GE(pair.sensitivity, one.inputs[0].subspaces[d].sensitivity);
            }
            ASSERT_GE(pair.sensitivity, 0.0);
        }
    }
}

TEST(Sensitivity, WitnessIsSmallestFlippingCandidate)
{
    const Model m = majority_model();
    const std::vector<TensorND> inputs{vec({1, 1, 1})};
    const auto batch = compute_sensitivity(m, inputs, 3, GridConfig::from_epsilon(1.0));
    const auto& sub = batch.inputs[0].subspaces.at(0);
    ASSERT_TRUE(sub.witness);
    EXPECT_EQ(*sub.witness, (SparsePerturbation{{1, 0.0}, {2, 0.0}}));
    EXPECT_TRUE(sub.best_satisfied);
    EXPECT_EQ(sub.best.weight(), 3u);
}

TEST(Sensitivity, NeuronCriterionMaximisesPreActivation)
{
    const Model m = coverage_model();
    const std::vector<TensorND> inputs{vec({0.5, 0.5, 0.5, 0.5})};
    const std::vector<std::uint64_t> ids{1};
    const std::vector<NeuronActivation> criteria{{{1, 0}, 0.0}};
    const auto batch =
        compute_sensitivity<NeuronActivation>(m, inputs, ids, criteria, 1, GridConfig::from_epsilon(0.5), {});
    const auto& s = batch.inputs[0];
    EXPECT_EQ(s.reference_score, 0.0);
    EXPECT_FALSE(s.reference_satisfied);
    EXPECT_EQ(s.ranking.front(), 0u);
    EXPECT_EQ(s.subspaces[0].best, (SparsePerturbation{{0, 1.0}}));
    ASSERT_TRUE(s.subspaces[0].witness);
    EXPECT_FALSE(s.subspaces[1].witness);
}
