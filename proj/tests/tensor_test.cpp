#include <random>

#include <gtest/gtest.h>

#include "l0bound/tensor.hpp"

using namespace l0bound;

namespace {

TensorND iota_tensor(Shape shape)
{
    TensorND t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
    return t;
}

} // namespace

TEST(Tensor, UnfoldModeZeroKeepsRowMajorSlices)
{
    const TensorND m = unfold_mode_n(iota_tensor({2, 2, 2}), 0);
    EXPECT_EQ(m.shape(), (Shape{2, 4}));
    EXPECT_EQ(m.values(), (std::vector<double>{0, 1, 2, 3, 4, 5, 6, 7}));
}

TEST(Tensor, UnfoldLastModeInterleaves)
{
    const TensorND m = unfold_mode_n(iota_tensor({2, 2, 2}), 2);
    EXPECT_EQ(m.shape(), (Shape{2, 4}));
    EXPECT_EQ(m.values(), (std::vector<double>{0, 2, 4, 6, 1, 3, 5, 7}));
}

TEST(Tensor, UnfoldRejectsBadAxis)
{
    EXPECT_THROW(unfold_mode_n(iota_tensor({2, 2}), 2), ShapeError);
}

TEST(Tensor, ZeroExtentIsRejected)
{
    EXPECT_THROW(TensorND(Shape{2, 0}), ShapeError);
    EXPECT_THROW(TensorND(Shape{2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Tensor, RankZeroHoldsOneValue)
{
    const TensorND s(Shape{}, std::vector<double>{4.5});
    EXPECT_EQ(s.rank(), 0u);
    EXPECT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0], 4.5);
}

TEST(Tensor, FoldRejectsMismatchedShape)
{
    const TensorND m = unfold_mode_n(iota_tensor({2, 3}), 0);
    EXPECT_THROW(fold(m, Shape{3, 2}, 0), ShapeError);
}

TEST(Tensor, FoldInvertsUnfoldOnRandomShapes)
{
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::size_t> extent(1, 4), rank(1, 4);
    std::uniform_real_distribution<double> value(-1, 1);
    for (int trial = 0; trial < 200; ++trial) {
        Shape shape(rank(rng));
        for (auto& e : shape) e = extent(rng);
        TensorND t(shape);
        for (double& v : t.data()) v = value(rng);
        for (std::size_t n = 0; n < shape.size(); ++n) {
            const TensorND m = unfold_mode_n(t, n);
            ASSERT_EQ(m.extent(0), shape[n]);
            ASSERT_EQ(fold(m, shape, n), t);
        }
    }
}

TEST(Tensor, UnfoldPlacesEveryElementOnItsModeRow)
{
    const TensorND t = iota_tensor({2, 3, 4});
    for (std::size_t n = 0; n < 3; ++n) {
        const TensorND m = unfold_mode_n(t, n);
        for (std::size_t i = 0; i < 2; ++i) {
            for (std::size_t j = 0; j < 3; ++j) {
                for (std::size_t k = 0; k < 4; ++k) {
                    const std::size_t idx[] = {i, j, k};
                    const double v = t.at(idx);
                    const std::size_t row = idx[n];
                    bool found = false;
                    for (std::size_t c = 0; c < m.extent(1); ++c) found = found || m(row, c) == v;
                    ASSERT_TRUE(found);
                }
            }
        }
    }
}

TEST(Tensor, TransposeTwiceIsIdentity)
{
    const TensorND m = iota_tensor({3, 5});
    const TensorND t = transpose(m);
    EXPECT_EQ(t.shape(), (Shape{5, 3}));
    EXPECT_EQ(t(4, 2), m(2, 4));
    EXPECT_EQ(transpose(t), m);
}

TEST(Tensor, MinAlongFirstAxisPrefersSmallestIndexOnTies)
{
    const TensorND t({3, 2}, std::vector<double>{2, 1, 0, 1, 0, 5});
    const auto r = min_along_first_axis(t);
    EXPECT_EQ(r.values.values(), (std::vector<double>{0, 1}));
    EXPECT_EQ(r.argmin.values(), (std::vector<std::size_t>{1, 0}));
}

TEST(Tensor, MinAlongFirstAxisMatchesLinearScan)
{
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> small(0, 3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t depth = 1 + trial % 6, lanes = 1 + trial % 5;
        TensorND t({depth, lanes});
        for (double& v : t.data()) v = small(rng);
        const auto r = min_along_first_axis(t);
        for (std::size_t l = 0; l < lanes; ++l) {
            std::size_t best = 0;
            for (std::size_t d = 1; d < depth; ++d) {
                if (t(d, l) < t(best, l)) best = d;
            }
            ASSERT_EQ(r.argmin[l], best);
            ASSERT_EQ(r.values[l], t(best, l));
        }
    }
}
