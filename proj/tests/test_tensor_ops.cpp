#include <gtest/gtest.h>

#include "dualdepth/core/adam.hpp"
#include "dualdepth/core/conv.hpp"
#include "dualdepth/core/ops.hpp"
#include "dualdepth/core/resample.hpp"
#include "dualdepth/core/rng.hpp"

#include "gradcheck.hpp"

namespace dd = dualdepth;

TEST(Tensor, ShapeAndData) {
    dd::Tensor t(dd::Shape{1, 2, 3, 4}, 0.5f);
    EXPECT_EQ(t.numel(), 24);
    EXPECT_FLOAT_EQ(t.at(0, 1, 2, 3), 0.5f);
    EXPECT_THROW(dd::Tensor::from(dd::Shape{1, 1, 1, 3}, {1.0f, 2.0f}), std::invalid_argument);
}

TEST(Elementwise, Min2) {
    dd::Tape tape;
    auto a = tape.leaf(dd::Tensor::from({1, 1, 1, 2}, {1.0f, 5.0f}));
    auto b = tape.leaf(dd::Tensor::from({1, 1, 1, 2}, {3.0f, 2.0f}));
    auto m = dd::min2(a, b);
    EXPECT_FLOAT_EQ(m.val().data()[0], 1.0f);
    EXPECT_FLOAT_EQ(m.val().data()[1], 2.0f);
}

TEST(Elementwise, SigmoidAtZero) {
    dd::Tape tape;
    auto x = tape.leaf(dd::Tensor::scalar(0.0f));
    EXPECT_FLOAT_EQ(dd::sigmoid(x).val().scalar_value(), 0.5f);
}

TEST(Elementwise, AbsValueAndGradient) {
    dd::Tape tape;
    auto x = tape.leaf(dd::Tensor::scalar(-3.0f));
    auto y = dd::vabs(x);
    EXPECT_FLOAT_EQ(y.val().scalar_value(), 3.0f);
    auto grads = tape.backward(dd::sum_all(y));
    EXPECT_FLOAT_EQ(dd::grad_of(grads, x).scalar_value(), -1.0f);
}

TEST(Elementwise, ShapeMismatchRejected) {
    dd::Tape tape;
    auto a = tape.leaf(dd::Tensor(dd::Shape{1, 2, 3, 3}));
    auto b = tape.leaf(dd::Tensor(dd::Shape{1, 3, 3, 3}));
    EXPECT_THROW(dd::add(a, b), std::invalid_argument);
}

TEST(Elementwise, ScalarBroadcast) {
    dd::Tape tape;
    auto a = tape.leaf(dd::Tensor::from({1, 1, 1, 3}, {1.0f, 2.0f, 3.0f}));
    auto s = tape.leaf(dd::Tensor::scalar(2.0f));
    auto y = dd::mul(a, s);
    EXPECT_FLOAT_EQ(y.val().data()[2], 6.0f);
    auto grads = tape.backward(dd::sum_all(y));
    EXPECT_FLOAT_EQ(dd::grad_of(grads, s).scalar_value(), 6.0f);  // 1+2+3
}

TEST(Reduce, MeanAllAxes) {
    dd::Tape tape;
    auto x = tape.leaf(dd::Tensor::from({1, 1, 2, 2}, {1.0f, 2.0f, 3.0f, 6.0f}));
    EXPECT_FLOAT_EQ(dd::mean_all(x).val().scalar_value(), 3.0f);
}

TEST(Reduce, SumOfZeros) {
    dd::Tape tape;
    auto x = tape.leaf(dd::Tensor(dd::Shape{2, 3, 4, 5}));
    EXPECT_FLOAT_EQ(dd::sum_all(x).val().scalar_value(), 0.0f);
}

TEST(Reduce, MeanGradientIsOneOverN) {
    dd::Tape tape;
    auto x = tape.leaf(dd::Tensor::from({1, 1, 1, 4}, {1.0f, 2.0f, 3.0f, 6.0f}));
    auto grads = tape.backward(dd::mean_all(x));
    for (int i = 0; i < 4; ++i) {
        EXPECT_FLOAT_EQ(dd::grad_of(grads, x).data()[i], 0.25f);
    }
}

TEST(Reduce, EmptyAxesIsIdentity) {
    dd::Tape tape;
    auto x = tape.leaf(dd::Tensor::from({1, 1, 1, 3}, {1.0f, 2.0f, 3.0f}));
    auto y = dd::mean(x, {});
    EXPECT_TRUE(dd::same_bits(y.val(), x.val()));
}

TEST(Reduce, PartialAxes) {
    dd::Tape tape;
    auto x = tape.leaf(dd::Tensor::from({1, 2, 1, 2}, {1.0f, 2.0f, 10.0f, 20.0f}));
    auto y = dd::mean(x, {1});  // over channels
    EXPECT_EQ(y.shape(), (dd::Shape{1, 1, 1, 2}));
    EXPECT_FLOAT_EQ(y.val().data()[0], 5.5f);
    EXPECT_FLOAT_EQ(y.val().data()[1], 11.0f);
}

TEST(Concat, ShapeArithmetic) {
    dd::Tape tape;
    auto a = tape.leaf(dd::Tensor(dd::Shape{1, 2, 4, 4}, 1.0f));
    auto b = tape.leaf(dd::Tensor(dd::Shape{1, 3, 4, 4}, 2.0f));
    auto c = dd::concat_channels({a, b});
    EXPECT_EQ(c.shape(), (dd::Shape{1, 5, 4, 4}));
    EXPECT_FLOAT_EQ(c.val().at(0, 1, 0, 0), 1.0f);
    EXPECT_FLOAT_EQ(c.val().at(0, 2, 0, 0), 2.0f);
}

TEST(Concat, SingleInputIdentity) {
    dd::Tape tape;
    dd::Rng rng(7);
    auto a = tape.leaf(testutil::random_tensor({1, 3, 2, 2}, rng));
    auto c = dd::concat_channels({a});
    EXPECT_TRUE(dd::same_bits(c.val(), a.val()));
}

TEST(Concat, BackwardSplitsOnes) {
    dd::Tape tape;
    auto a = tape.leaf(dd::Tensor(dd::Shape{1, 2, 2, 2}, 3.0f));
    auto b = tape.leaf(dd::Tensor(dd::Shape{1, 1, 2, 2}, 4.0f));
    auto c = dd::concat_channels({a, b});
    auto grads = tape.backward(dd::sum_all(c));
    const dd::Tensor& ga = dd::grad_of(grads, a);
    const dd::Tensor& gb = dd::grad_of(grads, b);
    EXPECT_EQ(ga.shape(), a.shape());
    EXPECT_EQ(gb.shape(), b.shape());
    for (std::int64_t i = 0; i < ga.numel(); ++i) EXPECT_FLOAT_EQ(ga.data()[i], 1.0f);
    for (std::int64_t i = 0; i < gb.numel(); ++i) EXPECT_FLOAT_EQ(gb.data()[i], 1.0f);
    EXPECT_THROW(dd::concat_channels(
                     {a, tape.leaf(dd::Tensor(dd::Shape{1, 1, 3, 2}))}),
                 std::invalid_argument);
}

TEST(Conv2d, AllOnesWithReflectionPadding) {
    dd::Tape tape;
    auto x = tape.leaf(dd::Tensor(dd::Shape{1, 1, 3, 3}, 1.0f));
    auto w = tape.leaf(dd::Tensor(dd::Shape{1, 1, 3, 3}, 1.0f));
    auto b = tape.leaf(dd::Tensor(dd::Shape{1, 1, 1, 1}, 0.0f));
    auto y = dd::conv2d(x, w, b, 1);
    ASSERT_EQ(y.shape(), (dd::Shape{1, 1, 3, 3}));
    for (std::int64_t i = 0; i < 9; ++i) EXPECT_FLOAT_EQ(y.val().data()[i], 9.0f);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
    dd::Tape tape;
    dd::Rng rng(3);
    auto x = tape.leaf(testutil::random_tensor({1, 1, 5, 7}, rng));
    dd::Tensor k(dd::Shape{1, 1, 3, 3});
    k.at(0, 0, 1, 1) = 1.0f;
    auto y = dd::conv2d(x, tape.leaf(k), tape.leaf(dd::Tensor(dd::Shape{1, 1, 1, 1})), 1);
    EXPECT_TRUE(dd::same_bits(y.val(), x.val()));
}

TEST(Conv2d, Stride2OutputShape) {
    dd::Tape tape;
    auto x = tape.leaf(dd::Tensor(dd::Shape{1, 1, 8, 8}));
    auto w = tape.leaf(dd::Tensor(dd::Shape{1, 1, 3, 3}));
    auto b = tape.leaf(dd::Tensor(dd::Shape{1, 1, 1, 1}));
    EXPECT_EQ(dd::conv2d(x, w, b, 2).shape(), (dd::Shape{1, 1, 4, 4}));
    auto x2 = tape.leaf(dd::Tensor(dd::Shape{1, 1, 9, 5}));
    EXPECT_EQ(dd::conv2d(x2, w, b, 2).shape(), (dd::Shape{1, 1, 5, 3}));
}

TEST(Conv2d, RejectsBadShapes) {
    dd::Tape tape;
    auto x = tape.leaf(dd::Tensor(dd::Shape{1, 2, 4, 4}));
    auto bias = tape.leaf(dd::Tensor(dd::Shape{1, 1, 1, 1}));
    EXPECT_THROW(dd::conv2d(x, tape.leaf(dd::Tensor(dd::Shape{1, 2, 2, 2})), bias, 1),
                 std::invalid_argument);  // even kernel
    EXPECT_THROW(dd::conv2d(x, tape.leaf(dd::Tensor(dd::Shape{1, 3, 3, 3})), bias, 1),
                 std::invalid_argument);  // channel mismatch
    EXPECT_THROW(dd::conv2d(x, tape.leaf(dd::Tensor(dd::Shape{1, 2, 3, 3})), bias, 3),
                 std::invalid_argument);  // bad stride
}

TEST(Resize, ConstantStaysConstant) {
    dd::Tape tape;
    auto x = tape.leaf(dd::Tensor(dd::Shape{1, 2, 3, 5}, 0.7f));
    auto y = dd::resize_bilinear(x, 7, 11);
    for (std::int64_t i = 0; i < y.val().numel(); ++i) {
        EXPECT_NEAR(y.val().data()[i], 0.7f, 1e-6f);
    }
}

TEST(Resize, SameSizeIsIdentity) {
    dd::Tape tape;
    dd::Rng rng(11);
    auto x = tape.leaf(testutil::random_tensor({1, 2, 4, 6}, rng));
    auto y = dd::resize_bilinear(x, 4, 6);
    EXPECT_TRUE(dd::same_bits(y.val(), x.val()));
}

TEST(Resize, AlignCornersFalseUpsample) {
    // Hand evaluation of (x+0.5)*in/out - 0.5 for in=2, out=4:
    // sources {-0.25, 0.25, 0.75, 1.25} -> values {0, 0.25, 0.75, 1}.
    dd::Tape tape;
    auto x = tape.leaf(dd::Tensor::from({1, 1, 1, 2}, {0.0f, 1.0f}));
    auto y = dd::resize_bilinear(x, 1, 4);
    EXPECT_NEAR(y.val().data()[0], 0.0f, 1e-7f);
    EXPECT_NEAR(y.val().data()[1], 0.25f, 1e-7f);
    EXPECT_NEAR(y.val().data()[2], 0.75f, 1e-7f);
    EXPECT_NEAR(y.val().data()[3], 1.0f, 1e-7f);
    EXPECT_THROW(dd::resize_bilinear(x, 0, 4), std::invalid_argument);
}

TEST(Backward, IdentityLoss) {
    dd::Tape tape;
    auto x = tape.leaf(dd::Tensor::scalar(5.0f));
    auto grads = tape.backward(x);
    EXPECT_FLOAT_EQ(dd::grad_of(grads, x).scalar_value(), 1.0f);
}

TEST(Backward, MeanOfSquares) {
    dd::Tape tape;
    auto x = tape.leaf(dd::Tensor::from({1, 1, 1, 2}, {1.0f, 2.0f}));
    auto loss = dd::mean_all(dd::mul(x, x));
    auto grads = tape.backward(loss);
    EXPECT_FLOAT_EQ(dd::grad_of(grads, x).data()[0], 1.0f);
    EXPECT_FLOAT_EQ(dd::grad_of(grads, x).data()[1], 2.0f);
}

TEST(Backward, NonScalarLossRejected) {
    dd::Tape tape;
    auto x = tape.leaf(dd::Tensor(dd::Shape{1, 1, 1, 2}));
    EXPECT_THROW(tape.backward(x), std::invalid_argument);
}

TEST(Backward, UnreachedNodesGetZero) {
    dd::Tape tape;
    auto x = tape.leaf(dd::Tensor::scalar(1.0f));
    auto y = tape.leaf(dd::Tensor::scalar(2.0f));
    auto loss = dd::sum_all(dd::mul(x, x));
    auto grads = tape.backward(loss);
    EXPECT_FLOAT_EQ(dd::grad_of(grads, y).scalar_value(), 0.0f);
}

TEST(Backward, BilinearInLossWeights) {
    // grad of a*L1 + b*L2 == a*grad(L1) + b*grad(L2)
    dd::Rng rng(23);
    dd::Tensor xin = testutil::random_tensor({1, 2, 3, 3}, rng);
    const float a = 0.7f, b = -1.3f;

    auto grad_with = [&](float wa, float wb) {
        dd::Tape tape;
        auto x = tape.leaf(xin);
        auto l1 = dd::mean_all(dd::mul(x, x));
        auto l2 = dd::mean_all(dd::vexp(dd::scale(x, 0.3f)));
        auto loss = dd::add(dd::scale(l1, wa), dd::scale(l2, wb));
        auto grads = tape.backward(loss);
        return dd::grad_of(grads, x);
    };
    dd::Tensor g_combined = grad_with(a, b);
    dd::Tensor g1 = grad_with(1.0f, 0.0f);
    dd::Tensor g2 = grad_with(0.0f, 1.0f);
    for (std::int64_t i = 0; i < g_combined.numel(); ++i) {
        EXPECT_NEAR(g_combined.data()[i], a * g1.data()[i] + b * g2.data()[i], 1e-6f);
    }
}

TEST(Backward, Deterministic) {
    dd::Rng rng(5);
    dd::Tensor xin = testutil::random_tensor({1, 3, 4, 4}, rng);
    dd::Tensor win = testutil::random_tensor({2, 3, 3, 3}, rng);
    auto run = [&]() {
        dd::Tape tape;
        auto x = tape.leaf(xin);
        auto w = tape.leaf(win);
        auto b = tape.leaf(dd::Tensor(dd::Shape{1, 2, 1, 1}, 0.1f));
        auto y = dd::conv2d(x, w, b, 1);
        auto grads = tape.backward(dd::mean_all(dd::mul(y, y)));
        return std::make_pair(y.val(), dd::grad_of(grads, w));
    };
    auto [y1, g1] = run();
    auto [y2, g2] = run();
    EXPECT_TRUE(dd::same_bits(y1, y2));
    EXPECT_TRUE(dd::same_bits(g1, g2));
}

TEST(Adam, ZeroGradientKeepsParam) {
    dd::Tensor p = dd::Tensor::from({1, 1, 1, 2}, {1.0f, -2.0f});
    dd::Tensor p0 = p;
    auto st = dd::AdamState::for_param(p);
    dd::adam_step(p, dd::Tensor(p.shape()), st, {});
    EXPECT_TRUE(dd::same_bits(p, p0));
    EXPECT_EQ(st.t, 1);
}

TEST(Adam, FirstStepMagnitude) {
    dd::Tensor p = dd::Tensor::scalar(1.0f);
    auto st = dd::AdamState::for_param(p);
    dd::AdamConfig cfg;
    cfg.lr = 0.1f;
    dd::adam_step(p, dd::Tensor::scalar(1.0f), st, cfg);
    // mhat = vhat = 1 at t=1, so the update is lr/(1+eps) ~ 0.1.
    EXPECT_NEAR(p.scalar_value(), 0.9f, 1e-6f);
}

TEST(Adam, MonotoneUnderConstantGradient) {
    dd::Tensor p = dd::Tensor::scalar(3.0f);
    auto st = dd::AdamState::for_param(p);
    dd::AdamConfig cfg;
    cfg.lr = 0.05f;
    float prev = p.scalar_value();
    for (int i = 0; i < 5; ++i) {
        dd::adam_step(p, dd::Tensor::scalar(2.0f), st, cfg);
        EXPECT_LT(p.scalar_value(), prev);
        prev = p.scalar_value();
    }
    EXPECT_EQ(st.t, 5);
}

TEST(Adam, RejectsNonFiniteGradient) {
    dd::Tensor p = dd::Tensor::scalar(1.0f);
    auto st = dd::AdamState::for_param(p);
    dd::adam_step(p, dd::Tensor::scalar(1.0f), st, {});
    dd::Tensor pb = p;
    dd::AdamState stb = st;
    dd::Tensor bad = dd::Tensor::scalar(std::nanf(""));
    EXPECT_THROW(dd::adam_step(p, bad, st, {}), std::runtime_error);
    EXPECT_TRUE(dd::same_bits(p, pb));
    EXPECT_TRUE(dd::same_bits(st.m, stb.m));
    EXPECT_EQ(st.t, stb.t);
}

TEST(GridSample, IntegerCoordsGather) {
    dd::Tape tape;
    auto src = tape.leaf(dd::Tensor::from({1, 1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f}));
    dd::Tensor coords(dd::Shape{1, 2, 1, 2});
    coords.at(0, 0, 0, 0) = 1.0f;  // u
    coords.at(0, 1, 0, 0) = 0.0f;  // v
    coords.at(0, 0, 0, 1) = 0.0f;
    coords.at(0, 1, 0, 1) = 1.0f;
    auto out = dd::grid_sample(src, tape.constant(coords));
    EXPECT_FLOAT_EQ(out.val().data()[0], 2.0f);
    EXPECT_FLOAT_EQ(out.val().data()[1], 3.0f);
}

TEST(GridSample, MidpointInterpolates) {
    dd::Tape tape;
    auto src = tape.leaf(dd::Tensor::from({1, 1, 1, 2}, {0.0f, 1.0f}));
    dd::Tensor coords(dd::Shape{1, 2, 1, 1});
    coords.at(0, 0, 0, 0) = 0.5f;
    coords.at(0, 1, 0, 0) = 0.0f;
    auto out = dd::grid_sample(src, tape.constant(coords));
    EXPECT_FLOAT_EQ(out.val().scalar_value(), 0.5f);
}

TEST(GridSample, OutOfBoundsIsZeroAndInvalid) {
    dd::Tape tape;
    auto src = tape.leaf(dd::Tensor(dd::Shape{1, 1, 3, 3}, 5.0f));
    dd::Tensor coords(dd::Shape{1, 2, 1, 1});
    coords.at(0, 0, 0, 0) = -1.0f;
    coords.at(0, 1, 0, 0) = -1.0f;
    auto out = dd::grid_sample(src, tape.constant(coords));
    EXPECT_FLOAT_EQ(out.val().scalar_value(), 0.0f);
    dd::Tensor mask = dd::in_bounds_mask(coords, 3, 3);
    EXPECT_FLOAT_EQ(mask.scalar_value(), 0.0f);
}

int main(int argc, char** argv) {
    ::testing::InitGoogleTest(&argc, argv);
    return RUN_ALL_TESTS();
}
