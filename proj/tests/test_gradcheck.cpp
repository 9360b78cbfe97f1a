#include <gtest/gtest.h>

#include "dualdepth/core/attention_op.hpp"
#include "dualdepth/core/conv.hpp"
#include "dualdepth/core/ops.hpp"
#include "dualdepth/core/resample.hpp"
#include "dualdepth/geometry.hpp"

#include "gradcheck.hpp"

namespace dd = dualdepth;
namespace ref = refeng;
using testutil::grad_check;
using testutil::random_tensor;

namespace {
constexpr double kTolPointwise = 1e-3;
constexpr double kTolSampling = 1e-2;
constexpr double kTolForward = 2e-5;
}  // namespace

TEST(GradCheck, BinaryOps) {
    dd::Rng rng(101);
    const dd::Shape s{1, 3, 5, 5};
    struct Case {
        const char* name;
        std::function<dd::Value(dd::Value, dd::Value)> eng;
        std::function<ref::RefTensor(const ref::RefTensor&, const ref::RefTensor&)> ref;
    };
    const Case cases[] = {
        {"add", [](dd::Value a, dd::Value b) { return dd::add(a, b); },
         [](const ref::RefTensor& a, const ref::RefTensor& b) { return ref::add(a, b); }},
        {"sub", [](dd::Value a, dd::Value b) { return dd::sub(a, b); },
         [](const ref::RefTensor& a, const ref::RefTensor& b) { return ref::sub(a, b); }},
        {"mul", [](dd::Value a, dd::Value b) { return dd::mul(a, b); },
         [](const ref::RefTensor& a, const ref::RefTensor& b) { return ref::mul(a, b); }},
        {"min2", [](dd::Value a, dd::Value b) { return dd::min2(a, b); },
         [](const ref::RefTensor& a, const ref::RefTensor& b) { return ref::min2(a, b); }},
    };
    for (const auto& c : cases) {
        auto res = grad_check(
            [&c](dd::Tape&, const std::vector<dd::Value>& in) { return c.eng(in[0], in[1]); },
            [&c](const std::vector<ref::RefTensor>& in) { return c.ref(in[0], in[1]); },
            {random_tensor(s, rng), random_tensor(s, rng)});
        EXPECT_LT(res.max_rel_err, kTolPointwise) << c.name;
        EXPECT_LT(res.max_forward_diff, kTolForward) << c.name;
    }
}

TEST(GradCheck, DivAndBroadcast) {
    dd::Rng rng(102);
    auto res = grad_check(
        [](dd::Tape&, const std::vector<dd::Value>& in) { return dd::div(in[0], in[1]); },
        [](const std::vector<ref::RefTensor>& in) { return ref::div(in[0], in[1]); },
        {random_tensor({1, 2, 4, 4}, rng), random_tensor({1, 2, 4, 4}, rng, 0.8f, 2.0f)});
    EXPECT_LT(res.max_rel_err, kTolPointwise);

    auto res2 = grad_check(
        [](dd::Tape&, const std::vector<dd::Value>& in) { return dd::div(in[0], in[1]); },
        [](const std::vector<ref::RefTensor>& in) { return ref::div(in[0], in[1]); },
        {random_tensor({2, 1, 4, 4}, rng), random_tensor({2, 1, 1, 1}, rng, 0.8f, 2.0f)});
    EXPECT_LT(res2.max_rel_err, kTolPointwise);
}

TEST(GradCheck, UnaryOps) {
    dd::Rng rng(104);
    const dd::Shape s{1, 4, 6, 6};
    struct Case {
        const char* name;
        std::function<dd::Value(dd::Value)> eng;
        std::function<double(double)> f;
        float lo, hi;
    };
    const Case cases[] = {
        {"abs", [](dd::Value v) { return dd::vabs(v); },
         [](double x) { return std::fabs(x); }, -2.0f, 2.0f},
        {"exp", [](dd::Value v) { return dd::vexp(v); },
         [](double x) { return std::exp(x); }, -2.0f, 2.0f},
        {"sqrt", [](dd::Value v) { return dd::vsqrt(v); },
         [](double x) { return std::sqrt(x); }, 0.2f, 2.0f},
        {"sigmoid", [](dd::Value v) { return dd::sigmoid(v); },
         [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, -2.0f, 2.0f},
        {"relu", [](dd::Value v) { return dd::relu(v); },
         [](double x) { return x > 0 ? x : 0.0; }, -2.0f, 2.0f},
        {"elu", [](dd::Value v) { return dd::elu(v); },
         [](double x) { return x > 0 ? x : std::exp(x) - 1.0; }, -2.0f, 2.0f},
        {"scale", [](dd::Value v) { return dd::scale(v, -1.7f); },
         [](double x) { return x * double(-1.7f); }, -2.0f, 2.0f},
        {"add_const", [](dd::Value v) { return dd::add_const(v, 0.3f); },
         [](double x) { return x + double(0.3f); }, -2.0f, 2.0f},
    };
    for (const auto& c : cases) {
        auto res = grad_check(
            [&c](dd::Tape&, const std::vector<dd::Value>& in) { return c.eng(in[0]); },
            [&c](const std::vector<ref::RefTensor>& in) { return ref::unary(in[0], c.f); },
            {random_tensor(s, rng, c.lo, c.hi)});
        EXPECT_LT(res.max_rel_err, kTolPointwise) << c.name;
        EXPECT_LT(res.max_forward_diff, kTolForward) << c.name;
    }
}

TEST(GradCheck, Reductions) {
    dd::Rng rng(105);
    const dd::Shape s{1, 4, 6, 6};
    const std::vector<std::vector<int>> axsets = {{0, 1, 2, 3}, {1}, {2, 3}, {1, 2, 3}};
    for (std::size_t i = 0; i < axsets.size(); ++i) {
        for (bool is_mean : {true, false}) {
            const std::vector<int>& axes = axsets[i];
            auto res = grad_check(
                [axes, is_mean](dd::Tape&, const std::vector<dd::Value>& in) {
                    return is_mean ? dd::mean(in[0], axes) : dd::sum(in[0], axes);
                },
                [axes, is_mean](const std::vector<ref::RefTensor>& in) {
                    return ref::reduce(in[0], axes, is_mean);
                },
                {random_tensor(s, rng)});
            EXPECT_LT(res.max_rel_err, kTolPointwise) << "axes set " << i;
        }
    }
}

TEST(GradCheck, ConcatSliceDiff) {
    dd::Rng rng(106);
    auto res = grad_check(
        [](dd::Tape&, const std::vector<dd::Value>& in) {
            auto sl = dd::slice_channels(dd::concat_channels({in[0], in[1]}), 1, 3);
            // diff_x and diff_y have different shapes; pad the comparison by
            // running them on separate branches joined through concat of means.
            return dd::concat_channels({dd::diff_x(sl), dd::slice_channels(dd::diff_x(sl), 0, 1)});
        },
        [](const std::vector<ref::RefTensor>& in) {
            auto sl = ref::slice_channels(ref::concat_channels({in[0], in[1]}), 1, 3);
            return ref::concat_channels({ref::diff_x(sl), ref::slice_channels(ref::diff_x(sl), 0, 1)});
        },
        {random_tensor({1, 2, 5, 5}, rng), random_tensor({1, 2, 5, 5}, rng)});
    EXPECT_LT(res.max_rel_err, kTolPointwise);

    auto res2 = grad_check(
        [](dd::Tape&, const std::vector<dd::Value>& in) { return dd::diff_y(in[0]); },
        [](const std::vector<ref::RefTensor>& in) { return ref::diff_y(in[0]); },
        {random_tensor({1, 3, 5, 5}, rng)});
    EXPECT_LT(res2.max_rel_err, kTolPointwise);
}

TEST(GradCheck, Conv2dStride1) {
    dd::Rng rng(107);
    auto res = grad_check(
        [](dd::Tape&, const std::vector<dd::Value>& in) {
            return dd::conv2d(in[0], in[1], in[2], 1);
        },
        [](const std::vector<ref::RefTensor>& in) { return ref::conv2d(in[0], in[1], in[2], 1); },
        {random_tensor({1, 3, 5, 6}, rng), random_tensor({2, 3, 3, 3}, rng, -0.8f, 0.8f),
         random_tensor({1, 2, 1, 1}, rng)});
    EXPECT_LT(res.max_rel_err, kTolPointwise);
    EXPECT_LT(res.max_forward_diff, kTolForward);
}

TEST(GradCheck, Conv2dStride2) {
    dd::Rng rng(108);
    auto res = grad_check(
        [](dd::Tape&, const std::vector<dd::Value>& in) {
            return dd::conv2d(in[0], in[1], in[2], 2);
        },
        [](const std::vector<ref::RefTensor>& in) { return ref::conv2d(in[0], in[1], in[2], 2); },
        {random_tensor({2, 2, 6, 5}, rng), random_tensor({3, 2, 3, 3}, rng, -0.8f, 0.8f),
         random_tensor({1, 3, 1, 1}, rng)});
    EXPECT_LT(res.max_rel_err, kTolPointwise);
    EXPECT_LT(res.max_forward_diff, kTolForward);
}

TEST(GradCheck, Conv2d1x1) {
    dd::Rng rng(109);
    auto res = grad_check(
        [](dd::Tape&, const std::vector<dd::Value>& in) {
            return dd::conv2d(in[0], in[1], in[2], 1);
        },
        [](const std::vector<ref::RefTensor>& in) { return ref::conv2d(in[0], in[1], in[2], 1); },
        {random_tensor({1, 4, 3, 3}, rng), random_tensor({2, 4, 1, 1}, rng),
         random_tensor({1, 2, 1, 1}, rng)});
    EXPECT_LT(res.max_rel_err, kTolPointwise);
}

TEST(GradCheck, PoolMean3x3) {
    dd::Rng rng(110);
    auto res = grad_check(
        [](dd::Tape&, const std::vector<dd::Value>& in) { return dd::pool_mean3x3(in[0]); },
        [](const std::vector<ref::RefTensor>& in) { return ref::pool_mean3x3(in[0]); },
        {random_tensor({1, 2, 5, 6}, rng)});
    EXPECT_LT(res.max_rel_err, kTolPointwise);
    EXPECT_LT(res.max_forward_diff, kTolForward);
}

TEST(GradCheck, ResizeBilinear) {
    dd::Rng rng(111);
    for (auto [oh, ow] : {std::pair{8, 9}, std::pair{3, 4}}) {
        auto res = grad_check(
            [oh = oh, ow = ow](dd::Tape&, const std::vector<dd::Value>& in) {
                return dd::resize_bilinear(in[0], oh, ow);
            },
            [oh = oh, ow = ow](const std::vector<ref::RefTensor>& in) {
                return ref::resize_bilinear(in[0], oh, ow);
            },
            {random_tensor({1, 2, 5, 6}, rng)});
        EXPECT_LT(res.max_rel_err, kTolPointwise) << oh << "x" << ow;
        EXPECT_LT(res.max_forward_diff, kTolForward);
    }
}

TEST(GradCheck, GridSampleSourceAndCoords) {
    dd::Rng rng(112);
    // Bilinear sampling is only piecewise smooth; keep coordinates away from
    // integer cell boundaries and use a smaller step.
    dd::Tensor coords(dd::Shape{1, 2, 4, 4});
    for (int iy = 0; iy < 4; ++iy) {
        for (int ix = 0; ix < 4; ++ix) {
            coords.at(0, 0, iy, ix) = ix * 1.2f + 0.31f + 0.17f * rng.uniform_f(0.0f, 1.0f);
            coords.at(0, 1, iy, ix) = iy * 1.1f + 0.27f + 0.21f * rng.uniform_f(0.0f, 1.0f);
        }
    }
    auto res = grad_check(
        [](dd::Tape&, const std::vector<dd::Value>& in) { return dd::grid_sample(in[0], in[1]); },
        [](const std::vector<ref::RefTensor>& in) { return ref::grid_sample(in[0], in[1]); },
        {random_tensor({1, 3, 6, 6}, rng), coords}, 99, 1e-4, 1e-3);
    EXPECT_LT(res.max_rel_err, kTolSampling);
    EXPECT_LT(res.max_forward_diff, kTolForward);
}

TEST(GradCheck, ProjectDepthAndPose) {
    dd::Rng rng(113);
    dd::Tensor depth = random_tensor({1, 1, 5, 6}, rng, 3.0f, 9.0f);
    dd::Tensor pose(dd::Shape{1, 6, 1, 1});
    pose.at(0, 0, 0, 0) = 0.3f;
    pose.at(0, 1, 0, 0) = -0.1f;
    pose.at(0, 2, 0, 0) = 0.4f;
    pose.at(0, 3, 0, 0) = 0.02f;
    pose.at(0, 4, 0, 0) = -0.03f;
    pose.at(0, 5, 0, 0) = 0.05f;
    const dd::Intrinsics K(8.0f, 8.0f, 2.5f, 2.0f);
    auto res = grad_check(
        [K](dd::Tape&, const std::vector<dd::Value>& in) { return dd::project(in[0], in[1], K); },
        [K](const std::vector<ref::RefTensor>& in) { return ref::project(in[0], in[1], K); },
        {depth, pose});
    EXPECT_LT(res.max_rel_err, kTolPointwise);
    EXPECT_LT(res.max_forward_diff, 1e-4);
}

TEST(GradCheck, SelfAttentionAllModes) {
    dd::Rng rng(114);
    for (auto mode : {dd::NormMode::Raw, dd::NormMode::Mean, dd::NormMode::Softmax}) {
        auto res = grad_check(
            [mode](dd::Tape&, const std::vector<dd::Value>& in) {
                return dd::self_attention(in[0], mode);
            },
            [mode](const std::vector<ref::RefTensor>& in) {
                return ref::self_attention(in[0], mode);
            },
            {random_tensor({1, 3, 3, 4}, rng, -1.0f, 1.0f)});
        EXPECT_LT(res.max_rel_err, kTolPointwise) << "mode " << int(mode);
        EXPECT_LT(res.max_forward_diff, kTolForward) << "mode " << int(mode);
    }
}

TEST(GradCheck, WarpChainThroughDepthAndPose) {
    // Photometric-style loss through project + grid_sample. The motion and
    // depth values keep the warped coordinates away from integer boundaries
    // (where bilinear sampling has kinks), and the validity mask is pinned to
    // the base coordinates on both sides, matching its constant role in losses.
    dd::Rng rng(115);
    dd::Tensor src = random_tensor({1, 3, 8, 10}, rng, 0.0f, 1.0f);
    dd::Tensor tgt = random_tensor({1, 3, 8, 10}, rng, 0.0f, 1.0f);
    dd::Tensor depth = random_tensor({1, 1, 8, 10}, rng, 4.8f, 5.2f);
    dd::Tensor pose(dd::Shape{1, 6, 1, 1});
    pose.at(0, 0, 0, 0) = 0.25f;
    pose.at(0, 1, 0, 0) = 0.15f;
    pose.at(0, 3, 0, 0) = 0.002f;
    pose.at(0, 4, 0, 0) = -0.003f;
    pose.at(0, 5, 0, 0) = 0.004f;
    const dd::Intrinsics K(9.0f, 9.0f, 4.5f, 3.5f);

    dd::Tensor base_mask;
    {
        dd::Tape t0;
        auto view = dd::synthesize_view(t0.constant(src), t0.constant(depth), K,
                                        t0.constant(pose));
        base_mask = view.valid;
    }

    // Squared error keeps the loss smooth between bilinear cells; a pose
    // perturbation moves every pixel at once, so an |.| kink would land inside
    // the FD interval for some pixel almost surely.
    auto res = grad_check(
        [&](dd::Tape& t, const std::vector<dd::Value>& in) {
            auto view = dd::synthesize_view(t.constant(src), in[0], K, in[1]);
            auto diff = dd::sub(view.warped, t.constant(tgt));
            return dd::mul(dd::mul(diff, diff), t.constant(base_mask));
        },
        [&](const std::vector<ref::RefTensor>& in) {
            auto coords = ref::project(in[0], in[1], K);
            auto warped = ref::grid_sample(ref::RefTensor::from(src), coords);
            auto diff = ref::sub(warped, ref::RefTensor::from(tgt));
            return ref::mul(ref::mul(diff, diff), ref::RefTensor::from(base_mask));
        },
        {depth, pose}, 99, 1e-4, 1e-4);
    EXPECT_LT(res.max_rel_err, kTolSampling);
}

int main(int argc, char** argv) {
    ::testing::InitGoogleTest(&argc, argv);
    return RUN_ALL_TESTS();
}
