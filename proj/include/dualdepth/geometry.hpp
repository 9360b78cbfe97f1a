#pragma once

#include <array>

#include "dualdepth/core/ops.hpp"
#include "dualdepth/core/resample.hpp"

namespace dualdepth {

/// Pinhole intrinsics in pixels.
struct Intrinsics {
    float fx = 1.0f, fy = 1.0f, cx = 0.0f, cy = 0.0f;

    Intrinsics() = default;
    Intrinsics(float fx_, float fy_, float cx_, float cy_) : fx(fx_), fy(fy_), cx(cx_), cy(cy_) {
        check(fx > 0.0f && fy > 0.0f, "Intrinsics: focal lengths must be positive");
    }

    /// Intrinsics of the same camera after resampling the image by (rx, ry),
    /// consistent with align-corners-false pixel centers.
    Intrinsics scaled(double rx, double ry) const {
        return Intrinsics(static_cast<float>(fx * rx), static_cast<float>(fy * ry),
                          static_cast<float>((cx + 0.5) * rx - 0.5),
                          static_cast<float>((cy + 0.5) * ry - 0.5));
    }

    /// Intrinsics after mirroring the image horizontally.
    Intrinsics hflipped(int width) const {
        return Intrinsics(fx, fy, float(width - 1) - cx, cy);
    }
};

using Mat3 = std::array<std::array<double, 3>, 3>;

/// Rigid transform [R | t]; acts on points as R x + t.
struct Mat4 {
    Mat3 R{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    std::array<double, 3> t{0, 0, 0};

    std::array<double, 3> apply(const std::array<double, 3>& p) const {
        return {R[0][0] * p[0] + R[0][1] * p[1] + R[0][2] * p[2] + t[0],
                R[1][0] * p[0] + R[1][1] * p[1] + R[1][2] * p[2] + t[1],
                R[2][0] * p[0] + R[2][1] * p[1] + R[2][2] * p[2] + t[2]};
    }

    std::array<double, 3> rotate(const std::array<double, 3>& p) const {
        return {R[0][0] * p[0] + R[0][1] * p[1] + R[0][2] * p[2],
                R[1][0] * p[0] + R[1][1] * p[1] + R[1][2] * p[2],
                R[2][0] * p[0] + R[2][1] * p[1] + R[2][2] * p[2]};
    }

    Mat4 inverse() const {
        Mat4 inv;
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) inv.R[i][j] = R[j][i];
        }
        for (int i = 0; i < 3; ++i) {
            inv.t[i] = -(inv.R[i][0] * t[0] + inv.R[i][1] * t[1] + inv.R[i][2] * t[2]);
        }
        return inv;
    }
};

inline Mat3 mat3_mul(const Mat3& a, const Mat3& b) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    return r;
}

/// 6-DoF pose: translation plus Euler angles (radians, applied X then Y then Z).
struct PoseVec {
    std::array<float, 3> t{0, 0, 0};
    std::array<float, 3> r{0, 0, 0};
};

namespace detail {

inline Mat3 rot_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    return {{{1, 0, 0}, {0, c, -s}, {0, s, c}}};
}
inline Mat3 rot_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    return {{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}};
}
inline Mat3 rot_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    return {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
}
inline Mat3 drot_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    return {{{0, 0, 0}, {0, -s, -c}, {0, c, -s}}};
}
inline Mat3 drot_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    return {{{-s, 0, c}, {0, 0, 0}, {-c, 0, -s}}};
}
inline Mat3 drot_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    return {{{-s, -c, 0}, {c, -s, 0}, {0, 0, 0}}};
}

inline Mat3 euler_to_rot(double rx, double ry, double rz) {
    return mat3_mul(rot_z(rz), mat3_mul(rot_y(ry), rot_x(rx)));
}

/// dR/drx, dR/dry, dR/drz for R = Rz Ry Rx.
inline std::array<Mat3, 3> euler_rot_derivs(double rx, double ry, double rz) {
    const Mat3 Rx = rot_x(rx), Ry = rot_y(ry), Rz = rot_z(rz);
    return {mat3_mul(Rz, mat3_mul(Ry, drot_x(rx))), mat3_mul(Rz, mat3_mul(drot_y(ry), Rx)),
            mat3_mul(drot_z(rz), mat3_mul(Ry, Rx))};
}

constexpr double kMinProjectedZ = 1e-6;
constexpr float kInvalidCoord = -2.0f;

}  // namespace detail

inline Mat4 pose_to_matrix(const PoseVec& pose) {
    Mat4 m;
    m.R = detail::euler_to_rot(pose.r[0], pose.r[1], pose.r[2]);
    m.t = {pose.t[0], pose.t[1], pose.t[2]};
    return m;
}

/// Continuous source-pixel coordinates for each target pixel, plus the exact
/// in-bounds indicator. Points projecting behind the camera carry a sentinel
/// coordinate that the indicator maps to 0.
struct SampleGrid {
    Tensor coords;  // (n, 2, h, w): channel 0 = u, channel 1 = v
    Tensor valid;   // (n, 1, h, w) in {0, 1}
};

namespace detail {

/// Shared pinhole arithmetic: projects one target pixel through depth and T.
inline void project_pixel(double x, double y, double depth, const Intrinsics& K,
                          const Mat4& T, float& u, float& v) {
    const double rx = (x - K.cx) / K.fx;
    const double ry = (y - K.cy) / K.fy;
    const std::array<double, 3> Xs = T.apply({depth * rx, depth * ry, depth});
    if (Xs[2] > kMinProjectedZ) {
        u = static_cast<float>(K.fx * Xs[0] / Xs[2] + K.cx);
        v = static_cast<float>(K.fy * Xs[1] / Xs[2] + K.cy);
    } else {
        u = kInvalidCoord;
        v = kInvalidCoord;
    }
}

}  // namespace detail

/// Eq.-style rigid reprojection of every pixel of a depth map (plain tensors,
/// no gradients): p_s = K T D(p) K^-1 p.
inline SampleGrid project(const Tensor& depth, const Intrinsics& K, const Mat4& T) {
    check(depth.c() == 1, "project: depth must be single-channel, got " + depth.shape().str());
    const int n = depth.n(), h = depth.h(), w = depth.w();
    SampleGrid grid;
    grid.coords = Tensor(Shape{n, 2, h, w});
    for (int in_ = 0; in_ < n; ++in_) {
        for (int iy = 0; iy < h; ++iy) {
            for (int ix = 0; ix < w; ++ix) {
                float u, v;
                detail::project_pixel(ix, iy, depth.at(in_, 0, iy, ix), K, T, u, v);
                grid.coords.at(in_, 0, iy, ix) = u;
                grid.coords.at(in_, 1, iy, ix) = v;
            }
        }
    }
    grid.valid = in_bounds_mask(grid.coords, h, w);
    return grid;
}

/// Differentiable projection. `pose` is (n,6,1,1) = (tx,ty,tz,rx,ry,rz) per
/// sample; gradients flow into both the depth map and the pose components.
inline Value project(Value depth, Value pose, const Intrinsics& K) {
    Tape& t = *depth.tape;
    const Shape ds = depth.shape();
    check(ds.c == 1, "project: depth must be single-channel, got " + ds.str());
    const Shape ps = pose.shape();
    check(ps.n == ds.n && ps.c == 6 && ps.h == 1 && ps.w == 1,
          "project: pose must be (n,6,1,1), got " + ps.str());

    Tensor coords(Shape{ds.n, 2, ds.h, ds.w});
    {
        const Tensor& dv = depth.val();
        const Tensor& pv = pose.val();
        for (int in_ = 0; in_ < ds.n; ++in_) {
            PoseVec pvec;
            for (int k = 0; k < 3; ++k) {
                pvec.t[k] = pv.at(in_, k, 0, 0);
                pvec.r[k] = pv.at(in_, 3 + k, 0, 0);
            }
            const Mat4 T = pose_to_matrix(pvec);
            for (int iy = 0; iy < ds.h; ++iy) {
                for (int ix = 0; ix < ds.w; ++ix) {
                    float u, v;
                    detail::project_pixel(ix, iy, dv.at(in_, 0, iy, ix), K, T, u, v);
                    coords.at(in_, 0, iy, ix) = u;
                    coords.at(in_, 1, iy, ix) = v;
                }
            }
        }
    }

    const int id_ = depth.id, ip = pose.id;
    return t.push(
        OpKind::Project, {id_, ip}, std::move(coords),
        [id_, ip, ds, K](Tape& tp, const Tensor& g, GradSink& sink) {
            const Tensor& dv = tp.value(id_);
            const Tensor& pv = tp.value(ip);
            const bool wd = sink.wants(id_), wp = sink.wants(ip);
            if (!wd && !wp) return;
            Tensor* gd = wd ? &sink.buf(id_) : nullptr;
            Tensor* gp = wp ? &sink.buf(ip) : nullptr;
            for (int in_ = 0; in_ < ds.n; ++in_) {
                const double rx_a = pv.at(in_, 3, 0, 0), ry_a = pv.at(in_, 4, 0, 0),
                             rz_a = pv.at(in_, 5, 0, 0);
                Mat4 T;
                T.R = detail::euler_to_rot(rx_a, ry_a, rz_a);
                T.t = {pv.at(in_, 0, 0, 0), pv.at(in_, 1, 0, 0), pv.at(in_, 2, 0, 0)};
                const auto dR = detail::euler_rot_derivs(rx_a, ry_a, rz_a);
                double acc_t[3] = {0, 0, 0};
                double acc_r[3] = {0, 0, 0};
                for (int iy = 0; iy < ds.h; ++iy) {
                    for (int ix = 0; ix < ds.w; ++ix) {
                        const double depth = dv.at(in_, 0, iy, ix);
                        const double rx = (ix - K.cx) / K.fx;
                        const double ry = (iy - K.cy) / K.fy;
                        const std::array<double, 3> Xc{depth * rx, depth * ry, depth};
                        const std::array<double, 3> Xs = T.apply(Xc);
                        if (Xs[2] <= detail::kMinProjectedZ) continue;
                        const double gu = g.at(in_, 0, iy, ix);
                        const double gv = g.at(in_, 1, iy, ix);
                        if (gu == 0.0 && gv == 0.0) continue;
                        const double iz = 1.0 / Xs[2];
                        const std::array<double, 3> gXs{
                            gu * K.fx * iz, gv * K.fy * iz,
                            -(gu * K.fx * Xs[0] + gv * K.fy * Xs[1]) * iz * iz};
                        if (wd) {
                            const std::array<double, 3> Rray = T.rotate({rx, ry, 1.0});
                            gd->at(in_, 0, iy, ix) += static_cast<float>(
                                gXs[0] * Rray[0] + gXs[1] * Rray[1] + gXs[2] * Rray[2]);
                        }
                        if (wp) {
                            for (int k = 0; k < 3; ++k) acc_t[k] += gXs[k];
                            for (int k = 0; k < 3; ++k) {
                                const auto& D = dR[static_cast<std::size_t>(k)];
                                const std::array<double, 3> DXc{
                                    D[0][0] * Xc[0] + D[0][1] * Xc[1] + D[0][2] * Xc[2],
                                    D[1][0] * Xc[0] + D[1][1] * Xc[1] + D[1][2] * Xc[2],
                                    D[2][0] * Xc[0] + D[2][1] * Xc[1] + D[2][2] * Xc[2]};
                                acc_r[k] += gXs[0] * DXc[0] + gXs[1] * DXc[1] + gXs[2] * DXc[2];
                            }
                        }
                    }
                }
                if (wp) {
                    for (int k = 0; k < 3; ++k) {
                        gp->at(in_, k, 0, 0) += static_cast<float>(acc_t[k]);
                        gp->at(in_, 3 + k, 0, 0) += static_cast<float>(acc_r[k]);
                    }
                }
            }
        });
}

/// One warped source view: the sampled image (differentiable) and the exact
/// validity mask (constant).
struct SynthesizedView {
    Value warped;
    Value coords;
    Tensor valid;
};

/// Warps a source image into the target frame through the target depth and the
/// relative pose, Eq.-1 style: project, then bilinear sampling.
inline SynthesizedView synthesize_view(Value source_img, Value target_depth, const Intrinsics& K,
                                       Value pose) {
    const Shape ss = source_img.shape(), ds = target_depth.shape();
    check(ss.h == ds.h && ss.w == ds.w,
          "synthesize_view: source " + ss.str() + " and depth " + ds.str() + " must match spatially");
    SynthesizedView out;
    out.coords = project(target_depth, pose, K);
    out.warped = grid_sample(source_img, out.coords);
    out.valid = in_bounds_mask(out.coords.val(), ss.h, ss.w);
    return out;
}

/// Non-differentiable convenience used by the renderer checks and the eval CLI.
inline std::pair<Tensor, Tensor> synthesize_view(const Tensor& source_img,
                                                 const Tensor& target_depth, const Intrinsics& K,
                                                 const Mat4& T) {
    Tape tape;
    const SampleGrid grid = project(target_depth, K, T);
    Value src = tape.constant(source_img);
    Value coords = tape.constant(grid.coords);
    Value warped = grid_sample(src, coords);
    return {warped.val(), grid.valid};
}

}  // namespace dualdepth
