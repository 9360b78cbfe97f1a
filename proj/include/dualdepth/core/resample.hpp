#pragma once

#include "dualdepth/core/tape.hpp"

namespace dualdepth {

namespace detail {

/// Per-axis sample plan for align-corners-false bilinear interpolation.
struct LinearTap {
    int i0, i1;
    float t;  // weight of i1
};

inline std::vector<LinearTap> bilinear_taps(int in, int out) {
    std::vector<LinearTap> taps(static_cast<std::size_t>(out));
    const double r = double(in) / double(out);
    for (int o = 0; o < out; ++o) {
        const double src = (o + 0.5) * r - 0.5;
        double fl = std::floor(src);
        int i0 = static_cast<int>(fl);
        float t = static_cast<float>(src - fl);
        int i1 = i0 + 1;
        if (i0 < 0) i0 = 0;
        if (i0 > in - 1) i0 = in - 1;
        if (i1 < 0) i1 = 0;
        if (i1 > in - 1) i1 = in - 1;
        taps[static_cast<std::size_t>(o)] = {i0, i1, t};
    }
    return taps;
}

inline Tensor resize_forward(const Tensor& xv, int out_h, int out_w,
                             const std::vector<LinearTap>& ty, const std::vector<LinearTap>& tx) {
    const Shape xs = xv.shape();
    Tensor out(Shape{xs.n, xs.c, out_h, out_w});
    for (int in_ = 0; in_ < xs.n; ++in_) {
        for (int ic = 0; ic < xs.c; ++ic) {
            const float* src = xv.data() + xv.index(in_, ic, 0, 0);
            float* dst = out.data() + out.index(in_, ic, 0, 0);
            for (int oy = 0; oy < out_h; ++oy) {
                const auto& py = ty[static_cast<std::size_t>(oy)];
                const float* r0 = src + std::int64_t(py.i0) * xs.w;
                const float* r1 = src + std::int64_t(py.i1) * xs.w;
                for (int ox = 0; ox < out_w; ++ox) {
                    const auto& px = tx[static_cast<std::size_t>(ox)];
                    const double v0 = double(r0[px.i0]) * (1.0 - px.t) + double(r0[px.i1]) * px.t;
                    const double v1 = double(r1[px.i0]) * (1.0 - px.t) + double(r1[px.i1]) * px.t;
                    dst[std::int64_t(oy) * out_w + ox] =
                        static_cast<float>(v0 * (1.0 - py.t) + v1 * py.t);
                }
            }
        }
    }
    return out;
}

}  // namespace detail

/// Plain bilinear resize (align-corners false) on a bare tensor.
inline Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
    check(out_h >= 1 && out_w >= 1, "resize_bilinear: target size must be at least 1x1");
    return detail::resize_forward(x, out_h, out_w, detail::bilinear_taps(x.h(), out_h),
                                  detail::bilinear_taps(x.w(), out_w));
}

/// Bilinear resize (align-corners false). Border samples clamp to the edge.
inline Value resize_bilinear(Value x, int out_h, int out_w) {
    Tape& t = *x.tape;
    const Shape xs = x.shape();
    check(out_h >= 1 && out_w >= 1, "resize_bilinear: target size must be at least 1x1");
    const auto ty = detail::bilinear_taps(xs.h, out_h);
    const auto tx = detail::bilinear_taps(xs.w, out_w);
    Tensor out = detail::resize_forward(x.val(), out_h, out_w, ty, tx);
    const int ix = x.id;
    return t.push(OpKind::ResizeBilinear, {ix}, std::move(out),
                  [ix, xs, out_h, out_w, ty, tx](Tape& tp, const Tensor& g, GradSink& sink) {
                      if (!sink.wants(ix)) return;
                      Tensor& gx = sink.buf(ix);
                      for (int in_ = 0; in_ < xs.n; ++in_) {
                          for (int ic = 0; ic < xs.c; ++ic) {
                              float* dst = gx.data() + gx.index(in_, ic, 0, 0);
                              const float* gp = g.data() + g.index(in_, ic, 0, 0);
                              for (int oy = 0; oy < out_h; ++oy) {
                                  const auto& py = ty[static_cast<std::size_t>(oy)];
                                  for (int ox = 0; ox < out_w; ++ox) {
                                      const auto& px = tx[static_cast<std::size_t>(ox)];
                                      const double gv = gp[std::int64_t(oy) * out_w + ox];
                                      dst[std::int64_t(py.i0) * xs.w + px.i0] +=
                                          static_cast<float>(gv * (1.0 - py.t) * (1.0 - px.t));
                                      dst[std::int64_t(py.i0) * xs.w + px.i1] +=
                                          static_cast<float>(gv * (1.0 - py.t) * px.t);
                                      dst[std::int64_t(py.i1) * xs.w + px.i0] +=
                                          static_cast<float>(gv * py.t * (1.0 - px.t));
                                      dst[std::int64_t(py.i1) * xs.w + px.i1] +=
                                          static_cast<float>(gv * py.t * px.t);
                                  }
                              }
                          }
                      }
                  });
}

/// Bilinear gather at continuous pixel coordinates. `coords` is (n,2,gh,gw)
/// holding (u,v) in source pixel units; out-of-bounds neighbors contribute 0.
/// Differentiable in both the source values and the coordinates.
inline Value grid_sample(Value src, Value coords) {
    Tape& t = *src.tape;
    const Shape ss = src.shape(), cs = coords.shape();
    check(cs.c == 2, "grid_sample: coords must have 2 channels, got " + cs.str());
    check(cs.n == ss.n, "grid_sample: batch mismatch " + ss.str() + " vs " + cs.str());
    const int gh = cs.h, gw = cs.w;
    const Shape os{ss.n, ss.c, gh, gw};
    Tensor out(os);
    {
        const Tensor& sv = src.val();
        const Tensor& cv = coords.val();
        for (int in_ = 0; in_ < ss.n; ++in_) {
            const float* uplane = cv.data() + cv.index(in_, 0, 0, 0);
            const float* vplane = cv.data() + cv.index(in_, 1, 0, 0);
            for (int oy = 0; oy < gh; ++oy) {
                for (int ox = 0; ox < gw; ++ox) {
                    const std::int64_t pi = std::int64_t(oy) * gw + ox;
                    const float u = uplane[pi], v = vplane[pi];
                    const int x0 = static_cast<int>(std::floor(u));
                    const int y0 = static_cast<int>(std::floor(v));
                    const double fx = double(u) - x0, fy = double(v) - y0;
                    const bool x0i = x0 >= 0 && x0 < ss.w, x1i = x0 + 1 >= 0 && x0 + 1 < ss.w;
                    const bool y0i = y0 >= 0 && y0 < ss.h, y1i = y0 + 1 >= 0 && y0 + 1 < ss.h;
                    for (int ic = 0; ic < ss.c; ++ic) {
                        const float* plane = sv.data() + sv.index(in_, ic, 0, 0);
                        const double v00 = (x0i && y0i) ? plane[std::int64_t(y0) * ss.w + x0] : 0.0;
                        const double v01 = (x1i && y0i) ? plane[std::int64_t(y0) * ss.w + x0 + 1] : 0.0;
                        const double v10 = (x0i && y1i) ? plane[std::int64_t(y0 + 1) * ss.w + x0] : 0.0;
                        const double v11 = (x1i && y1i) ? plane[std::int64_t(y0 + 1) * ss.w + x0 + 1] : 0.0;
                        const double top = v00 * (1.0 - fx) + v01 * fx;
                        const double bot = v10 * (1.0 - fx) + v11 * fx;
                        out.data()[out.index(in_, ic, oy, ox)] =
                            static_cast<float>(top * (1.0 - fy) + bot * fy);
                    }
                }
            }
        }
    }
    const int is = src.id, ic_ = coords.id;
    return t.push(
        OpKind::GridSample, {is, ic_}, std::move(out),
        [is, ic_, ss, gh, gw](Tape& tp, const Tensor& g, GradSink& sink) {
            const Tensor& sv = tp.value(is);
            const Tensor& cv = tp.value(ic_);
            const bool wsrc = sink.wants(is), wcrd = sink.wants(ic_);
            if (!wsrc && !wcrd) return;
            Tensor* gs = wsrc ? &sink.buf(is) : nullptr;
            Tensor* gc = wcrd ? &sink.buf(ic_) : nullptr;
            for (int in_ = 0; in_ < ss.n; ++in_) {
                const float* uplane = cv.data() + cv.index(in_, 0, 0, 0);
                const float* vplane = cv.data() + cv.index(in_, 1, 0, 0);
                for (int oy = 0; oy < gh; ++oy) {
                    for (int ox = 0; ox < gw; ++ox) {
                        const std::int64_t pi = std::int64_t(oy) * gw + ox;
                        const float u = uplane[pi], v = vplane[pi];
                        const int x0 = static_cast<int>(std::floor(u));
                        const int y0 = static_cast<int>(std::floor(v));
                        const double fx = double(u) - x0, fy = double(v) - y0;
                        const bool x0i = x0 >= 0 && x0 < ss.w, x1i = x0 + 1 >= 0 && x0 + 1 < ss.w;
                        const bool y0i = y0 >= 0 && y0 < ss.h, y1i = y0 + 1 >= 0 && y0 + 1 < ss.h;
                        double du = 0.0, dv = 0.0;
                        for (int c = 0; c < ss.c; ++c) {
                            const double gv = g.data()[g.index(in_, c, oy, ox)];
                            if (gv == 0.0 && !wcrd) continue;
                            const float* plane = sv.data() + sv.index(in_, c, 0, 0);
                            const double v00 = (x0i && y0i) ? plane[std::int64_t(y0) * ss.w + x0] : 0.0;
                            const double v01 = (x1i && y0i) ? plane[std::int64_t(y0) * ss.w + x0 + 1] : 0.0;
                            const double v10 = (x0i && y1i) ? plane[std::int64_t(y0 + 1) * ss.w + x0] : 0.0;
                            const double v11 = (x1i && y1i) ? plane[std::int64_t(y0 + 1) * ss.w + x0 + 1] : 0.0;
                            if (wsrc) {
                                float* gsp = gs->data() + gs->index(in_, c, 0, 0);
                                if (x0i && y0i)
                                    gsp[std::int64_t(y0) * ss.w + x0] +=
                                        static_cast<float>(gv * (1.0 - fx) * (1.0 - fy));
                                if (x1i && y0i)
                                    gsp[std::int64_t(y0) * ss.w + x0 + 1] +=
                                        static_cast<float>(gv * fx * (1.0 - fy));
                                if (x0i && y1i)
                                    gsp[std::int64_t(y0 + 1) * ss.w + x0] +=
                                        static_cast<float>(gv * (1.0 - fx) * fy);
                                if (x1i && y1i)
                                    gsp[std::int64_t(y0 + 1) * ss.w + x0 + 1] +=
                                        static_cast<float>(gv * fx * fy);
                            }
                            if (wcrd) {
                                du += gv * ((v01 - v00) * (1.0 - fy) + (v11 - v10) * fy);
                                dv += gv * ((v10 - v00) * (1.0 - fx) + (v11 - v01) * fx);
                            }
                        }
                        if (wcrd) {
                            gc->data()[gc->index(in_, 0, oy, ox)] += static_cast<float>(du);
                            gc->data()[gc->index(in_, 1, oy, ox)] += static_cast<float>(dv);
                        }
                    }
                }
            }
        });
}

/// 0/1 mask of coordinates that sample strictly inside the source image:
/// valid(u, v) = [0 <= u <= w-1] * [0 <= v <= h-1].
inline Tensor in_bounds_mask(const Tensor& coords, int src_h, int src_w) {
    check(coords.c() == 2, "in_bounds_mask: coords must have 2 channels");
    Tensor mask(Shape{coords.n(), 1, coords.h(), coords.w()});
    for (int in_ = 0; in_ < coords.n(); ++in_) {
        for (int iy = 0; iy < coords.h(); ++iy) {
            for (int ix = 0; ix < coords.w(); ++ix) {
                const float u = coords.at(in_, 0, iy, ix);
                const float v = coords.at(in_, 1, iy, ix);
                const bool ok = u >= 0.0f && u <= float(src_w - 1) && v >= 0.0f &&
                                v <= float(src_h - 1);
                mask.at(in_, 0, iy, ix) = ok ? 1.0f : 0.0f;
            }
        }
    }
    return mask;
}

}  // namespace dualdepth
