#pragma once

#include "dualdepth/core/tape.hpp"

namespace dualdepth {

/// Reflection index for coordinate i into [0, n), PyTorch ReflectionPad style
/// (the border sample is not repeated). Total for any i once n >= 1.
inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int m = 2 * n - 2;
    i %= m;
    if (i < 0) i += m;
    return i < n ? i : m - i;
}

namespace detail {

/// Copies one (n, c) plane into a reflection-padded buffer of (h+2p, w+2p).
inline void reflect_pad_plane(const float* src, int h, int w, int p, float* dst) {
    const int W = w + 2 * p;
    for (int py = 0; py < h + 2 * p; ++py) {
        const int sy = reflect_index(py - p, h);
        const float* srow = src + std::int64_t(sy) * w;
        float* drow = dst + std::int64_t(py) * W;
        for (int px = 0; px < W; ++px) {
            drow[px] = srow[reflect_index(px - p, w)];
        }
    }
}

inline void conv2d_check(const Shape& x, const Shape& wt, const Shape& b, int stride) {
    check(wt.h == wt.w && wt.h % 2 == 1, "conv2d: kernel must be square and odd, got " +
                                             wt.str());
    check(wt.c == x.c, "conv2d: weight expects " + std::to_string(wt.c) +
                           " input channels, input has " + std::to_string(x.c) + " (input " +
                           x.str() + ", weight " + wt.str() + ")");
    check(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
    check(b.n == 1 && b.c == wt.n && b.h == 1 && b.w == 1,
          "conv2d: bias must be shaped (1,out_c,1,1), got " + b.str() + " for weight " +
              wt.str());
}

}  // namespace detail

/// 2-D convolution with reflection padding of (k-1)/2 and stride 1 or 2.
/// Output spatial size is ceil(in/stride). Differentiable in input, weight, bias.
inline Value conv2d(Value x, Value weight, Value bias, int stride) {
    Tape& t = *x.tape;
    const Shape xs = x.shape(), ws = weight.shape();
    detail::conv2d_check(xs, ws, bias.shape(), stride);
    const int k = ws.h, p = (k - 1) / 2;
    const int ho = (xs.h + stride - 1) / stride, wo = (xs.w + stride - 1) / stride;
    const int hp = xs.h + 2 * p, wp = xs.w + 2 * p;
    const Shape os{xs.n, ws.n, ho, wo};

    Tensor out(os);
    {
        const Tensor& xv = x.val();
        const Tensor& wv = weight.val();
        const Tensor& bv = bias.val();
        std::vector<float> xpad(static_cast<std::size_t>(hp) * wp);
        std::vector<double> acc(static_cast<std::size_t>(ho) * wo);
        // Padded planes are rebuilt per (n, ic); the ic loop is outermost so each
        // plane is padded once and streamed against every output channel.
        std::vector<std::vector<double>> accs(static_cast<std::size_t>(ws.n),
                                              std::vector<double>(acc.size()));
        for (int in_ = 0; in_ < xs.n; ++in_) {
            for (int oc = 0; oc < ws.n; ++oc) {
                std::fill(accs[oc].begin(), accs[oc].end(), double(bv.data()[oc]));
            }
            for (int ic = 0; ic < xs.c; ++ic) {
                detail::reflect_pad_plane(xv.data() + xv.index(in_, ic, 0, 0), xs.h, xs.w, p,
                                          xpad.data());
                for (int oc = 0; oc < ws.n; ++oc) {
                    double* a = accs[oc].data();
                    for (int ky = 0; ky < k; ++ky) {
                        for (int kx = 0; kx < k; ++kx) {
                            const double wgt = wv.at(oc, ic, ky, kx);
                            for (int oy = 0; oy < ho; ++oy) {
                                const float* row = xpad.data() +
                                                   std::int64_t(oy * stride + ky) * wp + kx;
                                double* arow = a + std::int64_t(oy) * wo;
                                if (stride == 1) {
                                    for (int ox = 0; ox < wo; ++ox) arow[ox] += wgt * row[ox];
                                } else {
                                    for (int ox = 0; ox < wo; ++ox) arow[ox] += wgt * row[2 * ox];
                                }
                            }
                        }
                    }
                }
            }
            for (int oc = 0; oc < ws.n; ++oc) {
                float* orow = out.data() + out.index(in_, oc, 0, 0);
                const double* a = accs[oc].data();
                for (std::int64_t i = 0; i < std::int64_t(ho) * wo; ++i) {
                    orow[i] = static_cast<float>(a[i]);
                }
            }
        }
    }

    const int ix = x.id, iw = weight.id, ib = bias.id;
    return t.push(
        OpKind::Conv2d, {ix, iw, ib}, std::move(out),
        [ix, iw, ib, xs, ws, stride, k, p, ho, wo, hp, wp](Tape& tp, const Tensor& g,
                                                           GradSink& sink) {
            const Tensor& xv = tp.value(ix);
            const Tensor& wv = tp.value(iw);
            const bool wx = sink.wants(ix), ww = sink.wants(iw), wb = sink.wants(ib);

            if (wb) {
                Tensor& gb = sink.buf(ib);
                for (int oc = 0; oc < ws.n; ++oc) {
                    double acc = 0.0;
                    for (int in_ = 0; in_ < xs.n; ++in_) {
                        const float* gp = g.data() + g.index(in_, oc, 0, 0);
                        for (std::int64_t i = 0; i < std::int64_t(ho) * wo; ++i) acc += gp[i];
                    }
                    gb.data()[oc] += static_cast<float>(acc);
                }
            }

            std::vector<float> xpad(static_cast<std::size_t>(hp) * wp);
            if (ww) {
                Tensor& gw = sink.buf(iw);
                std::vector<double> wacc(static_cast<std::size_t>(ws.n) * k * k);
                for (int in_ = 0; in_ < xs.n; ++in_) {
                    for (int ic = 0; ic < xs.c; ++ic) {
                        detail::reflect_pad_plane(xv.data() + xv.index(in_, ic, 0, 0), xs.h,
                                                  xs.w, p, xpad.data());
                        std::fill(wacc.begin(), wacc.end(), 0.0);
                        for (int oc = 0; oc < ws.n; ++oc) {
                            const float* gp = g.data() + g.index(in_, oc, 0, 0);
                            double* wa = wacc.data() + std::int64_t(oc) * k * k;
                            for (int ky = 0; ky < k; ++ky) {
                                for (int kx = 0; kx < k; ++kx) {
                                    double acc = 0.0;
                                    for (int oy = 0; oy < ho; ++oy) {
                                        const float* row =
                                            xpad.data() + std::int64_t(oy * stride + ky) * wp + kx;
                                        const float* grow = gp + std::int64_t(oy) * wo;
                                        if (stride == 1) {
                                            for (int ox = 0; ox < wo; ++ox) {
                                                acc += double(grow[ox]) * row[ox];
                                            }
                                        } else {
                                            for (int ox = 0; ox < wo; ++ox) {
                                                acc += double(grow[ox]) * row[2 * ox];
                                            }
                                        }
                                    }
                                    wa[ky * k + kx] += acc;
                                }
                            }
                        }
                        for (int oc = 0; oc < ws.n; ++oc) {
                            for (int kk = 0; kk < k * k; ++kk) {
                                gw.data()[gw.index(oc, ic, kk / k, kk % k)] +=
                                    static_cast<float>(wacc[std::int64_t(oc) * k * k + kk]);
                            }
                        }
                    }
                }
            }

            if (wx) {
                Tensor& gx = sink.buf(ix);
                std::vector<double> gpad(static_cast<std::size_t>(hp) * wp);
                for (int in_ = 0; in_ < xs.n; ++in_) {
                    for (int ic = 0; ic < xs.c; ++ic) {
                        std::fill(gpad.begin(), gpad.end(), 0.0);
                        for (int oc = 0; oc < ws.n; ++oc) {
                            const float* gp = g.data() + g.index(in_, oc, 0, 0);
                            for (int ky = 0; ky < k; ++ky) {
                                for (int kx = 0; kx < k; ++kx) {
                                    const double wgt = wv.at(oc, ic, ky, kx);
                                    for (int oy = 0; oy < ho; ++oy) {
                                        double* prow =
                                            gpad.data() + std::int64_t(oy * stride + ky) * wp + kx;
                                        const float* grow = gp + std::int64_t(oy) * wo;
                                        if (stride == 1) {
                                            for (int ox = 0; ox < wo; ++ox) {
                                                prow[ox] += wgt * grow[ox];
                                            }
                                        } else {
                                            for (int ox = 0; ox < wo; ++ox) {
                                                prow[2 * ox] += wgt * grow[ox];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                        // Fold the padded gradient back through the reflection map.
                        float* gxp = gx.data() + gx.index(in_, ic, 0, 0);
                        for (int py = 0; py < hp; ++py) {
                            const int ty = reflect_index(py - p, xs.h);
                            const double* prow = gpad.data() + std::int64_t(py) * wp;
                            float* grow = gxp + std::int64_t(ty) * xs.w;
                            for (int px = 0; px < wp; ++px) {
                                grow[reflect_index(px - p, xs.w)] +=
                                    static_cast<float>(prow[px]);
                            }
                        }
                    }
                }
            }
        });
}

/// 3x3 mean pooling, stride 1, reflection padded; used for SSIM local statistics.
inline Value pool_mean3x3(Value x) {
    Tape& t = *x.tape;
    const Shape xs = x.shape();
    const int p = 1, hp = xs.h + 2, wp = xs.w + 2;
    Tensor out(xs);
    {
        const Tensor& xv = x.val();
        std::vector<float> xpad(static_cast<std::size_t>(hp) * wp);
        for (int in_ = 0; in_ < xs.n; ++in_) {
            for (int ic = 0; ic < xs.c; ++ic) {
                detail::reflect_pad_plane(xv.data() + xv.index(in_, ic, 0, 0), xs.h, xs.w, p,
                                          xpad.data());
                float* orow = out.data() + out.index(in_, ic, 0, 0);
                for (int oy = 0; oy < xs.h; ++oy) {
                    for (int ox = 0; ox < xs.w; ++ox) {
                        double acc = 0.0;
                        for (int ky = 0; ky < 3; ++ky) {
                            const float* row = xpad.data() + std::int64_t(oy + ky) * wp + ox;
                            acc += double(row[0]) + row[1] + row[2];
                        }
                        orow[std::int64_t(oy) * xs.w + ox] = static_cast<float>(acc / 9.0);
                    }
                }
            }
        }
    }
    const int ix = x.id;
    return t.push(OpKind::PoolMean3x3, {ix}, std::move(out),
                  [ix, xs, hp, wp, p](Tape& tp, const Tensor& g, GradSink& sink) {
                      if (!sink.wants(ix)) return;
                      Tensor& gx = sink.buf(ix);
                      std::vector<double> gpad(static_cast<std::size_t>(hp) * wp);
                      for (int in_ = 0; in_ < xs.n; ++in_) {
                          for (int ic = 0; ic < xs.c; ++ic) {
                              std::fill(gpad.begin(), gpad.end(), 0.0);
                              const float* gp = g.data() + g.index(in_, ic, 0, 0);
                              for (int oy = 0; oy < xs.h; ++oy) {
                                  for (int ox = 0; ox < xs.w; ++ox) {
                                      const double gv = double(gp[std::int64_t(oy) * xs.w + ox]) / 9.0;
                                      for (int ky = 0; ky < 3; ++ky) {
                                          double* row = gpad.data() + std::int64_t(oy + ky) * wp + ox;
                                          row[0] += gv;
                                          row[1] += gv;
                                          row[2] += gv;
                                      }
                                  }
                              }
                              float* gxp = gx.data() + gx.index(in_, ic, 0, 0);
                              for (int py = 0; py < hp; ++py) {
                                  const int ty = reflect_index(py - p, xs.h);
                                  const double* prow = gpad.data() + std::int64_t(py) * wp;
                                  float* grow = gxp + std::int64_t(ty) * xs.w;
                                  for (int px = 0; px < wp; ++px) {
                                      grow[reflect_index(px - p, xs.w)] +=
                                          static_cast<float>(prow[px]);
                                  }
                              }
                          }
                      }
                  });
}

}  // namespace dualdepth
