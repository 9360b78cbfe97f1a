#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>

#include "dualdepth/core/tape.hpp"

namespace dualdepth {

namespace detail {

struct Bcast {
    Shape out;
    std::int64_t sa[4];
    std::int64_t sb[4];
};

inline void natural_strides(const Shape& s, const Shape& out, std::int64_t* st,
                            const char* opname) {
    const std::int64_t raw[4] = {std::int64_t(s.c) * s.h * s.w, std::int64_t(s.h) * s.w,
                                 std::int64_t(s.w), 1};
    for (int d = 0; d < 4; ++d) {
        const int sd = s.dim(d), od = out.dim(d);
        check(sd == od || sd == 1, std::string(opname) + ": shape " + s.str() +
                                       " not broadcastable to " + out.str());
        st[d] = (sd == 1) ? 0 : raw[d];
    }
}

inline Bcast make_bcast(const Shape& a, const Shape& b, const char* opname) {
    Bcast bc;
    for (int d = 0; d < 4; ++d) bc.out.dim(d) = std::max(a.dim(d), b.dim(d));
    natural_strides(a, bc.out, bc.sa, opname);
    natural_strides(b, bc.out, bc.sb, opname);
    return bc;
}

/// fn(out_flat_index, a_flat_index, b_flat_index)
template <class Fn>
void bcast_loop(const Bcast& bc, Fn&& fn) {
    std::int64_t oi = 0;
    for (int in_ = 0; in_ < bc.out.n; ++in_) {
        const std::int64_t an = in_ * bc.sa[0], bn = in_ * bc.sb[0];
        for (int ic = 0; ic < bc.out.c; ++ic) {
            const std::int64_t ac = an + ic * bc.sa[1], bcx = bn + ic * bc.sb[1];
            for (int iy = 0; iy < bc.out.h; ++iy) {
                std::int64_t ai = ac + iy * bc.sa[2], bi = bcx + iy * bc.sb[2];
                for (int ix = 0; ix < bc.out.w; ++ix) {
                    fn(oi, ai, bi);
                    ++oi;
                    ai += bc.sa[3];
                    bi += bc.sb[3];
                }
            }
        }
    }
}

template <class FwdFn, class BwdFn>
Value binary_op(OpKind kind, const char* name, Value a, Value b, FwdFn&& fwd, BwdFn&& bwd) {
    check(a.valid() && b.valid() && a.tape == b.tape, std::string(name) + ": operands must live on one tape");
    Tape& t = *a.tape;
    const Bcast bc = make_bcast(a.shape(), b.shape(), name);
    Tensor out(bc.out);
    {
        const float* pa = a.val().data();
        const float* pb = b.val().data();
        float* po = out.data();
        bcast_loop(bc, [&](std::int64_t oi, std::int64_t ai, std::int64_t bi) {
            po[oi] = static_cast<float>(fwd(double(pa[ai]), double(pb[bi])));
        });
    }
    const int ia = a.id, ib = b.id;
    return t.push(kind, {ia, ib}, std::move(out),
                  [ia, ib, bc, bwd](Tape& tp, const Tensor& g, GradSink& sink) {
                      const float* pa = tp.value(ia).data();
                      const float* pb = tp.value(ib).data();
                      const float* pg = g.data();
                      const bool wa = sink.wants(ia), wb = sink.wants(ib);
                      float* ga = wa ? sink.buf(ia).data() : nullptr;
                      float* gb = wb ? sink.buf(ib).data() : nullptr;
                      bcast_loop(bc, [&](std::int64_t oi, std::int64_t ai, std::int64_t bi) {
                          double da = 0.0, db = 0.0;
                          bwd(double(pa[ai]), double(pb[bi]), double(pg[oi]), da, db);
                          if (wa) ga[ai] += static_cast<float>(da);
                          if (wb) gb[bi] += static_cast<float>(db);
                      });
                  });
}

template <class FwdFn, class BwdFn>
Value unary_op(OpKind kind, Value a, FwdFn&& fwd, BwdFn&& bwd) {
    Tape& t = *a.tape;
    const std::int64_t n = a.val().numel();
    Tensor out(a.shape());
    {
        const float* pa = a.val().data();
        float* po = out.data();
        for (std::int64_t i = 0; i < n; ++i) po[i] = static_cast<float>(fwd(double(pa[i])));
    }
    const int ia = a.id;
    return t.push(kind, {ia}, std::move(out),
                  [ia, n, bwd](Tape& tp, const Tensor& g, GradSink& sink) {
                      if (!sink.wants(ia)) return;
                      const float* pa = tp.value(ia).data();
                      const float* pg = g.data();
                      float* ga = sink.buf(ia).data();
                      for (std::int64_t i = 0; i < n; ++i) {
                          ga[i] += static_cast<float>(bwd(double(pa[i])) * double(pg[i]));
                      }
                  });
}

}  // namespace detail

inline Value add(Value a, Value b) {
    return detail::binary_op(
        OpKind::Add, "add", a, b, [](double x, double y) { return x + y; },
        [](double, double, double g, double& da, double& db) {
            da = g;
            db = g;
        });
}

inline Value sub(Value a, Value b) {
    return detail::binary_op(
        OpKind::Sub, "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double, double g, double& da, double& db) {
            da = g;
            db = -g;
        });
}

inline Value mul(Value a, Value b) {
    return detail::binary_op(
        OpKind::Mul, "mul", a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double g, double& da, double& db) {
            da = g * y;
            db = g * x;
        });
}

inline Value div(Value a, Value b) {
    return detail::binary_op(
        OpKind::Div, "div", a, b, [](double x, double y) { return x / y; },
        [](double x, double y, double g, double& da, double& db) {
            da = g / y;
            db = -g * x / (y * y);
        });
}

/// Pointwise minimum; gradient follows the smaller operand, ties go to `a`.
inline Value min2(Value a, Value b) {
    return detail::binary_op(
        OpKind::Min2, "min2", a, b, [](double x, double y) { return x <= y ? x : y; },
        [](double x, double y, double g, double& da, double& db) {
            if (x <= y)
                da = g;
            else
                db = g;
        });
}

/// abs with subgradient 0 at the kink.
inline Value vabs(Value a) {
    return detail::unary_op(
        OpKind::Abs, a, [](double x) { return std::fabs(x); },
        [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Value vexp(Value a) {
    return detail::unary_op(
        OpKind::Exp, a, [](double x) { return std::exp(x); },
        [](double x) { return std::exp(x); });
}

/// sqrt with subgradient 0 at 0 so exact-zero residuals stay quiet.
inline Value vsqrt(Value a) {
    return detail::unary_op(
        OpKind::Sqrt, a, [](double x) { return std::sqrt(x); },
        [](double x) { return x > 0.0 ? 0.5 / std::sqrt(x) : 0.0; });
}

inline Value sigmoid(Value a) {
    return detail::unary_op(
        OpKind::Sigmoid, a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double x) {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 - s);
        });
}

inline Value relu(Value a) {
    return detail::unary_op(
        OpKind::Relu, a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Value elu(Value a) {
    return detail::unary_op(
        OpKind::Elu, a, [](double x) { return x > 0.0 ? x : std::exp(x) - 1.0; },
        [](double x) { return x > 0.0 ? 1.0 : std::exp(x); });
}

inline Value scale(Value a, float s) {
    const double sd = s;
    return detail::unary_op(
        OpKind::Scale, a, [sd](double x) { return x * sd; }, [sd](double) { return sd; });
}

inline Value add_const(Value a, float c) {
    const double cd = c;
    return detail::unary_op(
        OpKind::AddConst, a, [cd](double x) { return x + cd; }, [](double) { return 1.0; });
}

namespace detail {

inline Value reduce_op(Value a, const std::vector<int>& axes, bool is_mean) {
    Tape& t = *a.tape;
    const Shape in = a.shape();
    bool red[4] = {false, false, false, false};
    for (int ax : axes) {
        check(ax >= 0 && ax < 4, "reduce: axis out of range");
        red[ax] = true;
    }
    Shape os = in;
    std::int64_t count = 1;
    for (int d = 0; d < 4; ++d) {
        if (red[d]) {
            count *= in.dim(d);
            os.dim(d) = 1;
        }
    }
    std::int64_t so[4];
    natural_strides(os, in, so, "reduce");  // strides of output viewed over input coords

    std::vector<double> acc(static_cast<std::size_t>(os.numel()), 0.0);
    {
        const float* pa = a.val().data();
        std::int64_t ii = 0;
        for (int in_ = 0; in_ < in.n; ++in_) {
            for (int ic = 0; ic < in.c; ++ic) {
                for (int iy = 0; iy < in.h; ++iy) {
                    std::int64_t oi = in_ * so[0] + ic * so[1] + iy * so[2];
                    for (int ix = 0; ix < in.w; ++ix) {
                        acc[static_cast<std::size_t>(oi)] += pa[ii];
                        ++ii;
                        oi += so[3];
                    }
                }
            }
        }
    }
    const double inv = is_mean ? 1.0 / double(count) : 1.0;
    Tensor out(os);
    for (std::int64_t i = 0; i < os.numel(); ++i) {
        out.data()[i] = static_cast<float>(acc[static_cast<std::size_t>(i)] * inv);
    }
    const int ia = a.id;
    const std::int64_t s0 = so[0], s1 = so[1], s2 = so[2], s3 = so[3];
    return t.push(is_mean ? OpKind::ReduceMean : OpKind::ReduceSum, {ia}, std::move(out),
                  [ia, in, s0, s1, s2, s3, inv](Tape& tp, const Tensor& g, GradSink& sink) {
                      if (!sink.wants(ia)) return;
                      float* ga = sink.buf(ia).data();
                      const float* pg = g.data();
                      std::int64_t ii = 0;
                      for (int in_ = 0; in_ < in.n; ++in_) {
                          for (int ic = 0; ic < in.c; ++ic) {
                              for (int iy = 0; iy < in.h; ++iy) {
                                  std::int64_t oi = in_ * s0 + ic * s1 + iy * s2;
                                  for (int ix = 0; ix < in.w; ++ix) {
                                      ga[ii] += static_cast<float>(double(pg[oi]) * inv);
                                      ++ii;
                                      oi += s3;
                                  }
                              }
                          }
                      }
                  });
}

}  // namespace detail

/// Mean over the given axes (0=n, 1=c, 2=h, 3=w); empty set is the identity.
inline Value mean(Value a, const std::vector<int>& axes) {
    return detail::reduce_op(a, axes, true);
}

inline Value sum(Value a, const std::vector<int>& axes) {
    return detail::reduce_op(a, axes, false);
}

inline Value mean_all(Value a) { return mean(a, {0, 1, 2, 3}); }
inline Value sum_all(Value a) { return sum(a, {0, 1, 2, 3}); }

inline Value concat_channels(const std::vector<Value>& parts) {
    check(!parts.empty(), "concat_channels: no inputs");
    Tape& t = *parts[0].tape;
    const Shape s0 = parts[0].shape();
    int total_c = 0;
    std::vector<int> ids;
    for (const Value& p : parts) {
        const Shape s = p.shape();
        check(s.n == s0.n && s.h == s0.h && s.w == s0.w,
              "concat_channels: spatial/batch mismatch " + s.str() + " vs " + s0.str());
        total_c += s.c;
        ids.push_back(p.id);
    }
    Shape os{s0.n, total_c, s0.h, s0.w};
    Tensor out(os);
    const std::int64_t plane = std::int64_t(s0.h) * s0.w;
    {
        int c_off = 0;
        for (const Value& p : parts) {
            const Tensor& v = p.val();
            for (int in_ = 0; in_ < s0.n; ++in_) {
                const float* src = v.data() + std::int64_t(in_) * v.c() * plane;
                float* dst = out.data() + (std::int64_t(in_) * total_c + c_off) * plane;
                std::copy(src, src + std::int64_t(v.c()) * plane, dst);
            }
            c_off += v.c();
        }
    }
    std::vector<int> in_ids = ids;
    return t.push(OpKind::ConcatChannels, std::move(ids), std::move(out),
                  [in_ids, s0, total_c, plane](Tape& tp, const Tensor& g, GradSink& sink) {
                      int c_off = 0;
                      for (int id : in_ids) {
                          const int pc = tp.value(id).c();
                          if (sink.wants(id)) {
                              Tensor& gb = sink.buf(id);
                              for (int in_ = 0; in_ < s0.n; ++in_) {
                                  const float* src =
                                      g.data() + (std::int64_t(in_) * total_c + c_off) * plane;
                                  float* dst = gb.data() + std::int64_t(in_) * pc * plane;
                                  for (std::int64_t i = 0; i < std::int64_t(pc) * plane; ++i) {
                                      dst[i] += src[i];
                                  }
                              }
                          }
                          c_off += pc;
                      }
                  });
}

inline Value slice_channels(Value a, int c0, int len) {
    Tape& t = *a.tape;
    const Shape s = a.shape();
    check(c0 >= 0 && len >= 1 && c0 + len <= s.c, "slice_channels: range out of bounds");
    Shape os{s.n, len, s.h, s.w};
    Tensor out(os);
    const std::int64_t plane = std::int64_t(s.h) * s.w;
    for (int in_ = 0; in_ < s.n; ++in_) {
        const float* src = a.val().data() + (std::int64_t(in_) * s.c + c0) * plane;
        float* dst = out.data() + std::int64_t(in_) * len * plane;
        std::copy(src, src + std::int64_t(len) * plane, dst);
    }
    const int ia = a.id;
    return t.push(OpKind::SliceChannels, {ia}, std::move(out),
                  [ia, s, c0, len, plane](Tape& tp, const Tensor& g, GradSink& sink) {
                      if (!sink.wants(ia)) return;
                      Tensor& gb = sink.buf(ia);
                      for (int in_ = 0; in_ < s.n; ++in_) {
                          const float* src = g.data() + std::int64_t(in_) * len * plane;
                          float* dst = gb.data() + (std::int64_t(in_) * s.c + c0) * plane;
                          for (std::int64_t i = 0; i < std::int64_t(len) * plane; ++i) {
                              dst[i] += src[i];
                          }
                      }
                  });
}

namespace detail {

inline Value spatial_diff(Value a, bool along_x) {
    Tape& t = *a.tape;
    const Shape s = a.shape();
    const Shape os = along_x ? Shape{s.n, s.c, s.h, s.w - 1} : Shape{s.n, s.c, s.h - 1, s.w};
    check(os.h >= 1 && os.w >= 1, "spatial_diff: input too small");
    Tensor out(os);
    const Tensor& v = a.val();
    for (int in_ = 0; in_ < os.n; ++in_) {
        for (int ic = 0; ic < os.c; ++ic) {
            for (int iy = 0; iy < os.h; ++iy) {
                for (int ix = 0; ix < os.w; ++ix) {
                    const float hi = along_x ? v.at(in_, ic, iy, ix + 1) : v.at(in_, ic, iy + 1, ix);
                    out.at(in_, ic, iy, ix) = hi - v.at(in_, ic, iy, ix);
                }
            }
        }
    }
    const int ia = a.id;
    return t.push(along_x ? OpKind::DiffX : OpKind::DiffY, {ia}, std::move(out),
                  [ia, os, along_x](Tape& tp, const Tensor& g, GradSink& sink) {
                      if (!sink.wants(ia)) return;
                      Tensor& gb = sink.buf(ia);
                      for (int in_ = 0; in_ < os.n; ++in_) {
                          for (int ic = 0; ic < os.c; ++ic) {
                              for (int iy = 0; iy < os.h; ++iy) {
                                  for (int ix = 0; ix < os.w; ++ix) {
                                      const float gv = g.at(in_, ic, iy, ix);
                                      if (along_x) {
                                          gb.at(in_, ic, iy, ix + 1) += gv;
                                      } else {
                                          gb.at(in_, ic, iy + 1, ix) += gv;
                                      }
                                      gb.at(in_, ic, iy, ix) -= gv;
                                  }
                              }
                          }
                      }
                  });
}

}  // namespace detail

/// Forward difference along width: out[..., x] = in[..., x+1] - in[..., x].
inline Value diff_x(Value a) { return detail::spatial_diff(a, true); }
inline Value diff_y(Value a) { return detail::spatial_diff(a, false); }

inline Value operator+(Value a, Value b) { return add(a, b); }
inline Value operator-(Value a, Value b) { return sub(a, b); }
inline Value operator*(Value a, Value b) { return mul(a, b); }
inline Value operator/(Value a, Value b) { return div(a, b); }
inline Value operator*(Value a, float s) { return scale(a, s); }
inline Value operator*(float s, Value a) { return scale(a, s); }
inline Value operator+(Value a, float c) { return add_const(a, c); }
inline Value operator+(float c, Value a) { return add_const(a, c); }
inline Value operator-(Value a, float c) { return add_const(a, -c); }
inline Value operator-(float c, Value a) { return add_const(scale(a, -1.0f), c); }

}  // namespace dualdepth
