#pragma once

#include "dualdepth/core/tape.hpp"

namespace dualdepth {

/// Normalization applied to the dot-product similarity weights.
///   Raw     - bare weighted sum, magnitude grows with the position count
///   Mean    - weighted sum divided by the position count (default)
///   Softmax - weights replaced by a softmax over the source positions
enum class NormMode { Raw, Mean, Softmax };

namespace detail {

/// E is stored column-per-position: E[k][i] = e at channel k, position i.
struct AttnWorkspace {
    int d, N;
    std::vector<double> G;  // N x N similarity, G[i*N+j]
    std::vector<double> A;  // softmax weights (softmax mode only)
};

inline void attn_similarity(const float* e, int d, int N, std::vector<double>& G) {
    G.assign(static_cast<std::size_t>(N) * N, 0.0);
    for (int i = 0; i < N; ++i) {
        for (int j = i; j < N; ++j) {
            double acc = 0.0;
            for (int k = 0; k < d; ++k) {
                acc += double(e[std::int64_t(k) * N + i]) * double(e[std::int64_t(k) * N + j]);
            }
            G[std::int64_t(i) * N + j] = acc;
            G[std::int64_t(j) * N + i] = acc;
        }
    }
}

inline void attn_softmax_cols(const std::vector<double>& G, int N, std::vector<double>& A) {
    A.assign(G.size(), 0.0);
    for (int j = 0; j < N; ++j) {
        double mx = -1e300;
        for (int i = 0; i < N; ++i) mx = std::max(mx, G[std::int64_t(i) * N + j]);
        double s = 0.0;
        for (int i = 0; i < N; ++i) {
            const double ev = std::exp(G[std::int64_t(i) * N + j] - mx);
            A[std::int64_t(i) * N + j] = ev;
            s += ev;
        }
        for (int i = 0; i < N; ++i) A[std::int64_t(i) * N + j] /= s;
    }
}

}  // namespace detail

/// Re-expresses every position as a similarity-weighted sum over all positions:
/// out_j = norm(sum_i (e_i . e_j) e_i). O(N^2 d) time with N = h*w.
inline Value self_attention(Value e, NormMode mode) {
    Tape& t = *e.tape;
    const Shape s = e.shape();
    const int d = s.c, N = s.h * s.w;
    Tensor out(s);
    {
        const Tensor& ev = e.val();
        std::vector<double> G, A;
        for (int in_ = 0; in_ < s.n; ++in_) {
            const float* ep = ev.data() + ev.index(in_, 0, 0, 0);
            detail::attn_similarity(ep, d, N, G);
            const std::vector<double>* W = &G;
            double norm = 1.0;
            if (mode == NormMode::Mean) {
                norm = 1.0 / double(N);
            } else if (mode == NormMode::Softmax) {
                detail::attn_softmax_cols(G, N, A);
                W = &A;
            }
            float* op = out.data() + out.index(in_, 0, 0, 0);
            for (int k = 0; k < d; ++k) {
                for (int j = 0; j < N; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < N; ++i) {
                        acc += (*W)[std::int64_t(i) * N + j] * double(ep[std::int64_t(k) * N + i]);
                    }
                    op[std::int64_t(k) * N + j] = static_cast<float>(acc * norm);
                }
            }
        }
    }
    const int ie = e.id;
    return t.push(
        OpKind::SelfAttention, {ie}, std::move(out),
        [ie, s, d, N, mode](Tape& tp, const Tensor& g, GradSink& sink) {
            if (!sink.wants(ie)) return;
            const Tensor& ev = tp.value(ie);
            Tensor& ge = sink.buf(ie);
            std::vector<double> G, A, dG(static_cast<std::size_t>(N) * N);
            for (int in_ = 0; in_ < s.n; ++in_) {
                const float* ep = ev.data() + ev.index(in_, 0, 0, 0);
                const float* gp = g.data() + g.index(in_, 0, 0, 0);
                float* gep = ge.data() + ge.index(in_, 0, 0, 0);
                detail::attn_similarity(ep, d, N, G);
                const double norm = (mode == NormMode::Mean) ? 1.0 / double(N) : 1.0;

                // dW[i][j] = sum_k e[k][i] * gout[k][j], then through the weight map.
                for (int i = 0; i < N; ++i) {
                    for (int j = 0; j < N; ++j) {
                        double acc = 0.0;
                        for (int k = 0; k < d; ++k) {
                            acc += double(ep[std::int64_t(k) * N + i]) *
                                   double(gp[std::int64_t(k) * N + j]);
                        }
                        dG[std::int64_t(i) * N + j] = acc * norm;
                    }
                }
                const std::vector<double>* W = &G;
                if (mode == NormMode::Softmax) {
                    detail::attn_softmax_cols(G, N, A);
                    W = &A;
                    // Jacobian of column-wise softmax: dG = A .* (dA - <A, dA>_col).
                    for (int j = 0; j < N; ++j) {
                        double dot = 0.0;
                        for (int i = 0; i < N; ++i) {
                            dot += A[std::int64_t(i) * N + j] * dG[std::int64_t(i) * N + j];
                        }
                        for (int i = 0; i < N; ++i) {
                            const std::int64_t idx = std::int64_t(i) * N + j;
                            dG[idx] = A[idx] * (dG[idx] - dot);
                        }
                    }
                }
                // gE = gOut * W^T * norm  +  E * (dG + dG^T)
                for (int k = 0; k < d; ++k) {
                    for (int i = 0; i < N; ++i) {
                        double acc = 0.0;
                        for (int j = 0; j < N; ++j) {
                            acc += double(gp[std::int64_t(k) * N + j]) *
                                   (*W)[std::int64_t(i) * N + j] * norm;
                        }
                        for (int j = 0; j < N; ++j) {
                            acc += double(ep[std::int64_t(k) * N + j]) *
                                   (dG[std::int64_t(j) * N + i] + dG[std::int64_t(i) * N + j]);
                        }
                        gep[std::int64_t(k) * N + i] += static_cast<float>(acc);
                    }
                }
            }
        });
}

}  // namespace dualdepth
