#pragma once

#include <algorithm>

#include "dualdepth/core/tensor.hpp"
#include "dualdepth/geometry.hpp"

namespace dualdepth {

/// The seven standard depth metrics over one masked map pair.
struct MetricReport {
    double abs_rel = 0.0;
    double sq_rel = 0.0;
    double rmse = 0.0;
    double rmse_log = 0.0;
    double delta1 = 0.0;
    double delta2 = 0.0;
    double delta3 = 0.0;
    std::int64_t pixel_count = 0;
};

namespace detail {

inline double masked_median(const Tensor& t, const Tensor& mask) {
    std::vector<float> vals;
    vals.reserve(static_cast<std::size_t>(t.numel()));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        if (mask.data()[i] > 0.0f) vals.push_back(t.data()[i]);
    }
    check(!vals.empty(), "masked_median: empty mask");
    const std::size_t mid = vals.size() / 2;
    std::nth_element(vals.begin(), vals.begin() + std::ptrdiff_t(mid), vals.end());
    return double(vals[mid]);
}

}  // namespace detail

/// Eigen-protocol metrics. With median scaling the prediction is aligned by
/// median(gt)/median(pred) over the mask first; both maps are then clamped to
/// [1e-3, cap] before any ratio or difference.
inline MetricReport depth_metrics(const Tensor& pred, const Tensor& gt, const Tensor& mask,
                                  bool median_scale, double cap = 100.0) {
    check(pred.shape() == gt.shape() && pred.shape() == mask.shape(),
          "depth_metrics: shape mismatch pred " + pred.shape().str() + " gt " + gt.shape().str() +
              " mask " + mask.shape().str());
    double scale = 1.0;
    if (median_scale) {
        scale = detail::masked_median(gt, mask) / detail::masked_median(pred, mask);
    }
    MetricReport r;
    double abs_rel = 0.0, sq_rel = 0.0, sq = 0.0, sq_log = 0.0;
    double d1 = 0.0, d2 = 0.0, d3 = 0.0;
    std::int64_t count = 0;
    const double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        if (mask.data()[i] <= 0.0f) continue;
        const double p = std::clamp(double(pred.data()[i]) * scale, 1e-3, cap);
        const double g = std::clamp(double(gt.data()[i]), 1e-3, cap);
        const double diff = p - g;
        abs_rel += std::fabs(diff) / g;
        sq_rel += diff * diff / g;
        sq += diff * diff;
        const double dl = std::log(p) - std::log(g);
        sq_log += dl * dl;
        const double ratio = std::max(p / g, g / p);
        if (ratio < t1) d1 += 1.0;
        if (ratio < t2) d2 += 1.0;
        if (ratio < t3) d3 += 1.0;
        ++count;
    }
    check(count > 0, "depth_metrics: empty evaluation mask");
    r.pixel_count = count;
    const double n = double(count);
    r.abs_rel = abs_rel / n;
    r.sq_rel = sq_rel / n;
    r.rmse = std::sqrt(sq / n);
    r.rmse_log = std::sqrt(sq_log / n);
    r.delta1 = d1 / n;
    r.delta2 = d2 / n;
    r.delta3 = d3 / n;
    return r;
}

/// Disjoint near/far masks splitting the valid pixels at `threshold`
/// (far = gt > threshold, the paper's 20 m convention).
inline std::pair<Tensor, Tensor> band_split(const Tensor& gt, const Tensor& valid,
                                            double threshold = 20.0) {
    Tensor near_mask(gt.shape()), far_mask(gt.shape());
    for (std::int64_t i = 0; i < gt.numel(); ++i) {
        if (valid.data()[i] <= 0.0f) continue;
        if (double(gt.data()[i]) > threshold) {
            far_mask.data()[i] = 1.0f;
        } else {
            near_mask.data()[i] = 1.0f;
        }
    }
    return {near_mask, far_mask};
}

/// Tenengrad sharpness: sum of Sobel gradient magnitudes above t, computed on
/// interior pixels (the 3x3 stencils never read outside the map).
inline double tenengrad(const Tensor& depth, double t = 0.0) {
    check(depth.c() == 1, "tenengrad: single-channel map expected, got " + depth.shape().str());
    double total = 0.0;
    for (int n = 0; n < depth.n(); ++n) {
        for (int y = 1; y + 1 < depth.h(); ++y) {
            for (int x = 1; x + 1 < depth.w(); ++x) {
                auto v = [&](int dy, int dx) { return double(depth.at(n, 0, y + dy, x + dx)); };
                const double gx = (v(-1, 1) + 2.0 * v(0, 1) + v(1, 1)) -
                                  (v(-1, -1) + 2.0 * v(0, -1) + v(1, -1));
                const double gy = (v(1, -1) + 2.0 * v(1, 0) + v(1, 1)) -
                                  (v(-1, -1) + 2.0 * v(-1, 0) + v(-1, 1));
                const double g = std::sqrt(gx * gx + gy * gy);
                if (g > t) total += g;
            }
        }
    }
    return total;
}

/// depth_metrics restricted to an externally supplied region mask.
inline MetricReport region_metrics(const Tensor& pred, const Tensor& gt, const Tensor& valid,
                                   const Tensor& region_mask, bool median_scale,
                                   double cap = 100.0) {
    check(region_mask.shape() == gt.shape(),
          "region_metrics: region mask shape " + region_mask.shape().str() +
              " does not match depth " + gt.shape().str());
    Tensor inter(gt.shape());
    std::int64_t n = 0;
    for (std::int64_t i = 0; i < gt.numel(); ++i) {
        if (valid.data()[i] > 0.0f && region_mask.data()[i] > 0.0f) {
            inter.data()[i] = 1.0f;
            ++n;
        }
    }
    check(n > 0, "region_metrics: region mask does not intersect the valid pixels");
    return depth_metrics(pred, gt, inter, median_scale, cap);
}

/// Per-snippet pose discrepancy: Euclidean translation distance and the
/// axis-angle magnitude of R_pred * R_gt^T.
inline std::pair<double, double> pose_error(const PoseVec& pred, const PoseVec& gt) {
    const Mat4 P = pose_to_matrix(pred), G = pose_to_matrix(gt);
    double t2 = 0.0;
    for (int i = 0; i < 3; ++i) {
        const double d = double(pred.t[std::size_t(i)]) - double(gt.t[std::size_t(i)]);
        t2 += d * d;
    }
    // R_err = P.R * G.R^T; angle from the trace.
    double trace = 0.0;
    for (int i = 0; i < 3; ++i) {
        for (int k = 0; k < 3; ++k) trace += P.R[i][k] * G.R[i][k];
    }
    const double c = std::clamp((trace - 1.0) / 2.0, -1.0, 1.0);
    return {std::sqrt(t2), std::acos(c)};
}

/// Machine-readable "metric=value" lines, one per line.
inline std::string metric_lines(const MetricReport& r, const std::string& prefix = "") {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%sabs_rel=%.6f\n%ssq_rel=%.6f\n%srmse=%.6f\n%srmse_log=%.6f\n"
                  "%sdelta1=%.6f\n%sdelta2=%.6f\n%sdelta3=%.6f\n%spixel_count=%lld\n",
                  prefix.c_str(), r.abs_rel, prefix.c_str(), r.sq_rel, prefix.c_str(), r.rmse,
                  prefix.c_str(), r.rmse_log, prefix.c_str(), r.delta1, prefix.c_str(), r.delta2,
                  prefix.c_str(), r.delta3, prefix.c_str(),
                  static_cast<long long>(r.pixel_count));
    return buf;
}

/// Human-readable one-row table.
inline std::string metric_table(const MetricReport& r, const std::string& label) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%-12s | abs_rel %.4f | sq_rel %.4f | rmse %.4f | rmse_log %.4f | "
                  "d1 %.4f | d2 %.4f | d3 %.4f | px %lld\n",
                  label.c_str(), r.abs_rel, r.sq_rel, r.rmse, r.rmse_log, r.delta1, r.delta2,
                  r.delta3, static_cast<long long>(r.pixel_count));
    return buf;
}

}  // namespace dualdepth
