#pragma once

#include <optional>

#include "dualdepth/core/conv.hpp"
#include "dualdepth/core/ops.hpp"

namespace dualdepth {

/// Weights of the combined training objective. The photometric term dominates;
/// smoothness decays per scale.
struct LossWeights {
    float alpha = 0.85f;
    float lambda1 = 1.0f;
    float lambda2 = 0.1f;
    float lambda3 = 0.05f;
    float scale_decay = 0.5f;

    void validate() const {
        check(alpha >= 0.0f && alpha <= 1.0f, "LossWeights: alpha must be in [0,1]");
        check(lambda1 >= 0.0f && lambda2 >= 0.0f && lambda3 >= 0.0f,
              "LossWeights: lambdas must be non-negative");
    }
};

/// A source view warped into the target frame plus its coverage mask.
struct WarpedSource {
    Value image;
    Tensor valid;  // (n,1,h,w) in {0,1}, constant w.r.t. the tape
};

namespace detail {

constexpr float kMaskedOut = 1e9f;

inline Tensor mask_union(const std::vector<WarpedSource>& sources) {
    Tensor any = sources[0].valid;
    for (std::size_t s = 1; s < sources.size(); ++s) {
        for (std::int64_t i = 0; i < any.numel(); ++i) {
            any.data()[i] = std::max(any.data()[i], sources[s].valid.data()[i]);
        }
    }
    return any;
}

inline double mask_count(const Tensor& mask) {
    double c = 0.0;
    for (std::int64_t i = 0; i < mask.numel(); ++i) c += mask.data()[i];
    return c;
}

/// Mean of per-pixel values over mask==1 pixels; 0 when nothing is covered.
inline Value masked_mean(Value per_pixel, const Tensor& mask) {
    Tape& t = *per_pixel.tape;
    const double count = mask_count(mask);
    if (count == 0.0) return t.constant(Tensor::scalar(0.0f));
    Value masked = mul(per_pixel, t.constant(mask));
    return scale(sum_all(masked), static_cast<float>(1.0 / count));
}

/// Per-pixel minimum over sources where invalid pixels are pushed out of
/// min candidacy with a large constant.
inline Value masked_min_map(const std::vector<Value>& per_source,
                            const std::vector<WarpedSource>& sources) {
    Tape& t = *per_source[0].tape;
    Value result;
    for (std::size_t s = 0; s < per_source.size(); ++s) {
        Value m = t.constant(sources[s].valid);
        Tensor off(sources[s].valid.shape());
        for (std::int64_t i = 0; i < off.numel(); ++i) {
            off.data()[i] = (1.0f - sources[s].valid.data()[i]) * kMaskedOut;
        }
        Value cand = add(mul(per_source[s], m), t.constant(off));
        result = (s == 0) ? cand : min2(result, cand);
    }
    return result;
}

}  // namespace detail

/// Per-pixel, per-channel (1 - SSIM)/2 from 3x3 mean-pooled local statistics,
/// C1 = 0.01^2 and C2 = 0.03^2.
inline Value ssim_map(Value a, Value b) {
    check(a.shape() == b.shape(),
          "ssim_map: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    const float c1 = 1e-4f, c2 = 9e-4f;
    Value mu_a = pool_mean3x3(a);
    Value mu_b = pool_mean3x3(b);
    Value mu_aa = mul(mu_a, mu_a);
    Value mu_bb = mul(mu_b, mu_b);
    Value mu_ab = mul(mu_a, mu_b);
    Value sig_a = sub(pool_mean3x3(mul(a, a)), mu_aa);
    Value sig_b = sub(pool_mean3x3(mul(b, b)), mu_bb);
    Value sig_ab = sub(pool_mean3x3(mul(a, b)), mu_ab);
    Value num = mul(add_const(scale(mu_ab, 2.0f), c1), add_const(scale(sig_ab, 2.0f), c2));
    Value den = mul(add_const(add(mu_aa, mu_bb), c1), add_const(add(sig_a, sig_b), c2));
    return scale(add_const(scale(div(num, den), -1.0f), 1.0f), 0.5f);
}

/// SSIM/L1 blend per source, per-pixel minimum across sources, mean over the
/// pixels covered by at least one source.
inline Value photometric_loss(Value target, const std::vector<WarpedSource>& sources,
                              float alpha) {
    check(!sources.empty(), "photometric_loss: needs at least one warped source");
    check(alpha >= 0.0f && alpha <= 1.0f, "photometric_loss: alpha must be in [0,1]");
    std::vector<Value> errs;
    errs.reserve(sources.size());
    for (const auto& src : sources) {
        check(src.image.shape() == target.shape(),
              "photometric_loss: source shape " + src.image.shape().str() +
                  " does not match target " + target.shape().str());
        Value l1 = mean(vabs(sub(target, src.image)), {1});
        Value err = l1;
        if (alpha > 0.0f) {
            Value ss = mean(ssim_map(target, src.image), {1});
            err = add(scale(ss, alpha), scale(l1, 1.0f - alpha));
        }
        errs.push_back(err);
    }
    Value min_map = detail::masked_min_map(errs, sources);
    return detail::masked_mean(min_map, detail::mask_union(sources));
}

/// Edge-aware first-order smoothness: |dD| weighted by exp(-|dI|), image
/// gradients averaged over channels, forward differences, split by axis.
inline Value smoothness_loss(Value norm_disp, Value image) {
    check(norm_disp.shape().h == image.shape().h && norm_disp.shape().w == image.shape().w,
          "smoothness_loss: disparity " + norm_disp.shape().str() + " and image " +
              image.shape().str() + " must share spatial size");
    Value wx = vexp(scale(mean(vabs(diff_x(image)), {1}), -1.0f));
    Value wy = vexp(scale(mean(vabs(diff_y(image)), {1}), -1.0f));
    Value tx = mean_all(mul(vabs(diff_x(norm_disp)), wx));
    Value ty = mean_all(mul(vabs(diff_y(norm_disp)), wy));
    return add(tx, ty);
}

/// Per-pixel L2 norm over channels of the feature difference, per-pixel
/// minimum across sources, masked mean (Eq.-8 style).
inline Value feature_recon_loss(Value target_feats, const std::vector<WarpedSource>& sources) {
    check(!sources.empty(), "feature_recon_loss: needs at least one warped source");
    std::vector<Value> norms;
    norms.reserve(sources.size());
    for (const auto& src : sources) {
        check(src.image.shape() == target_feats.shape(),
              "feature_recon_loss: feature shape mismatch " + src.image.shape().str() + " vs " +
                  target_feats.shape().str());
        Value diff = sub(target_feats, src.image);
        norms.push_back(vsqrt(sum(mul(diff, diff), {1})));
    }
    Value min_map = detail::masked_min_map(norms, sources);
    return detail::masked_mean(min_map, detail::mask_union(sources));
}

enum class Stage { LR, HR };

/// Component losses of one prediction scale.
struct ScaleTerms {
    Value photometric;
    Value smoothness;
};

/// lambda1*L_ph + lambda2*decay^k*L_smooth summed over scales, plus
/// lambda3*L_fr at the LR stage. The HR stage drops the feature term.
inline Value total_loss(Stage stage, const std::vector<ScaleTerms>& scales,
                        std::optional<Value> feature_recon, const LossWeights& w) {
    w.validate();
    check(!scales.empty(), "total_loss: no per-scale terms");
    Value total;
    float decay = 1.0f;
    for (std::size_t k = 0; k < scales.size(); ++k) {
        Value term = add(scale(scales[k].photometric, w.lambda1),
                         scale(scales[k].smoothness, w.lambda2 * decay));
        total = (k == 0) ? term : add(total, term);
        decay *= w.scale_decay;
    }
    if (stage == Stage::LR && feature_recon.has_value()) {
        total = add(total, scale(*feature_recon, w.lambda3));
    }
    return total;
}

}  // namespace dualdepth
