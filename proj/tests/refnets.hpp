#pragma once

// Double-precision reference forward of the depth/pose networks, mirroring the
// architecture definition but built from refengine scalar-loop ops. Used by
// network-level finite-difference checks.

#include <map>

#include "dualdepth/networks.hpp"

#include "refengine.hpp"

namespace refnets {

using RefParams = std::map<std::string, refeng::RefTensor>;

inline RefParams ref_params(const dualdepth::ParamStore& store) {
    RefParams out;
    for (const auto& [name, t] : store.items()) out[name] = refeng::RefTensor::from(t);
    return out;
}

inline refeng::RefTensor activate(const refeng::RefTensor& x, dualdepth::Activation act) {
    if (act == dualdepth::Activation::Elu) {
        return refeng::unary(x, [](double v) { return v > 0 ? v : std::exp(v) - 1.0; });
    }
    return refeng::unary(x, [](double v) { return v > 0 ? v : 0.0; });
}

inline refeng::RefTensor conv(const RefParams& p, const std::string& name,
                              const refeng::RefTensor& x, int stride) {
    return refeng::conv2d(x, p.at(name + ".w"), p.at(name + ".b"), stride);
}

struct RefDepthOutputs {
    std::array<refeng::RefTensor, 4> disparities;
    refeng::RefTensor bottleneck;
    refeng::RefTensor feats16;
};

inline std::array<refeng::RefTensor, 5> depth_encoder(const refeng::RefTensor& img,
                                                      const RefParams& p,
                                                      const dualdepth::DepthNetSpec& spec) {
    std::array<refeng::RefTensor, 5> feats;
    refeng::RefTensor x = img;
    for (int i = 1; i <= 5; ++i) {
        const std::string blk = spec.prefix + ".enc" + std::to_string(i);
        if (spec.double_enc_convs) {
            x = activate(conv(p, blk + ".c0", x, 1), spec.act);
            x = activate(conv(p, blk + ".c1", x, 2), spec.act);
        } else {
            x = activate(conv(p, blk + ".c0", x, 2), spec.act);
        }
        feats[std::size_t(i - 1)] = x;
    }
    return feats;
}

inline RefDepthOutputs depth_decoder(const std::array<refeng::RefTensor, 5>& enc,
                                     const refeng::RefTensor& bottleneck, const RefParams& p,
                                     const dualdepth::DepthNetSpec& spec) {
    RefDepthOutputs out;
    out.bottleneck = enc[4];
    refeng::RefTensor x = bottleneck;
    std::array<refeng::RefTensor, 5> dec;
    for (int level = 4; level >= 0; --level) {
        const std::string stg = spec.prefix + ".dec" + std::to_string(level);
        x = activate(conv(p, stg + ".c0", x, 1), spec.act);
        x = refeng::resize_bilinear(x, x.shape.h * 2, x.shape.w * 2);
        if (level >= 1) x = refeng::concat_channels({x, enc[std::size_t(level - 1)]});
        x = activate(conv(p, stg + ".c1", x, 1), spec.act);
        dec[std::size_t(level)] = x;
    }
    for (int level = 0; level < 4; ++level) {
        out.disparities[std::size_t(level)] = refeng::unary(
            conv(p, spec.prefix + ".disp" + std::to_string(level), dec[std::size_t(level)], 1),
            [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    }
    if (spec.emit_feats16) {
        out.feats16 = activate(conv(p, spec.prefix + ".feats", dec[0], 1), spec.act);
    }
    return out;
}

inline RefDepthOutputs lr_net_forward(const refeng::RefTensor& img, const RefParams& p,
                                      const dualdepth::DepthNetSpec& spec) {
    const auto enc = depth_encoder(img, p, spec);
    return depth_decoder(enc, enc[4], p, spec);
}

inline RefDepthOutputs hr_net_forward(const refeng::RefTensor& img,
                                      const refeng::RefTensor& refined, const RefParams& p,
                                      const dualdepth::DepthNetSpec& spec) {
    const auto enc = depth_encoder(img, p, spec);
    auto lifted = refeng::resize_bilinear(refined, enc[4].shape.h, enc[4].shape.w);
    return depth_decoder(enc, refeng::concat_channels({enc[4], lifted}), p, spec);
}

inline std::vector<refeng::RefTensor> pose_net_forward(const refeng::RefTensor& frames,
                                                       const RefParams& p,
                                                       const dualdepth::PoseNetSpec& spec) {
    refeng::RefTensor x = frames;
    for (int i = 1; i <= 7; ++i) {
        x = activate(conv(p, spec.prefix + ".conv" + std::to_string(i), x, 2), spec.act);
    }
    x = conv(p, spec.prefix + ".head", x, 1);
    x = refeng::unary(refeng::reduce(x, {2, 3}, true),
                      [](double v) { return v * double(0.01f); });
    std::vector<refeng::RefTensor> poses;
    for (int f = 0; f < spec.num_frames - 1; ++f) {
        poses.push_back(refeng::slice_channels(x, 6 * f, 6));
    }
    return poses;
}

}  // namespace refnets
