#pragma once

#include "dualdepth/core/attention_op.hpp"
#include "dualdepth/core/conv.hpp"
#include "dualdepth/core/ops.hpp"
#include "dualdepth/core/resample.hpp"

namespace dualdepth {

struct SAConfig {
    int embed_dim = 64;
    NormMode norm_mode = NormMode::Mean;

    void validate() const { check(embed_dim >= 1, "SAConfig: embed_dim must be >= 1"); }
};

/// Coordinate channels x, y normalized to [-1, 1]; a degenerate axis maps to 0.
inline Tensor coord_channels(int n, int h, int w) {
    Tensor t(Shape{n, 2, h, w});
    for (int in_ = 0; in_ < n; ++in_) {
        for (int iy = 0; iy < h; ++iy) {
            for (int ix = 0; ix < w; ++ix) {
                t.at(in_, 0, iy, ix) = (w == 1) ? 0.0f : -1.0f + 2.0f * float(ix) / float(w - 1);
                t.at(in_, 1, iy, ix) = (h == 1) ? 0.0f : -1.0f + 2.0f * float(iy) / float(h - 1);
            }
        }
    }
    return t;
}

/// Stacks the bottleneck features with the resized input image and the pixel
/// coordinates, the raw material the similarity embedding is computed from.
inline Value assemble_input(Value features, Value image, int h, int w) {
    const Shape fs = features.shape();
    check(fs.h == h && fs.w == w, "assemble_input: (h,w) must equal the feature spatial size " +
                                      fs.str());
    Tape& t = *features.tape;
    Value img = (image.shape().h == h && image.shape().w == w)
                    ? image
                    : resize_bilinear(image, h, w);
    Value coords = t.constant(coord_channels(fs.n, h, w));
    return concat_channels({features, img, coords});
}

/// Embeds the assembled features with a 1x1 convolution and re-aggregates each
/// position as a similarity-weighted sum over all positions.
inline Value sa_attention(Value assembled, Value embed_weight, Value embed_bias,
                          const SAConfig& config) {
    config.validate();
    check(embed_weight.shape().h == 1 && embed_weight.shape().w == 1,
          "sa_attention: embedding must be a 1x1 convolution, got weight " +
              embed_weight.shape().str());
    check(embed_weight.shape().n == config.embed_dim,
          "sa_attention: weight output channels " + std::to_string(embed_weight.shape().n) +
              " do not match embed_dim " + std::to_string(config.embed_dim));
    Value embedded = conv2d(assembled, embed_weight, embed_bias, 1);
    return self_attention(embedded, config.norm_mode);
}

}  // namespace dualdepth
