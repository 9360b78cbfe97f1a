#pragma once

#include <unordered_map>

#include "dualdepth/attention.hpp"
#include "dualdepth/core/conv.hpp"
#include "dualdepth/core/ops.hpp"
#include "dualdepth/core/resample.hpp"
#include "dualdepth/core/rng.hpp"
#include "dualdepth/geometry.hpp"

namespace dualdepth {

enum class Activation { Elu, Relu };

inline Value activate(Value x, Activation act) {
    return act == Activation::Elu ? elu(x) : relu(x);
}

/// Ordered named parameter tensors of the whole model. Registration order is
/// the initialization draw order and the checkpoint serialization order.
class ParamStore {
public:
    Tensor& add(std::string name, Tensor t) {
        check(index_.find(name) == index_.end(), "ParamStore: duplicate parameter " + name);
        index_[name] = items_.size();
        items_.emplace_back(std::move(name), std::move(t));
        return items_.back().second;
    }
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    Tensor& at(const std::string& name) {
        auto it = index_.find(name);
        check(it != index_.end(), "ParamStore: unknown parameter " + name);
        return items_[it->second].second;
    }
    const Tensor& at(const std::string& name) const {
        auto it = index_.find(name);
        check(it != index_.end(), "ParamStore: unknown parameter " + name);
        return items_[it->second].second;
    }
    std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }

private:
    std::vector<std::pair<std::string, Tensor>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Per-tape binding of a ParamStore: trainable params become leaves, frozen
/// ones constants, so backward never walks into a frozen subnetwork.
struct BoundParams {
    std::unordered_map<std::string, Value> values;

    Value at(const std::string& name) const {
        auto it = values.find(name);
        check(it != values.end(), "BoundParams: unknown parameter " + name);
        return it->second;
    }
};

template <class TrainablePred>
BoundParams bind_params(Tape& tape, const ParamStore& store, TrainablePred&& trainable) {
    BoundParams bound;
    for (const auto& [name, tensor] : store.items()) {
        bound.values[name] = trainable(name) ? tape.leaf(tensor) : tape.constant(tensor);
    }
    return bound;
}

inline BoundParams bind_params(Tape& tape, const ParamStore& store, bool trainable) {
    return bind_params(tape, store, [trainable](const std::string&) { return trainable; });
}

namespace detail {

inline int scaled_ch(int base, float scale) {
    const int c = static_cast<int>(std::lround(double(base) * scale));
    return std::max(4, c);
}

inline void init_conv(ParamStore& store, const std::string& name, int in_c, int out_c, int k,
                      Rng& rng, bool zero = false) {
    Tensor w(Shape{out_c, in_c, k, k});
    if (!zero) {
        const float bound = std::sqrt(1.0f / float(in_c * k * k));
        for (std::int64_t i = 0; i < w.numel(); ++i) w.data()[i] = rng.uniform_f(-bound, bound);
    }
    store.add(name + ".w", std::move(w));
    store.add(name + ".b", Tensor(Shape{1, out_c, 1, 1}));
}

inline Value conv(Tape&, const BoundParams& p, const std::string& name, Value x, int stride) {
    return conv2d(x, p.at(name + ".w"), p.at(name + ".b"), stride);
}

}  // namespace detail

/// Channel plan of one encoder-decoder depth network.
struct DepthNetSpec {
    std::string prefix;             // parameter name prefix, e.g. "lr"
    std::array<int, 5> enc;         // encoder channels, level 1..5
    std::array<int, 5> dec;         // decoder channels, output level 0..4
    bool double_enc_convs = true;   // two convs per encoder block (deep variant)
    bool emit_feats16 = false;      // 16-channel feature head at full resolution
    Activation act = Activation::Elu;
};

inline DepthNetSpec lr_net_spec(float scale, Activation act = Activation::Elu) {
    DepthNetSpec s;
    s.prefix = "lr";
    const int base_enc[5] = {32, 64, 128, 256, 512};
    const int base_dec[5] = {16, 32, 64, 128, 256};
    for (int i = 0; i < 5; ++i) {
        s.enc[std::size_t(i)] = detail::scaled_ch(base_enc[i], scale);
        s.dec[std::size_t(i)] = detail::scaled_ch(base_dec[i], scale);
    }
    s.double_enc_convs = true;
    s.emit_feats16 = true;
    s.act = act;
    return s;
}

inline DepthNetSpec hr_net_spec(float scale, Activation act = Activation::Elu) {
    DepthNetSpec s;
    s.prefix = "hr";
    const int base_enc[5] = {16, 16, 32, 64, 64};
    const int base_dec[5] = {16, 16, 32, 32, 64};
    for (int i = 0; i < 5; ++i) {
        s.enc[std::size_t(i)] = detail::scaled_ch(base_enc[i], scale);
        s.dec[std::size_t(i)] = detail::scaled_ch(base_dec[i], scale);
    }
    s.double_enc_convs = false;
    s.emit_feats16 = false;
    s.act = act;
    return s;
}

/// Registers one depth network's parameters. `extra_bottleneck_ch` is the
/// channel count concatenated onto the deepest encoder level (HR-Net receives
/// the refined LR bottleneck there).
inline void init_depth_net(ParamStore& store, const DepthNetSpec& spec, int in_ch,
                           int extra_bottleneck_ch, Rng& rng) {
    int prev = in_ch;
    for (int i = 1; i <= 5; ++i) {
        const int c = spec.enc[std::size_t(i - 1)];
        if (spec.double_enc_convs) {
            detail::init_conv(store, spec.prefix + ".enc" + std::to_string(i) + ".c0", prev, c, 3,
                              rng);
            detail::init_conv(store, spec.prefix + ".enc" + std::to_string(i) + ".c1", c, c, 3,
                              rng);
        } else {
            detail::init_conv(store, spec.prefix + ".enc" + std::to_string(i) + ".c0", prev, c, 3,
                              rng);
        }
        prev = c;
    }
    int x_ch = spec.enc[4] + extra_bottleneck_ch;
    for (int level = 4; level >= 0; --level) {
        const int c = spec.dec[std::size_t(level)];
        detail::init_conv(store, spec.prefix + ".dec" + std::to_string(level) + ".c0", x_ch, c, 3,
                          rng);
        const int skip = (level >= 1) ? spec.enc[std::size_t(level - 1)] : 0;
        detail::init_conv(store, spec.prefix + ".dec" + std::to_string(level) + ".c1", c + skip, c,
                          3, rng);
        x_ch = c;
    }
    for (int level = 0; level < 4; ++level) {
        detail::init_conv(store, spec.prefix + ".disp" + std::to_string(level),
                          spec.dec[std::size_t(level)], 1, 3, rng);
    }
    if (spec.emit_feats16) {
        detail::init_conv(store, spec.prefix + ".feats", spec.dec[0], 16, 3, rng);
    }
}

inline std::int64_t depth_net_param_count(const DepthNetSpec& spec, int in_ch,
                                          int extra_bottleneck_ch) {
    ParamStore tmp;
    Rng rng(0);
    init_depth_net(tmp, spec, in_ch, extra_bottleneck_ch, rng);
    std::int64_t n = 0;
    for (const auto& [name, t] : tmp.items()) n += t.numel();
    return n;
}

/// Multi-scale outputs of a depth network.
struct DepthOutputs {
    std::array<Value, 4> disparities;  // level 0 (full) .. level 3 (1/8)
    Value bottleneck;                  // deepest encoder features
    Value feats16;                     // 16-channel head (LR-Net only), else invalid
};

namespace detail {

inline std::array<Value, 5> depth_encoder(Tape& tape, Value img, const BoundParams& p,
                                          const DepthNetSpec& spec) {
    std::array<Value, 5> feats;
    Value x = img;
    for (int i = 1; i <= 5; ++i) {
        const std::string blk = spec.prefix + ".enc" + std::to_string(i);
        if (spec.double_enc_convs) {
            x = activate(conv(tape, p, blk + ".c0", x, 1), spec.act);
            x = activate(conv(tape, p, blk + ".c1", x, 2), spec.act);
        } else {
            x = activate(conv(tape, p, blk + ".c0", x, 2), spec.act);
        }
        feats[std::size_t(i - 1)] = x;
    }
    return feats;
}

inline DepthOutputs depth_decoder(Tape& tape, const std::array<Value, 5>& enc, Value bottleneck,
                                  const BoundParams& p, const DepthNetSpec& spec) {
    DepthOutputs out;
    out.bottleneck = enc[4];
    Value x = bottleneck;
    std::array<Value, 5> dec_feats;
    for (int level = 4; level >= 0; --level) {
        const std::string stg = spec.prefix + ".dec" + std::to_string(level);
        x = activate(conv(tape, p, stg + ".c0", x, 1), spec.act);
        const Shape cur = x.shape();
        x = resize_bilinear(x, cur.h * 2, cur.w * 2);
        if (level >= 1) x = concat_channels({x, enc[std::size_t(level - 1)]});
        x = activate(conv(tape, p, stg + ".c1", x, 1), spec.act);
        dec_feats[std::size_t(level)] = x;
    }
    for (int level = 0; level < 4; ++level) {
        out.disparities[std::size_t(level)] = sigmoid(
            conv(tape, p, spec.prefix + ".disp" + std::to_string(level),
                 dec_feats[std::size_t(level)], 1));
    }
    if (spec.emit_feats16) {
        out.feats16 = activate(conv(tape, p, spec.prefix + ".feats", dec_feats[0], 1), spec.act);
    }
    return out;
}

}  // namespace detail

/// Deep low-resolution network: global semantic features and LR disparities.
inline DepthOutputs lr_net_forward(Tape& tape, Value img_lr, const BoundParams& p,
                                   const DepthNetSpec& spec) {
    const Shape s = img_lr.shape();
    check(s.h % 32 == 0 && s.w % 32 == 0,
          "lr_net_forward: resolution must be divisible by 32, got " + s.str());
    const auto enc = detail::depth_encoder(tape, img_lr, p, spec);
    return detail::depth_decoder(tape, enc, enc[4], p, spec);
}

/// Encoder-only forward; the HR stage needs just the frozen bottleneck.
inline Value lr_encoder_bottleneck(Tape& tape, Value img_lr, const BoundParams& p,
                                   const DepthNetSpec& spec) {
    const Shape s = img_lr.shape();
    check(s.h % 32 == 0 && s.w % 32 == 0,
          "lr_encoder_bottleneck: resolution must be divisible by 32, got " + s.str());
    return detail::depth_encoder(tape, img_lr, p, spec)[4];
}

/// Shallow high-resolution network. The refined LR bottleneck is resized to
/// the HR bottleneck size (exactly 3x) and concatenated before decoding.
inline DepthOutputs hr_net_forward(Tape& tape, Value img_hr, Value refined_bottleneck,
                                   const BoundParams& p, const DepthNetSpec& spec) {
    const Shape s = img_hr.shape();
    check(s.h % 32 == 0 && s.w % 32 == 0,
          "hr_net_forward: resolution must be divisible by 32, got " + s.str());
    const Shape rb = refined_bottleneck.shape();
    check(s.h == rb.h * 32 * 3 && s.w == rb.w * 32 * 3,
          "hr_net_forward: HR/LR resolution ratio must be exactly 3 (HR " + s.str() +
              ", refined bottleneck " + rb.str() + ")");
    const auto enc = detail::depth_encoder(tape, img_hr, p, spec);
    const Shape bs = enc[4].shape();
    Value lifted = resize_bilinear(refined_bottleneck, bs.h, bs.w);
    Value fused = concat_channels({enc[4], lifted});
    return detail::depth_decoder(tape, enc, fused, p, spec);
}

struct PoseNetSpec {
    std::string prefix = "pose";
    std::array<int, 7> channels;
    int num_frames = 3;
    Activation act = Activation::Elu;
};

inline PoseNetSpec pose_net_spec(float scale, Activation act = Activation::Elu) {
    PoseNetSpec s;
    const int base[7] = {16, 32, 64, 128, 256, 256, 256};
    for (int i = 0; i < 7; ++i) s.channels[std::size_t(i)] = detail::scaled_ch(base[i], scale);
    s.act = act;
    return s;
}

inline void init_pose_net(ParamStore& store, const PoseNetSpec& spec, Rng& rng) {
    int prev = 3 * spec.num_frames;
    for (int i = 1; i <= 7; ++i) {
        detail::init_conv(store, spec.prefix + ".conv" + std::to_string(i), prev,
                          spec.channels[std::size_t(i - 1)], 3, rng);
        prev = spec.channels[std::size_t(i - 1)];
    }
    detail::init_conv(store, spec.prefix + ".head", prev, 6 * (spec.num_frames - 1), 1, rng);
}

/// Seven stride-2 convolutions, a 1x1 head, global average pooling and a 0.01
/// output scale. Returns one (n,6,1,1) pose value per source frame.
inline std::vector<Value> pose_net_forward(Tape& tape, Value frames, const BoundParams& p,
                                           const PoseNetSpec& spec) {
    const Shape s = frames.shape();
    check(s.c == 3 * spec.num_frames, "pose_net_forward: expected " +
                                          std::to_string(3 * spec.num_frames) +
                                          " channels, got " + s.str());
    Value x = frames;
    for (int i = 1; i <= 7; ++i) {
        x = activate(detail::conv(tape, p, spec.prefix + ".conv" + std::to_string(i), x, 2),
                     spec.act);
    }
    x = detail::conv(tape, p, spec.prefix + ".head", x, 1);
    x = scale(mean(x, {2, 3}), 0.01f);
    std::vector<Value> poses;
    for (int f = 0; f < spec.num_frames - 1; ++f) {
        poses.push_back(slice_channels(x, 6 * f, 6));
    }
    return poses;
}

/// Scaled-disparity depth parameterization. Returns the metric depth in
/// [d_min, d_max] and the mean-normalized disparity used by the smoothness term.
inline std::pair<Value, Value> disparity_to_depth(Value disp, float d_min, float d_max) {
    check(d_min > 0.0f && d_min < d_max, "disparity_to_depth: need 0 < d_min < d_max");
    Tape& t = *disp.tape;
    const float lo = 1.0f / d_max, hi = 1.0f / d_min;
    Value s = add_const(scale(disp, hi - lo), lo);
    Value depth = div(t.constant(Tensor::scalar(1.0f)), s);
    Value norm_disp = div(disp, mean(disp, {1, 2, 3}));
    return {depth, norm_disp};
}

}  // namespace dualdepth
