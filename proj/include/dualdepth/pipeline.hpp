#pragma once

#include <chrono>
#include <iostream>
#include <map>

#include "dualdepth/checkpoint.hpp"
#include "dualdepth/config.hpp"
#include "dualdepth/core/adam.hpp"
#include "dualdepth/evalkit.hpp"

namespace dualdepth {

/// Step schedule shared by both stages (1-based epochs).
inline float lr_schedule(int epoch) {
    check(epoch >= 1, "lr_schedule: epoch must be >= 1");
    if (epoch <= 10) return 2e-4f;
    if (epoch <= 20) return 1e-4f;
    return 5e-5f;
}

struct ModelSpecs {
    DepthNetSpec lr;
    DepthNetSpec hr;
    PoseNetSpec pose;
    SAConfig sa;
    float d_min, d_max;
    bool upsample_pred;
    LossWeights weights;

    int sa_input_channels() const { return lr.enc[4] + 3 + 2; }
};

inline ModelSpecs make_specs(const TrainConfig& cfg) {
    ModelSpecs s;
    s.lr = lr_net_spec(cfg.arch_scale, cfg.activation);
    s.hr = hr_net_spec(cfg.arch_scale, cfg.activation);
    s.pose = pose_net_spec(cfg.arch_scale, cfg.activation);
    s.sa = cfg.sa;
    s.d_min = cfg.d_min;
    s.d_max = cfg.d_max;
    s.upsample_pred = cfg.upsample_pred;
    s.weights = cfg.loss;
    return s;
}

namespace detail {

inline bool starts_with(const std::string& s, const std::string& prefix) {
    return s.rfind(prefix, 0) == 0;
}

inline Tensor meta_pair(float a, float b) {
    return Tensor::from(Shape{1, 1, 1, 2}, {a, b});
}

/// Assembles the checkpoint: params in registration order, Adam moments for
/// the trainable set, then meta tensors needed to rebuild the model at load.
inline Checkpoint pack_checkpoint(Stage stage, const ParamStore& params,
                                  const std::map<std::string, AdamState>& adam,
                                  const TrainConfig& cfg, std::int64_t epochs_done,
                                  std::uint64_t seed_state) {
    Checkpoint ckpt;
    ckpt.stage = stage;
    ckpt.seed_state = seed_state;
    for (const auto& [name, t] : params.items()) ckpt.tensors.emplace_back(name, t);
    for (const auto& [name, st] : adam) {
        ckpt.tensors.emplace_back("adam.m." + name, st.m);
        ckpt.tensors.emplace_back("adam.v." + name, st.v);
        ckpt.tensors.emplace_back("adam.t." + name, Tensor::scalar(float(st.t)));
    }
    ckpt.tensors.emplace_back("meta.arch_scale", Tensor::scalar(cfg.arch_scale));
    ckpt.tensors.emplace_back("meta.activation",
                              Tensor::scalar(cfg.activation == Activation::Elu ? 0.0f : 1.0f));
    ckpt.tensors.emplace_back("meta.depth_range", meta_pair(cfg.d_min, cfg.d_max));
    ckpt.tensors.emplace_back("meta.lr_size", meta_pair(float(cfg.lr_h), float(cfg.lr_w)));
    ckpt.tensors.emplace_back(
        "meta.sa", meta_pair(float(cfg.sa.embed_dim), float(static_cast<int>(cfg.sa.norm_mode))));
    ckpt.tensors.emplace_back("meta.epochs_done", Tensor::scalar(float(epochs_done)));
    return ckpt;
}

inline void unpack_params(const Checkpoint& ckpt, ParamStore& params,
                          std::map<std::string, AdamState>& adam) {
    for (const auto& [name, t] : ckpt.tensors) {
        if (starts_with(name, "meta.") || starts_with(name, "adam.")) continue;
        params.add(name, t);
    }
    for (const auto& [name, t] : ckpt.tensors) {
        if (starts_with(name, "adam.m.")) {
            adam[name.substr(7)].m = t;
        } else if (starts_with(name, "adam.v.")) {
            adam[name.substr(7)].v = t;
        } else if (starts_with(name, "adam.t.")) {
            adam[name.substr(7)].t = std::llround(double(t.scalar_value()));
        }
    }
}

/// Rebuilds the training configuration a checkpoint was produced with.
inline TrainConfig config_from_checkpoint(const Checkpoint& ckpt) {
    TrainConfig cfg;
    cfg.arch_scale = ckpt.at("meta.arch_scale").scalar_value();
    cfg.activation = ckpt.at("meta.activation").scalar_value() == 0.0f ? Activation::Elu
                                                                       : Activation::Relu;
    cfg.d_min = ckpt.at("meta.depth_range").data()[0];
    cfg.d_max = ckpt.at("meta.depth_range").data()[1];
    cfg.lr_h = int(ckpt.at("meta.lr_size").data()[0]);
    cfg.lr_w = int(ckpt.at("meta.lr_size").data()[1]);
    cfg.sa.embed_dim = int(ckpt.at("meta.sa").data()[0]);
    cfg.sa.norm_mode = static_cast<NormMode>(int(ckpt.at("meta.sa").data()[1]));
    return cfg;
}

/// Per-scale photometric and smoothness terms for one sample (n = 1 graphs;
/// a batch is a mean of sample losses, so each sample keeps its own intrinsics).
inline std::vector<ScaleTerms> build_scale_terms(
    Tape& tape, const DepthOutputs& outs, const Tensor& target, const Tensor& prev,
    const Tensor& next, const Intrinsics& K, Value pose_prev, Value pose_next,
    const ModelSpecs& specs, SynthesizedView* warp0_prev = nullptr,
    SynthesizedView* warp0_next = nullptr) {
    std::vector<ScaleTerms> terms;
    const int full_h = target.h(), full_w = target.w();
    for (int k = 0; k < 4; ++k) {
        Value disp = outs.disparities[std::size_t(k)];
        Tensor tgt_k = target, prev_k = prev, next_k = next;
        Intrinsics K_k = K;
        if (specs.upsample_pred) {
            if (disp.shape().h != full_h) disp = resize_bilinear(disp, full_h, full_w);
        } else if (disp.shape().h != full_h) {
            const int hk = disp.shape().h, wk = disp.shape().w;
            tgt_k = resize_bilinear(target, hk, wk);
            prev_k = resize_bilinear(prev, hk, wk);
            next_k = resize_bilinear(next, hk, wk);
            K_k = K.scaled(double(wk) / full_w, double(hk) / full_h);
        }
        auto [depth, norm_disp] = disparity_to_depth(disp, specs.d_min, specs.d_max);
        Value tgt_v = tape.constant(tgt_k);
        SynthesizedView wp = synthesize_view(tape.constant(prev_k), depth, K_k, pose_prev);
        SynthesizedView wn = synthesize_view(tape.constant(next_k), depth, K_k, pose_next);
        ScaleTerms st;
        st.photometric = photometric_loss(
            tgt_v, {{wp.warped, wp.valid}, {wn.warped, wn.valid}}, specs.weights.alpha);
        st.smoothness = smoothness_loss(norm_disp, tgt_v);
        terms.push_back(st);
        if (k == 0) {
            if (warp0_prev) *warp0_prev = wp;
            if (warp0_next) *warp0_next = wn;
        }
    }
    return terms;
}

}  // namespace detail

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<double> epoch_losses;
};

/// Two-stage trainer. The LR stage jointly trains LR-Net and PoseNet with the
/// three-term loss; the HR stage freezes them (they are bound as constants, so
/// backward cannot touch them) and trains HR-Net plus the SA embedding with
/// the two-term loss. Deterministic given the seed; the augmentation stream
/// state rides in the checkpoint so stage handoff and resume reproduce an
/// uninterrupted run.
inline TrainResult train_stage(Stage stage, const TrainConfig& cfg, const std::string& data_dir,
                               const Checkpoint* init = nullptr, std::ostream* log = &std::cout) {
    cfg.validate();
    const ModelSpecs specs = make_specs(cfg);
    const auto dirs = list_triplet_dirs(data_dir);

    ParamStore params;
    std::map<std::string, AdamState> adam;
    Rng train_rng = Rng(cfg.seed).fork(Rng::kAugmentStream);
    std::int64_t epochs_done = 0;

    const bool resuming_same_stage = init && init->stage == stage;
    if (stage == Stage::LR) {
        if (init) {
            check(init->stage == Stage::LR, "train_stage: LR stage cannot start from an HR checkpoint");
            detail::unpack_params(*init, params, adam);
            train_rng.set_state(init->seed_state);
            epochs_done = std::llround(double(init->at("meta.epochs_done").scalar_value()));
        } else {
            Rng init_rng = Rng(cfg.seed).fork(Rng::kInitStream).fork(0);
            init_depth_net(params, specs.lr, 3, 0, init_rng);
            init_pose_net(params, specs.pose, init_rng);
        }
    } else {
        check(init != nullptr, "train_stage: the HR stage requires an LR-stage checkpoint");
        detail::unpack_params(*init, params, adam);
        train_rng.set_state(init->seed_state);
        if (resuming_same_stage) {
            epochs_done = std::llround(double(init->at("meta.epochs_done").scalar_value()));
        } else {
            // Fresh HR training on top of a finished LR stage.
            check(params.has("lr.enc1.c0.w"), "train_stage: init checkpoint has no LR-Net tensors");
            adam.clear();
            Rng init_rng = Rng(cfg.seed).fork(Rng::kInitStream).fork(1);
            detail::init_conv(params, "sa.embed", specs.sa_input_channels(), cfg.sa.embed_dim, 1,
                              init_rng);
            init_depth_net(params, specs.hr, 3, cfg.sa.embed_dim, init_rng);
        }
    }

    auto trainable = [stage](const std::string& name) {
        if (stage == Stage::LR) {
            return detail::starts_with(name, "lr.") || detail::starts_with(name, "pose.");
        }
        return detail::starts_with(name, "hr.") || detail::starts_with(name, "sa.");
    };
    for (const auto& [name, t] : params.items()) {
        if (trainable(name) && adam.find(name) == adam.end()) {
            adam[name] = AdamState::for_param(t);
        }
    }

    std::vector<double> epoch_losses;
    const auto t_start = std::chrono::steady_clock::now();
    for (; epochs_done < cfg.epochs; ++epochs_done) {
        const int epoch = int(epochs_done) + 1;
        AdamConfig adam_cfg;
        adam_cfg.lr = lr_schedule(epoch);

        // Epoch order: one shuffle pass, then per-sample augmentation draws,
        // all from the single sequential training stream.
        std::vector<std::size_t> order(dirs.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[std::size_t(train_rng.uniform_int(0, int(i) - 1))]);
        }

        double epoch_loss = 0.0;
        std::size_t steps = 0;
        for (std::size_t at = 0; at < order.size(); at += std::size_t(cfg.batch_size)) {
            const std::size_t bn = std::min(std::size_t(cfg.batch_size), order.size() - at);
            Tape tape;
            const BoundParams bound = bind_params(tape, params, trainable);
            Value batch_loss;
            for (std::size_t b = 0; b < bn; ++b) {
                FrameTriplet trip;
                try {
                    trip = read_triplet(dirs[order[at + b]]);
                } catch (const std::exception& e) {
                    throw std::runtime_error(std::string("train_stage: failed to load triplet: ") +
                                             e.what());
                }
                TrainViews views =
                    augment_then_downsample(trip, cfg.lr_h, cfg.lr_w, cfg.augment, train_rng);

                Value sample_loss;
                if (stage == Stage::LR) {
                    Value img_t = tape.constant(views.lr_target);
                    Value img_p = tape.constant(views.lr_prev);
                    Value img_n = tape.constant(views.lr_next);
                    DepthOutputs outs = lr_net_forward(tape, img_t, bound, specs.lr);
                    DepthOutputs outs_p = lr_net_forward(tape, img_p, bound, specs.lr);
                    DepthOutputs outs_n = lr_net_forward(tape, img_n, bound, specs.lr);
                    Tensor frames(Shape{1, 9, cfg.lr_h, cfg.lr_w});
                    {
                        const std::int64_t plane = std::int64_t(cfg.lr_h) * cfg.lr_w * 3;
                        std::copy_n(views.lr_prev.data(), plane, frames.data());
                        std::copy_n(views.lr_target.data(), plane, frames.data() + plane);
                        std::copy_n(views.lr_next.data(), plane, frames.data() + 2 * plane);
                    }
                    auto poses = pose_net_forward(tape, tape.constant(frames), bound, specs.pose);
                    SynthesizedView w0p, w0n;
                    auto terms = detail::build_scale_terms(tape, outs, views.lr_target,
                                                           views.lr_prev, views.lr_next,
                                                           views.K_lr, poses[0], poses[1], specs,
                                                           &w0p, &w0n);
                    Value wf_p = grid_sample(outs_p.feats16, w0p.coords);
                    Value wf_n = grid_sample(outs_n.feats16, w0n.coords);
                    Value fr = feature_recon_loss(
                        outs.feats16, {{wf_p, w0p.valid}, {wf_n, w0n.valid}});
                    sample_loss = total_loss(Stage::LR, terms, fr, specs.weights);
                } else {
                    Value img_lr_t = tape.constant(views.lr_target);
                    Value bottleneck = lr_encoder_bottleneck(tape, img_lr_t, bound, specs.lr);
                    Tensor frames(Shape{1, 9, cfg.lr_h, cfg.lr_w});
                    {
                        const std::int64_t plane = std::int64_t(cfg.lr_h) * cfg.lr_w * 3;
                        std::copy_n(views.lr_prev.data(), plane, frames.data());
                        std::copy_n(views.lr_target.data(), plane, frames.data() + plane);
                        std::copy_n(views.lr_next.data(), plane, frames.data() + 2 * plane);
                    }
                    auto poses = pose_net_forward(tape, tape.constant(frames), bound, specs.pose);
                    Value assembled = assemble_input(bottleneck, img_lr_t, bottleneck.shape().h,
                                                     bottleneck.shape().w);
                    Value refined = sa_attention(assembled, bound.at("sa.embed.w"),
                                                 bound.at("sa.embed.b"), specs.sa);
                    DepthOutputs outs = hr_net_forward(tape, tape.constant(views.hr_target),
                                                       refined, bound, specs.hr);
                    auto terms = detail::build_scale_terms(tape, outs, views.hr_target,
                                                           views.hr_prev, views.hr_next,
                                                           views.K_hr, poses[0], poses[1], specs);
                    sample_loss = total_loss(Stage::HR, terms, std::nullopt, specs.weights);
                }
                Value contrib = scale(sample_loss, 1.0f / float(bn));
                batch_loss = (b == 0) ? contrib : add(batch_loss, contrib);
            }

            const double loss_value = batch_loss.val().scalar_value();
            if (!std::isfinite(loss_value)) {
                throw std::runtime_error("train_stage: non-finite loss at epoch " +
                                         std::to_string(epoch) + " step " +
                                         std::to_string(steps));
            }
            const auto grads = tape.backward(batch_loss);
            for (const auto& [name, v] : bound.values) {
                if (!trainable(name)) continue;
                const Tensor& g = grad_of(grads, v);
                adam_step(params.at(name), g, adam.at(name), adam_cfg);
            }
            epoch_loss += loss_value;
            ++steps;
        }
        epoch_loss /= double(std::max<std::size_t>(steps, 1));
        epoch_losses.push_back(epoch_loss);
        if (log) {
            const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                             t_start)
                                   .count();
            char buf[160];
            std::snprintf(buf, sizeof(buf), "[%s] epoch %d/%d  loss %.6f  lr %.1e  (%.1fs)\n",
                          stage == Stage::LR ? "lr" : "hr", epoch, cfg.epochs, epoch_loss,
                          double(adam_cfg.lr), sec);
            (*log) << buf << std::flush;
        }
    }

    TrainResult result;
    result.checkpoint =
        detail::pack_checkpoint(stage, params, adam, cfg, epochs_done, train_rng.state());
    result.epoch_losses = std::move(epoch_losses);
    return result;
}

/// Depth inference from a checkpoint. LR stage runs LR-Net on an LR image;
/// HR stage downsamples the HR input by 3 for the frozen LR encoder + SA path
/// and predicts at full input resolution.
inline Tensor infer_depth(const Checkpoint& ckpt, const Tensor& image, Stage stage) {
    const TrainConfig cfg = detail::config_from_checkpoint(ckpt);
    const ModelSpecs specs = make_specs(cfg);
    ParamStore params;
    std::map<std::string, AdamState> adam;
    detail::unpack_params(ckpt, params, adam);

    const Shape s = image.shape();
    Tape tape;
    const BoundParams bound = bind_params(tape, params, false);
    Value disp0;
    if (stage == Stage::LR) {
        check(s.h == cfg.lr_h && s.w == cfg.lr_w,
              "infer: LR stage expects " + std::to_string(cfg.lr_h) + "x" +
                  std::to_string(cfg.lr_w) + ", got " + s.str());
        DepthOutputs outs = lr_net_forward(tape, tape.constant(image), bound, specs.lr);
        disp0 = outs.disparities[0];
    } else {
        check(ckpt.stage == Stage::HR, "infer: HR stage needs an HR checkpoint");
        check(s.h == cfg.hr_h() && s.w == cfg.hr_w(),
              "infer: HR stage expects " + std::to_string(cfg.hr_h()) + "x" +
                  std::to_string(cfg.hr_w()) + ", got " + s.str());
        const Tensor lr_img = resize_bilinear(image, cfg.lr_h, cfg.lr_w);
        Value img_lr = tape.constant(lr_img);
        Value bottleneck = lr_encoder_bottleneck(tape, img_lr, bound, specs.lr);
        Value assembled =
            assemble_input(bottleneck, img_lr, bottleneck.shape().h, bottleneck.shape().w);
        Value refined =
            sa_attention(assembled, bound.at("sa.embed.w"), bound.at("sa.embed.b"), specs.sa);
        DepthOutputs outs = hr_net_forward(tape, tape.constant(image), refined, bound, specs.hr);
        disp0 = outs.disparities[0];
    }
    auto [depth, norm_disp] = disparity_to_depth(disp0, cfg.d_min, cfg.d_max);
    return depth.val();
}

/// 8-bit visualization: inverse depth, min-max normalized per image.
inline Tensor depth_to_vis(const Tensor& depth) {
    Tensor vis(depth.shape());
    float lo = 1e30f, hi = -1e30f;
    for (std::int64_t i = 0; i < depth.numel(); ++i) {
        const float inv = 1.0f / std::max(depth.data()[i], 1e-6f);
        vis.data()[i] = inv;
        lo = std::min(lo, inv);
        hi = std::max(hi, inv);
    }
    const float span = std::max(hi - lo, 1e-12f);
    for (std::int64_t i = 0; i < vis.numel(); ++i) {
        vis.data()[i] = (vis.data()[i] - lo) / span;
    }
    return vis;
}

}  // namespace dualdepth
