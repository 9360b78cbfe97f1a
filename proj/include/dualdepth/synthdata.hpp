#pragma once

#include <filesystem>

#include "dualdepth/core/resample.hpp"
#include "dualdepth/core/rng.hpp"
#include "dualdepth/geometry.hpp"
#include "dualdepth/io.hpp"

namespace dualdepth {

/// Band-limited procedural texture: a handful of 3-D sinusoids evaluated at
/// the world-space hit point, so every view samples the same continuous field.
struct ProceduralTexture {
    struct Wave {
        std::array<double, 3> k;
        double phase;
        double amp;
    };
    std::vector<Wave> waves;

    static ProceduralTexture make(std::uint64_t seed, double min_wavelength,
                                  double max_wavelength, int count = 5) {
        ProceduralTexture tex;
        Rng rng(seed);
        double amp_total = 0.0;
        for (int i = 0; i < count; ++i) {
            const double wl = rng.uniform(min_wavelength, max_wavelength);
            const double freq = 2.0 * 3.14159265358979323846 / wl;
            // random direction
            const double az = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
            const double el = rng.uniform(-0.9, 0.9);
            const double ce = std::cos(el);
            Wave w;
            w.k = {freq * ce * std::cos(az), freq * ce * std::sin(az), freq * std::sin(el)};
            w.phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
            w.amp = rng.uniform(0.5, 1.0);
            amp_total += w.amp;
            tex.waves.push_back(w);
        }
        for (auto& w : tex.waves) w.amp /= amp_total;
        return tex;
    }

    /// Pattern value in [-1, 1].
    double eval(const std::array<double, 3>& p) const {
        double v = 0.0;
        for (const auto& w : waves) {
            v += w.amp * std::sin(w.k[0] * p[0] + w.k[1] * p[1] + w.k[2] * p[2] + w.phase);
        }
        return v;
    }
};

struct Box {
    std::array<double, 3> center;
    std::array<double, 3> size;
    std::array<float, 3> base_color;
    bool textured = true;
    ProceduralTexture texture;
};

/// A fronto-parallel background plane plus axis-aligned textured boxes.
struct SceneSpec {
    double bg_depth = 12.0;
    std::array<float, 3> bg_color{0.5f, 0.5f, 0.5f};
    bool bg_textured = true;
    ProceduralTexture bg_texture;
    std::vector<Box> boxes;
};

struct RenderResult {
    Tensor image;  // (1,3,h,w)
    Tensor depth;  // (1,1,h,w), z in the rendering camera's frame
};

namespace detail {

inline bool ray_box(const std::array<double, 3>& o, const std::array<double, 3>& d,
                    const Box& box, double& t_hit) {
    double tmin = 1e-6, tmax = 1e30;
    for (int a = 0; a < 3; ++a) {
        const double lo = box.center[a] - 0.5 * box.size[a];
        const double hi = box.center[a] + 0.5 * box.size[a];
        if (std::fabs(d[a]) < 1e-12) {
            if (o[a] < lo || o[a] > hi) return false;
            continue;
        }
        double t0 = (lo - o[a]) / d[a];
        double t1 = (hi - o[a]) / d[a];
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return false;
    }
    t_hit = tmin;
    return true;
}

inline std::array<float, 3> shade(const std::array<float, 3>& base, bool textured,
                                  const ProceduralTexture& tex, const std::array<double, 3>& p) {
    if (!textured) return base;
    const double v = tex.eval(p);
    std::array<float, 3> c;
    const float gains[3] = {0.32f, 0.3f, 0.28f};
    for (int i = 0; i < 3; ++i) {
        c[std::size_t(i)] = std::clamp(base[std::size_t(i)] + gains[i] * float(v), 0.02f, 0.98f);
    }
    return c;
}

}  // namespace detail

/// Ray-casts the scene from a camera given as its cam-to-world transform.
/// Depth is the z-coordinate of the nearest hit in the camera frame.
inline RenderResult render_scene(const SceneSpec& spec, const Mat4& cam_to_world,
                                 const Intrinsics& K, int h, int w) {
    RenderResult out;
    out.image = Tensor(Shape{1, 3, h, w});
    out.depth = Tensor(Shape{1, 1, h, w});
    const std::array<double, 3>& origin = cam_to_world.t;
    const Mat4 world_to_cam = cam_to_world.inverse();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::array<double, 3> dir_cam{(x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0};
            const std::array<double, 3> dir = cam_to_world.rotate(dir_cam);
            double t_best = 1e30;
            int hit_box = -1;
            for (std::size_t b = 0; b < spec.boxes.size(); ++b) {
                double t_hit;
                if (detail::ray_box(origin, dir, spec.boxes[b], t_hit) && t_hit < t_best) {
                    t_best = t_hit;
                    hit_box = int(b);
                }
            }
            if (hit_box < 0) {
                // Background plane z = bg_depth; forward-facing cameras always hit it.
                check(dir[2] > 1e-9, "render_scene: ray parallel to the background plane");
                t_best = (spec.bg_depth - origin[2]) / dir[2];
            }
            const std::array<double, 3> p{origin[0] + t_best * dir[0],
                                          origin[1] + t_best * dir[1],
                                          origin[2] + t_best * dir[2]};
            const std::array<float, 3> color =
                hit_box >= 0
                    ? detail::shade(spec.boxes[std::size_t(hit_box)].base_color,
                                    spec.boxes[std::size_t(hit_box)].textured,
                                    spec.boxes[std::size_t(hit_box)].texture, p)
                    : detail::shade(spec.bg_color, spec.bg_textured, spec.bg_texture, p);
            for (int c = 0; c < 3; ++c) out.image.at(0, c, y, x) = color[std::size_t(c)];
            out.depth.at(0, 0, y, x) = static_cast<float>(world_to_cam.apply(p)[2]);
        }
    }
    return out;
}

/// Convenience overload taking the camera pose as a PoseVec (cam-to-world).
inline RenderResult render_scene(const SceneSpec& spec, const PoseVec& camera_pose,
                                 const Intrinsics& K, int h, int w) {
    return render_scene(spec, pose_to_matrix(camera_pose), K, h, w);
}

/// One training sample: two source frames around a target with exact ground
/// truth. The occlusion mask marks pixels visible in both sources (test-only).
struct FrameTriplet {
    Tensor prev, target, next;  // (1,3,h,w)
    Tensor gt_depth;            // (1,1,h,w), target frame
    PoseVec pose_prev;          // T_{t->prev}
    PoseVec pose_next;          // T_{t->next}
    Intrinsics K;
    Tensor occlusion;           // (1,1,h,w), 1 = visible in both sources
};

namespace detail {

/// Visibility of target pixels in one source view: the reprojected point must
/// land in bounds and agree with the source depth at all four sample corners.
inline void intersect_visibility(Tensor& vis, const Tensor& gt_depth, const Tensor& src_depth,
                                 const Intrinsics& K, const Mat4& T) {
    const int h = gt_depth.h(), w = gt_depth.w();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (vis.at(0, 0, y, x) == 0.0f) continue;
            const double d = gt_depth.at(0, 0, y, x);
            const std::array<double, 3> Xs =
                T.apply({d * (x - K.cx) / K.fx, d * (y - K.cy) / K.fy, d});
            bool ok = Xs[2] > 1e-6;
            if (ok) {
                const double u = K.fx * Xs[0] / Xs[2] + K.cx;
                const double v = K.fy * Xs[1] / Xs[2] + K.cy;
                ok = u >= 0.0 && u <= w - 1 && v >= 0.0 && v <= h - 1;
                if (ok) {
                    const int x0 = int(std::floor(u)), y0 = int(std::floor(v));
                    for (int dy = 0; dy <= 1 && ok; ++dy) {
                        for (int dx = 0; dx <= 1 && ok; ++dx) {
                            const int sx = std::min(x0 + dx, w - 1);
                            const int sy = std::min(y0 + dy, h - 1);
                            const double ds = src_depth.at(0, 0, sy, sx);
                            ok = std::fabs(ds - Xs[2]) <= std::max(0.015 * Xs[2], 0.02);
                        }
                    }
                }
            }
            if (!ok) vis.at(0, 0, y, x) = 0.0f;
        }
    }
}

}  // namespace detail

/// Renders a triplet from relative poses T_{t->prev}, T_{t->next}; sources are
/// placed at the inverse transforms so the stored poses are exact by
/// construction rather than extracted from matrices.
inline FrameTriplet render_triplet(const SceneSpec& spec, const PoseVec& pose_prev,
                                   const PoseVec& pose_next, const Intrinsics& K, int h, int w) {
    FrameTriplet t;
    t.K = K;
    t.pose_prev = pose_prev;
    t.pose_next = pose_next;
    const Mat4 T_prev = pose_to_matrix(pose_prev);
    const Mat4 T_next = pose_to_matrix(pose_next);
    RenderResult rt = render_scene(spec, Mat4{}, K, h, w);
    RenderResult rp = render_scene(spec, T_prev.inverse(), K, h, w);
    RenderResult rn = render_scene(spec, T_next.inverse(), K, h, w);
    t.target = std::move(rt.image);
    t.gt_depth = std::move(rt.depth);
    t.prev = std::move(rp.image);
    t.next = std::move(rn.image);
    t.occlusion = Tensor(Shape{1, 1, h, w}, 1.0f);
    detail::intersect_visibility(t.occlusion, t.gt_depth, rp.depth, K, T_prev);
    detail::intersect_visibility(t.occlusion, t.gt_depth, rn.depth, K, T_next);
    return t;
}

/// Scene and motion sampling ranges for dataset generation.
struct GenConfig {
    int count = 200;
    int hr_h = 192;
    int hr_w = 576;
    double d_min = 0.1;
    double d_max = 100.0;
    double depth_margin = 0.5;
    double bg_depth_min = 9.0;
    double bg_depth_max = 34.0;
    int min_boxes = 4;
    int max_boxes = 8;
    double textureless_fraction = 0.25;
    double forward_min = 0.18;
    double forward_max = 0.5;
    double lateral_jitter = 0.12;
    double vertical_jitter = 0.05;
    double rot_jitter = 0.010;
    double focal_per_width = 0.58;
    // Texture band limits as on-screen wavelengths (px at the object's depth).
    double tex_min_px = 10.0;
    double tex_max_px = 45.0;
};

inline Intrinsics default_intrinsics(int h, int w, double focal_per_width = 0.58) {
    const float f = static_cast<float>(focal_per_width * w);
    return Intrinsics(f, f, 0.5f * float(w - 1), 0.5f * float(h - 1));
}

inline SceneSpec sample_scene(const GenConfig& cfg, Rng& rng) {
    SceneSpec spec;
    spec.bg_depth = rng.uniform(cfg.bg_depth_min, cfg.bg_depth_max);
    spec.bg_color = {rng.uniform_f(0.35f, 0.65f), rng.uniform_f(0.35f, 0.65f),
                     rng.uniform_f(0.35f, 0.65f)};
    spec.bg_textured = rng.uniform() > 0.5 * cfg.textureless_fraction;
    const double fx = cfg.focal_per_width * cfg.hr_w;
    // Wavelengths scale with depth so on-screen texture stays band limited.
    spec.bg_texture = ProceduralTexture::make(rng.next_u64(), cfg.tex_min_px * spec.bg_depth / fx,
                                              cfg.tex_max_px * spec.bg_depth / fx);
    const int n_boxes = rng.uniform_int(cfg.min_boxes, cfg.max_boxes);
    for (int b = 0; b < n_boxes; ++b) {
        Box box;
        const double z = rng.uniform(2.5, std::min(0.75 * spec.bg_depth, 18.0));
        const double half_w_frustum = z * (0.5 * cfg.hr_w) / fx;
        const double half_h_frustum = z * (0.5 * cfg.hr_h) / fx;
        const double px_size = rng.uniform(40.0, 130.0);  // on-screen footprint in px
        const double s = px_size * z / fx;
        box.size = {s * rng.uniform(0.7, 1.4), s * rng.uniform(0.7, 1.4), s * rng.uniform(0.4, 1.0)};
        box.center = {rng.uniform(-0.85, 0.85) * half_w_frustum,
                      rng.uniform(-0.85, 0.85) * half_h_frustum, z + 0.5 * box.size[2]};
        box.base_color = {rng.uniform_f(0.25f, 0.75f), rng.uniform_f(0.25f, 0.75f),
                          rng.uniform_f(0.25f, 0.75f)};
        box.textured = rng.uniform() > cfg.textureless_fraction;
        box.texture =
            ProceduralTexture::make(rng.next_u64(), cfg.tex_min_px * z / fx, cfg.tex_max_px * z / fx);
        spec.boxes.push_back(box);
    }
    return spec;
}

/// Forward-dominant motion with small lateral and rotational jitter. Returns
/// (T_{t->prev}, T_{t->next}).
inline std::pair<PoseVec, PoseVec> sample_motion(const GenConfig& cfg, Rng& rng) {
    const double vz = rng.uniform(cfg.forward_min, cfg.forward_max);
    const double vx = rng.uniform(-cfg.lateral_jitter, cfg.lateral_jitter);
    const double vy = rng.uniform(-cfg.vertical_jitter, cfg.vertical_jitter);
    auto jitter = [&rng, &cfg]() {
        return static_cast<float>(rng.uniform(-cfg.rot_jitter, cfg.rot_jitter));
    };
    PoseVec to_prev, to_next;
    const double sp = rng.uniform(0.85, 1.15);
    to_prev.t = {float(vx * sp), float(vy * sp), float(vz * sp)};
    to_prev.r = {jitter(), jitter(), jitter()};
    const double sn = rng.uniform(0.85, 1.15);
    to_next.t = {float(-vx * sn), float(-vy * sn), float(-vz * sn)};
    to_next.r = {jitter(), jitter(), jitter()};
    return {to_prev, to_next};
}

inline FrameTriplet generate_triplet(const GenConfig& cfg, Rng scene_rng) {
    const SceneSpec spec = sample_scene(cfg, scene_rng);
    const auto [to_prev, to_next] = sample_motion(cfg, scene_rng);
    const Intrinsics K = default_intrinsics(cfg.hr_h, cfg.hr_w, cfg.focal_per_width);
    return render_triplet(spec, to_prev, to_next, K, cfg.hr_h, cfg.hr_w);
}

inline std::string triplet_dir_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", index);
    return buf;
}

inline void write_triplet(const std::string& dir, const FrameTriplet& t) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw detail::io_error(dir, "cannot create directory: " + ec.message());
    write_ppm(dir + "/prev.ppm", t.prev);
    write_ppm(dir + "/target.ppm", t.target);
    write_ppm(dir + "/next.ppm", t.next);
    write_depth_bin(dir + "/depth.bin", t.gt_depth);
    write_poses(dir + "/poses.txt", t.pose_prev, t.pose_next);
    write_intrinsics(dir + "/intrinsics.txt", t.K);
    write_pgm(dir + "/occl.pgm", t.occlusion);
}

inline FrameTriplet read_triplet(const std::string& dir, bool with_occlusion = false) {
    FrameTriplet t;
    t.prev = read_ppm(dir + "/prev.ppm");
    t.target = read_ppm(dir + "/target.ppm");
    t.next = read_ppm(dir + "/next.ppm");
    t.gt_depth = read_depth_bin(dir + "/depth.bin");
    std::tie(t.pose_prev, t.pose_next) = read_poses(dir + "/poses.txt");
    t.K = read_intrinsics(dir + "/intrinsics.txt");
    if (with_occlusion) t.occlusion = read_pgm(dir + "/occl.pgm");
    return t;
}

/// Renders `cfg.count` triplets into numbered directories under `root`.
/// Deterministic: triplet i draws only from fork(kSceneStream).fork(i).
inline void gen_dataset(const GenConfig& cfg, std::uint64_t seed, const std::string& root) {
    const Rng master(seed);
    const Rng scenes = master.fork(Rng::kSceneStream);
    for (int i = 0; i < cfg.count; ++i) {
        const FrameTriplet t = generate_triplet(cfg, scenes.fork(std::uint64_t(i)));
        write_triplet(root + "/" + triplet_dir_name(i), t);
    }
}

/// Lexicographically sorted triplet directories under a dataset root.
inline std::vector<std::string> list_triplet_dirs(const std::string& root) {
    namespace fs = std::filesystem;
    std::vector<std::string> dirs;
    if (!fs::exists(root)) throw detail::io_error(root, "dataset directory does not exist");
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory() && fs::exists(e.path() / "target.ppm")) {
            dirs.push_back(e.path().string());
        }
    }
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw detail::io_error(root, "no triplet directories found");
    return dirs;
}

struct AugmentConfig {
    bool enabled = true;
    double flip_prob = 0.5;
    double brightness = 0.12;
    double contrast = 0.12;
};

/// Augmented views of one triplet at both resolutions.
struct TrainViews {
    Tensor lr_prev, lr_target, lr_next;
    Tensor hr_prev, hr_target, hr_next;
    Intrinsics K_lr, K_hr;
};

namespace detail {

inline Tensor hflip(const Tensor& img) {
    Tensor out(img.shape());
    for (int n = 0; n < img.n(); ++n)
        for (int c = 0; c < img.c(); ++c)
            for (int y = 0; y < img.h(); ++y)
                for (int x = 0; x < img.w(); ++x)
                    out.at(n, c, y, x) = img.at(n, c, y, img.w() - 1 - x);
    return out;
}

inline Tensor color_jitter(const Tensor& img, float brightness, float contrast) {
    Tensor out(img.shape());
    for (std::int64_t i = 0; i < img.numel(); ++i) {
        out.data()[i] =
            std::clamp((img.data()[i] - 0.5f) * contrast + 0.5f + brightness, 0.0f, 1.0f);
    }
    return out;
}

}  // namespace detail

/// Augmentations run at full resolution first; the LR copies are bilinear
/// downsamples of the augmented frames. Draw order per sample: flip, then
/// brightness, then contrast (all drawn even when a transform is identity).
inline TrainViews augment_then_downsample(const FrameTriplet& t, int lr_h, int lr_w,
                                          const AugmentConfig& cfg, Rng& rng) {
    check(t.target.h() == 3 * lr_h && t.target.w() == 3 * lr_w,
          "augment_then_downsample: HR resolution must be 3x the LR target, got " +
              t.target.shape().str());
    Tensor prev = t.prev, target = t.target, next = t.next;
    Intrinsics K_hr = t.K;
    if (cfg.enabled) {
        const bool flip = rng.bernoulli(cfg.flip_prob);
        const float b = rng.uniform_f(-float(cfg.brightness), float(cfg.brightness));
        const float c = rng.uniform_f(1.0f - float(cfg.contrast), 1.0f + float(cfg.contrast));
        if (flip) {
            prev = detail::hflip(prev);
            target = detail::hflip(target);
            next = detail::hflip(next);
            K_hr = K_hr.hflipped(t.target.w());
        }
        prev = detail::color_jitter(prev, b, c);
        target = detail::color_jitter(target, b, c);
        next = detail::color_jitter(next, b, c);
    }
    TrainViews v;
    v.hr_prev = std::move(prev);
    v.hr_target = std::move(target);
    v.hr_next = std::move(next);
    v.lr_prev = resize_bilinear(v.hr_prev, lr_h, lr_w);
    v.lr_target = resize_bilinear(v.hr_target, lr_h, lr_w);
    v.lr_next = resize_bilinear(v.hr_next, lr_h, lr_w);
    v.K_hr = K_hr;
    v.K_lr = K_hr.scaled(1.0 / 3.0, 1.0 / 3.0);
    return v;
}

}  // namespace dualdepth
