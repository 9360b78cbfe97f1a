// dualdepth command-line interface: dataset generation, two-stage training,
// inference, and the evaluation protocol.

#include <CLI11.hpp>

#include <filesystem>
#include <fnmatch.h>
#include <iostream>

#include "dualdepth/dualdepth.hpp"

namespace dd = dualdepth;
namespace fs = std::filesystem;

namespace {

std::pair<int, int> parse_size(const std::string& s) {
    const auto x = s.find('x');
    if (x == std::string::npos) {
        throw CLI::ValidationError("--lr-size", "expected HxW, e.g. 64x192");
    }
    return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
}

/// Minimal glob: expands '*'/'?' patterns component-by-component.
std::vector<std::string> expand_glob(const std::string& pattern) {
    std::vector<fs::path> frontier = {fs::path()};
    fs::path pat(pattern);
    if (pat.is_absolute()) {
        frontier = {pat.root_path()};
        pat = pat.relative_path();
    }
    for (const auto& comp : pat) {
        const std::string c = comp.string();
        std::vector<fs::path> next;
        const bool has_wild = c.find_first_of("*?[") != std::string::npos;
        for (const auto& base : frontier) {
            if (!has_wild) {
                next.push_back(base.empty() ? fs::path(c) : base / c);
            } else {
                const fs::path scan = base.empty() ? fs::path(".") : base;
                if (!fs::is_directory(scan)) continue;
                for (const auto& e : fs::directory_iterator(scan)) {
                    const std::string name = e.path().filename().string();
                    if (fnmatch(c.c_str(), name.c_str(), 0) == 0) {
                        next.push_back(base.empty() ? fs::path(name) : base / name);
                    }
                }
            }
        }
        frontier = std::move(next);
    }
    std::vector<std::string> out;
    for (const auto& p : frontier) {
        if (fs::exists(p)) out.push_back(p.string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string image_id(const fs::path& path) {
    const std::string stem = path.stem().string();
    if (stem == "target" && path.has_parent_path()) {
        return path.parent_path().filename().string();
    }
    return stem;
}

std::vector<std::pair<std::string, std::string>> list_depth_files(const std::string& dir) {
    std::vector<std::pair<std::string, std::string>> out;  // (id, path)
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".dpth") {
            out.emplace_back(e.path().stem().string(), e.path().string());
        }
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) throw std::runtime_error(dir + ": no .dpth files found");
    return out;
}

dd::MetricReport average_reports(const std::vector<dd::MetricReport>& reports) {
    dd::MetricReport avg;
    for (const auto& r : reports) {
        avg.abs_rel += r.abs_rel;
        avg.sq_rel += r.sq_rel;
        avg.rmse += r.rmse;
        avg.rmse_log += r.rmse_log;
        avg.delta1 += r.delta1;
        avg.delta2 += r.delta2;
        avg.delta3 += r.delta3;
        avg.pixel_count += r.pixel_count;
    }
    const double n = double(reports.size());
    avg.abs_rel /= n;
    avg.sq_rel /= n;
    avg.rmse /= n;
    avg.rmse_log /= n;
    avg.delta1 /= n;
    avg.delta2 /= n;
    avg.delta3 /= n;
    return avg;
}

double mask_count(const dd::Tensor& m) {
    double c = 0;
    for (std::int64_t i = 0; i < m.numel(); ++i) c += m.data()[i];
    return c;
}

int run_gen(const std::string& out_dir, int count, std::uint64_t seed,
            const std::string& lr_size) {
    dd::GenConfig cfg;
    cfg.count = count;
    if (!lr_size.empty()) {
        auto [h, w] = parse_size(lr_size);
        cfg.hr_h = 3 * h;
        cfg.hr_w = 3 * w;
    }
    dd::gen_dataset(cfg, seed, out_dir);
    std::cout << "wrote " << count << " triplets (" << cfg.hr_h << "x" << cfg.hr_w << " HR) to "
              << out_dir << "\n";
    return 0;
}

int run_train(dd::Stage stage, const std::string& data, const std::string& out,
              const std::string& config_path, const std::string& init_path) {
    dd::TrainConfig cfg =
        config_path.empty() ? dd::TrainConfig{} : dd::parse_config(config_path);
    dd::Checkpoint init;
    const bool has_init = !init_path.empty();
    if (has_init) init = dd::load_checkpoint(init_path);
    auto result = dd::train_stage(stage, cfg, data, has_init ? &init : nullptr, &std::cout);
    dd::save_checkpoint(out, result.checkpoint);
    std::cout << "saved checkpoint to " << out << "\n";
    return 0;
}

int run_infer(const std::string& ckpt_path, const std::string& stage_name,
              const std::string& images, const std::string& out_dir) {
    const dd::Checkpoint ckpt = dd::load_checkpoint(ckpt_path);
    const dd::Stage stage = stage_name == "lr" ? dd::Stage::LR : dd::Stage::HR;
    const auto paths = expand_glob(images);
    if (paths.empty()) throw std::runtime_error("infer: no images match '" + images + "'");
    fs::create_directories(out_dir);
    for (const auto& p : paths) {
        const dd::Tensor img = dd::read_ppm(p);
        const dd::Tensor depth = dd::infer_depth(ckpt, img, stage);
        const std::string id = image_id(p);
        dd::write_depth_bin(out_dir + "/" + id + ".dpth", depth);
        dd::write_pgm(out_dir + "/" + id + ".pgm", dd::depth_to_vis(depth));
        std::cout << id << " -> " << out_dir << "/" << id << ".dpth\n";
    }
    return 0;
}

int run_eval(const std::string& pred_dir, const std::string& gt_dir, bool median_scale,
             double band, const std::string& region) {
    const auto preds = list_depth_files(pred_dir);
    std::vector<dd::MetricReport> overall, near_band, far_band, region_reports;
    for (const auto& [id, path] : preds) {
        const std::string gt_path = gt_dir + "/" + id + "/depth.bin";
        if (!fs::exists(gt_path)) {
            throw std::runtime_error("eval: missing ground truth " + gt_path);
        }
        const dd::Tensor gt = dd::read_depth_bin(gt_path);
        dd::Tensor pred = dd::read_depth_bin(path);
        if (pred.shape() != gt.shape()) {
            pred = dd::resize_bilinear(pred, gt.h(), gt.w());
        }
        dd::Tensor valid(gt.shape());
        for (std::int64_t i = 0; i < gt.numel(); ++i) {
            valid.data()[i] = gt.data()[i] > 0.0f ? 1.0f : 0.0f;
        }
        overall.push_back(dd::depth_metrics(pred, gt, valid, median_scale));
        if (band > 0.0) {
            auto [near_mask, far_mask] = dd::band_split(gt, valid, band);
            if (mask_count(near_mask) > 0) {
                near_band.push_back(dd::depth_metrics(pred, gt, near_mask, median_scale));
            }
            if (mask_count(far_mask) > 0) {
                far_band.push_back(dd::depth_metrics(pred, gt, far_mask, median_scale));
            }
        }
        if (!region.empty()) {
            const std::string mask_path =
                fs::is_directory(region) ? region + "/" + id + ".pgm" : region;
            const dd::Tensor mask = dd::read_pgm(mask_path);
            region_reports.push_back(dd::region_metrics(pred, gt, valid, mask, median_scale));
        }
    }
    std::cout << dd::metric_table(average_reports(overall), "overall");
    std::cout << dd::metric_lines(average_reports(overall));
    if (!near_band.empty()) {
        std::cout << dd::metric_table(average_reports(near_band), "near");
        std::cout << dd::metric_lines(average_reports(near_band), "near.");
    }
    if (!far_band.empty()) {
        std::cout << dd::metric_table(average_reports(far_band), "far");
        std::cout << dd::metric_lines(average_reports(far_band), "far.");
    }
    if (!region_reports.empty()) {
        std::cout << dd::metric_table(average_reports(region_reports), "region");
        std::cout << dd::metric_lines(average_reports(region_reports), "region.");
    }
    return 0;
}

int run_sharpness(const std::string& depth_dir, double threshold) {
    const auto files = list_depth_files(depth_dir);
    double total = 0.0;
    for (const auto& [id, path] : files) {
        const double t = dd::tenengrad(dd::read_depth_bin(path), threshold);
        std::cout << "sharpness." << id << "=" << t << "\n";
        total += t;
    }
    std::cout << "sharpness.mean=" << total / double(files.size()) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dualdepth: unsupervised dual-resolution depth learning on synthetic scenes"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "render a synthetic triplet dataset");
    std::string gen_out, gen_lr_size;
    int gen_count = 200;
    std::uint64_t gen_seed = 7;
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    gen->add_option("--count", gen_count, "number of triplets");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--lr-size", gen_lr_size, "LR resolution HxW (dataset rendered at 3x)");

    // train-lr / train-hr
    std::string tr_data, tr_out, tr_config, tr_init;
    auto* train_lr = app.add_subcommand("train-lr", "train LR-Net and PoseNet");
    train_lr->add_option("--data", tr_data, "dataset directory")->required();
    train_lr->add_option("--out", tr_out, "output checkpoint path")->required();
    train_lr->add_option("--config", tr_config, "training config file");
    train_lr->add_option("--init", tr_init, "resume from an LR checkpoint");

    std::string hr_data, hr_out, hr_config, hr_init;
    auto* train_hr = app.add_subcommand("train-hr", "train HR-Net and SA embedding");
    train_hr->add_option("--data", hr_data, "dataset directory")->required();
    train_hr->add_option("--init", hr_init, "LR-stage checkpoint")->required();
    train_hr->add_option("--out", hr_out, "output checkpoint path")->required();
    train_hr->add_option("--config", hr_config, "training config file");

    // infer
    std::string in_ckpt, in_stage, in_images, in_out;
    auto* infer = app.add_subcommand("infer", "predict depth maps");
    infer->add_option("--ckpt", in_ckpt, "checkpoint path")->required();
    infer->add_option("--stage", in_stage, "lr or hr")
        ->required()
        ->check(CLI::IsMember({"lr", "hr"}));
    infer->add_option("--images", in_images, "image glob, e.g. 'data/*/target.ppm'")->required();
    infer->add_option("--out", in_out, "output directory")->required();

    // eval
    std::string ev_pred, ev_gt, ev_region;
    bool ev_median = false;
    double ev_band = 0.0;
    auto* eval = app.add_subcommand("eval", "depth metrics against ground truth");
    eval->add_option("--pred", ev_pred, "directory of .dpth predictions")->required();
    eval->add_option("--gt", ev_gt, "dataset directory with ground truth")->required();
    eval->add_flag("--median-scale", ev_median, "align predictions by median scaling");
    eval->add_option("--band", ev_band, "near/far split threshold in scene units");
    eval->add_option("--region", ev_region, "region mask file (P5) or directory of <id>.pgm");

    // sharpness
    std::string sh_dir;
    double sh_threshold = 0.0;
    auto* sharp = app.add_subcommand("sharpness", "Tenengrad sharpness of depth maps");
    sharp->add_option("--depth", sh_dir, "directory of .dpth maps")->required();
    sharp->add_option("--threshold", sh_threshold, "gradient magnitude threshold");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return run_gen(gen_out, gen_count, gen_seed, gen_lr_size);
        if (train_lr->parsed()) {
            return run_train(dd::Stage::LR, tr_data, tr_out, tr_config, tr_init);
        }
        if (train_hr->parsed()) {
            return run_train(dd::Stage::HR, hr_data, hr_out, hr_config, hr_init);
        }
        if (infer->parsed()) return run_infer(in_ckpt, in_stage, in_images, in_out);
        if (eval->parsed()) return run_eval(ev_pred, ev_gt, ev_median, ev_band, ev_region);
        if (sharp->parsed()) return run_sharpness(sh_dir, sh_threshold);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
