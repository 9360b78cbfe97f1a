#pragma once

#include <fstream>
#include <map>

#include "dualdepth/attention.hpp"
#include "dualdepth/losses.hpp"
#include "dualdepth/networks.hpp"
#include "dualdepth/synthdata.hpp"

namespace dualdepth {

/// Full training configuration. Defaults are the desk-scale setup: a complete
/// two-stage run finishes in minutes on a laptop CPU; paper-scale values
/// (128x416 LR, scale 1.0, 40 epochs) remain expressible.
struct TrainConfig {
    int lr_h = 64;
    int lr_w = 192;
    int epochs = 15;
    int batch_size = 4;
    std::uint64_t seed = 7;
    float arch_scale = 0.25f;
    Activation activation = Activation::Elu;
    float d_min = 0.1f;
    float d_max = 100.0f;
    LossWeights loss;
    bool upsample_pred = false;
    SAConfig sa;
    AugmentConfig augment;

    int hr_h() const { return 3 * lr_h; }
    int hr_w() const { return 3 * lr_w; }

    void validate() const {
        check(lr_h % 32 == 0 && lr_w % 32 == 0,
              "config: LR resolution must be divisible by 32, got " + std::to_string(lr_h) + "x" +
                  std::to_string(lr_w));
        check(epochs >= 0, "config: epochs must be non-negative");
        check(batch_size >= 1, "config: batch_size must be positive");
        check(arch_scale > 0.0f, "config: arch.scale must be positive");
        check(d_min > 0.0f && d_min < d_max, "config: need 0 < depth.d_min < depth.d_max");
        loss.validate();
        sa.validate();
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config: key " + key + " expects true/false, got '" + v + "'");
}

}  // namespace detail

/// Parses "key = value" lines with '#' comments. Unknown keys are rejected.
/// Recognized keys and their defaults:
///   lr_height = 64           lr_width = 192
///   epochs = 15              batch_size = 4
///   seed = 7
///   arch.scale = 0.25        arch.activation = elu     (elu | relu)
///   depth.d_min = 0.1        depth.d_max = 100
///   loss.alpha = 0.85
///   loss.lambda1 = 1.0       loss.lambda2 = 0.1        loss.lambda3 = 0.05
///   loss.scale_decay = 0.5   loss.upsample_pred = false
///   sa.embed_dim = 64        sa.norm_mode = mean       (raw | mean | softmax)
///   augment.enabled = true   augment.flip_prob = 0.5
///   augment.brightness = 0.12  augment.contrast = 0.12
inline TrainConfig parse_config_text(std::istream& in, const std::string& origin) {
    TrainConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                        ": expected 'key = value', got '" + line + "'");
        }
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        try {
            if (key == "lr_height") {
                cfg.lr_h = std::stoi(val);
            } else if (key == "lr_width") {
                cfg.lr_w = std::stoi(val);
            } else if (key == "epochs") {
                cfg.epochs = std::stoi(val);
            } else if (key == "batch_size") {
                cfg.batch_size = std::stoi(val);
            } else if (key == "seed") {
                cfg.seed = std::stoull(val);
            } else if (key == "arch.scale") {
                cfg.arch_scale = std::stof(val);
            } else if (key == "arch.activation") {
                if (val == "elu") {
                    cfg.activation = Activation::Elu;
                } else if (val == "relu") {
                    cfg.activation = Activation::Relu;
                } else {
                    throw std::invalid_argument("expected elu|relu");
                }
            } else if (key == "depth.d_min") {
                cfg.d_min = std::stof(val);
            } else if (key == "depth.d_max") {
                cfg.d_max = std::stof(val);
            } else if (key == "loss.alpha") {
                cfg.loss.alpha = std::stof(val);
            } else if (key == "loss.lambda1") {
                cfg.loss.lambda1 = std::stof(val);
            } else if (key == "loss.lambda2") {
                cfg.loss.lambda2 = std::stof(val);
            } else if (key == "loss.lambda3") {
                cfg.loss.lambda3 = std::stof(val);
            } else if (key == "loss.scale_decay") {
                cfg.loss.scale_decay = std::stof(val);
            } else if (key == "loss.upsample_pred") {
                cfg.upsample_pred = detail::parse_bool(val, key);
            } else if (key == "sa.embed_dim") {
                cfg.sa.embed_dim = std::stoi(val);
            } else if (key == "sa.norm_mode") {
                if (val == "raw") {
                    cfg.sa.norm_mode = NormMode::Raw;
                } else if (val == "mean") {
                    cfg.sa.norm_mode = NormMode::Mean;
                } else if (val == "softmax") {
                    cfg.sa.norm_mode = NormMode::Softmax;
                } else {
                    throw std::invalid_argument("expected raw|mean|softmax");
                }
            } else if (key == "augment.enabled") {
                cfg.augment.enabled = detail::parse_bool(val, key);
            } else if (key == "augment.flip_prob") {
                cfg.augment.flip_prob = std::stod(val);
            } else if (key == "augment.brightness") {
                cfg.augment.brightness = std::stod(val);
            } else if (key == "augment.contrast") {
                cfg.augment.contrast = std::stod(val);
            } else {
                throw std::invalid_argument("unknown key");
            }
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": key '" + key +
                                        "': " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

inline TrainConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open config file");
    return parse_config_text(in, path);
}

}  // namespace dualdepth
