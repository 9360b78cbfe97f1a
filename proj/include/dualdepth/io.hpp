#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dualdepth/core/tensor.hpp"
#include "dualdepth/geometry.hpp"

namespace dualdepth {

namespace detail {

inline std::runtime_error io_error(const std::string& path, const std::string& what) {
    return std::runtime_error(path + ": " + what);
}

inline std::uint8_t to_byte(float v) {
    const float x = std::clamp(v, 0.0f, 1.0f) * 255.0f;
    return static_cast<std::uint8_t>(std::lround(x));
}

inline int read_pnm_int(std::istream& in, const std::string& path) {
    // Skips whitespace and '#' comment lines between header tokens.
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF) throw io_error(path, "truncated PNM header");
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = in.get();
    }
    return value;
}

}  // namespace detail

/// Binary P6 image, maxval 255. Tensor layout (1,3,h,w), values in [0,1].
inline void write_ppm(const std::string& path, const Tensor& img) {
    check(img.n() == 1 && img.c() == 3, "write_ppm: expected (1,3,h,w), got " + img.shape().str());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw detail::io_error(path, "cannot open for writing");
    out << "P6\n" << img.w() << " " << img.h() << "\n255\n";
    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.w()) * 3);
    for (int y = 0; y < img.h(); ++y) {
        for (int x = 0; x < img.w(); ++x) {
            for (int c = 0; c < 3; ++c) row[std::size_t(x) * 3 + std::size_t(c)] = detail::to_byte(img.at(0, c, y, x));
        }
        out.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
    }
    if (!out) throw detail::io_error(path, "write failed");
}

inline Tensor read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw detail::io_error(path, "cannot open");
    char magic[2];
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '6') throw detail::io_error(path, "not a binary P6 file");
    const int w = detail::read_pnm_int(in, path);
    const int h = detail::read_pnm_int(in, path);
    const int maxval = detail::read_pnm_int(in, path);
    if (maxval != 255) throw detail::io_error(path, "unsupported maxval " + std::to_string(maxval));
    Tensor img(Shape{1, 3, h, w});
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        in.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size()));
        if (!in) throw detail::io_error(path, "truncated pixel data at row " + std::to_string(y));
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at(0, c, y, x) = float(row[std::size_t(x) * 3 + std::size_t(c)]) / 255.0f;
            }
        }
    }
    return img;
}

/// Binary P5 single-channel image, maxval 255. Tensor layout (1,1,h,w) in [0,1].
inline void write_pgm(const std::string& path, const Tensor& img) {
    check(img.n() == 1 && img.c() == 1, "write_pgm: expected (1,1,h,w), got " + img.shape().str());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw detail::io_error(path, "cannot open for writing");
    out << "P5\n" << img.w() << " " << img.h() << "\n255\n";
    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.w()));
    for (int y = 0; y < img.h(); ++y) {
        for (int x = 0; x < img.w(); ++x) row[std::size_t(x)] = detail::to_byte(img.at(0, 0, y, x));
        out.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
    }
    if (!out) throw detail::io_error(path, "write failed");
}

inline Tensor read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw detail::io_error(path, "cannot open");
    char magic[2];
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '5') throw detail::io_error(path, "not a binary P5 file");
    const int w = detail::read_pnm_int(in, path);
    const int h = detail::read_pnm_int(in, path);
    const int maxval = detail::read_pnm_int(in, path);
    if (maxval != 255) throw detail::io_error(path, "unsupported maxval " + std::to_string(maxval));
    Tensor img(Shape{1, 1, h, w});
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        in.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size()));
        if (!in) throw detail::io_error(path, "truncated pixel data at row " + std::to_string(y));
        for (int x = 0; x < w; ++x) img.at(0, 0, y, x) = float(row[std::size_t(x)]) / 255.0f;
    }
    return img;
}

/// Depth map format: magic "DPTH", u32 LE height, u32 LE width, then h*w
/// 32-bit LE floats, row-major, in scene units.
inline void write_depth_bin(const std::string& path, const Tensor& depth) {
    check(depth.n() == 1 && depth.c() == 1,
          "write_depth_bin: expected (1,1,h,w), got " + depth.shape().str());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw detail::io_error(path, "cannot open for writing");
    out.write("DPTH", 4);
    const std::uint32_t h = std::uint32_t(depth.h()), w = std::uint32_t(depth.w());
    out.write(reinterpret_cast<const char*>(&h), 4);
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(depth.data()),
              std::streamsize(depth.numel() * std::int64_t(sizeof(float))));
    if (!out) throw detail::io_error(path, "write failed");
}

inline Tensor read_depth_bin(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw detail::io_error(path, "cannot open");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "DPTH") throw detail::io_error(path, "bad DPTH magic");
    std::uint32_t h = 0, w = 0;
    in.read(reinterpret_cast<char*>(&h), 4);
    in.read(reinterpret_cast<char*>(&w), 4);
    if (!in) throw detail::io_error(path, "truncated DPTH header");
    Tensor depth(Shape{1, 1, int(h), int(w)});
    in.read(reinterpret_cast<char*>(depth.data()),
            std::streamsize(depth.numel() * std::int64_t(sizeof(float))));
    if (!in) throw detail::io_error(path, "truncated DPTH payload");
    return depth;
}

/// One line: "fx fy cx cy".
inline void write_intrinsics(const std::string& path, const Intrinsics& K) {
    std::ofstream out(path);
    if (!out) throw detail::io_error(path, "cannot open for writing");
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %.9g\n", K.fx, K.fy, K.cx, K.cy);
    out << buf;
}

inline Intrinsics read_intrinsics(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw detail::io_error(path, "cannot open");
    float fx, fy, cx, cy;
    if (!(in >> fx >> fy >> cx >> cy)) throw detail::io_error(path, "malformed intrinsics line");
    return Intrinsics(fx, fy, cx, cy);
}

/// Two lines of "tx ty tz rx ry rz": the target-to-prev and target-to-next poses.
inline void write_poses(const std::string& path, const PoseVec& to_prev, const PoseVec& to_next) {
    std::ofstream out(path);
    if (!out) throw detail::io_error(path, "cannot open for writing");
    char buf[256];
    for (const PoseVec* p : {&to_prev, &to_next}) {
        std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %.9g %.9g %.9g\n", p->t[0], p->t[1],
                      p->t[2], p->r[0], p->r[1], p->r[2]);
        out << buf;
    }
}

inline std::pair<PoseVec, PoseVec> read_poses(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw detail::io_error(path, "cannot open");
    PoseVec poses[2];
    for (auto& p : poses) {
        if (!(in >> p.t[0] >> p.t[1] >> p.t[2] >> p.r[0] >> p.r[1] >> p.r[2])) {
            throw detail::io_error(path, "malformed pose line");
        }
    }
    return {poses[0], poses[1]};
}

}  // namespace dualdepth
