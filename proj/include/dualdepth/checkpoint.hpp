#pragma once

#include <fstream>

#include "dualdepth/core/tensor.hpp"
#include "dualdepth/losses.hpp"

namespace dualdepth {

/// Named-tensor container with a bit-exact binary layout:
///   magic "DDCK" | u32 LE version = 1 | u8 stage (0 = lr, 1 = hr) | u32 LE count
///   per tensor: u16 LE name length | name bytes | u8 rank | rank x u32 LE dims
///               | 32-bit LE float payload
///   trailing u64 LE seed state
struct Checkpoint {
    std::uint32_t version = 1;
    Stage stage = Stage::LR;
    std::vector<std::pair<std::string, Tensor>> tensors;
    std::uint64_t seed_state = 0;

    bool has(const std::string& name) const {
        for (const auto& [n, t] : tensors) {
            if (n == name) return true;
        }
        return false;
    }
    const Tensor& at(const std::string& name) const {
        for (const auto& [n, t] : tensors) {
            if (n == name) return t;
        }
        throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
    }
};

namespace detail {

template <class T>
void write_le(std::ostream& out, T v) {
    // Assumes a little-endian host, as the rest of the binary formats do.
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_le(std::istream& in, std::uint64_t& offset, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) {
        throw std::runtime_error(path + ": truncated checkpoint at byte offset " +
                                 std::to_string(offset));
    }
    offset += sizeof(T);
    return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out.write("DDCK", 4);
    detail::write_le<std::uint32_t>(out, ckpt.version);
    detail::write_le<std::uint8_t>(out, ckpt.stage == Stage::LR ? 0 : 1);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, tensor] : ckpt.tensors) {
        check(name.size() <= 0xffff, "save_checkpoint: tensor name too long: " + name);
        detail::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), std::streamsize(name.size()));
        detail::write_le<std::uint8_t>(out, 4);
        for (int d = 0; d < 4; ++d) {
            detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.shape().dim(d)));
        }
        out.write(reinterpret_cast<const char*>(tensor.data()),
                  std::streamsize(tensor.numel() * std::int64_t(sizeof(float))));
    }
    detail::write_le<std::uint64_t>(out, ckpt.seed_state);
    if (!out) throw std::runtime_error(path + ": write failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open");
    std::uint64_t offset = 0;
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "DDCK") {
        throw std::runtime_error(path + ": bad magic at byte offset 0 (expected DDCK)");
    }
    offset = 4;
    Checkpoint ckpt;
    ckpt.version = detail::read_le<std::uint32_t>(in, offset, path);
    if (ckpt.version != 1) {
        throw std::runtime_error(path + ": unsupported version " + std::to_string(ckpt.version) +
                                 " at byte offset 4");
    }
    const auto stage_tag = detail::read_le<std::uint8_t>(in, offset, path);
    if (stage_tag > 1) {
        throw std::runtime_error(path + ": invalid stage tag " + std::to_string(int(stage_tag)) +
                                 " at byte offset 8");
    }
    ckpt.stage = stage_tag == 0 ? Stage::LR : Stage::HR;
    const auto count = detail::read_le<std::uint32_t>(in, offset, path);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = detail::read_le<std::uint16_t>(in, offset, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) {
            throw std::runtime_error(path + ": truncated tensor name at byte offset " +
                                     std::to_string(offset));
        }
        offset += name_len;
        const auto rank = detail::read_le<std::uint8_t>(in, offset, path);
        if (rank < 1 || rank > 4) {
            throw std::runtime_error(path + ": invalid rank " + std::to_string(int(rank)) +
                                     " for tensor '" + name + "' at byte offset " +
                                     std::to_string(offset - 1));
        }
        // Ranks below 4 pad with leading singleton dimensions.
        int dims[4] = {1, 1, 1, 1};
        for (int d = 0; d < rank; ++d) {
            dims[4 - rank + d] =
                static_cast<int>(detail::read_le<std::uint32_t>(in, offset, path));
        }
        Tensor t(Shape{dims[0], dims[1], dims[2], dims[3]});
        in.read(reinterpret_cast<char*>(t.data()),
                std::streamsize(t.numel() * std::int64_t(sizeof(float))));
        if (!in) {
            throw std::runtime_error(path + ": truncated payload for tensor '" + name +
                                     "' at byte offset " + std::to_string(offset));
        }
        offset += std::uint64_t(t.numel()) * sizeof(float);
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    ckpt.seed_state = detail::read_le<std::uint64_t>(in, offset, path);
    return ckpt;
}

}  // namespace dualdepth
