#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dualdepth {

/// Shape of a dense 4-D tensor laid out as (batch, channel, height, width).
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::int64_t numel() const {
        return std::int64_t(n) * c * h * w;
    }
    int dim(int i) const {
        switch (i) {
            case 0: return n;
            case 1: return c;
            case 2: return h;
            default: return w;
        }
    }
    int& dim(int i) {
        switch (i) {
            case 0: return n;
            case 1: return c;
            case 2: return h;
            default: return w;
        }
    }
    bool operator==(const Shape& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        std::ostringstream os;
        os << "(" << n << "," << c << "," << h << "," << w << ")";
        return os.str();
    }
};

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

/// Dense row-major float32 tensor. Values are stored in 32-bit precision;
/// reductions elsewhere in the library accumulate in 64-bit.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape s, float fill = 0.0f) : shape_(s) {
        check(s.n >= 0 && s.c >= 0 && s.h >= 0 && s.w >= 0,
              "Tensor: negative dimension in shape " + s.str());
        data_.assign(static_cast<std::size_t>(s.numel()), fill);
    }

    static Tensor scalar(float v) {
        Tensor t(Shape{1, 1, 1, 1});
        t.data_[0] = v;
        return t;
    }

    static Tensor from(Shape s, std::vector<float> values) {
        check(static_cast<std::int64_t>(values.size()) == s.numel(),
              "Tensor::from: data length " + std::to_string(values.size()) +
                  " does not match shape " + s.str());
        Tensor t;
        t.shape_ = s;
        t.data_ = std::move(values);
        return t;
    }

    const Shape& shape() const { return shape_; }
    int n() const { return shape_.n; }
    int c() const { return shape_.c; }
    int h() const { return shape_.h; }
    int w() const { return shape_.w; }
    std::int64_t numel() const { return shape_.numel(); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& storage() { return data_; }
    const std::vector<float>& storage() const { return data_; }

    std::int64_t index(int in, int ic, int iy, int ix) const {
        return ((std::int64_t(in) * shape_.c + ic) * shape_.h + iy) * shape_.w + ix;
    }
    float& at(int in, int ic, int iy, int ix) { return data_[index(in, ic, iy, ix)]; }
    float at(int in, int ic, int iy, int ix) const { return data_[index(in, ic, iy, ix)]; }

    bool all_finite() const {
        for (float v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    void fill(float v) {
        for (auto& x : data_) x = v;
    }

    bool is_scalar() const {
        return shape_.n == 1 && shape_.c == 1 && shape_.h == 1 && shape_.w == 1;
    }
    float scalar_value() const {
        check(is_scalar(), "scalar_value: tensor has shape " + shape_.str());
        return data_[0];
    }

private:
    Shape shape_{};
    std::vector<float> data_;
};

inline bool same_bits(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    const auto n = static_cast<std::size_t>(a.numel());
    for (std::size_t i = 0; i < n; ++i) {
        union F {
            float f;
            std::uint32_t u;
        };
        F x{a.data()[i]}, y{b.data()[i]};
        if (x.u != y.u) return false;
    }
    return true;
}

}  // namespace dualdepth
