#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "c2p/errors.hpp"

namespace c2p {

// Dense row-major tensor of doubles. Rank is small (1..4); images are stored
// HWC as {H,W,3}, feature maps CHW as {C,H,W}.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(numel_of(shape)), fill);
    }

    static long numel_of(const std::vector<int>& s) {
        long n = 1;
        for (int d : s) {
            if (d <= 0) throw InvalidInputError("tensor dimensions must be positive");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s), 0.0); }
    static Tensor full(std::vector<int> s, double v) { return Tensor(std::move(s), v); }

    long numel() const { return static_cast<long>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& operator[](long i) { return data[static_cast<std::size_t>(i)]; }
    double operator[](long i) const { return data[static_cast<std::size_t>(i)]; }

    // CHW access for {C,H,W} tensors.
    double& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }
};

// An RGB image with intensities in [0,1], stored {H,W,3}.
using Image = Tensor;

// Per-pixel transmission, stored {H,W}.
using TransmissionMap = Tensor;

// Homogeneous atmospheric light, one value per channel, each in (0,1].
using AtmosphericLight = std::array<double, 3>;

inline int image_height(const Image& img) { return img.shape[0]; }
inline int image_width(const Image& img) { return img.shape[1]; }

inline double& pixel(Image& img, int y, int x, int c) {
    return img.data[(static_cast<std::size_t>(y) * img.shape[1] + x) * 3 + c];
}
inline double pixel(const Image& img, int y, int x, int c) {
    return img.data[(static_cast<std::size_t>(y) * img.shape[1] + x) * 3 + c];
}

inline bool is_image(const Tensor& t) { return t.rank() == 3 && t.shape[2] == 3; }

inline void require_image(const Tensor& t, const char* what) {
    if (!is_image(t)) throw InvalidInputError(std::string(what) + ": expected an {H,W,3} image");
}

inline bool all_finite(const Tensor& t) {
    for (double v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

inline Image constant_image(int h, int w, double v) { return Tensor({h, w, 3}, v); }

// {H,W,3} -> {3,H,W}
inline Tensor chw_from_image(const Image& img) {
    require_image(img, "chw_from_image");
    const int h = img.shape[0], w = img.shape[1];
    Tensor out({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) out.at(c, y, x) = pixel(img, y, x, c);
    return out;
}

// {3,H,W} -> {H,W,3}
inline Image image_from_chw(const Tensor& t) {
    if (t.rank() != 3 || t.shape[0] != 3) throw InvalidInputError("image_from_chw: expected {3,H,W}");
    const int h = t.shape[1], w = t.shape[2];
    Image out({h, w, 3});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) pixel(out, y, x, c) = t.at(c, y, x);
    return out;
}

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

} // namespace c2p
