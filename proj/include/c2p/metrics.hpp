#pragma once

#include <cmath>
#include <vector>

#include "c2p/errors.hpp"
#include "c2p/tensor.hpp"

namespace c2p {

struct MetricReport {
    double psnr = 0.0;
    double ssim = 0.0;
};

// Cap instead of +inf when the inputs are identical; keeps curriculum
// comparisons total-ordered.
constexpr double kPsnrCap = 100.0;

// 10 log10(1 / MSE), peak 1.0, MSE over all channels and pixels.
inline double psnr(const Image& a, const Image& b) {
    require_image(a, "psnr");
    if (a.shape != b.shape) throw InvalidInputError("psnr: dimension mismatch");
    double se = 0.0;
    for (long i = 0; i < a.numel(); ++i) {
        const double d = a[i] - b[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.numel());
    if (mse <= 0.0) return kPsnrCap;
    return std::min(10.0 * std::log10(1.0 / mse), kPsnrCap);
}

namespace detail {

inline const std::vector<double>& gaussian11() {
    static const std::vector<double> k = [] {
        std::vector<double> v(11);
        const double sigma = 1.5;
        double s = 0.0;
        for (int i = 0; i < 11; ++i) {
            const double d = i - 5;
            v[i] = std::exp(-d * d / (2.0 * sigma * sigma));
            s += v[i];
        }
        for (double& x : v) x /= s;
        return v;
    }();
    return k;
}

inline Tensor luma(const Image& img) {
    const int h = image_height(img), w = image_width(img);
    Tensor y({h, w});
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            y[static_cast<long>(r) * w + c] =
                0.299 * pixel(img, r, c, 0) + 0.587 * pixel(img, r, c, 1) + 0.114 * pixel(img, r, c, 2);
    return y;
}

// separable Gaussian, valid region only: {H,W} -> {H-10,W-10}
inline Tensor gauss_valid(const Tensor& src) {
    const auto& k = gaussian11();
    const int h = src.shape[0], w = src.shape[1];
    const int wo = w - 10;
    Tensor rows({h, wo});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < wo; ++x) {
            double s = 0.0;
            for (int i = 0; i < 11; ++i) s += k[i] * src[static_cast<long>(y) * w + x + i];
            rows[static_cast<long>(y) * wo + x] = s;
        }
    const int ho = h - 10;
    Tensor out({ho, wo});
    for (int y = 0; y < ho; ++y)
        for (int x = 0; x < wo; ++x) {
            double s = 0.0;
            for (int i = 0; i < 11; ++i) s += k[i] * rows[static_cast<long>(y + i) * wo + x];
            out[static_cast<long>(y) * wo + x] = s;
        }
    return out;
}

} // namespace detail

// Mean local SSIM on luma: Gaussian window 11, sigma 1.5, K1=0.01, K2=0.03,
// dynamic range 1.0, valid windows only.
inline double ssim(const Image& a, const Image& b) {
    require_image(a, "ssim");
    if (a.shape != b.shape) throw InvalidInputError("ssim: dimension mismatch");
    if (image_height(a) < 11 || image_width(a) < 11)
        throw InvalidInputError("ssim: image must be at least 11x11");
    const Tensor x = detail::luma(a), y = detail::luma(b);
    Tensor xx = x, yy = y, xy = x;
    for (long i = 0; i < x.numel(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const Tensor mx = detail::gauss_valid(x);
    const Tensor my = detail::gauss_valid(y);
    const Tensor mxx = detail::gauss_valid(xx);
    const Tensor myy = detail::gauss_valid(yy);
    const Tensor mxy = detail::gauss_valid(xy);
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double s = 0.0;
    for (long i = 0; i < mx.numel(); ++i) {
        const double vx = mxx[i] - mx[i] * mx[i];
        const double vy = myy[i] - my[i] * my[i];
        const double cxy = mxy[i] - mx[i] * my[i];
        s += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    return s / static_cast<double>(mx.numel());
}

inline MetricReport measure(const Image& restored, const Image& reference) {
    return {psnr(restored, reference), ssim(restored, reference)};
}

// Arithmetic mean of per-pair PSNR, in dB.
inline double avg_psnr(const std::vector<std::pair<Image, Image>>& pairs) {
    if (pairs.empty()) throw InvalidInputError("avg_psnr: empty pair list");
    double s = 0.0;
    for (const auto& [restored, clear] : pairs) s += psnr(restored, clear);
    return s / static_cast<double>(pairs.size());
}

} // namespace c2p
