#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "c2p/errors.hpp"
#include "c2p/rng.hpp"
#include "c2p/tensor.hpp"

namespace c2p {

// Floor for transmission values; keeps the inversion J = (I - A)/T + A away
// from the T -> 0 singularity.
constexpr double kDefaultTMin = 0.05;

// One synthetic training pair plus the scene parameters it was built from.
struct HazeSample {
    Image clear;
    Image hazy;
    TransmissionMap transmission;
    AtmosphericLight airlight{};
    double beta = 1.0;
};

inline void require_same_spatial(const Image& a, const Image& b, const char* what) {
    if (a.shape != b.shape) throw InvalidInputError(std::string(what) + ": dimension mismatch");
}

// T(x) = max(exp(-beta * depth(x)), t_min)
inline TransmissionMap beer_lambert_transmission(const Tensor& depth, double beta,
                                                 double t_min = kDefaultTMin) {
    if (depth.rank() != 2) throw InvalidInputError("beer_lambert_transmission: depth must be {H,W}");
    if (!(beta > 0.0)) throw InvalidInputError("beer_lambert_transmission: beta must be > 0");
    TransmissionMap t(depth.shape);
    for (long i = 0; i < depth.numel(); ++i) {
        const double d = depth[i];
        if (!std::isfinite(d) || d < 0.0)
            throw InvalidInputError("beer_lambert_transmission: depth must be finite and >= 0");
        t[i] = std::max(std::exp(-beta * d), t_min);
    }
    return t;
}

// I(x) = T(x) J(x) + (1 - T(x)) A, clamped to [0,1].
inline Image synthesize_haze(const Image& clear, const TransmissionMap& t,
                             const AtmosphericLight& a) {
    require_image(clear, "synthesize_haze");
    if (t.rank() != 2 || t.shape[0] != clear.shape[0] || t.shape[1] != clear.shape[1])
        throw InvalidInputError("synthesize_haze: dimension mismatch");
    const int h = image_height(clear), w = image_width(clear);
    Image out({h, w, 3});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double tv = t[static_cast<long>(y) * w + x];
            for (int c = 0; c < 3; ++c)
                pixel(out, y, x, c) = clamp01(tv * pixel(clear, y, x, c) + (1.0 - tv) * a[c]);
        }
    return out;
}

// J(x) = (I(x) - A)/T(x) + A, clamped to [0,1]. Throws below the floor.
inline Image invert_haze(const Image& hazy, const TransmissionMap& t, const AtmosphericLight& a,
                         double t_min = kDefaultTMin) {
    require_image(hazy, "invert_haze");
    if (t.rank() != 2 || t.shape[0] != hazy.shape[0] || t.shape[1] != hazy.shape[1])
        throw InvalidInputError("invert_haze: dimension mismatch");
    for (long i = 0; i < t.numel(); ++i)
        if (t[i] < t_min - 1e-12)
            throw SingularityError("invert_haze: transmission below floor t_min");
    const int h = image_height(hazy), w = image_width(hazy);
    Image out({h, w, 3});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double tv = t[static_cast<long>(y) * w + x];
            for (int c = 0; c < 3; ++c)
                pixel(out, y, x, c) = clamp01((pixel(hazy, y, x, c) - a[c]) / tv + a[c]);
        }
    return out;
}

// Per-pixel channel minimum followed by a patch-sized min filter.
inline Tensor dark_channel(const Image& img, int patch) {
    require_image(img, "dark_channel");
    if (patch < 1 || patch % 2 == 0) throw InvalidInputError("dark_channel: patch must be odd, >= 1");
    const int h = image_height(img), w = image_width(img);
    Tensor chan_min({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            chan_min[static_cast<long>(y) * w + x] =
                std::min({pixel(img, y, x, 0), pixel(img, y, x, 1), pixel(img, y, x, 2)});
    if (patch == 1) return chan_min;
    const int r = patch / 2;
    // separable min filter: rows then columns
    Tensor rows({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double m = chan_min[static_cast<long>(y) * w + x];
            for (int dx = -r; dx <= r; ++dx) {
                const int xx = std::clamp(x + dx, 0, w - 1);
                m = std::min(m, chan_min[static_cast<long>(y) * w + xx]);
            }
            rows[static_cast<long>(y) * w + x] = m;
        }
    Tensor out({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double m = rows[static_cast<long>(y) * w + x];
            for (int dy = -r; dy <= r; ++dy) {
                const int yy = std::clamp(y + dy, 0, h - 1);
                m = std::min(m, rows[static_cast<long>(yy) * w + x]);
            }
            out[static_cast<long>(y) * w + x] = m;
        }
    return out;
}

namespace detail {

// separable box blur with edge clamping, window = 2r+1
inline Tensor box_smooth(const Tensor& src, int r) {
    const int h = src.shape[0], w = src.shape[1];
    Tensor rows({h, w});
    const double inv = 1.0 / (2 * r + 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int dx = -r; dx <= r; ++dx) s += src[static_cast<long>(y) * w + std::clamp(x + dx, 0, w - 1)];
            rows[static_cast<long>(y) * w + x] = s * inv;
        }
    Tensor out({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int dy = -r; dy <= r; ++dy) s += rows[static_cast<long>(std::clamp(y + dy, 0, h - 1)) * w + x];
            out[static_cast<long>(y) * w + x] = s * inv;
        }
    return out;
}

} // namespace detail

// Airlight estimate: the hazy image averaged over the brightest 0.1% of
// dark-channel pixels.
inline AtmosphericLight dcp_airlight(const Image& hazy, int patch = 15) {
    require_image(hazy, "dcp_airlight");
    const int w = image_width(hazy);
    const Tensor dc = dark_channel(hazy, patch);
    const long n = dc.numel();
    const long top = std::max<long>(1, n / 1000);
    std::vector<long> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0L);
    std::nth_element(idx.begin(), idx.begin() + (n - top), idx.end(),
                     [&dc](long a, long b) { return dc[a] < dc[b]; });
    AtmosphericLight a{0.0, 0.0, 0.0};
    for (long i = n - top; i < n; ++i) {
        const long p = idx[static_cast<std::size_t>(i)];
        const int y = static_cast<int>(p / w), x = static_cast<int>(p % w);
        for (int c = 0; c < 3; ++c) a[c] += pixel(hazy, y, x, c);
    }
    for (int c = 0; c < 3; ++c) a[c] = std::max(a[c] / static_cast<double>(top), 1e-3);
    return a;
}

// t = 1 - omega * darkchannel(I/A), box-smoothed, floored at t_min.
inline TransmissionMap dcp_transmission(const Image& hazy, const AtmosphericLight& a, double omega,
                                        int patch = 15, double t_min = kDefaultTMin) {
    require_image(hazy, "dcp_transmission");
    if (!(omega > 0.0 && omega <= 1.0))
        throw InvalidInputError("dcp_transmission: omega must be in (0,1]");
    const int h = image_height(hazy), w = image_width(hazy);
    Image normalized({h, w, 3});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) pixel(normalized, y, x, c) = pixel(hazy, y, x, c) / a[c];
    const Tensor dc_norm = dark_channel(normalized, patch);
    Tensor t({h, w});
    for (long i = 0; i < t.numel(); ++i) t[i] = 1.0 - omega * dc_norm[i];
    t = detail::box_smooth(t, patch / 2 > 0 ? patch / 2 : 1);
    for (long i = 0; i < t.numel(); ++i) t[i] = std::clamp(t[i], t_min, 1.0);
    return t;
}

// Dark-channel-prior restoration. The raw transmission is box-smoothed rather
// than guided-filtered, which is plenty for manufacturing imperfect negatives.
inline Image dcp_restore(const Image& hazy, double omega = 0.95, int patch = 15,
                         double t_min = kDefaultTMin) {
    require_image(hazy, "dcp_restore");
    if (patch < 1 || patch % 2 == 0) throw InvalidInputError("dcp_restore: patch must be odd, >= 1");
    const AtmosphericLight a = dcp_airlight(hazy, patch);
    const TransmissionMap t = dcp_transmission(hazy, a, omega, patch, t_min);
    return invert_haze(hazy, t, a, t_min);
}

// alpha * clear + (1 - alpha) * hazy
inline Image blend_restore(const Image& hazy, const Image& clear, double alpha) {
    require_image(hazy, "blend_restore");
    require_same_spatial(hazy, clear, "blend_restore");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidInputError("blend_restore: alpha must be in [0,1]");
    Image out = hazy;
    for (long i = 0; i < out.numel(); ++i) out[i] = alpha * clear[i] + (1.0 - alpha) * hazy[i];
    return out;
}

// ---- synthetic depth fields (values in [0, kDepthMax]) ----------------------

constexpr double kDepthMax = 2.5;

inline Tensor depth_linear_ramp(int h, int w, Rng& rng) {
    const double angle = rng.uniform(0.0, 2.0 * M_PI);
    const double dx = std::cos(angle), dy = std::sin(angle);
    Tensor d({h, w});
    double lo = 1e300, hi = -1e300;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double v = dx * x / std::max(1, w - 1) + dy * y / std::max(1, h - 1);
            d[static_cast<long>(y) * w + x] = v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    const double span = hi - lo > 1e-12 ? hi - lo : 1.0;
    for (long i = 0; i < d.numel(); ++i) d[i] = (d[i] - lo) / span * kDepthMax;
    return d;
}

inline Tensor depth_radial(int h, int w, Rng& rng) {
    const double cy = rng.uniform(0.2, 0.8) * (h - 1);
    const double cx = rng.uniform(0.2, 0.8) * (w - 1);
    const bool inward = rng.uniform() < 0.5;
    Tensor d({h, w});
    double hi = 1e-12;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double v = std::hypot(y - cy, x - cx);
            d[static_cast<long>(y) * w + x] = v;
            hi = std::max(hi, v);
        }
    for (long i = 0; i < d.numel(); ++i) {
        double v = d[i] / hi;
        if (inward) v = 1.0 - v;
        d[i] = v * kDepthMax;
    }
    return d;
}

// low-resolution uniform grid, bilinearly upsampled
inline Tensor depth_smooth_noise(int h, int w, Rng& rng) {
    const int gh = 6, gw = 6;
    std::vector<double> grid(gh * gw);
    for (double& v : grid) v = rng.uniform();
    Tensor d({h, w});
    double lo = 1e300, hi = -1e300;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double fy = static_cast<double>(y) / std::max(1, h - 1) * (gh - 1);
            const double fx = static_cast<double>(x) / std::max(1, w - 1) * (gw - 1);
            const int y0 = std::min(static_cast<int>(fy), gh - 2);
            const int x0 = std::min(static_cast<int>(fx), gw - 2);
            const double ay = fy - y0, ax = fx - x0;
            const double v = grid[y0 * gw + x0] * (1 - ay) * (1 - ax) +
                             grid[y0 * gw + x0 + 1] * (1 - ay) * ax +
                             grid[(y0 + 1) * gw + x0] * ay * (1 - ax) +
                             grid[(y0 + 1) * gw + x0 + 1] * ay * ax;
            d[static_cast<long>(y) * w + x] = v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    const double span = hi - lo > 1e-12 ? hi - lo : 1.0;
    for (long i = 0; i < d.numel(); ++i) d[i] = (d[i] - lo) / span * kDepthMax;
    return d;
}

} // namespace c2p
