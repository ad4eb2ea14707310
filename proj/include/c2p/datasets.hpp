#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2p/curriculum.hpp"
#include "c2p/errors.hpp"
#include "c2p/haze_physics.hpp"
#include "c2p/metrics.hpp"
#include "c2p/png_io.hpp"
#include "c2p/rng.hpp"
#include "c2p/tensor.hpp"

namespace c2p {

namespace fs = std::filesystem;

constexpr const char* kManifestFormat = "c2p-manifest-v1";

struct ManifestNegative {
    std::string path;
    double psnr = 0.0;
    std::string generator_tag;
};

struct ManifestEntry {
    std::string id;
    std::string clear_path;
    std::string hazy_path;
    double beta = 1.0;
    AtmosphericLight airlight{};
    std::string depth_kind;
    std::uint64_t depth_seed = 0;
    std::vector<ManifestNegative> negatives;
};

struct DatasetManifest {
    std::uint64_t seed = 0;
    int size = 0;
    std::vector<ManifestEntry> entries;
};

// ---- synthetic clear scenes --------------------------------------------------

// Smooth color gradient plus a handful of crisp shapes; gives the metrics and
// the dark channel something structured to chew on.
inline Image synth_clear_image(int h, int w, Rng& rng) {
    double corner[4][3];
    for (auto& c : corner)
        for (double& v : c) v = rng.uniform(0.1, 0.9);
    Image img({h, w, 3});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double fy = static_cast<double>(y) / std::max(1, h - 1);
            const double fx = static_cast<double>(x) / std::max(1, w - 1);
            for (int c = 0; c < 3; ++c)
                pixel(img, y, x, c) = corner[0][c] * (1 - fy) * (1 - fx) + corner[1][c] * (1 - fy) * fx +
                                      corner[2][c] * fy * (1 - fx) + corner[3][c] * fy * fx;
        }
    const int nshapes = 6;
    for (int s = 0; s < nshapes; ++s) {
        const bool ellipse = rng.uniform() < 0.5;
        const double cy = rng.uniform(0.0, h - 1.0), cx = rng.uniform(0.0, w - 1.0);
        const double ry = rng.uniform(h / 12.0, h / 3.0), rx = rng.uniform(w / 12.0, w / 3.0);
        double col[3];
        for (double& v : col) v = rng.uniform(0.05, 0.95);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double dy = (y - cy) / ry, dx = (x - cx) / rx;
                const bool inside = ellipse ? (dy * dy + dx * dx <= 1.0)
                                            : (std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0);
                if (inside)
                    for (int c = 0; c < 3; ++c) pixel(img, y, x, c) = col[c];
            }
    }
    for (double& v : img.data) v = std::clamp(v, 0.02, 0.98);
    return img;
}

inline Tensor depth_for(const std::string& kind, std::uint64_t depth_seed, int h, int w) {
    Rng rng(depth_seed);
    if (kind == "ramp") return depth_linear_ramp(h, w, rng);
    if (kind == "radial") return depth_radial(h, w, rng);
    if (kind == "smooth") return depth_smooth_noise(h, w, rng);
    throw ConfigError("unknown depth kind: " + kind);
}

// ---- manifest I/O -------------------------------------------------------------

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
    nlohmann::json j;
    j["format"] = kManifestFormat;
    j["seed"] = m.seed;
    j["size"] = m.size;
    j["entries"] = nlohmann::json::array();
    for (const ManifestEntry& e : m.entries) {
        nlohmann::json je;
        je["id"] = e.id;
        je["clear_path"] = e.clear_path;
        je["hazy_path"] = e.hazy_path;
        je["beta"] = e.beta;
        je["airlight"] = {e.airlight[0], e.airlight[1], e.airlight[2]};
        je["depth_kind"] = e.depth_kind;
        je["depth_seed"] = e.depth_seed;
        je["negatives"] = nlohmann::json::array();
        for (const ManifestNegative& n : e.negatives)
            je["negatives"].push_back({{"path", n.path}, {"psnr", n.psnr}, {"generator_tag", n.generator_tag}});
        j["entries"].push_back(std::move(je));
    }
    return j;
}

// temp file + rename so readers never observe a half-written manifest
inline void save_manifest(const DatasetManifest& m, const fs::path& path) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << manifest_to_json(m).dump(2) << "\n";
    }
    fs::rename(tmp, path);
}

inline DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw IoError("bad manifest json: " + std::string(e.what()));
    }
    if (j.value("format", "") != kManifestFormat)
        throw IoError("manifest: unexpected format tag");
    DatasetManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.size = j.at("size").get<int>();
    const fs::path base = path.parent_path();
    for (const auto& je : j.at("entries")) {
        ManifestEntry e;
        e.id = je.at("id").get<std::string>();
        e.clear_path = je.at("clear_path").get<std::string>();
        e.hazy_path = je.at("hazy_path").get<std::string>();
        e.beta = je.at("beta").get<double>();
        const auto& a = je.at("airlight");
        e.airlight = {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
        e.depth_kind = je.at("depth_kind").get<std::string>();
        e.depth_seed = je.at("depth_seed").get<std::uint64_t>();
        for (const auto& jn : je.at("negatives")) {
            ManifestNegative n;
            n.path = jn.at("path").get<std::string>();
            n.psnr = jn.at("psnr").get<double>();
            n.generator_tag = jn.at("generator_tag").get<std::string>();
            e.negatives.push_back(std::move(n));
        }
        for (const std::string& p : {e.clear_path, e.hazy_path})
            if (!fs::exists(base / p)) throw IoError("manifest references missing file: " + p);
        for (const ManifestNegative& n : e.negatives)
            if (!fs::exists(base / n.path)) throw IoError("manifest references missing file: " + n.path);
        m.entries.push_back(std::move(e));
    }
    return m;
}

// ---- dataset generation ---------------------------------------------------------

inline DatasetManifest generate_dataset(int n, int size, std::uint64_t seed, const fs::path& out_dir) {
    if (n < 1) throw InvalidInputError("generate_dataset: n must be >= 1");
    if (size < 32) throw InvalidInputError("generate_dataset: size must be >= 32");
    std::error_code ec;
    fs::create_directories(out_dir / "images", ec);
    if (ec || !fs::is_directory(out_dir / "images"))
        throw IoError("generate_dataset: cannot create " + (out_dir / "images").string());

    static const char* kinds[3] = {"ramp", "radial", "smooth"};
    DatasetManifest m;
    m.seed = seed;
    m.size = size;
    for (int i = 0; i < n; ++i) {
        char idbuf[16];
        std::snprintf(idbuf, sizeof idbuf, "s%04d", i);
        ManifestEntry e;
        e.id = idbuf;
        e.depth_kind = kinds[i % 3];
        e.depth_seed = mix_seed(seed, 0x10000u + static_cast<std::uint64_t>(i));

        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
        const Image clear = quantize8(synth_clear_image(size, size, rng));
        e.beta = rng.uniform(0.4, 1.6);
        const double a = rng.uniform(0.7, 1.0);
        e.airlight = {a, a, a};
        const Tensor depth = depth_for(e.depth_kind, e.depth_seed, size, size);
        const TransmissionMap t = beer_lambert_transmission(depth, e.beta);
        const Image hazy = synthesize_haze(clear, t, e.airlight);

        e.clear_path = "images/" + e.id + "_clear.png";
        e.hazy_path = "images/" + e.id + "_hazy.png";
        write_png(out_dir / e.clear_path, clear);
        write_png(out_dir / e.hazy_path, hazy);
        m.entries.push_back(std::move(e));
    }
    save_manifest(m, out_dir / "manifest.json");
    return m;
}

// Rebuilds the in-memory sample from a manifest entry. The stored images are
// 8-bit quantized; the transmission map is regenerated exactly from the seeded
// depth field.
inline HazeSample load_sample(const fs::path& manifest_dir, const ManifestEntry& e) {
    HazeSample s;
    s.clear = read_png(manifest_dir / e.clear_path);
    s.hazy = read_png(manifest_dir / e.hazy_path);
    s.beta = e.beta;
    s.airlight = e.airlight;
    const Tensor depth = depth_for(e.depth_kind, e.depth_seed, image_height(s.hazy), image_width(s.hazy));
    s.transmission = beer_lambert_transmission(depth, e.beta);
    return s;
}

// ---- consensual negative pools ---------------------------------------------------

struct BuiltNegative {
    Image image; // already quantized to the 8-bit grid
    double psnr_vs_positive = 0.0;
    std::string generator_tag;
};

namespace detail {

inline std::string alpha_tag(const char* prefix, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%g", prefix, v);
    return buf;
}

inline BuiltNegative built(const HazeSample& s, Image img, std::string tag) {
    BuiltNegative b;
    b.image = quantize8(img);
    b.psnr_vs_positive = psnr(b.image, s.clear);
    b.generator_tag = std::move(tag);
    return b;
}

} // namespace detail

// Default z=7 recipe: two DCP restorations, two physics inversions with a
// perturbed transmission, three clear/hazy blends. Blend alphas self-adjust so
// the pool spans both sides of early-training network PSNR (one record below
// 20 dB, one above 28 dB) whenever the blend slots are in play.
inline std::vector<BuiltNegative> make_negatives(const HazeSample& s, int z,
                                                 std::vector<double> blend_alphas = {0.4, 0.7, 0.9}) {
    if (z < 1) throw InvalidInputError("make_negatives: z must be >= 1");
    const int slots = 4 + static_cast<int>(blend_alphas.size());
    if (z > slots)
        throw ConfigError("make_negatives: z exceeds available generator slots without blend-grid extension");

    std::vector<BuiltNegative> pool;
    const double omegas[2] = {0.75, 0.95};
    const double tfactors[2] = {0.7, 1.3};
    for (int k = 0; k < z; ++k) {
        if (k < 2) {
            pool.push_back(detail::built(s, dcp_restore(s.hazy, omegas[k]),
                                         detail::alpha_tag("dcp_w", omegas[k])));
        } else if (k < 4) {
            TransmissionMap t = s.transmission;
            for (double& v : t.data) v = std::clamp(v * tfactors[k - 2], kDefaultTMin, 1.0);
            pool.push_back(detail::built(s, invert_haze(s.hazy, t, s.airlight),
                                         detail::alpha_tag("invert_t", tfactors[k - 2])));
        } else {
            pool.push_back(detail::built(s, blend_restore(s.hazy, s.clear, blend_alphas[k - 4]),
                                         detail::alpha_tag("blend_a", blend_alphas[k - 4])));
        }
    }

    if (z == slots && !blend_alphas.empty()) {
        auto psnr_min = [&pool] {
            double v = 1e300;
            for (const auto& b : pool) v = std::min(v, b.psnr_vs_positive);
            return v;
        };
        auto psnr_max = [&pool] {
            double v = -1e300;
            for (const auto& b : pool) v = std::max(v, b.psnr_vs_positive);
            return v;
        };
        const int top = z - 1, bottom = 4;
        double top_alpha = blend_alphas.back(), bottom_alpha = blend_alphas.front();
        for (int it = 0; it < 6 && psnr_max() < 28.0 && top_alpha < 0.975; ++it) {
            top_alpha = (1.0 + top_alpha) / 2.0;
            pool[top] = detail::built(s, blend_restore(s.hazy, s.clear, top_alpha),
                                      detail::alpha_tag("blend_a", top_alpha));
        }
        for (int it = 0; it < 6 && psnr_min() >= 20.0 && bottom_alpha > 0.1; ++it) {
            bottom_alpha *= 0.6;
            pool[bottom] = detail::built(s, blend_restore(s.hazy, s.clear, bottom_alpha),
                                         detail::alpha_tag("blend_a", bottom_alpha));
        }
    }
    return pool;
}

// Builds the pool for one sample, stores the negatives as PNGs under
// <manifest_dir>/negatives/, and returns the per-negative records. The seed is
// reserved for stochastic generators; the current recipe is deterministic.
inline std::vector<NegativeRecord> build_negative_pool(const HazeSample& s, int z, std::uint64_t seed,
                                                       const fs::path& manifest_dir,
                                                       const std::string& id) {
    (void)seed;
    std::error_code ec;
    fs::create_directories(manifest_dir / "negatives", ec);
    if (ec && !fs::is_directory(manifest_dir / "negatives"))
        throw IoError("build_negative_pool: cannot create negatives dir");
    std::vector<NegativeRecord> records;
    for (const BuiltNegative& b : make_negatives(s, z)) {
        NegativeRecord rec;
        rec.image_path = "negatives/" + id + "_" + b.generator_tag + ".png";
        rec.psnr_vs_positive = b.psnr_vs_positive;
        rec.generator_tag = b.generator_tag;
        write_png(manifest_dir / rec.image_path, b.image);
        records.push_back(std::move(rec));
    }
    return records;
}

// ---- training-time views ----------------------------------------------------------

struct TrainSample {
    Image hazy;
    Image clear;
    std::vector<Image> negatives;
    std::vector<double> neg_psnrs;
};

namespace detail {

inline Image crop_window(const Image& img, int row, int col, int crop) {
    Image out({crop, crop, 3});
    for (int y = 0; y < crop; ++y)
        for (int x = 0; x < crop; ++x)
            for (int c = 0; c < 3; ++c) pixel(out, y, x, c) = pixel(img, row + y, col + x, c);
    return out;
}

} // namespace detail

// One random window applied identically to hazy, clear, and every negative.
inline TrainSample crop_aligned(const TrainSample& full, int crop, Rng& rng) {
    const int h = image_height(full.hazy), w = image_width(full.hazy);
    if (crop < 1 || crop > h || crop > w) throw InvalidInputError("crop_aligned: crop exceeds image size");
    const int row = rng.uniform_int(0, h - crop);
    const int col = rng.uniform_int(0, w - crop);
    TrainSample out;
    out.hazy = detail::crop_window(full.hazy, row, col, crop);
    out.clear = detail::crop_window(full.clear, row, col, crop);
    for (const Image& n : full.negatives) out.negatives.push_back(detail::crop_window(n, row, col, crop));
    out.neg_psnrs = full.neg_psnrs;
    return out;
}

} // namespace c2p
