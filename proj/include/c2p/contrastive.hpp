#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2p/autodiff.hpp"
#include "c2p/errors.hpp"
#include "c2p/network.hpp"
#include "c2p/rng.hpp"
#include "c2p/tensor.hpp"

namespace c2p {

enum class ExtractorKind { Identity, FixedRandomPyramid, PretrainedPerceptual };

inline const char* to_string(ExtractorKind k) {
    switch (k) {
        case ExtractorKind::Identity: return "identity";
        case ExtractorKind::FixedRandomPyramid: return "fixed-random-pyramid";
        case ExtractorKind::PretrainedPerceptual: return "pretrained-perceptual";
    }
    return "?";
}

inline ExtractorKind extractor_kind_from_string(const std::string& s) {
    if (s == "identity") return ExtractorKind::Identity;
    if (s == "fixed-random-pyramid") return ExtractorKind::FixedRandomPyramid;
    if (s == "pretrained-perceptual") return ExtractorKind::PretrainedPerceptual;
    throw ConfigError("unknown extractor kind: " + s);
}

struct ExtractorSpec {
    ExtractorKind kind = ExtractorKind::FixedRandomPyramid;
    std::uint64_t seed = 1234;
    std::vector<int> tap_indices = {1, 3, 5, 9, 13};
    std::string weights_path; // pretrained-perceptual only
};

struct LayerWeights {
    std::vector<double> xi = {1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0};
};

// Frozen feature extractor. Stand-in for the usual pretrained perceptual
// network: identity (tests/oracles), a seeded 5-stage conv pyramid (default),
// or a conv stack loaded from disk. Gradients only ever flow into the image.
class FeatureExtractor {
public:
    explicit FeatureExtractor(const ExtractorSpec& spec) : spec_(spec) {
        switch (spec.kind) {
            case ExtractorKind::Identity:
                break;
            case ExtractorKind::FixedRandomPyramid: {
                Rng rng(spec.seed);
                const int widths[5] = {16, 32, 64, 128, 128};
                int cin = 3;
                for (int i = 0; i < 5; ++i) {
                    stages_.push_back(detail::init_conv(widths[i], cin, 3, rng));
                    cin = widths[i];
                }
                break;
            }
            case ExtractorKind::PretrainedPerceptual:
                load_weights(spec.weights_path);
                break;
        }
    }

    int tap_count() const {
        switch (spec_.kind) {
            case ExtractorKind::Identity: return 1;
            case ExtractorKind::FixedRandomPyramid: return 5;
            case ExtractorKind::PretrainedPerceptual: return static_cast<int>(spec_.tap_indices.size());
        }
        return 0;
    }

    // Feature stack for a {3,H,W} image var; optionally reports the frozen
    // parameter vars it placed on the tape.
    std::vector<ad::Var> features(ad::Tape& t, ad::Var img,
                                  std::vector<ad::Var>* frozen_params = nullptr) const {
        const Tensor& iv = img.val();
        if (iv.rank() != 3 || iv.shape[0] != 3)
            throw InvalidInputError("extract_features: expected {3,H,W}");
        std::vector<ad::Var> taps;
        switch (spec_.kind) {
            case ExtractorKind::Identity:
                taps.push_back(img);
                break;
            case ExtractorKind::FixedRandomPyramid: {
                ad::Var x = img;
                for (const ConvParams& s : stages_) {
                    ConvVars cv = wrap(t, s, /*trainable=*/false);
                    if (frozen_params) {
                        frozen_params->push_back(cv.w);
                        frozen_params->push_back(cv.b);
                    }
                    x = ad::relu(ad::conv2d(x, cv.w, cv.b, /*stride=*/2));
                    taps.push_back(x);
                }
                break;
            }
            case ExtractorKind::PretrainedPerceptual: {
                ad::Var x = img;
                int conv_index = 0;
                std::size_t next_tap = 0;
                for (std::size_t i = 0; i < stages_.size(); ++i) {
                    ConvVars cv = wrap(t, stages_[i], false);
                    if (frozen_params) {
                        frozen_params->push_back(cv.w);
                        frozen_params->push_back(cv.b);
                    }
                    x = ad::relu(ad::conv2d(x, cv.w, cv.b));
                    ++conv_index;
                    if (next_tap < spec_.tap_indices.size() &&
                        spec_.tap_indices[next_tap] == conv_index) {
                        taps.push_back(x);
                        ++next_tap;
                    }
                    if (pool_after_.count(conv_index)) x = ad::maxpool2(x);
                }
                if (taps.size() != spec_.tap_indices.size())
                    throw ConfigError("extract_features: tap index beyond last conv layer");
                break;
            }
        }
        return taps;
    }

    std::vector<Tensor> features(const Tensor& img_chw) const {
        ad::Tape t;
        std::vector<Tensor> out;
        for (const ad::Var& v : features(t, ad::constant(t, img_chw))) out.push_back(v.val());
        return out;
    }

    const ExtractorSpec& spec() const { return spec_; }

private:
    void load_weights(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open extractor weights: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw IoError("bad extractor weights file: " + std::string(e.what()));
        }
        if (j.value("format", "") != "c2p-vgg-v1")
            throw IoError("extractor weights: unexpected format tag");
        int cin = 3;
        for (const auto& jc : j.at("convs")) {
            const int cout = jc.at("out").get<int>();
            ConvParams p;
            p.w = Tensor({cout, cin, 3, 3});
            p.b = Tensor({cout});
            const auto& wj = jc.at("w");
            const auto& bj = jc.at("b");
            if (static_cast<long>(wj.size()) != p.w.numel() || static_cast<long>(bj.size()) != cout)
                throw IoError("extractor weights: shape mismatch");
            for (long i = 0; i < p.w.numel(); ++i) p.w[i] = wj[static_cast<std::size_t>(i)].get<double>();
            for (int i = 0; i < cout; ++i) p.b[i] = bj[static_cast<std::size_t>(i)].get<double>();
            stages_.push_back(std::move(p));
            cin = cout;
        }
        for (const auto& v : j.value("pool_after", nlohmann::json::array()))
            pool_after_.insert(v.get<int>());
        for (int tap : spec_.tap_indices)
            if (tap < 1 || tap > static_cast<int>(stages_.size()))
                throw ConfigError("extractor tap index out of range");
    }

    ExtractorSpec spec_;
    std::vector<ConvParams> stages_;
    std::set<int> pool_after_;
};

// Convenience one-shot form of the module surface.
inline std::vector<Tensor> extract_features(const Image& img, const ExtractorSpec& spec) {
    require_image(img, "extract_features");
    return FeatureExtractor(spec).features(chw_from_image(img));
}

// Mean absolute difference between two equally-shaped feature layers.
inline double l1_distance(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw InvalidInputError("l1_distance: shape mismatch");
    double s = 0.0;
    for (long i = 0; i < a.numel(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.numel());
}

constexpr double kContrastEps = 1e-12;

// Shared kernel for both ratio losses:
//   sum_i xi_i * num_i / (sum_q w_q d(S_q) + easy_coeff * d(hazy) + eps)
// Canonical form uses w_q = 1, easy_coeff = 1; the curricular form uses the
// difficulty weights and easy_coeff = z.
inline ad::Var contrastive_ratio(ad::Tape& t, ad::Var anchor, const Tensor& positive,
                                 const Tensor& hazy, const std::vector<Tensor>& negatives,
                                 const std::vector<double>& weights, double easy_coeff,
                                 const LayerWeights& xi, const FeatureExtractor& ex) {
    const Tensor& av = anchor.val();
    if (!av.same_shape(positive) || !av.same_shape(hazy))
        throw InvalidInputError("contrastive loss: image dimensions differ");
    for (const Tensor& n : negatives)
        if (!av.same_shape(n)) throw InvalidInputError("contrastive loss: negative dimensions differ");
    if (negatives.empty()) throw InvalidInputError("contrastive loss: needs at least one negative");
    if (weights.size() != negatives.size())
        throw InvalidInputError("contrastive loss: one weight per negative required");
    for (double w : weights)
        if (!(w > 0.0)) throw InvalidInputError("contrastive loss: weights must be positive");
    const int n = ex.tap_count();
    if (static_cast<int>(xi.xi.size()) != n)
        throw ConfigError("contrastive loss: xi length must match extractor tap count");

    const auto fa = ex.features(t, anchor);
    const auto fp = ex.features(t, ad::constant(t, positive));
    const auto fh = ex.features(t, ad::constant(t, hazy));
    std::vector<std::vector<ad::Var>> fn;
    fn.reserve(negatives.size());
    for (const Tensor& neg : negatives) fn.push_back(ex.features(t, ad::constant(t, neg)));

    ad::Var total;
    for (int i = 0; i < n; ++i) {
        ad::Var num = ad::l1_mean(fp[static_cast<std::size_t>(i)], fa[static_cast<std::size_t>(i)]);
        ad::Var den = ad::scale(ad::l1_mean(fh[static_cast<std::size_t>(i)], fa[static_cast<std::size_t>(i)]),
                                easy_coeff);
        for (std::size_t q = 0; q < fn.size(); ++q) {
            ad::Var d = ad::l1_mean(fn[q][static_cast<std::size_t>(i)], fa[static_cast<std::size_t>(i)]);
            den = ad::add(den, ad::scale(d, weights[q]));
        }
        if (ad::scalar(den) < kContrastEps)
            throw DegenerateContrastError("contrastive loss: denominator collapsed at layer " +
                                          std::to_string(i + 1));
        ad::Var ratio = ad::divide(num, ad::offset(den, kContrastEps));
        ad::Var term = ad::scale(ratio, xi.xi[static_cast<std::size_t>(i)]);
        total = (i == 0) ? term : ad::add(total, term);
    }
    return total;
}

inline ad::Var canonical_cr(ad::Tape& t, ad::Var anchor, const Tensor& positive, const Tensor& hazy,
                            const std::vector<Tensor>& negatives, const LayerWeights& xi,
                            const FeatureExtractor& ex) {
    return contrastive_ratio(t, anchor, positive, hazy, negatives,
                             std::vector<double>(negatives.size(), 1.0), 1.0, xi, ex);
}

inline ad::Var curricular_cr(ad::Tape& t, ad::Var anchor, const Tensor& positive, const Tensor& hazy,
                             const std::vector<Tensor>& negatives, const std::vector<double>& weights,
                             int z, const LayerWeights& xi, const FeatureExtractor& ex) {
    if (z < 1 || static_cast<std::size_t>(z) != negatives.size())
        throw InvalidInputError("curricular_cr: z must equal the number of negatives");
    return contrastive_ratio(t, anchor, positive, hazy, negatives, weights,
                             static_cast<double>(z), xi, ex);
}

// L = ||positive - anchor||_1 + lambda * R*. With lambda = 0 the extractor is
// never touched.
inline ad::Var total_loss(ad::Tape& t, ad::Var anchor, const Tensor& positive, const Tensor& hazy,
                          const std::vector<Tensor>& negatives, const std::vector<double>& weights,
                          int z, const LayerWeights& xi, double lambda, const FeatureExtractor& ex) {
    if (lambda < 0.0) throw InvalidInputError("total_loss: lambda must be >= 0");
    ad::Var fidelity = ad::l1_mean(ad::constant(t, positive), anchor);
    if (lambda == 0.0) return fidelity;
    ad::Var rstar = curricular_cr(t, anchor, positive, hazy, negatives, weights, z, xi, ex);
    return ad::add(fidelity, ad::scale(rstar, lambda));
}

// ---- plain-image conveniences ----------------------------------------------------

inline double canonical_cr(const Image& anchor, const Image& positive, const Image& hazy,
                           const std::vector<Image>& negatives, const LayerWeights& xi,
                           const ExtractorSpec& spec) {
    FeatureExtractor ex(spec);
    ad::Tape t;
    std::vector<Tensor> negs;
    for (const Image& n : negatives) negs.push_back(chw_from_image(n));
    return ad::scalar(canonical_cr(t, ad::constant(t, chw_from_image(anchor)),
                                   chw_from_image(positive), chw_from_image(hazy), negs, xi, ex));
}

inline double curricular_cr(const Image& anchor, const Image& positive, const Image& hazy,
                            const std::vector<std::pair<Image, double>>& weighted_negatives, int z,
                            const LayerWeights& xi, const ExtractorSpec& spec) {
    FeatureExtractor ex(spec);
    ad::Tape t;
    std::vector<Tensor> negs;
    std::vector<double> weights;
    for (const auto& [img, w] : weighted_negatives) {
        negs.push_back(chw_from_image(img));
        weights.push_back(w);
    }
    return ad::scalar(curricular_cr(t, ad::constant(t, chw_from_image(anchor)),
                                    chw_from_image(positive), chw_from_image(hazy), negs, weights, z,
                                    xi, ex));
}

inline double total_loss(const Image& anchor, const Image& positive, const Image& hazy,
                         const std::vector<std::pair<Image, double>>& weighted_negatives, int z,
                         const LayerWeights& xi, double lambda, const ExtractorSpec& spec) {
    ad::Tape t;
    ad::Var a = ad::constant(t, chw_from_image(anchor));
    ad::Var fidelity = ad::l1_mean(ad::constant(t, chw_from_image(positive)), a);
    if (lambda == 0.0) return ad::scalar(fidelity);
    FeatureExtractor ex(spec);
    std::vector<Tensor> negs;
    std::vector<double> weights;
    for (const auto& [img, w] : weighted_negatives) {
        negs.push_back(chw_from_image(img));
        weights.push_back(w);
    }
    ad::Var rstar = curricular_cr(t, a, chw_from_image(positive), chw_from_image(hazy), negs,
                                  weights, z, xi, ex);
    return ad::scalar(ad::add(fidelity, ad::scale(rstar, lambda)));
}

} // namespace c2p
