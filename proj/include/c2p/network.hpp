#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "c2p/autodiff.hpp"
#include "c2p/errors.hpp"
#include "c2p/rng.hpp"
#include "c2p/tensor.hpp"

namespace c2p {

enum class AttentionKind { Pdu, Pa };

inline const char* to_string(AttentionKind k) { return k == AttentionKind::Pdu ? "pdu" : "pa"; }
inline AttentionKind attention_from_string(const std::string& s) {
    if (s == "pdu") return AttentionKind::Pdu;
    if (s == "pa") return AttentionKind::Pa;
    throw ConfigError("unknown attention kind: " + s);
}

struct NetworkConfig {
    int groups = 1;
    int blocks_per_group = 2;
    int channels = 16;
    int kernel = 3;
    AttentionKind attention = AttentionKind::Pdu;

    void validate() const {
        if (groups < 1) throw ConfigError("network.groups must be >= 1");
        if (blocks_per_group < 1) throw ConfigError("network.blocks_per_group must be >= 1");
        if (channels < 8 || channels % 8 != 0) throw ConfigError("network.channels must be a positive multiple of 8");
        if (kernel != 3) throw ConfigError("network.kernel must be 3");
    }
};

// ---- parameter containers ----------------------------------------------------

struct ConvParams {
    Tensor w; // {Cout,Cin,k,k}
    Tensor b; // {Cout}
};

// Channel attention: sigmoid(Conv^N(ReLU(Conv^{N/8}(GAP(x))))), channel-wise scale.
struct CAParams {
    ConvParams reduce; // 1x1, N -> N/8
    ConvParams expand; // 1x1, N/8 -> N
};

// FFA-style pixel attention (only used by the ablation "base" variant).
struct PAParams {
    ConvParams reduce; // 3x3, N -> N/8
    ConvParams expand; // 3x3, N/8 -> 1
};

// Physics-aware dual-branch unit.
// Airlight branch works on the pooled vector (1x1 convs); transmission branch
// keeps spatial detail (3x3, 1x1, 3x3).
struct PDUParams {
    ConvParams air_reduce; // 1x1, N -> N/8
    ConvParams air_expand; // 1x1, N/8 -> N
    ConvParams t_in;       // 3x3, N -> N
    ConvParams t_reduce;   // 1x1, N -> N/8
    ConvParams t_expand;   // 3x3, N/8 -> N
};

struct BlockParams {
    ConvParams conv1, conv2; // 3x3, N -> N
    CAParams ca;
    std::optional<PDUParams> pdu;
    std::optional<PAParams> pa;
};

struct GroupParams {
    std::vector<BlockParams> blocks;
    ConvParams tail; // 3x3, N -> N, long skip around the group
};

struct NetworkParams {
    NetworkConfig config;
    ConvParams shallow; // 3x3, 3 -> N
    std::vector<GroupParams> groups;
    CAParams fusion; // over concatenated group outputs (G*N channels)
    ConvParams recon; // 3x3, G*N -> 3, zero-initialized
};

// ---- init & traversal ---------------------------------------------------------

namespace detail {

inline ConvParams init_conv(int cout, int cin, int k, Rng& rng, bool zero = false) {
    ConvParams p;
    p.w = Tensor({cout, cin, k, k});
    p.b = Tensor({cout});
    if (!zero) {
        const double std = std::sqrt(2.0 / (cin * k * k));
        for (double& v : p.w.data) v = rng.normal(0.0, std);
    }
    return p;
}

inline CAParams init_ca(int n, Rng& rng) {
    CAParams p;
    p.reduce = init_conv(n / 8, n, 1, rng);
    p.expand = init_conv(n, n / 8, 1, rng);
    return p;
}

inline PAParams init_pa(int n, Rng& rng) {
    PAParams p;
    p.reduce = init_conv(n / 8, n, 3, rng);
    p.expand = init_conv(1, n / 8, 3, rng);
    return p;
}

inline PDUParams init_pdu(int n, Rng& rng) {
    PDUParams p;
    p.air_reduce = init_conv(n / 8, n, 1, rng);
    p.air_expand = init_conv(n, n / 8, 1, rng);
    p.t_in = init_conv(n, n, 3, rng);
    p.t_reduce = init_conv(n / 8, n, 1, rng);
    p.t_expand = init_conv(n, n / 8, 3, rng);
    return p;
}

} // namespace detail

inline NetworkParams init_network(const NetworkConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    NetworkParams p;
    p.config = cfg;
    const int n = cfg.channels;
    p.shallow = detail::init_conv(n, 3, cfg.kernel, rng);
    for (int g = 0; g < cfg.groups; ++g) {
        GroupParams gp;
        for (int b = 0; b < cfg.blocks_per_group; ++b) {
            BlockParams bp;
            bp.conv1 = detail::init_conv(n, n, cfg.kernel, rng);
            bp.conv2 = detail::init_conv(n, n, cfg.kernel, rng);
            bp.ca = detail::init_ca(n, rng);
            if (cfg.attention == AttentionKind::Pdu)
                bp.pdu = detail::init_pdu(n, rng);
            else
                bp.pa = detail::init_pa(n, rng);
            gp.blocks.push_back(std::move(bp));
        }
        gp.tail = detail::init_conv(n, n, cfg.kernel, rng);
        p.groups.push_back(std::move(gp));
    }
    const int cat = cfg.groups * n;
    p.fusion = detail::init_ca(cat, rng);
    // zero init: the network is the identity map at step 0
    p.recon = detail::init_conv(3, cat, cfg.kernel, rng, /*zero=*/true);
    return p;
}

// Visits every parameter tensor with a stable hierarchical name.
template <typename Fn>
void visit_params(NetworkParams& p, Fn&& fn) {
    auto conv = [&fn](const std::string& name, ConvParams& c) {
        fn(name + ".w", c.w);
        fn(name + ".b", c.b);
    };
    auto ca = [&conv](const std::string& name, CAParams& c) {
        conv(name + ".reduce", c.reduce);
        conv(name + ".expand", c.expand);
    };
    conv("shallow", p.shallow);
    for (std::size_t g = 0; g < p.groups.size(); ++g) {
        const std::string gn = "group" + std::to_string(g);
        for (std::size_t b = 0; b < p.groups[g].blocks.size(); ++b) {
            BlockParams& bp = p.groups[g].blocks[b];
            const std::string bn = gn + ".block" + std::to_string(b);
            conv(bn + ".conv1", bp.conv1);
            conv(bn + ".conv2", bp.conv2);
            ca(bn + ".ca", bp.ca);
            if (bp.pdu) {
                conv(bn + ".pdu.air_reduce", bp.pdu->air_reduce);
                conv(bn + ".pdu.air_expand", bp.pdu->air_expand);
                conv(bn + ".pdu.t_in", bp.pdu->t_in);
                conv(bn + ".pdu.t_reduce", bp.pdu->t_reduce);
                conv(bn + ".pdu.t_expand", bp.pdu->t_expand);
            }
            if (bp.pa) {
                conv(bn + ".pa.reduce", bp.pa->reduce);
                conv(bn + ".pa.expand", bp.pa->expand);
            }
        }
        conv(gn + ".tail", p.groups[g].tail);
    }
    ca("fusion", p.fusion);
    conv("recon", p.recon);
}

// ---- Var-side parameter mirrors ------------------------------------------------

struct ConvVars {
    ad::Var w, b;
};
struct CAVars {
    ConvVars reduce, expand;
};
struct PAVars {
    ConvVars reduce, expand;
};
struct PDUVars {
    ConvVars air_reduce, air_expand, t_in, t_reduce, t_expand;
};
struct BlockVars {
    ConvVars conv1, conv2;
    CAVars ca;
    std::optional<PDUVars> pdu;
    std::optional<PAVars> pa;
};
struct GroupVars {
    std::vector<BlockVars> blocks;
    ConvVars tail;
};
struct NetworkVars {
    NetworkConfig config;
    ConvVars shallow;
    std::vector<GroupVars> groups;
    CAVars fusion;
    ConvVars recon;
};

inline ConvVars wrap(ad::Tape& t, const ConvParams& p, bool trainable) {
    return {ad::param(t, p.w, trainable), ad::param(t, p.b, trainable)};
}
inline CAVars wrap(ad::Tape& t, const CAParams& p, bool trainable) {
    return {wrap(t, p.reduce, trainable), wrap(t, p.expand, trainable)};
}
inline PAVars wrap(ad::Tape& t, const PAParams& p, bool trainable) {
    return {wrap(t, p.reduce, trainable), wrap(t, p.expand, trainable)};
}
inline PDUVars wrap(ad::Tape& t, const PDUParams& p, bool trainable) {
    return {wrap(t, p.air_reduce, trainable), wrap(t, p.air_expand, trainable),
            wrap(t, p.t_in, trainable), wrap(t, p.t_reduce, trainable),
            wrap(t, p.t_expand, trainable)};
}
inline BlockVars wrap(ad::Tape& t, const BlockParams& p, bool trainable) {
    BlockVars v{wrap(t, p.conv1, trainable), wrap(t, p.conv2, trainable),
                wrap(t, p.ca, trainable), std::nullopt, std::nullopt};
    if (p.pdu) v.pdu = wrap(t, *p.pdu, trainable);
    if (p.pa) v.pa = wrap(t, *p.pa, trainable);
    return v;
}
inline NetworkVars wrap(ad::Tape& t, const NetworkParams& p, bool trainable) {
    NetworkVars v;
    v.config = p.config;
    v.shallow = wrap(t, p.shallow, trainable);
    for (const GroupParams& g : p.groups) {
        GroupVars gv;
        for (const BlockParams& b : g.blocks) gv.blocks.push_back(wrap(t, b, trainable));
        gv.tail = wrap(t, g.tail, trainable);
        v.groups.push_back(std::move(gv));
    }
    v.fusion = wrap(t, p.fusion, trainable);
    v.recon = wrap(t, p.recon, trainable);
    return v;
}

// Grad readout in visit order; parallel to visit_params on the Tensor side.
template <typename Fn>
void visit_vars(NetworkVars& p, Fn&& fn) {
    auto conv = [&fn](const std::string& name, ConvVars& c) {
        fn(name + ".w", c.w);
        fn(name + ".b", c.b);
    };
    auto ca = [&conv](const std::string& name, CAVars& c) {
        conv(name + ".reduce", c.reduce);
        conv(name + ".expand", c.expand);
    };
    conv("shallow", p.shallow);
    for (std::size_t g = 0; g < p.groups.size(); ++g) {
        const std::string gn = "group" + std::to_string(g);
        for (std::size_t b = 0; b < p.groups[g].blocks.size(); ++b) {
            BlockVars& bp = p.groups[g].blocks[b];
            const std::string bn = gn + ".block" + std::to_string(b);
            conv(bn + ".conv1", bp.conv1);
            conv(bn + ".conv2", bp.conv2);
            ca(bn + ".ca", bp.ca);
            if (bp.pdu) {
                conv(bn + ".pdu.air_reduce", bp.pdu->air_reduce);
                conv(bn + ".pdu.air_expand", bp.pdu->air_expand);
                conv(bn + ".pdu.t_in", bp.pdu->t_in);
                conv(bn + ".pdu.t_reduce", bp.pdu->t_reduce);
                conv(bn + ".pdu.t_expand", bp.pdu->t_expand);
            }
            if (bp.pa) {
                conv(bn + ".pa.reduce", bp.pa->reduce);
                conv(bn + ".pa.expand", bp.pa->expand);
            }
        }
        conv(gn + ".tail", p.groups[g].tail);
    }
    ca("fusion", p.fusion);
    conv("recon", p.recon);
}

// ---- forward pieces -------------------------------------------------------------

inline void require_channels(const ad::Var& m, const Tensor& w, const char* what) {
    if (m.val().rank() != 3) throw InvalidInputError(std::string(what) + ": expected {C,H,W}");
    if (m.val().shape[0] != w.shape[1]) throw ConfigError(std::string(what) + ": channel mismatch");
}

// A~ = replicate(sigmoid(Conv^N(ReLU(Conv^{N/8}(GAP(M)))))); spatially constant.
inline ad::Var airlight_branch(ad::Tape&, ad::Var m, const PDUVars& p) {
    require_channels(m, p.air_reduce.w.val(), "airlight_branch");
    const int h = m.val().shape[1], w = m.val().shape[2];
    ad::Var v = ad::gap(m);
    v = ad::conv2d(v, p.air_reduce.w, p.air_reduce.b);
    v = ad::relu(v);
    v = ad::conv2d(v, p.air_expand.w, p.air_expand.b);
    v = ad::sigmoid(v);
    return ad::tile_hw(v, h, w);
}

// t~ = sigmoid(Conv^N(ReLU(Conv^{N/8}(Conv^N(M))))); keeps spatial detail.
inline ad::Var transmission_branch(ad::Tape&, ad::Var m, const PDUVars& p) {
    require_channels(m, p.t_in.w.val(), "transmission_branch");
    ad::Var v = ad::conv2d(m, p.t_in.w, p.t_in.b);
    v = ad::conv2d(v, p.t_reduce.w, p.t_reduce.b);
    v = ad::relu(v);
    v = ad::conv2d(v, p.t_expand.w, p.t_expand.b);
    return ad::sigmoid(v);
}

// J~ = M (.) t~ + A~ (1 - t~)
inline ad::Var pdu_combine(ad::Var m, ad::Var t_map, ad::Var a_map) {
    if (!m.val().same_shape(t_map.val()) || !m.val().same_shape(a_map.val()))
        throw InvalidInputError("pdu_combine: shape mismatch");
    return ad::add(ad::mul(m, t_map), ad::mul(a_map, ad::one_minus(t_map)));
}

inline ad::Var pdu_forward(ad::Tape& t, ad::Var m, const PDUVars& p) {
    ad::Var a_map = airlight_branch(t, m, p);
    ad::Var t_map = transmission_branch(t, m, p);
    return pdu_combine(m, t_map, a_map);
}

inline ad::Var channel_attention(ad::Tape&, ad::Var x, const CAVars& p) {
    ad::Var v = ad::gap(x);
    v = ad::conv2d(v, p.reduce.w, p.reduce.b);
    v = ad::relu(v);
    v = ad::conv2d(v, p.expand.w, p.expand.b);
    v = ad::sigmoid(v);
    return ad::mul(x, v);
}

inline ad::Var pixel_attention(ad::Tape&, ad::Var x, const PAVars& p) {
    ad::Var v = ad::conv2d(x, p.reduce.w, p.reduce.b);
    v = ad::relu(v);
    v = ad::conv2d(v, p.expand.w, p.expand.b);
    v = ad::sigmoid(v);
    const int C = x.val().shape[0];
    std::vector<ad::Var> copies(static_cast<std::size_t>(C), v);
    return ad::mul(x, ad::concat_channels(copies));
}

// block(M) = M + Attn(CA(Conv(ReLU(Conv(M)))))
inline ad::Var fa_block(ad::Tape& t, ad::Var m, const BlockVars& p) {
    ad::Var v = ad::conv2d(m, p.conv1.w, p.conv1.b);
    v = ad::relu(v);
    v = ad::conv2d(v, p.conv2.w, p.conv2.b);
    v = channel_attention(t, v, p.ca);
    if (p.pdu)
        v = pdu_forward(t, v, *p.pdu);
    else if (p.pa)
        v = pixel_attention(t, v, *p.pa);
    return ad::add(m, v);
}

inline ad::Var group_forward(ad::Tape& t, ad::Var x, const GroupVars& g) {
    ad::Var v = x;
    for (const BlockVars& b : g.blocks) v = fa_block(t, v, b);
    v = ad::conv2d(v, g.tail.w, g.tail.b);
    return ad::add(v, x);
}

// Shallow conv, sequential groups whose outputs are concatenated, channel
// attention fusion, one reconstruction conv, global residual, clamp.
inline ad::Var network_forward(ad::Tape& t, ad::Var image_chw, const NetworkVars& net) {
    const Tensor& iv = image_chw.val();
    if (iv.rank() != 3 || iv.shape[0] != 3) throw InvalidInputError("network_forward: expected {3,H,W}");
    if (iv.shape[1] < 8 || iv.shape[2] < 8)
        throw InvalidInputError("network_forward: spatial dims must be >= 8");
    ad::Var x = ad::conv2d(image_chw, net.shallow.w, net.shallow.b);
    std::vector<ad::Var> outs;
    for (const GroupVars& g : net.groups) {
        x = group_forward(t, x, g);
        outs.push_back(x);
    }
    ad::Var cat = outs.size() == 1 ? outs[0] : ad::concat_channels(outs);
    cat = channel_attention(t, cat, net.fusion);
    ad::Var delta = ad::conv2d(cat, net.recon.w, net.recon.b);
    return ad::clamp01(ad::add(image_chw, delta));
}

// ---- plain-tensor wrappers (forward-only) ---------------------------------------

inline Tensor gap(const Tensor& m) {
    ad::Tape t;
    return ad::gap(ad::constant(t, m)).val();
}

inline Tensor airlight_branch(const Tensor& m, const PDUParams& p) {
    ad::Tape t;
    return airlight_branch(t, ad::constant(t, m), wrap(t, p, false)).val();
}

inline Tensor transmission_branch(const Tensor& m, const PDUParams& p) {
    ad::Tape t;
    return transmission_branch(t, ad::constant(t, m), wrap(t, p, false)).val();
}

inline Tensor pdu_combine(const Tensor& m, const Tensor& t_map, const Tensor& a_map) {
    ad::Tape t;
    return pdu_combine(ad::constant(t, m), ad::constant(t, t_map), ad::constant(t, a_map)).val();
}

inline Tensor fa_block_forward(const Tensor& m, const BlockParams& p) {
    ad::Tape t;
    return fa_block(t, ad::constant(t, m), wrap(t, p, false)).val();
}

inline Image network_forward(const Image& img, const NetworkParams& params) {
    ad::Tape t;
    ad::Var out = network_forward(t, ad::constant(t, chw_from_image(img)), wrap(t, params, false));
    return image_from_chw(out.val());
}

} // namespace c2p
