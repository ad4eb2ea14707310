#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "c2p/network.hpp"
#include "c2p/rng.hpp"

using namespace c2p;

namespace {

Tensor random_chw(int c, int h, int w, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t({c, h, w});
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

void zero_conv(ConvParams& c) {
    std::fill(c.w.data.begin(), c.w.data.end(), 0.0);
    std::fill(c.b.data.begin(), c.b.data.end(), 0.0);
}

PDUParams zero_pdu(int n) {
    Rng rng(0);
    PDUParams p = detail::init_pdu(n, rng);
    zero_conv(p.air_reduce);
    zero_conv(p.air_expand);
    zero_conv(p.t_in);
    zero_conv(p.t_reduce);
    zero_conv(p.t_expand);
    return p;
}

// dense evaluation of the pooled branch for a 1x1 spatial input:
// sigmoid(W2 relu(W1 v + b1) + b2)
std::vector<double> dense_pooled_branch(const std::vector<double>& v, const ConvParams& c1,
                                        const ConvParams& c2, bool sum_kernel_taps) {
    const int mid = c1.w.shape[0], n_in = c1.w.shape[1], n_out = c2.w.shape[0];
    auto kernel_sum = [sum_kernel_taps](const ConvParams& c, int o, int i) {
        const int k = c.w.shape[2];
        if (!sum_kernel_taps) return c.w.data[(size_t(o) * c.w.shape[1] + i) * k * k + (k * k) / 2];
        double s = 0.0;
        for (int t = 0; t < k * k; ++t) s += c.w.data[(size_t(o) * c.w.shape[1] + i) * k * k + t];
        return s;
    };
    std::vector<double> hidden(mid);
    for (int o = 0; o < mid; ++o) {
        double s = c1.b[o];
        for (int i = 0; i < n_in; ++i) s += kernel_sum(c1, o, i) * v[size_t(i)];
        hidden[size_t(o)] = std::max(s, 0.0);
    }
    std::vector<double> out(n_out);
    for (int o = 0; o < n_out; ++o) {
        double s = c2.b[o];
        for (int i = 0; i < mid; ++i) s += kernel_sum(c2, o, i) * hidden[size_t(i)];
        out[size_t(o)] = 1.0 / (1.0 + std::exp(-s));
    }
    return out;
}

} // namespace

TEST_CASE("gap examples") {
    Tensor m({2, 4, 4});
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            m.at(0, y, x) = 0.7;
            m.at(1, y, x) = (y + x) % 2 == 0 ? 0.0 : 1.0; // checkerboard
        }
    const Tensor g = gap(m);
    CHECK(g.shape == std::vector<int>{2, 1, 1});
    CHECK(g[0] == Catch::Approx(0.7));
    CHECK(g[1] == Catch::Approx(0.5));

    Rng rng(3);
    const Tensor r = random_chw(3, 5, 7, rng);
    const Tensor gr = gap(r);
    for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 7; ++x) s += r.at(c, y, x);
        CHECK(gr[c] == Catch::Approx(s / 35.0).margin(1e-6));
    }
}

TEST_CASE("airlight branch: zero params give 0.5, output is spatially constant in (0,1)") {
    const int n = 16;
    const PDUParams zeros = zero_pdu(n);
    Rng rng(11);
    const Tensor m = random_chw(n, 6, 9, rng);
    const Tensor a0 = airlight_branch(m, zeros);
    for (double v : a0.data) CHECK(v == 0.5);

    Rng prng(5);
    const PDUParams p = detail::init_pdu(n, prng);
    const Tensor a = airlight_branch(m, p);
    CHECK(a.shape == m.shape);
    for (int c = 0; c < n; ++c) {
        double mn = 1e300, mx = -1e300;
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 9; ++x) {
                mn = std::min(mn, a.at(c, y, x));
                mx = std::max(mx, a.at(c, y, x));
            }
        CHECK(mn == mx); // replication: exact, not approximate
        CHECK(mn > 0.0);
        CHECK(mx < 1.0);
    }
}

TEST_CASE("airlight branch matches dense algebra on 1x1 input") {
    const int n = 16;
    Rng prng(6);
    const PDUParams p = detail::init_pdu(n, prng);
    Rng rng(7);
    const Tensor m = random_chw(n, 1, 1, rng);
    const Tensor a = airlight_branch(m, p);
    const auto expect = dense_pooled_branch(m.data, p.air_reduce, p.air_expand, true);
    for (int c = 0; c < n; ++c) CHECK(a[c] == Catch::Approx(expect[size_t(c)]).margin(1e-12));
}

TEST_CASE("transmission branch: zero params give 0.5, locality, dense 1x1 oracle") {
    const int n = 16;
    const PDUParams zeros = zero_pdu(n);
    Rng rng(12);
    const Tensor m = random_chw(n, 6, 6, rng);
    const Tensor t0 = transmission_branch(m, zeros);
    for (double v : t0.data) CHECK(v == 0.5);

    Rng prng(8);
    const PDUParams p = detail::init_pdu(n, prng);
    const Tensor t1 = transmission_branch(m, p);
    CHECK(t1.shape == m.shape);
    for (double v : t1.data) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    Tensor m2 = m;
    m2.at(3, 2, 2) += 0.5; // single-pixel change must move the output
    const Tensor t2 = transmission_branch(m2, p);
    CHECK(t1.data != t2.data);

    // 1x1 spatial input: reflect padding collapses each 3x3 kernel to the sum
    // of its taps
    const Tensor m1 = random_chw(n, 1, 1, rng);
    // first conv: t_in (3x3, sum taps), then the pooled pair
    std::vector<double> after_in(static_cast<std::size_t>(n));
    for (int o = 0; o < n; ++o) {
        double s = p.t_in.b[o];
        for (int i = 0; i < n; ++i) {
            double ks = 0.0;
            for (int t = 0; t < 9; ++t) ks += p.t_in.w.data[(size_t(o) * n + i) * 9 + t];
            s += ks * m1[i];
        }
        after_in[size_t(o)] = s;
    }
    const auto expect = dense_pooled_branch(after_in, p.t_reduce, p.t_expand, true);
    const Tensor got = transmission_branch(m1, p);
    for (int c = 0; c < n; ++c) CHECK(got[c] == Catch::Approx(expect[size_t(c)]).margin(1e-12));
}

TEST_CASE("pdu_combine identities") {
    Rng rng(9);
    const Tensor m = random_chw(8, 4, 4, rng);
    const Tensor a = random_chw(8, 4, 4, rng);
    const Tensor ones({8, 4, 4}, 1.0);
    const Tensor zeros({8, 4, 4}, 0.0);

    const Tensor at_one = pdu_combine(m, ones, a);
    for (long i = 0; i < m.numel(); ++i) CHECK(at_one[i] == Catch::Approx(m[i]).margin(1e-15));
    const Tensor at_zero = pdu_combine(m, zeros, a);
    for (long i = 0; i < m.numel(); ++i) CHECK(at_zero[i] == Catch::Approx(a[i]).margin(1e-15));

    const Tensor j = pdu_combine(Tensor({2, 2, 2}, 0.8), Tensor({2, 2, 2}, 0.5), Tensor({2, 2, 2}, 0.2));
    for (long i = 0; i < j.numel(); ++i) CHECK(j[i] == Catch::Approx(0.5));

    CHECK_THROWS_AS(pdu_combine(m, Tensor({8, 4, 5}, 0.5), a), InvalidInputError);
}

TEST_CASE("pdu_combine algebraic forms agree and collapse when M == A") {
    Rng rng(10);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor m = random_chw(4, 3, 3, rng);
        const Tensor t = random_chw(4, 3, 3, rng, 0.0, 1.0);
        const Tensor a = random_chw(4, 3, 3, rng);
        const Tensor lhs = pdu_combine(m, t, a);
        for (long i = 0; i < m.numel(); ++i) {
            const double rhs = m[i] * t[i] + a[i] - a[i] * t[i];
            CHECK(std::fabs(lhs[i] - rhs) <= 1e-7);
        }
        const Tensor collapsed = pdu_combine(a, t, a);
        for (long i = 0; i < a.numel(); ++i) CHECK(collapsed[i] == Catch::Approx(a[i]).margin(1e-12));
    }
}

TEST_CASE("fa_block keeps shape and stays finite") {
    const int n = 16;
    Rng prng(21);
    BlockParams bp;
    bp.conv1 = detail::init_conv(n, n, 3, prng);
    bp.conv2 = detail::init_conv(n, n, 3, prng);
    bp.ca = detail::init_ca(n, prng);
    bp.pdu = detail::init_pdu(n, prng);

    Rng rng(22);
    for (int hw : {8, 17, 32}) {
        const Tensor m = random_chw(n, hw, hw, rng);
        const Tensor out = fa_block_forward(m, bp);
        CHECK(out.shape == m.shape);
        CHECK(all_finite(out));
    }

    // zero-initialized attention sub-branches keep the block bounded
    BlockParams zb = bp;
    zero_conv(zb.ca.expand);
    zero_conv(zb.pdu->air_expand);
    zero_conv(zb.pdu->t_expand);
    const Tensor m = random_chw(n, 8, 8, rng);
    const Tensor out = fa_block_forward(m, zb);
    CHECK(all_finite(out));
}

namespace {

std::vector<ad::Var*> block_var_list(BlockVars& b) {
    std::vector<ad::Var*> out = {&b.conv1.w, &b.conv1.b, &b.conv2.w, &b.conv2.b,
                                 &b.ca.reduce.w, &b.ca.reduce.b, &b.ca.expand.w, &b.ca.expand.b};
    if (b.pdu) {
        for (ConvVars* c : {&b.pdu->air_reduce, &b.pdu->air_expand, &b.pdu->t_in, &b.pdu->t_reduce,
                            &b.pdu->t_expand}) {
            out.push_back(&c->w);
            out.push_back(&c->b);
        }
    }
    return out;
}

std::vector<Tensor*> block_tensor_list(BlockParams& b) {
    std::vector<Tensor*> out = {&b.conv1.w, &b.conv1.b, &b.conv2.w, &b.conv2.b,
                                &b.ca.reduce.w, &b.ca.reduce.b, &b.ca.expand.w, &b.ca.expand.b};
    if (b.pdu) {
        for (ConvParams* c : {&b.pdu->air_reduce, &b.pdu->air_expand, &b.pdu->t_in, &b.pdu->t_reduce,
                              &b.pdu->t_expand}) {
            out.push_back(&c->w);
            out.push_back(&c->b);
        }
    }
    return out;
}

} // namespace

TEST_CASE("fa_block: every parameter gets gradient; spot-check vs finite differences") {
    const int n = 8;
    Rng prng(31);
    BlockParams bp;
    bp.conv1 = detail::init_conv(n, n, 3, prng);
    bp.conv2 = detail::init_conv(n, n, 3, prng);
    bp.ca = detail::init_ca(n, prng);
    bp.pdu = detail::init_pdu(n, prng);
    // with n=8 the pooled branches have a single hidden ReLU unit; bias it
    // well positive (and damp its weights) so no branch is dead at the test point
    for (ConvParams* c : {&bp.ca.reduce, &bp.pdu->air_reduce, &bp.pdu->t_reduce}) {
        for (double& v : c->w.data) v *= 0.2;
        c->b[0] = 1.0;
    }

    Rng rng(32);
    const Tensor m = random_chw(n, 6, 6, rng);
    const Tensor mask = random_chw(n, 6, 6, rng);

    auto loss_value = [&](BlockParams& params) {
        ad::Tape t;
        ad::Var out = fa_block(t, ad::constant(t, m), wrap(t, params, false));
        return ad::scalar(ad::l1_mean(ad::mul(out, ad::constant(t, mask)),
                                      ad::constant(t, Tensor(m.shape, 50.0))));
    };

    ad::Tape t;
    BlockVars bv = wrap(t, bp, true);
    ad::Var out = fa_block(t, ad::constant(t, m), bv);
    ad::Var loss = ad::l1_mean(ad::mul(out, ad::constant(t, mask)),
                               ad::constant(t, Tensor(m.shape, 50.0)));
    t.backward(loss);

    std::vector<ad::Var*> vars = block_var_list(bv);
    for (ad::Var* v : vars) {
        double maxabs = 0.0;
        for (double g : v->grad().data) maxabs = std::max(maxabs, std::fabs(g));
        CHECK(maxabs > 0.0);
    }

    // central differences on a few randomly chosen parameter coordinates
    std::vector<Tensor*> tensors = block_tensor_list(bp);
    REQUIRE(tensors.size() == vars.size());
    int checked = 0;
    Rng pick(33);
    while (checked < 5) {
        const std::size_t which = pick.raw() % tensors.size();
        Tensor& pt = *tensors[which];
        const long i = static_cast<long>(pick.raw() % static_cast<std::uint64_t>(pt.numel()));
        const double h = 1e-5;
        const double saved = pt[i];
        pt[i] = saved + h;
        const double fp = loss_value(bp);
        pt[i] = saved - h;
        const double fm = loss_value(bp);
        pt[i] = saved;
        const double fd = (fp - fm) / (2 * h);
        const double an = vars[which]->grad()[i];
        INFO("tensor " << which << " coord " << i);
        CHECK(std::fabs(fd - an) <= 1e-3 * std::max(std::fabs(fd), std::fabs(an)) + 2e-9);
        ++checked;
    }
}

TEST_CASE("network_forward: shape, determinism, identity at init") {
    NetworkConfig cfg;
    cfg.groups = 1;
    cfg.blocks_per_group = 2;
    cfg.channels = 16;
    const NetworkParams params = init_network(cfg, 42);

    Rng rng(50);
    Image img({24, 17, 3});
    for (double& v : img.data) v = rng.uniform(0.05, 0.95);

    const Image out = network_forward(img, params);
    CHECK(out.shape == img.shape);
    for (double v : out.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    // identical seed -> bit-identical params -> bit-identical outputs
    const NetworkParams params2 = init_network(cfg, 42);
    const Image out2 = network_forward(img, params2);
    CHECK(out.data == out2.data);

    // zero-initialized reconstruction conv: the network is the identity map
    for (long i = 0; i < img.numel(); ++i) CHECK(out[i] == img[i]);

    CHECK_THROWS_AS(network_forward(Image({4, 4, 3}, 0.5), params), InvalidInputError);
}

TEST_CASE("network_forward with multiple groups and pixel attention variant") {
    NetworkConfig cfg;
    cfg.groups = 2;
    cfg.blocks_per_group = 1;
    cfg.channels = 8;
    const NetworkParams pdu_net = init_network(cfg, 1);
    cfg.attention = AttentionKind::Pa;
    const NetworkParams pa_net = init_network(cfg, 1);

    Rng rng(51);
    Image img({16, 16, 3});
    for (double& v : img.data) v = rng.uniform(0.0, 1.0);
    CHECK(network_forward(img, pdu_net).shape == img.shape);
    CHECK(network_forward(img, pa_net).shape == img.shape);
}

TEST_CASE("network config validation") {
    NetworkConfig cfg;
    cfg.channels = 12; // not a multiple of 8
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.channels = 16;
    cfg.groups = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.groups = 1;
    cfg.kernel = 5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("full network gradient check at random coordinates") {
    NetworkConfig cfg;
    cfg.groups = 1;
    cfg.blocks_per_group = 1;
    cfg.channels = 8;
    NetworkParams params = init_network(cfg, 5);
    // non-zero recon so its gradient path is generic
    Rng wr(6);
    for (double& v : params.recon.w.data) v = wr.uniform(-0.05, 0.05);

    Rng rng(52);
    Image img({10, 10, 3});
    for (double& v : img.data) v = rng.uniform(0.2, 0.8);
    const Tensor img_chw = chw_from_image(img);
    const Tensor mask = random_chw(3, 10, 10, rng);

    auto loss_value = [&](const NetworkParams& p) {
        ad::Tape t;
        ad::Var out = network_forward(t, ad::constant(t, img_chw), wrap(t, p, false));
        return ad::scalar(ad::l1_mean(ad::mul(out, ad::constant(t, mask)),
                                      ad::constant(t, Tensor({3, 10, 10}, 50.0))));
    };

    ad::Tape t;
    NetworkVars nv = wrap(t, params, true);
    ad::Var out = network_forward(t, ad::constant(t, img_chw), nv);
    ad::Var loss = ad::l1_mean(ad::mul(out, ad::constant(t, mask)),
                               ad::constant(t, Tensor({3, 10, 10}, 50.0)));
    t.backward(loss);

    std::vector<const Tensor*> grads;
    visit_vars(nv, [&](const std::string&, ad::Var& v) { grads.push_back(&v.grad()); });
    std::vector<Tensor*> tensors;
    visit_params(params, [&](const std::string&, Tensor& p) { tensors.push_back(&p); });
    REQUIRE(grads.size() == tensors.size());

    Rng pick(53);
    for (int checked = 0; checked < 6; ++checked) {
        const std::size_t which = pick.raw() % tensors.size();
        Tensor& pt = *tensors[which];
        const long i = static_cast<long>(pick.raw() % static_cast<std::uint64_t>(pt.numel()));
        const double h = 1e-5;
        const double saved = pt[i];
        pt[i] = saved + h;
        const double fp = loss_value(params);
        pt[i] = saved - h;
        const double fm = loss_value(params);
        pt[i] = saved;
        const double fd = (fp - fm) / (2 * h);
        const double an = (*grads[which])[i];
        INFO("tensor " << which << " coord " << i << " fd=" << fd << " an=" << an);
        CHECK(std::fabs(fd - an) <= 1e-3 * std::max(std::fabs(fd), std::fabs(an)) + 2e-9);
    }
}
