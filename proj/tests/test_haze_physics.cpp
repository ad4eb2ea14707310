#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "c2p/haze_physics.hpp"
#include "c2p/metrics.hpp"
#include "c2p/rng.hpp"

using namespace c2p;

namespace {

Image random_image(int h, int w, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Image img({h, w, 3});
    for (double& v : img.data) v = rng.uniform(lo, hi);
    return img;
}

TransmissionMap random_transmission(int h, int w, Rng& rng, double lo, double hi) {
    TransmissionMap t({h, w});
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

} // namespace

TEST_CASE("beer-lambert closed forms") {
    Tensor depth({4, 4}, 0.0);
    CHECK(beer_lambert_transmission(depth, 1.0)[0] == Catch::Approx(1.0));

    for (double& v : depth.data) v = 1.0;
    const auto t = beer_lambert_transmission(depth, std::log(2.0));
    for (long i = 0; i < t.numel(); ++i) CHECK(t[i] == Catch::Approx(0.5));

    for (double& v : depth.data) v = 2.0;
    const auto t2 = beer_lambert_transmission(depth, 0.5);
    CHECK(t2[0] == Catch::Approx(std::exp(-1.0)).epsilon(1e-9));
}

TEST_CASE("beer-lambert floors at t_min and validates input") {
    Tensor depth({2, 2}, 100.0);
    const auto t = beer_lambert_transmission(depth, 1.0);
    CHECK(t[0] == kDefaultTMin);

    Tensor bad({2, 2}, 1.0);
    bad[0] = std::nan("");
    CHECK_THROWS_AS(beer_lambert_transmission(bad, 1.0), InvalidInputError);
    CHECK_THROWS_AS(beer_lambert_transmission(depth, 0.0), InvalidInputError);
}

TEST_CASE("synthesize_haze closed forms") {
    const Image clear = constant_image(8, 8, 0.5);
    const AtmosphericLight a{1.0, 1.0, 1.0};

    TransmissionMap t({8, 8}, 1.0);
    Image hazed = synthesize_haze(clear, t, a);
    for (long i = 0; i < hazed.numel(); ++i) CHECK(hazed[i] == Catch::Approx(0.5));

    for (double& v : t.data) v = 0.5;
    hazed = synthesize_haze(clear, t, a);
    for (long i = 0; i < hazed.numel(); ++i) CHECK(hazed[i] == Catch::Approx(0.75));

    // T -> 0 limit: everything approaches the airlight
    Rng rng(1);
    const Image any = random_image(8, 8, rng);
    TransmissionMap tiny({8, 8}, 1e-4);
    const AtmosphericLight a2{0.9, 0.9, 0.9};
    hazed = synthesize_haze(any, tiny, a2);
    for (long i = 0; i < hazed.numel(); ++i) CHECK(hazed[i] == Catch::Approx(0.9).margin(2e-4));
}

TEST_CASE("synthesize_haze rejects mismatched dims") {
    CHECK_THROWS_AS(synthesize_haze(constant_image(8, 8, 0.5), TransmissionMap({4, 4}, 1.0),
                                    AtmosphericLight{1, 1, 1}),
                    InvalidInputError);
}

TEST_CASE("invert_haze closed forms and errors") {
    const AtmosphericLight a{1.0, 1.0, 1.0};
    Image hazy = constant_image(8, 8, 0.75);
    TransmissionMap t({8, 8}, 0.5);
    const Image j = invert_haze(hazy, t, a);
    for (long i = 0; i < j.numel(); ++i) CHECK(j[i] == Catch::Approx(0.5));

    TransmissionMap ones({8, 8}, 1.0);
    const Image same = invert_haze(hazy, ones, a);
    for (long i = 0; i < same.numel(); ++i) CHECK(same[i] == hazy[i]);

    TransmissionMap low({8, 8}, 0.01);
    CHECK_THROWS_AS(invert_haze(hazy, low, a), SingularityError);
}

TEST_CASE("physics round trip recovers the clear image") {
    Rng rng(2024);
    for (int trial = 0; trial < 8; ++trial) {
        const Image j = random_image(16, 16, rng, 0.05, 0.95);
        const TransmissionMap t = random_transmission(16, 16, rng, 0.1, 1.0);
        const double av = rng.uniform(0.7, 1.0);
        const AtmosphericLight a{av, av, av};
        const Image round = invert_haze(synthesize_haze(j, t, a), t, a);
        CHECK(psnr(round, j) > 60.0);
        double max_err = 0.0;
        for (long i = 0; i < j.numel(); ++i) max_err = std::max(max_err, std::fabs(round[i] - j[i]));
        CHECK(max_err < 1e-5);
    }
}

TEST_CASE("synthesize_haze is affine in the clear image") {
    Rng rng(77);
    const Image j1 = random_image(12, 12, rng, 0.05, 0.95);
    const Image j2 = random_image(12, 12, rng, 0.05, 0.95);
    const TransmissionMap t = random_transmission(12, 12, rng, 0.2, 1.0);
    const AtmosphericLight a{0.8, 0.85, 0.9};
    const double alpha = 0.37;
    Image mix({12, 12, 3});
    for (long i = 0; i < mix.numel(); ++i) mix[i] = alpha * j1[i] + (1 - alpha) * j2[i];
    const Image lhs = synthesize_haze(mix, t, a);
    const Image s1 = synthesize_haze(j1, t, a);
    const Image s2 = synthesize_haze(j2, t, a);
    for (long i = 0; i < lhs.numel(); ++i)
        CHECK(lhs[i] == Catch::Approx(alpha * s1[i] + (1 - alpha) * s2[i]).margin(1e-6));
}

TEST_CASE("dark channel of a constant gray image") {
    const Image gray = constant_image(16, 16, 0.5);
    for (int patch : {1, 3, 15}) {
        const Tensor dc = dark_channel(gray, patch);
        for (long i = 0; i < dc.numel(); ++i) CHECK(dc[i] == Catch::Approx(0.5));
    }
    CHECK_THROWS_AS(dark_channel(gray, 4), InvalidInputError);
}

TEST_CASE("dcp on pure airlight gives t = 1 - omega") {
    // I == A everywhere: darkchannel(I/A) = 1, so t = 1 - omega
    const Image pure = constant_image(32, 32, 0.85);
    const AtmosphericLight a = dcp_airlight(pure, 15);
    for (int c = 0; c < 3; ++c) CHECK(a[c] == Catch::Approx(0.85));
    const TransmissionMap t = dcp_transmission(pure, a, 0.9, 15);
    for (long i = 0; i < t.numel(); ++i) CHECK(t[i] == Catch::Approx(0.1).margin(1e-12));
    const Image restored = dcp_restore(pure, 0.9, 15);
    for (long i = 0; i < restored.numel(); ++i) CHECK(restored[i] == Catch::Approx(0.85).margin(1e-9));
}

TEST_CASE("dcp_restore improves PSNR on a synthetic sample") {
    Rng drng(6);
    // structured clear image: gradient + dark block so the prior has signal
    Image clear({48, 48, 3});
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x) {
            pixel(clear, y, x, 0) = 0.1 + 0.8 * x / 47.0;
            pixel(clear, y, x, 1) = 0.1 + 0.6 * y / 47.0;
            pixel(clear, y, x, 2) = 0.15;
        }
    for (int y = 10; y < 22; ++y)
        for (int x = 20; x < 40; ++x)
            for (int c = 0; c < 3; ++c) pixel(clear, y, x, c) = 0.05;

    const Tensor depth = depth_linear_ramp(48, 48, drng);
    const TransmissionMap t = beer_lambert_transmission(depth, 1.0);
    const AtmosphericLight a{0.9, 0.9, 0.9};
    const Image hazy = synthesize_haze(clear, t, a);
    const Image restored = dcp_restore(hazy, 0.95, 15);
    CHECK(psnr(restored, clear) > psnr(hazy, clear));
    for (double v : restored.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("blend_restore endpoints and monotone PSNR") {
    Rng rng(9);
    const Image clear = random_image(24, 24, rng, 0.05, 0.95);
    const TransmissionMap t = random_transmission(24, 24, rng, 0.3, 0.7);
    const AtmosphericLight a{0.9, 0.9, 0.9};
    const Image hazy = synthesize_haze(clear, t, a);

    const Image at1 = blend_restore(hazy, clear, 1.0);
    for (long i = 0; i < at1.numel(); ++i) CHECK(at1[i] == clear[i]);
    const Image at0 = blend_restore(hazy, clear, 0.0);
    for (long i = 0; i < at0.numel(); ++i) CHECK(at0[i] == hazy[i]);
    CHECK_THROWS_AS(blend_restore(hazy, clear, 1.5), InvalidInputError);

    double prev = -1.0;
    for (double alpha : {0.3, 0.5, 0.7, 0.9}) {
        const double p = psnr(blend_restore(hazy, clear, alpha), clear);
        CHECK(p > prev);
        prev = p;
    }
}

TEST_CASE("depth fields are deterministic and in range") {
    using DepthFn = Tensor (*)(int, int, Rng&);
    for (DepthFn gen : {static_cast<DepthFn>(&depth_linear_ramp), static_cast<DepthFn>(&depth_radial),
                        static_cast<DepthFn>(&depth_smooth_noise)}) {
        Rng r1(31), r2(31);
        const Tensor a = gen(20, 24, r1);
        const Tensor b = gen(20, 24, r2);
        CHECK(a.data == b.data);
        for (double v : a.data) {
            CHECK(v >= 0.0);
            CHECK(v <= kDepthMax + 1e-12);
        }
    }
}
