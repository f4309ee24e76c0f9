#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "rsm/conv.hpp"
#include "rsm/errors.hpp"
#include "support/oracles.hpp"

using namespace rsm;

namespace {

Tensor random_tensor(std::vector<int> shape, Prng& rng, float lo = -1.0f, float hi = 1.0f) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

RsmConfig conv_cfg(const ConvGeometry& geom, int g, int c, int k) {
    RsmConfig cfg;
    cfg.input_size = geom.patch_size();
    cfg.groups = g;
    cfg.cells = c;
    cfg.k = k;
    cfg.gamma = 0.9f;
    cfg.epsilon = 0.5f;
    return cfg;
}

// independent double-precision transposed-conv loss with frozen masks,
// for finite-difference checks of the conv gradients
double conv_frozen_loss(const oracle::FrozenTrace& f, const ConvGeometry& geom, int batch,
                        const oracle::dvec& wF, const oracle::dvec& wR, const oracle::dvec& wB,
                        const oracle::dvec& wD, const oracle::dvec& target) {
    const int gc = f.g * f.c;
    const int oh = geom.out_h(), ow = geom.out_w();
    const int patch = geom.patch_size();
    const int ch = geom.in_channels;
    std::vector<double> xhat(static_cast<size_t>(batch) * geom.in_h * geom.in_w * ch, 0.0);
    for (int b = 0; b < batch; ++b) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const int row = (b * oh + oy) * ow + ox;
                oracle::dvec zF(static_cast<size_t>(f.g), 0.0);
                for (int i = 0; i < f.g; ++i) {
                    for (int t = 0; t < f.input; ++t) {
                        zF[i] += wF[static_cast<size_t>(i) * f.input + t] *
                                 f.xF[static_cast<size_t>(row) * f.input + t];
                    }
                }
                oracle::dvec yG(static_cast<size_t>(f.g), 0.0);
                for (int i = 0; i < f.g; ++i) {
                    const int j = f.yG_argmax[static_cast<size_t>(row) * f.g + i];
                    const int u = i * f.c + j;
                    double s = zF[i];
                    for (int t = 0; t < gc; ++t) {
                        s += wR[static_cast<size_t>(u) * gc + t] *
                             f.xR_used[static_cast<size_t>(row) * gc + t];
                    }
                    for (int t = 0; t < f.feedback; ++t) {
                        s += wB[static_cast<size_t>(u) * f.feedback + t] *
                             f.xB[static_cast<size_t>(row) * f.feedback + t];
                    }
                    const double m = f.maskG[static_cast<size_t>(row) * f.g + i] *
                                     f.maskC[static_cast<size_t>(row) * gc + u];
                    yG[i] = std::tanh(s * m);
                }
                // scatter-add wD * yG into the raster
                for (int p = 0; p < patch; ++p) {
                    double v = 0.0;
                    for (int i = 0; i < f.g; ++i) v += wD[static_cast<size_t>(p) * f.g + i] * yG[i];
                    const int fy = p / (geom.field_w * ch);
                    const int fx = (p / ch) % geom.field_w;
                    const int cc = p % ch;
                    const int iy = oy * geom.stride_h + fy;
                    const int ix = ox * geom.stride_w + fx;
                    xhat[((static_cast<size_t>(b) * geom.in_h + iy) * geom.in_w + ix) * ch + cc] += v;
                }
            }
        }
    }
    double loss = 0.0;
    for (size_t i = 0; i < xhat.size(); ++i) {
        const double e = xhat[i] - target[i];
        loss += e * e;
    }
    return loss / static_cast<double>(xhat.size());
}

} // namespace

TEST_CASE("geometry arithmetic and pool divisibility") {
    ConvGeometry g;
    g.field_h = g.field_w = 5;
    g.stride_h = g.stride_w = 2;
    g.in_h = g.in_w = 32;
    g.pool = 2;
    g.validate();
    CHECK(g.out_h() == 14);
    CHECK(g.out_w() == 14);
    CHECK(g.patch_size() == 25);

    g.in_h = g.in_w = 30;   // 13x13 output, pool 2 no longer divides
    CHECK_THROWS_AS(g.validate(), ParameterError);
}

TEST_CASE("1x1 image with a 1x1 field reproduces the dense layer exactly") {
    ConvGeometry geom;
    geom.field_h = geom.field_w = 1;
    geom.in_h = geom.in_w = 1;
    geom.in_channels = 4;
    RsmConfig cfg = conv_cfg(geom, 5, 2, 2);

    Prng rng(7);
    RsmParams p = init_params(cfg, rng);
    const int batch = 3;

    ConvRsmState cs = conv_reset_state(cfg, geom, batch);
    RsmState ds = reset_state(cfg, batch);
    Prng ra(1), rb(1);
    Tensor img = random_tensor({batch, 1, 1, 4}, rng);
    Tensor flat = img.with_shape({batch, 4});

    for (int step = 0; step < 4; ++step) {
        ConvForwardResult cr = conv_forward(p, geom, cfg, cs, img, nullptr, false, ra);
        RsmForwardResult dr = forward(p, cfg, ds, flat, nullptr, false, rb);
        CHECK(std::memcmp(cr.trace.y.data(), dr.trace.y.data(),
                          sizeof(float) * dr.trace.y.numel()) == 0);
        CHECK(std::memcmp(cr.xHat.data(), dr.trace.xHat.data(),
                          sizeof(float) * dr.trace.xHat.numel()) == 0);
        cs = cr.state;
        ds = dr.state;
    }
}

TEST_CASE("per-position sparsity is inherited") {
    ConvGeometry geom;
    geom.field_h = geom.field_w = 3;
    geom.stride_h = geom.stride_w = 1;
    geom.in_h = geom.in_w = 8;
    RsmConfig cfg = conv_cfg(geom, 6, 2, 2);
    Prng rng(9);
    RsmParams p = init_params(cfg, rng);
    ConvRsmState s = conv_reset_state(cfg, geom, 2);
    Tensor img = random_tensor({2, 8, 8}, rng, 0.0f, 1.0f);
    ConvForwardResult r = conv_forward(p, geom, cfg, s, img, nullptr, false, rng);
    const int rows = 2 * geom.positions();
    for (int row = 0; row < rows; ++row) {
        int active_groups = 0;
        for (int i = 0; i < cfg.groups; ++i) {
            int active = 0;
            for (int j = 0; j < cfg.cells; ++j) {
                if (r.trace.y[(static_cast<int64_t>(row) * cfg.groups + i) * cfg.cells + j] != 0.0f) {
                    ++active;
                }
            }
            CHECK(active <= 1);
            if (active) ++active_groups;
        }
        CHECK(active_groups <= cfg.k);
    }
}

TEST_CASE("shift equivariance with zeroed state") {
    ConvGeometry geom;
    geom.field_h = geom.field_w = 3;
    geom.stride_h = geom.stride_w = 2;
    geom.in_h = geom.in_w = 11;
    RsmConfig cfg = conv_cfg(geom, 4, 2, 1);
    Prng rng(13);
    RsmParams p = init_params(cfg, rng);

    Tensor img({1, 11, 11});
    Prng patt(5);
    // a block pattern at stride offset; shifted copy one stride to the right
    for (int y = 3; y < 6; ++y) {
        for (int x = 2; x < 5; ++x) img[static_cast<int64_t>(y) * 11 + x] = patt.next_float();
    }
    Tensor shifted({1, 11, 11});
    for (int y = 0; y < 11; ++y) {
        for (int x = 0; x < 11 - geom.stride_w; ++x) {
            shifted[static_cast<int64_t>(y) * 11 + x + geom.stride_w] =
                img[static_cast<int64_t>(y) * 11 + x];
        }
    }
    ConvRsmState s1 = conv_reset_state(cfg, geom, 1);
    ConvRsmState s2 = conv_reset_state(cfg, geom, 1);
    Prng ra(1), rb(1);
    ConvForwardResult r1 = conv_forward(p, geom, cfg, s1, img, nullptr, false, ra);
    ConvForwardResult r2 = conv_forward(p, geom, cfg, s2, shifted, nullptr, false, rb);
    const int oh = geom.out_h(), ow = geom.out_w();
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox + 1 < ow; ++ox) {
            for (int i = 0; i < cfg.groups; ++i) {
                const float a = r1.trace.zF[(static_cast<int64_t>(oy) * ow + ox) * cfg.groups + i];
                const float b = r2.trace.zF[(static_cast<int64_t>(oy) * ow + ox + 1) * cfg.groups + i];
                CHECK(a == doctest::Approx(b).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("state locality: zeroing one position's state leaves others unchanged") {
    ConvGeometry geom;
    geom.field_h = geom.field_w = 3;
    geom.stride_h = geom.stride_w = 1;
    geom.in_h = geom.in_w = 6;
    RsmConfig cfg = conv_cfg(geom, 4, 2, 2);
    Prng rng(17);
    RsmParams p = init_params(cfg, rng);
    ConvRsmState s = conv_reset_state(cfg, geom, 1);
    Prng ra(3);
    Tensor img = random_tensor({1, 6, 6}, rng, 0.0f, 1.0f);
    s = conv_forward(p, geom, cfg, s, img, nullptr, false, ra).state;

    Prng rb(4), rc(4);
    Tensor img2 = random_tensor({1, 6, 6}, rng, 0.0f, 1.0f);
    ConvForwardResult base = conv_forward(p, geom, cfg, s, img2, nullptr, false, rb);

    ConvRsmState wiped = s;
    const int gc = cfg.cell_count();
    const int target_pos = 5;   // (1,1) of the 4x4 map
    for (int u = 0; u < gc; ++u) {
        wiped.phi[static_cast<int64_t>(target_pos) * gc + u] = 0.0f;
        wiped.psi[static_cast<int64_t>(target_pos) * gc + u] = 0.0f;
        wiped.xR[static_cast<int64_t>(target_pos) * gc + u] = 0.0f;
    }
    ConvForwardResult mod = conv_forward(p, geom, cfg, wiped, img2, nullptr, false, rc);
    const int positions = geom.positions();
    for (int pos = 0; pos < positions; ++pos) {
        if (pos == target_pos) continue;
        for (int u = 0; u < gc; ++u) {
            CHECK(base.trace.y[static_cast<int64_t>(pos) * gc + u] ==
                  mod.trace.y[static_cast<int64_t>(pos) * gc + u]);
        }
    }
}

TEST_CASE("feedback_interpolate: identity, constants, and hand-computed 2x2 -> 3x3") {
    Prng rng(19);
    Tensor same = random_tensor({1, 3, 3, 2}, rng);
    Tensor out = feedback_interpolate(same, 3, 3);
    CHECK(out.vec() == same.vec());

    Tensor constant({2, 2, 2, 3}, 0.7f);
    Tensor up = feedback_interpolate(constant, 5, 4);
    for (int64_t i = 0; i < up.numel(); ++i) CHECK(up[i] == doctest::Approx(0.7f).epsilon(1e-6));

    // corners map to corners; the 3x3 centre is the average of all four values
    Tensor quad({1, 2, 2, 1}, {1.0f, 2.0f, 3.0f, 4.0f});
    Tensor tri = feedback_interpolate(quad, 3, 3);
    CHECK(tri[0] == doctest::Approx(1.0f));
    CHECK(tri[2] == doctest::Approx(2.0f));
    CHECK(tri[6] == doctest::Approx(3.0f));
    CHECK(tri[8] == doctest::Approx(4.0f));
    CHECK(tri[1] == doctest::Approx(1.5f));
    CHECK(tri[3] == doctest::Approx(2.0f));
    CHECK(tri[4] == doctest::Approx(2.5f));
    CHECK(tri[5] == doctest::Approx(3.0f));
    CHECK(tri[7] == doctest::Approx(3.5f));
}

TEST_CASE("pool_up: identity at 1, constants, and a scan oracle") {
    Prng rng(23);
    Tensor m = random_tensor({1, 4, 4, 3}, rng);
    CHECK(pool_up(m, 1).vec() == m.vec());

    Tensor constant({1, 4, 4, 2}, 0.3f);
    Tensor halved = pool_up(constant, 2);
    CHECK(halved.shape() == std::vector<int>{1, 2, 2, 2});
    for (int64_t i = 0; i < halved.numel(); ++i) CHECK(halved[i] == 0.3f);

    Tensor pooled = pool_up(m, 2);
    for (int y = 0; y < 2; ++y) {
        for (int x = 0; x < 2; ++x) {
            for (int c = 0; c < 3; ++c) {
                float want = -1e30f;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        want = std::max(want,
                                        m[((static_cast<int64_t>(y * 2 + dy)) * 4 + x * 2 + dx) * 3 + c]);
                    }
                }
                CHECK(pooled[((static_cast<int64_t>(y) * 2 + x)) * 3 + c] == want);
            }
        }
    }

    Tensor odd({1, 3, 3, 1}, 1.0f);
    CHECK_THROWS_AS(pool_up(odd, 2), ParameterError);
}

TEST_CASE("conv gradients match frozen-mask finite differences") {
    ConvGeometry geom;
    geom.field_h = geom.field_w = 3;
    geom.stride_h = geom.stride_w = 2;
    geom.in_h = geom.in_w = 7;
    RsmConfig cfg = conv_cfg(geom, 3, 2, 2);
    cfg.feedback_size = 4;
    Prng rng(29);
    RsmParams p = init_params(cfg, rng);
    const int batch = 2;
    ConvRsmState s = conv_reset_state(cfg, geom, batch);
    Prng dr(31);
    Tensor xB_map = random_tensor({batch, 2, 2, 4}, dr, 0.0f, 1.0f);
    for (int t = 0; t < 2; ++t) {
        Tensor img = random_tensor({batch, 7, 7}, dr, 0.0f, 1.0f);
        s = conv_forward(p, geom, cfg, s, img, &xB_map, false, dr).state;
    }
    Tensor img = random_tensor({batch, 7, 7}, dr, 0.0f, 1.0f);
    ConvForwardResult r = conv_forward(p, geom, cfg, s, img, &xB_map, false, dr);
    Tensor target = random_tensor({batch, 7, 7}, dr, 0.0f, 1.0f);
    RsmGrads g = conv_loss_and_grads(r.trace, r.xHat, target, geom, p);

    oracle::FrozenTrace f = oracle::freeze(r.trace, target);
    oracle::dvec wF = oracle::to_d(p.wF), wR = oracle::to_d(p.wR);
    oracle::dvec wB = oracle::to_d(p.wB), wD = oracle::to_d(p.wD);
    oracle::dvec tg = oracle::to_d(target);
    auto loss_at = [&](const oracle::dvec& a, const oracle::dvec& b, const oracle::dvec& c,
                       const oracle::dvec& d) {
        return conv_frozen_loss(f, geom, batch, a, b, c, d, tg);
    };
    auto check = [&](const oracle::dvec& fd, const Tensor& an) {
        REQUIRE(fd.size() == static_cast<size_t>(an.numel()));
        for (size_t i = 0; i < fd.size(); ++i) {
            CHECK(oracle::rel_err(fd[i], an[static_cast<int64_t>(i)]) < 1e-3);
        }
    };
    check(oracle::central_diff(wD, [&](const oracle::dvec& v) { return loss_at(wF, wR, wB, v); }), g.wD);
    check(oracle::central_diff(wF, [&](const oracle::dvec& v) { return loss_at(v, wR, wB, wD); }), g.wF);
    check(oracle::central_diff(wB, [&](const oracle::dvec& v) { return loss_at(wF, wR, v, wD); }), g.wB);
    // wR is larger; spot-check a slice around selected cells
    oracle::dvec fdR = oracle::central_diff(wR, [&](const oracle::dvec& v) {
        return loss_at(wF, v, wB, wD);
    });
    for (size_t i = 0; i < fdR.size(); ++i) {
        CHECK(oracle::rel_err(fdR[i], g.wR[static_cast<int64_t>(i)]) < 1e-3);
    }
}

TEST_CASE("weight sharing: a translated scene yields identical gradients") {
    ConvGeometry geom;
    geom.field_h = geom.field_w = 3;
    geom.stride_h = geom.stride_w = 1;
    geom.in_h = geom.in_w = 9;
    RsmConfig cfg = conv_cfg(geom, 4, 2, 2);
    Prng rng(37);
    RsmParams p = init_params(cfg, rng);

    auto run = [&](int off_y, int off_x) {
        Tensor img({1, 9, 9});
        Tensor target({1, 9, 9});
        Prng patt(11);
        for (int y = 0; y < 3; ++y) {
            for (int x = 0; x < 3; ++x) {
                img[static_cast<int64_t>(off_y + y) * 9 + off_x + x] = patt.next_float();
                target[static_cast<int64_t>(off_y + y) * 9 + off_x + x] = patt.next_float();
            }
        }
        ConvRsmState s = conv_reset_state(cfg, geom, 1);
        Prng fr(1);
        ConvForwardResult r = conv_forward(p, geom, cfg, s, img, nullptr, false, fr);
        return conv_loss_and_grads(r.trace, r.xHat, target, geom, p);
    };
    RsmGrads a = run(3, 3);
    RsmGrads b = run(4, 4);
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-6));
    for (int64_t i = 0; i < a.wF.numel(); ++i) {
        CHECK(a.wF[i] == doctest::Approx(b.wF[i]).epsilon(1e-4));
    }
    for (int64_t i = 0; i < a.wD.numel(); ++i) {
        CHECK(a.wD[i] == doctest::Approx(b.wD[i]).epsilon(1e-4));
    }
}

TEST_CASE("stack: the lower layer's loss never reaches upper-layer weights") {
    ConvGeometry g1;
    g1.field_h = g1.field_w = 3;
    g1.stride_h = g1.stride_w = 1;
    g1.in_h = g1.in_w = 8;
    g1.pool = 2;
    RsmConfig c1 = conv_cfg(g1, 4, 2, 2);

    ConvGeometry g2;
    g2.field_h = g2.field_w = 2;
    g2.stride_h = g2.stride_w = 1;
    g2.in_h = g2.in_w = 3;   // pooled 6/2 = 3
    g2.in_channels = 8;      // g1 cell count
    RsmConfig c2 = conv_cfg(g2, 3, 2, 1);

    c1.feedback_size = c2.cell_count();

    Prng rng(43);
    RsmStack stack;
    stack.lower = ConvUnit::create(c1, g1, rng);
    stack.upper = ConvUnit::create(c2, g2, rng);
    stack.reset(1);

    Prng sr(5);
    Prng data(9);
    for (int t = 0; t < 3; ++t) {
        stack.step(random_tensor({1, 8, 8}, data, 0.0f, 1.0f), true, sr);
    }
    REQUIRE(stack.upper->has_pending);
    Tensor upper_target({1, 3, 3, 8}, 0.25f);

    // route A: train the upper layer directly
    ConvUnit upper_a = *stack.upper;
    upper_a.train_pending(upper_target);

    // route B: first push a wildly different loss through the lower layer
    ConvUnit upper_b = *stack.upper;
    Tensor hostile({1, 8, 8}, 1.0f);
    stack.lower.train_pending(hostile);
    upper_b.train_pending(upper_target);

    CHECK(std::memcmp(upper_a.params.wF.data(), upper_b.params.wF.data(),
                      sizeof(float) * upper_a.params.wF.numel()) == 0);
    CHECK(std::memcmp(upper_a.params.wR.data(), upper_b.params.wR.data(),
                      sizeof(float) * upper_a.params.wR.numel()) == 0);
    CHECK(std::memcmp(upper_a.params.wD.data(), upper_b.params.wD.data(),
                      sizeof(float) * upper_a.params.wD.numel()) == 0);
}

TEST_CASE("stack without an upper layer equals a single conv unit") {
    ConvGeometry g1;
    g1.field_h = g1.field_w = 3;
    g1.stride_h = g1.stride_w = 1;
    g1.in_h = g1.in_w = 6;
    RsmConfig c1 = conv_cfg(g1, 4, 2, 2);

    Prng rng_a(51), rng_b(51);
    RsmStack stack;
    stack.lower = ConvUnit::create(c1, g1, rng_a);
    stack.reset(1);
    ConvUnit solo = ConvUnit::create(c1, g1, rng_b);
    solo.reset(1);

    Prng sa(3), sb(3);
    Prng data(7);
    for (int t = 0; t < 3; ++t) {
        Tensor f = random_tensor({1, 6, 6}, data, 0.0f, 1.0f);
        RsmStack::StepResult r = stack.step(f, true, sa);

        float solo_loss = solo.train_pending(f);
        ConvForwardResult fr = conv_forward(solo.params, solo.geom, solo.cfg, solo.state, f,
                                            nullptr, true, sb);
        solo.state = fr.state;
        solo.pending_trace = fr.trace;
        solo.pending_xHat = fr.xHat;
        solo.has_pending = true;

        CHECK(r.lower_loss == solo_loss);
        CHECK(std::memcmp(r.prediction.data(), fr.xHat.data(),
                          sizeof(float) * fr.xHat.numel()) == 0);
    }
}

TEST_CASE("self-loop generation clamps and honors the step count") {
    ConvGeometry g1;
    g1.field_h = g1.field_w = 3;
    g1.stride_h = g1.stride_w = 1;
    g1.in_h = g1.in_w = 6;
    RsmConfig c1 = conv_cfg(g1, 4, 2, 2);
    Prng rng(61);
    RsmStack stack;
    stack.lower = ConvUnit::create(c1, g1, rng);
    stack.reset(1);

    Prng sr(1);
    std::vector<Tensor> priming;
    Prng data(3);
    for (int t = 0; t < 3; ++t) priming.push_back(random_tensor({1, 6, 6}, data, 0.0f, 1.0f));

    std::vector<Tensor> none = self_loop_generate(stack, priming, 0, sr);
    CHECK(none.empty());

    stack.reset(1);
    Prng sr2(1);
    std::vector<Tensor> frames = self_loop_generate(stack, priming, 5, sr2);
    CHECK(frames.size() == 5);
    for (const Tensor& f : frames) {
        for (int64_t i = 0; i < f.numel(); ++i) {
            CHECK(f[i] >= 0.0f);
            CHECK(f[i] <= 1.0f);
        }
    }
}
