#include <cmath>
#include <optional>
#include <vector>

#include "doctest.h"
#include "temposteer/losses.hpp"
#include "temposteer/rng.hpp"
#include "test_util.hpp"

using namespace temposteer;
using testutil::grad_rel_err;
using testutil::random_binary_mask;
using testutil::random_doubles;

namespace {

// Independent scalar-loop oracles, written directly from the definitions.
std::vector<double> minmax_oracle(const std::vector<double>& a) {
    double lo = a[0], hi = a[0];
    for (double v : a) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<double> out(a.size(), 0.0);
    if (hi > lo)
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] - lo) / (hi - lo);
    return out;
}

std::optional<double> pearson_oracle(const std::vector<double>& m, const std::vector<double>& a) {
    const std::vector<double> an = minmax_oracle(a);
    const std::size_t n = m.size();
    double mm = 0, ma = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mm += m[i];
        ma += an[i];
    }
    mm /= double(n);
    ma /= double(n);
    double cov = 0, vm = 0, va = 0;
    for (std::size_t i = 0; i < n; ++i) {
        cov += (m[i] - mm) * (an[i] - ma);
        vm += (m[i] - mm) * (m[i] - mm);
        va += (an[i] - ma) * (an[i] - ma);
    }
    if (vm <= 0 || va <= 0) return std::nullopt;
    return -cov / (std::sqrt(vm) * std::sqrt(va));
}

double energy_oracle(const std::vector<double>& m, const std::vector<double>& a, double tau) {
    double pos = 0, neg = 0;
    for (std::size_t i = 0; i < m.size(); ++i) (m[i] > tau ? pos : neg) += a[i];
    return (neg - pos) / double(m.size());
}

double entropy_oracle(const MapSequence& maps, const std::vector<double>& m, double tau) {
    double acc = 0;
    for (int j = 0; j < maps.frames; ++j) {
        if (m[std::size_t(j)] <= tau) continue;
        const double* f = maps.frame(j);
        double s = 0;
        for (std::size_t c = 0; c < maps.cells(); ++c) s += f[c];
        if (s <= 0) continue;
        double h = 0;
        for (std::size_t c = 0; c < maps.cells(); ++c) {
            const double p = f[c] / s;
            if (p > 0) h -= p * std::log(p);
        }
        acc += h;
    }
    return acc / double(maps.frames);
}

double spatial_oracle(const MapSequence& ref, const MapSequence& cur) {
    double acc = 0;
    for (std::size_t c = 0; c < ref.cells(); ++c) {
        double d = 0;
        for (int j = 0; j < ref.frames; ++j) d += ref.frame(j)[c] - cur.frame(j)[c];
        acc += d * d;
    }
    return acc;
}

double total_oracle(const std::vector<TokenLossInput>& tokens, const LossWeights& w) {
    double acc = 0;
    for (const auto& tk : tokens) {
        std::vector<double> sig(std::size_t(tk.maps.frames), 0.0);
        for (int j = 0; j < tk.maps.frames; ++j)
            for (std::size_t c = 0; c < tk.maps.cells(); ++c) sig[std::size_t(j)] += tk.maps.frame(j)[c];
        double t = 0;
        if (w.use_corr) {
            const auto r = pearson_oracle(tk.mask, sig);
            if (r) t += *r;
        }
        if (w.use_energy) t += w.lambda1 * energy_oracle(tk.mask, sig, w.tau);
        if (w.use_entropy) t += w.lambda2 * entropy_oracle(tk.maps, tk.mask, w.tau);
        if (w.use_spatial) t += w.lambda3 * spatial_oracle(tk.ref_maps, tk.maps);
        acc += t;
    }
    return acc / double(tokens.size());
}

MapSequence random_maps(Rng& rng, int frames, int h, int w, double lo = 0.01, double hi = 1.0) {
    MapSequence ms;
    ms.frames = frames;
    ms.h = h;
    ms.w = w;
    ms.data = random_doubles(rng, std::size_t(frames) * h * w, lo, hi);
    return ms;
}

TokenLossInput random_token(Rng& rng, int frames = 6, int h = 3, int w = 3) {
    TokenLossInput tk;
    tk.mask = random_binary_mask(rng, std::size_t(frames));
    tk.mask[0] = 0.0;
    tk.mask[1] = 1.0;  // keep the mask variance nonzero so corr is defined
    tk.maps = random_maps(rng, frames, h, w);
    tk.ref_maps = random_maps(rng, frames, h, w);
    return tk;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("minmax_normalize frozen examples") {
    CHECK(minmax_normalize({1, 3, 5}) == std::vector<double>{0, 0.5, 1});
    CHECK(minmax_normalize({2, 2, 2}) == std::vector<double>{0, 0, 0});
    const auto n = minmax_normalize({0.1, 0.4, 0.2, 0.9});
    const std::vector<double> want{0, 0.375, 0.125, 1};
    REQUIRE(n.size() == want.size());
    for (std::size_t i = 0; i < n.size(); ++i)
        CHECK(n[i] == doctest::Approx(want[i]).epsilon(1e-12));
    CHECK_THROWS_WITH(minmax_normalize({}), "empty signal");
}

TEST_CASE("pearson_loss frozen examples") {
    CHECK_FALSE(pearson_loss({1, 1, 1, 1}, {0.3, 0.9, 0.2, 0.4}).has_value());
    CHECK(*pearson_loss({0, 0, 1, 1}, {0, 0, 1, 1}) == doctest::Approx(-1.0).epsilon(1e-12));
    const std::vector<double> m{0, 1, 0, 1}, a{0.2, 0.8, 0.1, 0.9};
    CHECK(*pearson_loss(m, a) == doctest::Approx(*pearson_oracle(m, a)).epsilon(1e-12));
    CHECK(*pearson_loss(m, a) < 0);  // positively correlated -> negative loss
    CHECK_THROWS_WITH((void)pearson_loss({0, 1}, {0, 1, 0}), "mask/signal length mismatch");
}

TEST_CASE("energy_loss frozen examples") {
    CHECK(energy_loss({0, 1}, {0.3, 0.7}, 0.5) == doctest::Approx(-0.2).epsilon(1e-12));
    Rng rng(7);
    const auto a = random_doubles(rng, 8);
    double mean = 0;
    for (double v : a) mean += v / 8.0;
    CHECK(energy_loss(std::vector<double>(8, 1.0), a, 0.5) ==
          doctest::Approx(-mean).epsilon(1e-12));
    CHECK(energy_loss(std::vector<double>(8, 0.0), a, 0.5) ==
          doctest::Approx(mean).epsilon(1e-12));
    CHECK_THROWS((void)energy_loss({0, 1}, {0.1}, 0.5));
}

TEST_CASE("entropy_loss frozen examples") {
    MapSequence uniform;
    uniform.frames = 1;
    uniform.h = uniform.w = 4;
    uniform.data.assign(16, 0.25);
    CHECK(entropy_loss(uniform, {1.0}, 0.5) == doctest::Approx(std::log(16.0)).epsilon(1e-12));

    MapSequence onehot = uniform;
    onehot.data.assign(16, 0.0);
    onehot.data[5] = 1.0;
    CHECK(entropy_loss(onehot, {1.0}, 0.5) == doctest::Approx(0.0));
    CHECK(entropy_loss(uniform, {0.0}, 0.5) == doctest::Approx(0.0));

    MapSequence bad = uniform;
    bad.data[3] = -0.1;
    CHECK_THROWS_WITH((void)entropy_loss(bad, {1.0}, 0.5), "invalid attention map");
}

TEST_CASE("spatial_consistency_loss frozen examples") {
    Rng rng(8);
    const MapSequence ref = random_maps(rng, 4, 3, 3);
    CHECK(spatial_consistency_loss(ref, ref) == doctest::Approx(0.0));

    // cur frame-sums = ref frame-sums + delta everywhere -> delta^2 * cells
    MapSequence cur = ref;
    const double delta = 0.37;
    for (std::size_t c = 0; c < cur.cells(); ++c) cur.frame(0)[c] += delta;
    CHECK(spatial_consistency_loss(ref, cur) ==
          doctest::Approx(delta * delta * double(ref.cells())).epsilon(1e-12));

    const MapSequence other = random_maps(rng, 4, 3, 3);
    CHECK(spatial_consistency_loss(ref, other) ==
          doctest::Approx(spatial_oracle(ref, other)).epsilon(1e-12));

    MapSequence wrong = random_maps(rng, 4, 3, 2);
    CHECK_THROWS((void)spatial_consistency_loss(ref, wrong));
}

TEST_CASE("total_loss contracts") {
    Rng rng(9);
    LossWeights w;

    // all four terms zero: inactive mask, zero maps (zero signal, zero energy)
    TokenLossInput zero;
    zero.mask.assign(4, 0.0);
    zero.maps = random_maps(rng, 4, 2, 2, 0.0, 0.0);
    zero.ref_maps = zero.maps;
    const LossBreakdown z = total_loss({zero}, w);
    CHECK(z.total == doctest::Approx(0.0).epsilon(1e-12));
    CHECK_FALSE(z.corr.has_value());

    // lambda ablation: weights zero -> total equals correlation alone
    LossWeights corr_only = w;
    corr_only.lambda1 = corr_only.lambda2 = corr_only.lambda3 = 0;
    const TokenLossInput tk = random_token(rng);
    const LossBreakdown b = total_loss({tk}, corr_only);
    CHECK(b.corr.has_value());
    CHECK(b.total == doctest::Approx(*b.corr).epsilon(1e-12));

    // averaging contract over two tokens
    const TokenLossInput tk2 = random_token(rng);
    const double x = total_loss({tk}, w).total;
    const double y = total_loss({tk2}, w).total;
    CHECK(total_loss({tk, tk2}, w).total == doctest::Approx((x + y) / 2).epsilon(1e-9));

    // breakdown identity per token
    const LossBreakdown both = total_loss({tk, tk2}, w);
    for (const LossTerms& t : both.per_token) {
        const double want = (t.corr ? *t.corr : 0.0) + w.lambda1 * t.energy +
                            w.lambda2 * t.entropy + w.lambda3 * t.spatial;
        CHECK(t.total == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("oracle equivalence on 100 random instances per loss") {
    Rng rng(2026);
    for (int i = 0; i < 100; ++i) {
        Rng r = rng.split(std::uint64_t(i));
        const int frames = 3 + int(r.below(8));
        const auto m = random_binary_mask(r, std::size_t(frames));
        const auto a = random_doubles(r, std::size_t(frames));
        const MapSequence maps = random_maps(r, frames, 2 + int(r.below(3)), 2 + int(r.below(3)));
        MapSequence ref = maps;
        ref.data = random_doubles(r, maps.data.size(), 0.01, 1.0);

        const auto pg = pearson_loss(m, a);
        const auto po = pearson_oracle(m, a);
        REQUIRE(pg.has_value() == po.has_value());
        if (pg) CHECK(std::abs(*pg - *po) <= 1e-10);
        CHECK(std::abs(energy_loss(m, a, 0.5) - energy_oracle(m, a, 0.5)) <= 1e-10);
        CHECK(std::abs(entropy_loss(maps, m, 0.5) - entropy_oracle(maps, m, 0.5)) <= 1e-10);
        CHECK(std::abs(spatial_consistency_loss(ref, maps) - spatial_oracle(ref, maps)) <= 1e-10);

        TokenLossInput tk{m, maps, ref};
        LossWeights w;
        w.lambda1 = r.uniform(0, 2);
        w.lambda2 = r.uniform(0, 2);
        w.lambda3 = r.uniform(0, 2);
        CHECK(std::abs(total_loss({tk}, w).total - total_oracle({tk}, w)) <= 1e-10);
    }
}

TEST_CASE("pearson affine invariance on 1000 random instances") {
    Rng rng(31);
    int defined = 0;
    for (int i = 0; i < 1000; ++i) {
        Rng r = rng.split(std::uint64_t(i));
        const int n = 4 + int(r.below(10));
        const auto m = random_binary_mask(r, std::size_t(n));
        const auto a = random_doubles(r, std::size_t(n));
        std::vector<double> b(a.size());
        const double alpha = r.uniform(0.1, 5.0), beta = r.uniform(-3.0, 3.0);
        for (std::size_t j = 0; j < a.size(); ++j) b[j] = alpha * a[j] + beta;
        const auto p1 = pearson_loss(m, a);
        const auto p2 = pearson_loss(m, b);
        REQUIRE(p1.has_value() == p2.has_value());
        if (p1) {
            CHECK(std::abs(*p1 - *p2) <= 1e-9);
            CHECK(std::abs(*p1) <= 1.0 + 1e-12);
            ++defined;
        }
    }
    CHECK(defined > 500);  // the property must actually be exercised
}

TEST_CASE("energy complement antisymmetry on 1000 random binary masks") {
    Rng rng(32);
    for (int i = 0; i < 1000; ++i) {
        Rng r = rng.split(std::uint64_t(i));
        const int n = 2 + int(r.below(12));
        const auto m = random_binary_mask(r, std::size_t(n));
        const auto a = random_doubles(r, std::size_t(n));
        std::vector<double> mc(m.size());
        for (std::size_t j = 0; j < m.size(); ++j) mc[j] = 1.0 - m[j];
        const double tau = r.uniform(0.05, 0.95);
        CHECK(std::abs(energy_loss(mc, a, tau) + energy_loss(m, a, tau)) <= 1e-12);
    }
}

TEST_CASE("per-term analytic gradients match central differences") {
    Rng rng(41);
    const double h = 1e-6;
    for (int i = 0; i < 10; ++i) {
        Rng r = rng.split(std::uint64_t(i));
        const int frames = 6;
        auto m = random_binary_mask(r, frames);
        m[0] = 0;
        m[1] = 1;  // guarantee mask variance
        auto a = random_doubles(r, frames, 0.05, 1.0);

        std::vector<double> ga;
        (void)pearson_loss_grad(m, a, &ga);
        std::vector<double> ge;
        (void)energy_loss_grad(m, a, 0.5, &ge);
        for (int j = 0; j < frames; ++j) {
            auto ap = a, am = a;
            ap[std::size_t(j)] += h;
            am[std::size_t(j)] -= h;
            const double fd_p = (*pearson_loss(m, ap) - *pearson_loss(m, am)) / (2 * h);
            const double fd_e = (energy_loss(m, ap, 0.5) - energy_loss(m, am, 0.5)) / (2 * h);
            CHECK(grad_rel_err(ga[std::size_t(j)], fd_p, 1e-6) < 1e-4);
            CHECK(grad_rel_err(ge[std::size_t(j)], fd_e, 1e-6) < 1e-4);
        }

        const MapSequence maps = random_maps(r, frames, 3, 2);
        const MapSequence ref = random_maps(r, frames, 3, 2);
        std::vector<double> gh;
        (void)entropy_loss_grad(maps, m, 0.5, &gh);
        std::vector<double> gs;
        (void)spatial_consistency_loss_grad(ref, maps, &gs);
        for (std::size_t c = 0; c < maps.data.size(); c += 3) {
            MapSequence mp = maps, mn = maps;
            mp.data[c] += h;
            mn.data[c] -= h;
            const double fd_h = (entropy_loss(mp, m, 0.5) - entropy_loss(mn, m, 0.5)) / (2 * h);
            const double fd_s = (spatial_consistency_loss(ref, mp) -
                                 spatial_consistency_loss(ref, mn)) / (2 * h);
            CHECK(grad_rel_err(gh[c], fd_h, 1e-6) < 1e-4);
            CHECK(grad_rel_err(gs[c], fd_s, 1e-6) < 1e-4);
        }
    }
}

TEST_CASE("total_loss gradient matches central differences (T'=8, 4x4 maps)") {
    Rng rng(42);
    const double h = 1e-5;
    int checked = 0;
    for (int inst = 0; inst < 20; ++inst) {
        Rng r = rng.split(std::uint64_t(inst));
        std::vector<TokenLossInput> tokens;
        const int ntok = 1 + int(r.below(2));
        for (int k = 0; k < ntok; ++k) {
            TokenLossInput tk;
            tk.mask = random_binary_mask(r, 8);
            tk.mask[0] = 0;
            tk.mask[7] = 1;
            tk.maps = random_maps(r, 8, 4, 4, 0.02, 1.0);
            tk.ref_maps = random_maps(r, 8, 4, 4, 0.02, 1.0);
            tokens.push_back(std::move(tk));
        }
        LossWeights w;
        w.lambda1 = r.uniform(0.2, 2.0);
        w.lambda2 = r.uniform(0.2, 2.0);
        w.lambda3 = r.uniform(0.2, 2.0);

        std::vector<std::vector<double>> grads;
        (void)total_loss_grad(tokens, w, &grads);
        REQUIRE(grads.size() == tokens.size());
        for (std::size_t tki = 0; tki < tokens.size(); ++tki) {
            // probe a spread of cells rather than all 128 per instance
            for (std::size_t c = r.below(4); c < tokens[tki].maps.data.size(); c += 17) {
                auto tp = tokens, tn = tokens;
                tp[tki].maps.data[c] += h;
                tn[tki].maps.data[c] -= h;
                const double fd = (total_loss(tp, w).total - total_loss(tn, w).total) / (2 * h);
                CHECK(grad_rel_err(grads[tki][c], fd, 1e-5) <= 1e-4);
                ++checked;
            }
        }
    }
    CHECK(checked > 200);
}

TEST_CASE("ablation switches zero out terms and gradients") {
    Rng rng(43);
    const TokenLossInput tk = random_token(rng, 8, 4, 4);
    LossWeights w;
    w.use_entropy = false;
    const LossBreakdown b = total_loss({tk}, w);
    LossWeights full;
    const LossBreakdown fb = total_loss({tk}, full);
    CHECK(fb.entropy > 0);
    CHECK(b.total == doctest::Approx(fb.total - full.lambda2 * fb.entropy).epsilon(1e-9));
}

}  // TEST_SUITE
