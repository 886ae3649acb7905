#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "temposteer/dataset.hpp"
#include "temposteer/diffusion.hpp"
#include "temposteer/renderer.hpp"
#include "test_util.hpp"

using namespace temposteer;

namespace {

DiT small_model(std::uint64_t seed) {
    ModelConfig mc;
    mc.width = 32;
    mc.blocks = 2;
    mc.heads = 2;
    mc.vocab = vocabulary().size();
    DiT m(mc);
    Rng rng(seed);
    m.init_params(rng);
    return m;
}

}  // namespace

TEST_SUITE("diffusion") {

TEST_CASE("cosine schedule is monotone from 1 toward 0") {
    Schedule s(1000);
    CHECK(s.timesteps() == 1000);
    CHECK(s.alpha_bar(0) == doctest::Approx(1.0));
    for (int t = 1; t <= 1000; ++t) {
        CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
        CHECK(s.alpha_bar(t) > 0.0);
    }
    CHECK(s.alpha_bar(1000) < 1e-4);
}

TEST_CASE("codec round trip reproduces the pooled video exactly") {
    SceneScript sc;
    Entity e;
    e.shape = "square";
    e.color = "blue";
    e.x = 12;
    e.y = 20;
    e.on = 4;
    e.off = 16;
    sc.entities.push_back(e);
    const Video v = render(sc);

    ModelConfig mc;
    LatentCodec codec(mc);
    const LatentVideo z = codec.encode(v);
    REQUIRE(int(z.data.size()) == mc.n_v() * mc.channels);
    for (float x : z.data) {
        CHECK(x >= -1.f);
        CHECK(x <= 1.f);
    }

    const Video rt = codec.decode(z);
    CHECK(rt.frames == v.frames);
    CHECK(rt.h == v.h);

    // decode(encode(v)) equals the average-pooled video (independent oracle):
    // latent cell (t', y', x') pools video frames 2t'..2t'+1 over 4x4 patches
    const int fpool = v.frames / mc.latent_t, spool = v.h / mc.latent_h;
    for (int t = 0; t < mc.latent_t; ++t)
        for (int y = 0; y < mc.latent_h; ++y)
            for (int x = 0; x < mc.latent_w; ++x)
                for (int ch = 0; ch < 3; ++ch) {
                    double acc = 0;
                    for (int df = 0; df < fpool; ++df)
                        for (int dy = 0; dy < spool; ++dy)
                            for (int dx = 0; dx < spool; ++dx)
                                acc += v.frame(t * fpool + df)[((y * spool + dy) * v.w +
                                                               (x * spool + dx)) * 3 + ch];
                    acc /= double(fpool) * spool * spool;
                    const float got = rt.frame(t * fpool)[((y * spool) * v.w + x * spool) * 3 + ch];
                    CHECK(double(got) == doctest::Approx(acc).epsilon(1e-5));
                }

    // idempotence up to float pooling arithmetic
    const LatentVideo z2 = codec.encode(rt);
    REQUIRE(z2.data.size() == z.data.size());
    for (std::size_t i = 0; i < z.data.size(); ++i)
        CHECK(std::abs(z2.data[i] - z.data[i]) <= 1e-6f);
}

TEST_CASE("step_times is a descending ladder ending above 0") {
    DiT m = small_model(11);
    Sampler s(m, m.config().train_timesteps);
    const auto ts = s.step_times(50);
    REQUIRE(ts.size() == 50);
    CHECK(ts.front() == 1000);
    for (std::size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] < ts[i - 1]);
    CHECK(ts.back() >= 1);
    CHECK_THROWS(s.step_times(0));
    CHECK_THROWS(s.step_times(1001));
}

TEST_CASE("initial noise and generation are seed-deterministic") {
    DiT m = small_model(12);
    Sampler s(m, m.config().train_timesteps);
    const auto za = s.initial_noise(99);
    const auto zb = s.initial_noise(99);
    const auto zc = s.initial_noise(100);
    CHECK(za.data == zb.data);
    CHECK(za.data != zc.data);

    const auto tokens = pad_tokens({"a", "red", "circle"}, m.config().max_prompt);
    SampleConfig cfg;
    cfg.steps = 5;
    const auto g1 = s.generate(tokens, 7, cfg);
    const auto g2 = s.generate(tokens, 7, cfg);
    const auto g3 = s.generate(tokens, 8, cfg);
    CHECK(g1.data == g2.data);
    CHECK(g1.data != g3.data);
    CHECK(g1.step == 0);
}

TEST_CASE("guidance 1 skips the unconditional pass without changing semantics") {
    DiT m = small_model(13);
    Sampler s(m, m.config().train_timesteps);
    const auto tokens = pad_tokens({"a", "red", "circle"}, m.config().max_prompt);
    SampleConfig cfg;
    cfg.steps = 4;
    cfg.guidance = 1.0;
    const auto g = s.generate(tokens, 3, cfg);
    CHECK(g.data.size() == s.initial_noise(3).data.size());
    for (float x : g.data) CHECK(std::isfinite(x));
}

TEST_CASE("attention capture covers every sampling step") {
    DiT m = small_model(14);
    Sampler s(m, m.config().train_timesteps);
    const auto tokens = pad_tokens({"a", "red", "circle"}, m.config().max_prompt);
    SampleConfig cfg;
    cfg.steps = 6;
    std::vector<AttentionStack> att;
    (void)s.generate(tokens, 4, cfg, &att);
    REQUIRE(att.size() == 6);
    for (const auto& a : att) CHECK(a.size() == std::size_t(m.config().blocks) *
                                                    m.config().heads * m.config().n_v() *
                                                    m.config().max_prompt);
}

TEST_CASE("checkpoint round trip preserves weights, config and vocabulary") {
    DiT m = small_model(15);
    const auto path = std::filesystem::temp_directory_path() / "temposteer_test.ckpt";
    save_checkpoint(path.string(), m, vocabulary().words());
    const Checkpoint ck = load_checkpoint(path.string());
    CHECK(ck.params == m.params());
    CHECK(ck.model_cfg.width == m.config().width);
    CHECK(ck.model_cfg.blocks == m.config().blocks);
    CHECK(ck.vocab == vocabulary().words());
    auto m2 = model_from_checkpoint(ck);
    CHECK(m2->weight_checksum() == m.weight_checksum());
    std::filesystem::remove(path);

    CHECK_THROWS((void)load_checkpoint("/nonexistent/nothing.ckpt"));
}

TEST_CASE("one training step lowers the x0-prediction loss on a tiny set") {
    DiT m = small_model(16);
    LatentCodec codec(m.config());

    std::vector<TrainExample> data;
    for (int i = 0; i < 4; ++i) {
        SceneScript sc;
        Entity e;
        e.shape = vocabulary().shapes()[std::size_t(i) % 6];
        e.color = vocabulary().colors()[std::size_t(i) % 4];
        e.x = 16;
        e.y = 16;
        e.on = 0;
        e.off = 16;
        sc.entities.push_back(e);
        TrainExample ex;
        ex.latent = codec.encode(render(sc)).data;
        ex.tokens = pad_tokens(prompt_appear(e.color, e.shape), m.config().max_prompt);
        data.push_back(std::move(ex));
    }

    TrainConfig tc;
    tc.steps = 30;
    tc.batch = 4;
    tc.seed = 3;
    const TrainStats stats = train(m, data, tc);
    REQUIRE_FALSE(stats.epoch_losses.empty());
    CHECK(stats.epoch_losses.back() < stats.epoch_losses.front());
    CHECK(std::isfinite(stats.final_loss));

    CHECK_THROWS((void)train(m, {}, tc));
}

TEST_CASE("prompt token padding and special ids") {
    const ModelConfig mc;
    const auto t = pad_tokens({"a", "red", "circle"}, 16);
    REQUIRE(t.size() == 16);
    CHECK(t[1] == vocabulary().id("red"));
    for (std::size_t i = 3; i < 16; ++i) CHECK(t[i] == pad_token_id());
    CHECK(uncond_token_id() != pad_token_id());
    (void)mc;
}

}  // TEST_SUITE
