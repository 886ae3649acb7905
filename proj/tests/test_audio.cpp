#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "temposteer/audio.hpp"
#include "temposteer/rng.hpp"
#include "temposteer/wav.hpp"
#include "test_util.hpp"

using namespace temposteer;

namespace {

constexpr int kRate = 16000;

AudioClip silence(int samples) {
    AudioClip c;
    c.sample_rate = kRate;
    c.samples.assign(std::size_t(samples), 0.f);
    return c;
}

// short rectangular click at sample n
AudioClip impulses_at(const std::vector<int>& positions, int samples) {
    AudioClip c = silence(samples);
    for (int n : positions)
        for (int k = 0; k < 8 && n + k < samples; ++k) c.samples[std::size_t(n + k)] = 1.f;
    return c;
}

// sample index at the center of pooled mask frame j
int frame_center(int j, int frames, int samples) {
    return int((double(j) + 0.5) / frames * samples);
}

int argmax(const std::vector<double>& v) {
    return int(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

TEST_SUITE("audio") {

TEST_CASE("digital silence gives a zero envelope and a zero mask") {
    const AudioClip c = silence(2 * kRate);
    EnvelopeParams p;
    const auto env = onset_envelope(c, p);
    REQUIRE_FALSE(env.empty());
    for (double v : env) CHECK(v == 0.0);
    const TemporalMask mask = audio_to_mask(c, 8, p);
    REQUIRE(mask.values.size() == 8);
    for (double v : mask.values) CHECK(v == 0.0);
}

TEST_CASE("a single impulse peaks the envelope in its own frame") {
    EnvelopeParams p;
    const int n = 17000;
    const AudioClip c = impulses_at({n}, 2 * kRate);
    const auto env = onset_envelope(c, p);
    const int best = argmax(env);
    // the peak frame's window must contain the impulse
    CHECK(best * p.hop <= n);
    CHECK(n < best * p.hop + p.window);
}

TEST_CASE("impulse mask is exactly 1 at the impulse frame, neighbors below") {
    EnvelopeParams p;
    const int frames = 8, len = 2 * kRate;
    for (int j : {1, 3, 6}) {
        const AudioClip c = impulses_at({frame_center(j, frames, len)}, len);
        const TemporalMask mask = audio_to_mask(c, frames, p);
        REQUIRE(int(mask.values.size()) == frames);
        CHECK(argmax(mask.values) == j);
        CHECK(mask.values[std::size_t(j)] == doctest::Approx(1.0));
        for (int k = 0; k < frames; ++k) {
            CHECK(mask.values[std::size_t(k)] >= 0.0);
            CHECK(mask.values[std::size_t(k)] <= 1.0);
            if (k != j) CHECK(mask.values[std::size_t(k)] < mask.values[std::size_t(j)]);
        }
    }
}

TEST_CASE("two equal impulses both peak near 1") {
    EnvelopeParams p;
    const int frames = 8, len = 2 * kRate;
    const AudioClip c =
        impulses_at({frame_center(2, frames, len), frame_center(5, frames, len)}, len);
    const TemporalMask mask = audio_to_mask(c, frames, p);
    CHECK(mask.values[2] >= 0.99);
    CHECK(mask.values[5] >= 0.99);
    for (int k : {0, 1, 3, 4, 6, 7}) CHECK(mask.values[std::size_t(k)] < 0.99);
}

TEST_CASE("a stationary tone has near-zero flux after its onset") {
    AudioClip c = silence(2 * kRate);
    for (std::size_t i = 0; i < c.samples.size(); ++i)
        c.samples[i] = 0.5f * std::sin(2.0 * 3.14159265358979 * 440.0 * double(i) / kRate);
    EnvelopeParams p;
    const auto env = onset_envelope(c, p);
    const double peak = *std::max_element(env.begin(), env.end());
    REQUIRE(peak > 0);
    // skip the attack frames; the steady state must be quiet
    for (std::size_t i = 8; i < env.size(); ++i) CHECK(env[i] < 0.02 * peak);
}

TEST_CASE("pool_to_frames bucket arithmetic") {
    const std::vector<double> e{1, 2, 3, 4, 5, 6};
    CHECK(pool_to_frames(e, 6) == e);
    CHECK(pool_to_frames(e, 3) == std::vector<double>{1.5, 3.5, 5.5});
    CHECK(pool_to_frames({2, 2, 2, 2}, 3) == std::vector<double>{2, 2, 2});
    CHECK_THROWS((void)pool_to_frames(e, 0));
}

TEST_CASE("gaussian_smooth preserves constants and stays in range") {
    const std::vector<double> c(10, 0.4);
    const auto sc = gaussian_smooth(c, 1.0);
    for (double v : sc) CHECK(v == doctest::Approx(0.4).epsilon(1e-12));

    Rng rng(77);
    const auto x = testutil::random_doubles(rng, 16);
    const auto sm = gaussian_smooth(x, 1.5);
    const double lo = *std::min_element(x.begin(), x.end());
    const double hi = *std::max_element(x.begin(), x.end());
    for (double v : sm) {
        CHECK(v >= lo - 1e-12);
        CHECK(v <= hi + 1e-12);
    }
}

TEST_CASE("peak preservation: values at or above tau pass through unsmoothed") {
    EnvelopeParams p;
    const int frames = 8, len = 2 * kRate;
    Rng rng(78);
    for (int trial = 0; trial < 5; ++trial) {
        Rng r = rng.split(std::uint64_t(trial));
        std::vector<int> pos;
        for (int k = 0; k < 2; ++k) pos.push_back(frame_center(int(r.below(frames)), frames, len));
        const AudioClip c = impulses_at(pos, len);
        const auto shat = minmax_normalize(pool_to_frames(onset_envelope(c, p), frames));
        const TemporalMask mask = audio_to_mask(c, frames, p);
        for (int j = 0; j < frames; ++j)
            if (shat[std::size_t(j)] >= p.tau_audio)
                CHECK(mask.values[std::size_t(j)] == doctest::Approx(shat[std::size_t(j)]));
    }
}

TEST_CASE("shifting the impulse by one pooled frame shifts the mask argmax") {
    EnvelopeParams p;
    const int frames = 8, len = 2 * kRate;
    for (int j = 1; j + 1 < frames; ++j) {
        const TemporalMask a = audio_to_mask(impulses_at({frame_center(j, frames, len)}, len),
                                             frames, p);
        const TemporalMask b = audio_to_mask(
            impulses_at({frame_center(j + 1, frames, len)}, len), frames, p);
        CHECK(argmax(b.values) == argmax(a.values) + 1);
    }
}

TEST_CASE("error cases") {
    EnvelopeParams p;
    CHECK_THROWS_WITH((void)onset_envelope(AudioClip{{}, kRate}, p), "empty audio clip");
    CHECK_THROWS((void)onset_envelope(silence(100), p));  // shorter than one window
    EnvelopeParams bad = p;
    bad.hop = 0;
    CHECK_THROWS((void)onset_envelope(silence(2 * kRate), bad));
    bad = p;
    bad.window = 1000;  // not a power of two
    CHECK_THROWS((void)onset_envelope(silence(2 * kRate), bad));
}

TEST_CASE("wav round trip and resampling") {
    Rng rng(79);
    AudioClip c;
    c.sample_rate = 8000;
    c.samples.resize(4000);
    for (auto& s : c.samples) s = float(rng.uniform(-0.9, 0.9));

    const auto path = std::filesystem::temp_directory_path() / "temposteer_test.wav";
    write_wav(path.string(), c);
    const AudioClip back = read_wav(path.string());
    REQUIRE(back.sample_rate == 8000);
    REQUIRE(back.samples.size() == c.samples.size());
    for (std::size_t i = 0; i < c.samples.size(); ++i)
        CHECK(std::abs(back.samples[i] - c.samples[i]) <= 1.0f / 16384.0f);
    std::filesystem::remove(path);

    const AudioClip up = resample_linear(c, 16000);
    CHECK(up.sample_rate == 16000);
    CHECK(std::abs(int(up.samples.size()) - 8000) <= 2);
    CHECK_THROWS((void)read_wav("/nonexistent/missing.wav"));
}

}  // TEST_SUITE
