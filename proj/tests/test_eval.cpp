#include <cmath>
#include <filesystem>
#include <set>
#include <vector>

#include "doctest.h"
#include "temposteer/evalmetrics.hpp"
#include "temposteer/renderer.hpp"
#include "temposteer/rng.hpp"
#include "test_util.hpp"

using namespace temposteer;

namespace {

SceneScript one_entity(const std::string& shape, const std::string& color, int on, int off,
                       float x = 16, float y = 16) {
    SceneScript sc;
    Entity e;
    e.shape = shape;
    e.color = color;
    e.x = x;
    e.y = y;
    e.on = on;
    e.off = off;
    sc.entities.push_back(e);
    return sc;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("sample_indices spacing and deduplication") {
    const auto all = sample_indices(20, 20);
    REQUIRE(all.size() == 20);
    for (int i = 0; i < 20; ++i) CHECK(all[std::size_t(i)] == i + 1);

    const auto sparse = sample_indices(16, 20);
    CHECK(sparse.size() <= 16);
    CHECK(sparse.front() == 1);
    CHECK(sparse.back() == 16);
    for (std::size_t i = 1; i < sparse.size(); ++i) CHECK(sparse[i] > sparse[i - 1]);

    const auto two = sample_indices(100, 2);
    CHECK(two == std::vector<int>{1, 100});
}

TEST_CASE("detector is exact on every shape-color combination") {
    for (const auto& s : vocabulary().shapes())
        for (const auto& c : vocabulary().colors()) {
            const Video v = render(one_entity(s, c, 0, 16));
            const auto det = detect_frame(v, 0);
            REQUIRE(det.size() == 1);
            CHECK(det[0].shape == s);
            CHECK(det[0].color == c);
            CHECK(det[0].iou == doctest::Approx(1.0));
        }
    const Video blank = render(SceneScript{});
    CHECK(detect_frame(blank, 0).empty());
}

TEST_CASE("detector reproduces 100 random scripts with full frame agreement") {
    Rng rng(401);
    int frames_ok = 0, frames_total = 0;
    for (int i = 0; i < 100; ++i) {
        Rng r = rng.split(std::uint64_t(i));
        SceneScript sc;
        Entity e;
        e.shape = vocabulary().shapes()[r.below(6)];
        e.color = vocabulary().colors()[r.below(4)];
        e.x = float(r.uniform(6.5, 24.5));
        e.y = float(r.uniform(6.5, 24.5));
        e.on = int(r.below(12));
        e.off = 16;
        e.verb = vocabulary().verbs()[r.below(4)];
        e.move_on = int(r.below(4)) * 4;
        e.move_off = e.move_on + 4;
        sc.entities.push_back(e);
        const Video v = render(sc);
        for (int f = 0; f < v.frames; ++f) {
            const auto det = detect_frame(v, f);
            const bool want = f >= e.on;
            bool got = false;
            for (const auto& d : det) got |= d.shape == e.shape && d.color == e.color;
            ++frames_total;
            frames_ok += int(got == want && int(det.size()) == (want ? 1 : 0));
        }
    }
    CHECK(frames_ok == frames_total);
}

TEST_CASE("presence matching accepts color-only and color-shape labels") {
    const Video v = render(one_entity("ring", "green", 0, 16));
    const PresenceSeries s = oracle_detect(v, {1});
    CHECK(s.present(0, "green ring"));
    CHECK(s.present(0, "green"));
    CHECK_FALSE(s.present(0, "red"));
    CHECK_FALSE(s.present(0, "green circle"));
}

TEST_CASE("temporal_accuracy frozen examples with 20 samples") {
    std::vector<double> mask(8, 0.0);
    for (int j = 4; j < 8; ++j) mask[std::size_t(j)] = 1.0;  // active second half

    // object present in every frame
    const Video always = render(one_entity("circle", "red", 0, 16));
    const auto sa = oracle_detect(always, sample_indices(always.frames, 20));
    const auto accA = temporal_accuracy(sa, "red circle", mask, always.frames);
    CHECK(accA.overall == doctest::Approx(0.5));
    CHECK(accA.absence == doctest::Approx(0.0));
    CHECK(accA.presence == doctest::Approx(1.0));

    // object absent everywhere
    const Video never = render(SceneScript{});
    const auto sn = oracle_detect(never, sample_indices(never.frames, 20));
    const auto accN = temporal_accuracy(sn, "red circle", mask, never.frames);
    CHECK(accN.overall == doctest::Approx(0.5));
    CHECK(accN.absence == doctest::Approx(1.0));
    CHECK(accN.presence == doctest::Approx(0.0));

    // detections exactly matching the mask
    const Video timed = render(one_entity("circle", "red", 8, 16));
    const auto st = oracle_detect(timed, sample_indices(timed.frames, 20));
    const auto accT = temporal_accuracy(st, "red circle", mask, timed.frames);
    CHECK(accT.overall == doctest::Approx(1.0));
    CHECK(accT.absence == doctest::Approx(1.0));
    CHECK(accT.presence == doctest::Approx(1.0));
}

TEST_CASE("vacuous conditional accuracies report 1") {
    const Video v = render(one_entity("circle", "red", 0, 16));
    const auto s = oracle_detect(v, sample_indices(v.frames, 20));
    const auto acc = temporal_accuracy(s, "red circle", std::vector<double>(8, 1.0), v.frames);
    CHECK(acc.inactive_frames == 0);
    CHECK(acc.absence == doctest::Approx(1.0));
    CHECK(acc.overall == doctest::Approx(1.0));
}

TEST_CASE("metric decomposition identity on random instances") {
    Rng rng(402);
    for (int i = 0; i < 50; ++i) {
        Rng r = rng.split(std::uint64_t(i));
        const int on = int(r.below(12));
        const Video v = render(one_entity(vocabulary().shapes()[r.below(6)],
                                          vocabulary().colors()[r.below(4)], on, 16));
        std::vector<double> mask(8, 0.0);
        const int mon = int(r.below(8));
        for (int j = mon; j < 8; ++j) mask[std::size_t(j)] = 1.0;
        const auto s = oracle_detect(v, sample_indices(v.frames, 20));
        const auto acc = temporal_accuracy(s, "anything", mask, v.frames);
        const int total = acc.inactive_frames + acc.active_frames;
        REQUIRE(total > 0);
        const double recomposed = (acc.absence * acc.inactive_frames +
                                   acc.presence * acc.active_frames) / double(total);
        CHECK(std::abs(acc.overall - recomposed) <= 1e-9);
    }
}

TEST_CASE("oracle soundness: GT renders score exactly 100% against their own mask") {
    Rng rng(403);
    for (int i = 0; i < 20; ++i) {
        Rng r = rng.split(std::uint64_t(i));
        const int lat_on = 1 + int(r.below(6));  // latent-aligned onset
        const std::string shape = vocabulary().shapes()[r.below(6)];
        const std::string color = vocabulary().colors()[r.below(4)];
        const Video v = render(one_entity(shape, color, 2 * lat_on, 16));
        std::vector<double> mask(8, 0.0);
        for (int j = lat_on; j < 8; ++j) mask[std::size_t(j)] = 1.0;
        const auto s = oracle_detect(v, sample_indices(v.frames, 20));
        const auto acc = temporal_accuracy(s, color + " " + shape, mask, v.frames);
        CHECK(acc.overall == doctest::Approx(1.0));
    }
}

TEST_CASE("movement metric frozen examples") {
    // burst only in second 3 (frames 12..15 of a 16-frame 4fps video)
    SceneScript sc;
    Entity e;
    e.shape = "square";
    e.color = "blue";
    e.x = 8;
    e.y = 16;
    e.on = 0;
    e.off = 16;
    e.verb = "slides";
    e.move_on = 12;
    e.move_off = 16;
    sc.entities.push_back(e);
    const MovementResult burst = movement_accuracy(render(sc), 3);
    CHECK(burst.argmax_second == 3);
    CHECK(burst.correct);
    REQUIRE(burst.per_second.size() == 4);
    CHECK(burst.per_second[3] > burst.per_second[1]);

    // static video: all magnitudes zero, earliest-second tie break
    const MovementResult still = movement_accuracy(render(one_entity("circle", "red", 0, 16)), 0);
    CHECK(still.argmax_second == 0);
    CHECK(still.correct);
    CHECK_FALSE(movement_accuracy(render(one_entity("circle", "red", 0, 16)), 2).correct);

    // degenerate: one-frame video
    Video tinyv;
    tinyv.frames = 1;
    tinyv.h = tinyv.w = 32;
    tinyv.data.assign(32 * 32 * 3, 0.f);
    CHECK_THROWS((void)movement_accuracy(tinyv, 0));
}

TEST_CASE("movement argmax equals the scripted burst second for 50 random scripts") {
    Rng rng(404);
    int ok = 0;
    for (int i = 0; i < 50; ++i) {
        Rng r = rng.split(std::uint64_t(i));
        SceneScript sc;
        Entity e;
        e.shape = vocabulary().shapes()[r.below(6)];
        e.color = vocabulary().colors()[r.below(4)];
        e.x = float(r.uniform(8.5, 23.5));
        e.y = float(r.uniform(8.5, 23.5));
        e.on = 0;
        e.off = 16;
        e.verb = vocabulary().verbs()[r.below(4)];
        const int second = int(r.below(4));
        e.move_on = second * 4;
        e.move_off = e.move_on + 4;
        sc.entities.push_back(e);
        ok += int(movement_accuracy(render(sc), second).correct);
    }
    CHECK(ok == 50);
}

TEST_CASE("suites are deterministic, latent-aligned, and round-trip through JSONL") {
    const int latent_t = 8;
    const auto one = one_object_suite(12, 5, latent_t);
    REQUIRE(one.size() == 12);
    for (const auto& it : one) {
        CHECK(it.kind == "one-object");
        REQUIRE(int(it.mask.size()) == latent_t);
        CHECK(it.background_label.empty());
        // mask is a latent-aligned step: inactive then active through the end
        int first = latent_t;
        for (int j = 0; j < latent_t; ++j)
            if (it.mask[std::size_t(j)] > 0.5) {
                first = j;
                break;
            }
        CHECK(first >= 1);
        CHECK(first <= latent_t - 2);
        for (int j = first; j < latent_t; ++j) CHECK(it.mask[std::size_t(j)] == 1.0);
    }
    CHECK(one_object_suite(12, 5, latent_t)[3].prompt == one[3].prompt);

    const auto two = two_object_suite(8, 5, latent_t);
    for (const auto& it : two) {
        CHECK_FALSE(it.background_label.empty());
        CHECK(it.background_label != it.eval_label);
    }

    const auto mv = movement_suite(8, 5, latent_t);
    for (const auto& it : mv) {
        CHECK(it.kind == "movement");
        CHECK(it.target_second >= 0);
        CHECK(it.target_second < 4);
    }

    const auto path = std::filesystem::temp_directory_path() / "temposteer_suite.jsonl";
    save_suite(path.string(), two);
    const auto back = load_suite(path.string());
    REQUIRE(back.size() == two.size());
    for (std::size_t i = 0; i < two.size(); ++i) {
        CHECK(back[i].prompt == two[i].prompt);
        CHECK(back[i].mask == two[i].mask);
        CHECK(back[i].control_word == two[i].control_word);
        CHECK(back[i].eval_label == two[i].eval_label);
        CHECK(back[i].background_label == two[i].background_label);
    }
    std::filesystem::remove(path);
}

TEST_CASE("report serialization round trip") {
    BenchmarkReport rep;
    rep.seed = 9;
    rep.config_hash = "cafe1234";
    BenchRow row;
    row.id = 0;
    row.kind = "one-object";
    row.prompt = "a red circle";
    row.seed = 42;
    row.baseline.acc = {0.5, 0.25, 0.75, 8, 8};
    row.steered.acc = {0.9, 0.85, 0.95, 8, 8};
    row.steered.background_presence = 0.75;
    rep.rows.push_back(row);
    rep.baseline.overall = 0.5;
    rep.steered.overall = 0.9;

    const BenchmarkReport back = report_from_json(report_to_json(rep));
    REQUIRE(back.rows.size() == 1);
    CHECK(back.seed == 9);
    CHECK(back.config_hash == "cafe1234");
    CHECK(back.rows[0].prompt == "a red circle");
    CHECK(back.rows[0].baseline.acc.overall == doctest::Approx(0.5));
    CHECK(back.rows[0].steered.acc.absence == doctest::Approx(0.85));
    CHECK(back.rows[0].steered.background_presence == doctest::Approx(0.75));
    CHECK(back.steered.overall == doctest::Approx(0.9));

    const std::string csv = report_to_csv(rep);
    CHECK(csv.find("a red circle") != std::string::npos);
    CHECK(csv.find('\n') != std::string::npos);
}

}  // TEST_SUITE
