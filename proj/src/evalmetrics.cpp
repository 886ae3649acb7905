#include "temposteer/evalmetrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "temposteer/dataset.hpp"
#include "temposteer/rng.hpp"

using nlohmann::json;

namespace temposteer {
namespace {

std::string entity_label(const std::string& color, const std::string& shape) {
    return color + " " + shape;
}

std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

// Tight bounding box of the set bits of a template; returns false if empty.
bool template_bbox(const std::vector<std::uint8_t>& t, int side, int* x0, int* y0, int* x1,
                   int* y1) {
    *x0 = *y0 = side;
    *x1 = *y1 = -1;
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            if (t[std::size_t(y) * side + x]) {
                *x0 = std::min(*x0, x);
                *y0 = std::min(*y0, y);
                *x1 = std::max(*x1, x);
                *y1 = std::max(*y1, y);
            }
    return *x1 >= 0;
}

}  // namespace

bool PresenceSeries::present(std::size_t k, const std::string& label) const {
    const bool color_only = label.find(' ') == std::string::npos;
    for (const auto& d : detections.at(k)) {
        if (color_only ? d.color == label : entity_label(d.color, d.shape) == label) return true;
    }
    return false;
}

std::vector<int> sample_indices(int total_frames, int count) {
    if (total_frames < 1 || count < 1) throw std::invalid_argument("empty sampling");
    std::vector<int> out;
    for (int k = 0; k < count; ++k) {
        const double pos =
            count == 1 ? 1.0 : 1.0 + double(k) * (total_frames - 1) / (count - 1);
        const int idx = int(std::lround(pos));
        if (out.empty() || out.back() != idx) out.push_back(idx);
    }
    return out;
}

std::vector<DetectedEntity> detect_frame(const Video& video, int frame, int min_pixels) {
    if (frame < 0 || frame >= video.frames) throw std::invalid_argument("frame out of range");
    const auto& voc = vocabulary();
    const int H = video.h, W = video.w;
    const float* f = video.frame(frame);

    // Direction-based quantization: a pixel that is an alpha-blend of a
    // palette color with the background keeps the color's offset direction
    // exactly, so classify by cosine similarity of (pixel - bg) against
    // (color - bg); pixels too close to the background stay background.
    const auto& colors = voc.colors();
    const Rgb bg = background_color();
    constexpr float kBgDist = 0.18f;  // min |pixel - bg| to count as colored
    std::vector<float> dirs;          // unit offsets, 3 per color
    for (const auto& c : colors) {
        const Rgb p = palette_color(c);
        float d[3] = {p.r - bg.r, p.g - bg.g, p.b - bg.b};
        const float n = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
        for (float v : d) dirs.push_back(v / n);
    }
    std::vector<int> quant(std::size_t(H) * W);
    for (int i = 0; i < H * W; ++i) {
        const float dr = f[3 * i] - bg.r, dg = f[3 * i + 1] - bg.g, db = f[3 * i + 2] - bg.b;
        const float mag = std::sqrt(dr * dr + dg * dg + db * db);
        int best = 0;  // background
        if (mag >= kBgDist) {
            float bc = -2.f;
            for (std::size_t p = 0; p < colors.size(); ++p) {
                const float cosv =
                    (dr * dirs[3 * p] + dg * dirs[3 * p + 1] + db * dirs[3 * p + 2]) / mag;
                if (cosv > bc) {
                    bc = cosv;
                    best = int(p) + 1;
                }
            }
        }
        quant[std::size_t(i)] = best;
    }

    const int side = shape_template_side();
    std::vector<DetectedEntity> out;
    for (std::size_t ci = 0; ci < colors.size(); ++ci) {
        const int code = int(ci) + 1;
        int count = 0, bx0 = W, by0 = H, bx1 = -1, by1 = -1;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                if (quant[std::size_t(y) * W + x] == code) {
                    ++count;
                    bx0 = std::min(bx0, x);
                    by0 = std::min(by0, y);
                    bx1 = std::max(bx1, x);
                    by1 = std::max(by1, y);
                }
        if (count < min_pixels) continue;

        // best shape = max pixel-set IoU over templates and integer placements
        DetectedEntity ent;
        ent.color = colors[ci];
        ent.pixels = count;
        for (const auto& shape : voc.shapes()) {
            const auto tmpl = shape_template(shape, side);
            int tx0, ty0, tx1, ty1;
            if (!template_bbox(tmpl, side, &tx0, &ty0, &tx1, &ty1)) continue;
            // placements aligning the template bbox with the blob bbox,
            // covering both blob-smaller and blob-larger-than-template cases
            const int oy_lo = std::min(by1 - ty1, by0 - ty0);
            const int oy_hi = std::max(by1 - ty1, by0 - ty0);
            const int ox_lo = std::min(bx1 - tx1, bx0 - tx0);
            const int ox_hi = std::max(bx1 - tx1, bx0 - tx0);
            for (int oy = oy_lo; oy <= oy_hi; ++oy)
                for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                    int inter = 0, tmpl_on = 0;
                    for (int ty = 0; ty < side; ++ty)
                        for (int tx = 0; tx < side; ++tx) {
                            if (!tmpl[std::size_t(ty) * side + tx]) continue;
                            const int px = ox + tx, py = oy + ty;
                            if (px < 0 || py < 0 || px >= W || py >= H) continue;  // clipped
                            ++tmpl_on;
                            if (quant[std::size_t(py) * W + px] == code) ++inter;
                        }
                    const int uni = tmpl_on + count - inter;
                    const double iou = uni > 0 ? double(inter) / uni : 0.0;
                    if (iou > ent.iou) {
                        ent.iou = iou;
                        ent.shape = shape;
                    }
                }
        }
        if (!ent.shape.empty()) out.push_back(std::move(ent));
    }
    return out;
}

PresenceSeries oracle_detect(const Video& video, const std::vector<int>& indices,
                             int min_pixels) {
    PresenceSeries series;
    int prev = 0;
    for (int idx : indices) {
        if (idx <= prev || idx > video.frames)
            throw std::invalid_argument("sample indices must be strictly increasing in range");
        prev = idx;
        series.indices.push_back(idx);
        series.detections.push_back(detect_frame(video, idx - 1, min_pixels));
    }
    return series;
}

AccuracyBreakdown temporal_accuracy(const PresenceSeries& series, const std::string& label,
                                    const std::vector<double>& mask, int video_frames,
                                    double tau, const std::string& background_label) {
    if (series.indices.empty()) throw std::invalid_argument("empty sampling");
    if (mask.empty()) throw std::invalid_argument("empty mask");
    const int T = int(mask.size());
    int ok_act = 0, ok_inact = 0, n_act = 0, n_inact = 0;
    for (std::size_t k = 0; k < series.indices.size(); ++k) {
        const int f = series.indices[k];  // 1-based
        int li = int(std::floor((f - 0.5) * double(T) / video_frames));
        li = std::clamp(li, 0, T - 1);
        const bool want = mask[std::size_t(li)] > tau;
        bool correct = series.present(k, label) == want;
        if (!background_label.empty() && !series.present(k, background_label)) correct = false;
        if (want) {
            ++n_act;
            ok_act += correct;
        } else {
            ++n_inact;
            ok_inact += correct;
        }
    }
    AccuracyBreakdown b;
    b.active_frames = n_act;
    b.inactive_frames = n_inact;
    b.presence = n_act ? double(ok_act) / n_act : 1.0;
    b.absence = n_inact ? double(ok_inact) / n_inact : 1.0;
    b.overall = double(ok_act + ok_inact) / double(n_act + n_inact);
    return b;
}

double label_presence_rate(const PresenceSeries& series, const std::string& label) {
    if (series.indices.empty()) throw std::invalid_argument("empty sampling");
    int hit = 0;
    for (std::size_t k = 0; k < series.indices.size(); ++k) hit += series.present(k, label);
    return double(hit) / double(series.indices.size());
}

MovementResult movement_accuracy(const Video& video, int target_second, int fps_sample) {
    if (fps_sample < 1) throw std::invalid_argument("invalid sampling rate");
    if (video.frames < 2) throw std::invalid_argument("need at least two sampled frames");
    const int seconds = (video.frames + fps_sample - 1) / fps_sample;
    if (target_second < 0 || target_second >= seconds)
        throw std::invalid_argument("target second outside video duration");

    MovementResult res;
    res.per_second.assign(std::size_t(seconds), 0.0);
    std::vector<int> counts(std::size_t(seconds), 0);
    const std::size_t npx = std::size_t(video.h) * video.w * 3;
    for (int j = 1; j < video.frames; ++j) {
        const float* a = video.frame(j - 1);
        const float* b = video.frame(j);
        double acc = 0;
        for (std::size_t i = 0; i < npx; ++i) acc += std::abs(double(b[i]) - a[i]);
        const int s = j / fps_sample;
        res.per_second[std::size_t(s)] += acc / double(npx);
        ++counts[std::size_t(s)];
    }
    for (int s = 0; s < seconds; ++s)
        if (counts[std::size_t(s)]) res.per_second[std::size_t(s)] /= counts[std::size_t(s)];

    res.argmax_second = 0;
    for (int s = 1; s < seconds; ++s)
        if (res.per_second[std::size_t(s)] > res.per_second[std::size_t(res.argmax_second)])
            res.argmax_second = s;  // strict >: ties break toward the earliest
    res.correct = res.argmax_second == target_second;
    return res;
}

// ---- suites ----

namespace {

std::vector<double> onset_mask(int latent_t, int latent_on) {
    std::vector<double> m(std::size_t(latent_t), 0.0);
    for (int i = latent_on; i < latent_t; ++i) m[std::size_t(i)] = 1.0;
    return m;
}

}  // namespace

std::vector<SuiteItem> one_object_suite(int count, std::uint64_t seed, int latent_t) {
    const auto& voc = vocabulary();
    Rng root(seed);
    std::vector<SuiteItem> suite;
    for (int i = 0; i < count; ++i) {
        Rng r = root.split(std::uint64_t(i));
        SuiteItem it;
        it.id = i;
        it.kind = "one-object";
        const std::string shape = voc.shapes()[r.below(voc.shapes().size())];
        const std::string color = voc.colors()[r.below(voc.colors().size())];
        it.prompt = prompt_appear(color, shape);
        // the color word is both steered and evaluated: colors survive the
        // latent codec (shape identity does not at 8x8 latent resolution)
        it.control_word = color;
        it.eval_label = color;
        const int on = 1 + int(r.below(std::uint64_t(latent_t - 2)));  // 1..T'-2
        it.mask = onset_mask(latent_t, on);
        suite.push_back(std::move(it));
    }
    return suite;
}

std::vector<SuiteItem> two_object_suite(int count, std::uint64_t seed, int latent_t) {
    const auto& voc = vocabulary();
    Rng root(seed);
    std::vector<SuiteItem> suite;
    for (int i = 0; i < count; ++i) {
        Rng r = root.split(std::uint64_t(i));
        SuiteItem it;
        it.id = i;
        it.kind = "two-object";
        const std::string s1 = voc.shapes()[r.below(voc.shapes().size())];
        const std::string c1 = voc.colors()[r.below(voc.colors().size())];
        std::string s2, c2;
        do s2 = voc.shapes()[r.below(voc.shapes().size())];
        while (s2 == s1);
        do c2 = voc.colors()[r.below(voc.colors().size())];
        while (c2 == c1);
        it.prompt = prompt_two(c1, s1, c2, s2);
        it.control_word = c2;
        it.eval_label = c2;
        it.background_label = c1;
        const int on = 1 + int(r.below(std::uint64_t(latent_t - 2)));
        it.mask = onset_mask(latent_t, on);
        suite.push_back(std::move(it));
    }
    return suite;
}

std::vector<SuiteItem> movement_suite(int count, std::uint64_t seed, int latent_t) {
    const auto& voc = vocabulary();
    Rng root(seed);
    std::vector<SuiteItem> suite;
    for (int i = 0; i < count; ++i) {
        Rng r = root.split(std::uint64_t(i));
        SuiteItem it;
        it.id = i;
        it.kind = "movement";
        const std::string shape = voc.shapes()[r.below(voc.shapes().size())];
        const std::string color = voc.colors()[r.below(voc.colors().size())];
        const std::string verb = voc.verbs()[r.below(voc.verbs().size())];
        it.prompt = prompt_motion(color, shape, verb);
        it.control_word = verb;
        it.eval_label = color;
        it.target_second = int(r.below(std::uint64_t(latent_t / 2)));
        it.mask.assign(std::size_t(latent_t), 0.0);
        for (int k = 0; k < 2; ++k) it.mask[std::size_t(2 * it.target_second + k)] = 1.0;
        suite.push_back(std::move(it));
    }
    return suite;
}

// ---- suite & report serialization ----

namespace {

json item_to_json(const SuiteItem& it) {
    return json{{"id", it.id},
                {"kind", it.kind},
                {"prompt", it.prompt},
                {"control_word", it.control_word},
                {"mask", it.mask},
                {"eval_label", it.eval_label},
                {"background_label", it.background_label},
                {"target_second", it.target_second}};
}

SuiteItem item_from_json(const json& j) {
    SuiteItem it;
    it.id = j.at("id");
    it.kind = j.at("kind");
    it.prompt = j.at("prompt").get<std::vector<std::string>>();
    it.control_word = j.at("control_word");
    it.mask = j.at("mask").get<std::vector<double>>();
    it.eval_label = j.at("eval_label");
    it.background_label = j.value("background_label", std::string());
    it.target_second = j.value("target_second", -1);
    return it;
}

json acc_to_json(const AccuracyBreakdown& a) {
    return json{{"overall", a.overall},
                {"absence", a.absence},
                {"presence", a.presence},
                {"inactive_frames", a.inactive_frames},
                {"active_frames", a.active_frames}};
}

AccuracyBreakdown acc_from_json(const json& j) {
    AccuracyBreakdown a;
    a.overall = j.at("overall");
    a.absence = j.at("absence");
    a.presence = j.at("presence");
    a.inactive_frames = j.at("inactive_frames");
    a.active_frames = j.at("active_frames");
    return a;
}

json run_to_json(const RunMetrics& m) {
    return json{{"accuracy", acc_to_json(m.acc)},
                {"background_presence", m.background_presence},
                {"movement_ok", m.movement_ok},
                {"argmax_second", m.argmax_second}};
}

RunMetrics run_from_json(const json& j) {
    RunMetrics m;
    m.acc = acc_from_json(j.at("accuracy"));
    m.background_presence = j.at("background_presence");
    m.movement_ok = j.at("movement_ok");
    m.argmax_second = j.at("argmax_second");
    return m;
}

json agg_to_json(const BenchAggregate& a) {
    return json{{"overall", a.overall},
                {"absence", a.absence},
                {"presence", a.presence},
                {"background_presence", a.background_presence},
                {"movement", a.movement}};
}

BenchAggregate agg_from_json(const json& j) {
    BenchAggregate a;
    a.overall = j.at("overall");
    a.absence = j.at("absence");
    a.presence = j.at("presence");
    a.background_presence = j.at("background_presence");
    a.movement = j.at("movement");
    return a;
}

BenchAggregate aggregate_rows(const std::vector<BenchRow>& rows, bool steered) {
    BenchAggregate a;
    int n_obj = 0, n_mov = 0;
    for (const auto& row : rows) {
        const RunMetrics& m = steered ? row.steered : row.baseline;
        if (row.kind == "movement") {
            a.movement += m.movement_ok ? 1.0 : 0.0;
            ++n_mov;
        } else {
            a.overall += m.acc.overall;
            a.absence += m.acc.absence;
            a.presence += m.acc.presence;
            a.background_presence += m.background_presence;
            ++n_obj;
        }
    }
    if (n_obj) {
        a.overall /= n_obj;
        a.absence /= n_obj;
        a.presence /= n_obj;
        a.background_presence /= n_obj;
    }
    if (n_mov) a.movement /= n_mov;
    return a;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string steering_config_digest(const SteeringConfig& c, const Sampler& sampler) {
    json j{{"lr", c.lr},
           {"steered_steps", c.steered_steps},
           {"max_inner_iters", c.max_inner_iters},
           {"tau_corr", c.tau_corr},
           {"spatial_ref", c.spatial_ref == SpatialRefMode::Initial ? "initial" : "step"},
           {"early_stop", c.early_stop_enabled},
           {"omit_first", c.omit_first},
           {"lambda1", c.weights.lambda1},
           {"lambda2", c.weights.lambda2},
           {"lambda3", c.weights.lambda3},
           {"tau", c.weights.tau},
           {"use", {c.weights.use_corr, c.weights.use_energy, c.weights.use_entropy,
                    c.weights.use_spatial}},
           {"sample_steps", c.sample.steps},
           {"guidance", c.sample.guidance},
           {"weights", sampler.model().weight_checksum()}};
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  (unsigned long long)fnv1a(j.dump()));
    return buf;
}

}  // namespace

void save_suite(const std::string& path, const std::vector<SuiteItem>& suite) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write suite: " + path);
    for (const auto& it : suite) out << item_to_json(it).dump() << "\n";
}

std::vector<SuiteItem> load_suite(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open suite: " + path);
    std::vector<SuiteItem> suite;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        suite.push_back(item_from_json(json::parse(line)));
    }
    return suite;
}

BenchmarkReport benchmark(const Sampler& sampler, const LatentCodec& codec,
                          const std::vector<SuiteItem>& suite, const SteeringConfig& steer_cfg,
                          std::uint64_t seed, int jobs) {
    const ModelConfig& mc = sampler.model().config();
    BenchmarkReport report;
    report.seed = seed;
    report.config_hash = steering_config_digest(steer_cfg, sampler);
    report.rows.resize(suite.size());

    Rng root(seed);
    std::vector<std::uint64_t> seeds(suite.size());
    for (std::size_t i = 0; i < suite.size(); ++i)
        seeds[i] = root.split(std::uint64_t(suite[i].id)).next_u64();

    auto eval_run = [&](const SuiteItem& it, const Video& video) {
        RunMetrics m;
        if (it.kind == "movement") {
            const MovementResult mv = movement_accuracy(video, it.target_second);
            m.movement_ok = mv.correct;
            m.argmax_second = mv.argmax_second;
            // informational accuracy vs. the motion-window mask is not defined
        } else {
            const PresenceSeries series =
                oracle_detect(video, sample_indices(video.frames, 20));
            m.acc = temporal_accuracy(series, it.eval_label, it.mask, video.frames,
                                      steer_cfg.weights.tau, it.background_label);
            m.background_presence = it.background_label.empty()
                                        ? 1.0
                                        : label_presence_rate(series, it.background_label);
        }
        return m;
    };

    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex err_mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= suite.size()) return;
            try {
                const SuiteItem& it = suite[i];
                const std::vector<int> tokens = pad_tokens(it.prompt, mc.max_prompt);

                BenchRow row;
                row.id = it.id;
                row.kind = it.kind;
                row.prompt = join_words(it.prompt);
                row.seed = seeds[i];

                const LatentVideo base_z =
                    sampler.generate(tokens, seeds[i], steer_cfg.sample);
                row.baseline = eval_run(it, codec.decode(base_z));

                SteerPrompt sp;
                sp.tokens = tokens;
                ControlledToken ct;
                ct.group.label = it.control_word;
                for (std::size_t p = 0; p < it.prompt.size(); ++p)
                    if (it.prompt[p] == it.control_word) ct.group.subtokens.push_back(int(p));
                ct.mask = it.mask;
                sp.controlled.push_back(std::move(ct));

                const SteerResult sr = steer_generate(sampler, sp, steer_cfg, seeds[i]);
                row.steered = eval_run(it, codec.decode(sr.z0));
                report.rows[i] = std::move(row);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!first_error) first_error = std::current_exception();
                next.store(suite.size());
                return;
            }
        }
    };

    const int n_threads = std::max(1, std::min<int>(jobs, int(suite.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < n_threads; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    report.baseline = aggregate_rows(report.rows, false);
    report.steered = aggregate_rows(report.rows, true);
    return report;
}

std::string report_to_json(const BenchmarkReport& report) {
    json rows = json::array();
    for (const auto& r : report.rows)
        rows.push_back(json{{"id", r.id},
                            {"kind", r.kind},
                            {"prompt", r.prompt},
                            {"seed", r.seed},
                            {"baseline", run_to_json(r.baseline)},
                            {"steered", run_to_json(r.steered)}});
    json j{{"rows", rows},
           {"baseline", agg_to_json(report.baseline)},
           {"steered", agg_to_json(report.steered)},
           {"config_hash", report.config_hash},
           {"seed", report.seed}};
    return j.dump(2) + "\n";
}

BenchmarkReport report_from_json(const std::string& text) {
    const json j = json::parse(text);
    BenchmarkReport report;
    for (const auto& rj : j.at("rows")) {
        BenchRow r;
        r.id = rj.at("id");
        r.kind = rj.at("kind");
        r.prompt = rj.at("prompt");
        r.seed = rj.at("seed");
        r.baseline = run_from_json(rj.at("baseline"));
        r.steered = run_from_json(rj.at("steered"));
        report.rows.push_back(std::move(r));
    }
    report.baseline = agg_from_json(j.at("baseline"));
    report.steered = agg_from_json(j.at("steered"));
    report.config_hash = j.at("config_hash");
    report.seed = j.at("seed");
    return report;
}

std::string report_to_csv(const BenchmarkReport& report) {
    std::string out =
        "id,kind,prompt,seed,"
        "base_overall,base_absence,base_presence,base_bg,base_move,base_argmax,"
        "steer_overall,steer_absence,steer_presence,steer_bg,steer_move,steer_argmax\n";
    char buf[512];
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof(buf),
                      "%d,%s,\"%s\",%llu,"
                      "%.6f,%.6f,%.6f,%.6f,%d,%d,%.6f,%.6f,%.6f,%.6f,%d,%d\n",
                      r.id, r.kind.c_str(), r.prompt.c_str(),
                      (unsigned long long)r.seed, r.baseline.acc.overall,
                      r.baseline.acc.absence, r.baseline.acc.presence,
                      r.baseline.background_presence, int(r.baseline.movement_ok),
                      r.baseline.argmax_second, r.steered.acc.overall,
                      r.steered.acc.absence, r.steered.acc.presence,
                      r.steered.background_presence, int(r.steered.movement_ok),
                      r.steered.argmax_second);
        out += buf;
    }
    return out;
}

}  // namespace temposteer
