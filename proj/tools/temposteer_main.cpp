// temposteer: temporal control for a toy text-to-video diffusion model.
//
// Subcommands: dataset, train, generate, steer, audio2mask, suite, eval,
// report. Exit codes: 0 ok, 2 configuration error, 3 missing artifact,
// 4 runtime failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "temposteer/audio.hpp"
#include "temposteer/dataset.hpp"
#include "temposteer/diffusion.hpp"
#include "temposteer/evalmetrics.hpp"
#include "temposteer/imageio.hpp"
#include "temposteer/losses.hpp"
#include "temposteer/probe.hpp"
#include "temposteer/steering.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace temposteer;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitRuntime = 4;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingArtifact : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("config file not found: " + path);
    try {
        return json::parse(in);
    } catch (const std::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
}

// Strict schema: every key must be known.
void check_keys(const json& j, const std::vector<std::string>& allowed,
                const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const auto& a : allowed) ok |= a == key;
        if (!ok) throw ConfigError(where + ": unknown key \"" + key + "\"");
    }
}

template <typename T>
void take(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const std::exception&) {
            throw ConfigError(std::string("bad value for config key \"") + key + "\"");
        }
    }
}

fs::path make_run_dir(const std::string& out, bool force) {
    if (out.empty()) throw ConfigError("--out is required");
    fs::path dir(out);
    if (fs::exists(dir)) {
        if (!force)
            throw ConfigError("output path already exists (use --force to overwrite): " + out);
        fs::remove_all(dir);
    }
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream outf(path);
    if (!outf) throw std::runtime_error("cannot write " + path.string());
    outf << text;
}

void echo_config(const fs::path& dir, const json& resolved) {
    write_text(dir / "config.json", resolved.dump(2) + "\n");
}

std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> words;
    std::istringstream iss(s);
    std::string w;
    while (iss >> w) words.push_back(w);
    return words;
}

std::vector<std::string> parse_prompt(const std::string& s) {
    auto words = split_words(s);
    if (words.empty()) throw ConfigError("--prompt must contain at least one word");
    const auto& voc = vocabulary();
    for (const auto& w : words) {
        try {
            voc.id(w);
        } catch (const std::exception&) {
            throw ConfigError("unknown prompt word: " + w);
        }
    }
    return words;
}

std::vector<double> parse_mask_arg(const std::string& arg) {
    json j;
    if (!arg.empty() && arg[0] == '@') {
        const std::string path = arg.substr(1);
        std::ifstream in(path);
        if (!in) throw MissingArtifact("mask file not found: " + path);
        try {
            j = json::parse(in);
        } catch (const std::exception& e) {
            throw ConfigError("mask file parse error: " + std::string(e.what()));
        }
    } else {
        try {
            j = json::parse(arg);
        } catch (const std::exception& e) {
            throw ConfigError("inline mask parse error: " + std::string(e.what()));
        }
    }
    if (j.is_object() && j.contains("mask")) j = j.at("mask");
    if (!j.is_array()) throw ConfigError("mask must be a JSON array of numbers");
    std::vector<double> m;
    for (const auto& v : j) {
        if (!v.is_number()) throw ConfigError("mask must be a JSON array of numbers");
        m.push_back(v.get<double>());
    }
    return m;
}

struct LoadedModel {
    Checkpoint ck;
    std::unique_ptr<DiT> model;
};

LoadedModel load_model(const std::string& path) {
    if (!fs::exists(path)) throw MissingArtifact("checkpoint not found: " + path);
    LoadedModel lm;
    lm.ck = load_checkpoint(path);
    if (lm.ck.vocab != vocabulary().words())
        throw std::runtime_error("checkpoint vocabulary does not match this build");
    lm.model = model_from_checkpoint(lm.ck);
    return lm;
}

void write_video_frames(const fs::path& dir, const Video& v) {
    fs::create_directories(dir);
    for (int f = 0; f < v.frames; ++f) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04d.png", f + 1);
        write_png((dir / name).string(), quantize_frame(v, f));
    }
}

// ---- steering option plumbing shared by `steer` and `eval` ----

struct SteerFlags {
    std::string profile = "one-object";
    bool no_early_stop = false;
    std::string spatial_ref = "step";
    std::vector<std::string> ablate;
    std::string config_path;
};

void add_steer_flags(CLI::App* cmd, SteerFlags& f) {
    cmd->add_option("--profile", f.profile, "preset: one-object|two-object|movement|multi-object")
        ->check(CLI::IsMember({"one-object", "two-object", "movement", "multi-object"}));
    cmd->add_flag("--no-early-stop", f.no_early_stop, "disable correlation early stopping");
    cmd->add_option("--spatial-ref", f.spatial_ref,
                    "spatial-penalty reference: step (per-step snapshot) or initial")
        ->check(CLI::IsMember({"step", "initial"}));
    cmd->add_option("--ablate", f.ablate, "disable a loss term (repeatable)")
        ->check(CLI::IsMember({"corr", "energy", "entropy", "spatial"}));
    cmd->add_option("--config", f.config_path, "JSON config file");
}

SteeringConfig resolve_steering(const SteerFlags& f, json* echo) {
    SteeringConfig cfg;
    if (f.profile == "one-object")
        cfg = one_object_profile();
    else if (f.profile == "two-object")
        cfg = two_object_profile();
    else if (f.profile == "movement")
        cfg = movement_profile();
    else
        cfg = multi_object_profile();

    if (!f.config_path.empty()) {
        const json j = load_config_file(f.config_path);
        check_keys(j,
                   {"lr", "steered_steps", "max_inner_iters", "tau_corr", "lambda1", "lambda2",
                    "lambda3", "tau", "sample_steps", "guidance", "omit_first"},
                   "steering config");
        take(j, "lr", cfg.lr);
        take(j, "steered_steps", cfg.steered_steps);
        take(j, "max_inner_iters", cfg.max_inner_iters);
        take(j, "tau_corr", cfg.tau_corr);
        take(j, "lambda1", cfg.weights.lambda1);
        take(j, "lambda2", cfg.weights.lambda2);
        take(j, "lambda3", cfg.weights.lambda3);
        take(j, "tau", cfg.weights.tau);
        take(j, "sample_steps", cfg.sample.steps);
        take(j, "guidance", cfg.sample.guidance);
        take(j, "omit_first", cfg.omit_first);
    }
    if (f.no_early_stop) cfg.early_stop_enabled = false;
    cfg.spatial_ref =
        f.spatial_ref == "initial" ? SpatialRefMode::Initial : SpatialRefMode::PerStep;
    for (const auto& a : f.ablate) {
        if (a == "corr") cfg.weights.use_corr = false;
        if (a == "energy") cfg.weights.use_energy = false;
        if (a == "entropy") cfg.weights.use_entropy = false;
        if (a == "spatial") cfg.weights.use_spatial = false;
    }
    if (echo) {
        (*echo)["profile"] = f.profile;
        (*echo)["lr"] = cfg.lr;
        (*echo)["steered_steps"] = cfg.steered_steps;
        (*echo)["max_inner_iters"] = cfg.max_inner_iters;
        (*echo)["tau_corr"] = cfg.tau_corr;
        (*echo)["early_stop"] = cfg.early_stop_enabled;
        (*echo)["spatial_ref"] = f.spatial_ref;
        (*echo)["omit_first"] = cfg.omit_first;
        (*echo)["lambda1"] = cfg.weights.lambda1;
        (*echo)["lambda2"] = cfg.weights.lambda2;
        (*echo)["lambda3"] = cfg.weights.lambda3;
        (*echo)["tau"] = cfg.weights.tau;
        (*echo)["ablate"] = f.ablate;
        (*echo)["sample_steps"] = cfg.sample.steps;
        (*echo)["guidance"] = cfg.sample.guidance;
    }
    return cfg;
}

json loss_terms_json(const LossTerms& t) {
    json j{{"energy", t.energy}, {"entropy", t.entropy}, {"spatial", t.spatial},
           {"total", t.total}};
    if (t.corr)
        j["corr"] = *t.corr;
    else
        j["corr"] = nullptr;
    return j;
}

void write_trace(const fs::path& path, const SteeringTrace& trace) {
    std::ofstream out(path);
    for (const auto& st : trace.steps) {
        json iters = json::array();
        for (const auto& rec : st.iters) {
            json rj = loss_terms_json(rec.loss);
            json rs = json::array();
            for (const auto& r : rec.per_token_r) {
                if (r)
                    rs.push_back(*r);
                else
                    rs.push_back(nullptr);
            }
            rj["per_token_r"] = rs;
            iters.push_back(std::move(rj));
        }
        out << json{{"t", st.t},
                    {"stop_reason", st.stop_reason},
                    {"wall_ms", st.wall_ms},
                    {"iters", iters}}
                   .dump()
            << "\n";
    }
}

// Final-step temporal attention signal per controlled token, for plots and
// offline correlation checks.
json steer_summary(const SteerResult& res, const SteerPrompt& prompt, const SteeringConfig& cfg,
                   const LatentDims& dims) {
    const AttentionStack& last = res.attention.back();
    const std::vector<double> agg = aggregate(last);
    const int start = cfg.omit_first ? 1 : 0;
    json tokens = json::array();
    for (const auto& ct : prompt.controlled) {
        const MapSequence maps = token_maps(agg, last.n_v, last.n_p, ct.group, dims);
        const TemporalSignal sig = temporal_signal(slice_frames(maps, start), false);
        std::vector<double> mask_aligned(ct.mask.begin() + start, ct.mask.end());
        const auto loss = pearson_loss(mask_aligned, sig.values);
        json tj{{"label", ct.group.label},
                {"frame_offset", start + 1},
                {"mask", mask_aligned},
                {"attention", sig.values}};
        if (loss)
            tj["pearson_r"] = -*loss;
        else
            tj["pearson_r"] = nullptr;
        tokens.push_back(std::move(tj));
    }
    return json{{"tokens", tokens}, {"final_step", last.step}};
}

// ---- subcommand implementations ----

int cmd_dataset(const std::string& config_path, std::optional<std::uint64_t> seed,
                const std::string& out, bool force) {
    DatasetConfig cfg;
    json echo;
    if (!config_path.empty()) {
        const json j = load_config_file(config_path);
        check_keys(j, {"count", "frames", "size", "frac_appear", "frac_two", "frac_motion",
                       "seed"},
                   "dataset config");
        take(j, "count", cfg.count);
        take(j, "frames", cfg.frames);
        take(j, "size", cfg.size);
        take(j, "frac_appear", cfg.frac_appear);
        take(j, "frac_two", cfg.frac_two);
        take(j, "frac_motion", cfg.frac_motion);
        take(j, "seed", cfg.seed);
    }
    if (seed) cfg.seed = *seed;
    if (cfg.count < 0 || cfg.frames < 1 || cfg.size < 1)
        throw ConfigError("dataset config values out of range");
    const fs::path dir = make_run_dir(out, force);
    echo = json{{"command", "dataset"},   {"count", cfg.count},
                {"frames", cfg.frames},   {"size", cfg.size},
                {"frac_appear", cfg.frac_appear}, {"frac_two", cfg.frac_two},
                {"frac_motion", cfg.frac_motion}, {"seed", cfg.seed}};
    echo_config(dir, echo);
    const auto records = generate_dataset(cfg, dir.string());
    std::printf("wrote %zu videos under %s\n", records.size(), dir.string().c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& dataset_dir,
              std::optional<std::uint64_t> seed, const std::string& out, bool force) {
    ModelConfig mc;
    mc.vocab = vocabulary().size();
    TrainConfig tc;
    if (!config_path.empty()) {
        const json j = load_config_file(config_path);
        check_keys(j, {"steps", "batch", "lr", "weight_decay", "cond_drop", "seed", "epoch_size",
                       "model"},
                   "train config");
        take(j, "steps", tc.steps);
        take(j, "batch", tc.batch);
        take(j, "lr", tc.lr);
        take(j, "weight_decay", tc.weight_decay);
        take(j, "cond_drop", tc.cond_drop);
        take(j, "seed", tc.seed);
        take(j, "epoch_size", tc.epoch_size);
        if (j.contains("model")) {
            const json& m = j.at("model");
            check_keys(m, {"width", "blocks", "heads", "mlp_ratio", "latent_t", "latent_h",
                           "latent_w", "channels", "max_prompt", "train_timesteps"},
                       "train config model");
            take(m, "width", mc.width);
            take(m, "blocks", mc.blocks);
            take(m, "heads", mc.heads);
            take(m, "mlp_ratio", mc.mlp_ratio);
            take(m, "latent_t", mc.latent_t);
            take(m, "latent_h", mc.latent_h);
            take(m, "latent_w", mc.latent_w);
            take(m, "channels", mc.channels);
            take(m, "max_prompt", mc.max_prompt);
            take(m, "train_timesteps", mc.train_timesteps);
        }
    }
    if (seed) tc.seed = *seed;

    const fs::path manifest = fs::path(dataset_dir) / "manifest.jsonl";
    if (!fs::exists(manifest))
        throw MissingArtifact("dataset manifest not found: " + manifest.string());
    const auto records = load_manifest(manifest.string());

    const fs::path dir = make_run_dir(out, force);
    echo_config(dir, json{{"command", "train"},
                          {"dataset", dataset_dir},
                          {"steps", tc.steps},
                          {"batch", tc.batch},
                          {"lr", tc.lr},
                          {"weight_decay", tc.weight_decay},
                          {"cond_drop", tc.cond_drop},
                          {"seed", tc.seed},
                          {"epoch_size", tc.epoch_size},
                          {"model",
                           {{"width", mc.width},
                            {"blocks", mc.blocks},
                            {"heads", mc.heads},
                            {"mlp_ratio", mc.mlp_ratio},
                            {"latent_t", mc.latent_t},
                            {"latent_h", mc.latent_h},
                            {"latent_w", mc.latent_w},
                            {"channels", mc.channels},
                            {"max_prompt", mc.max_prompt},
                            {"train_timesteps", mc.train_timesteps}}}});

    DiT model(mc);
    Rng rng(tc.seed);
    model.init_params(rng);
    LatentCodec codec(mc);
    const auto data = load_training_data(records, codec, mc.max_prompt);
    const TrainStats stats = train(model, data, tc);
    save_checkpoint((dir / "model.ckpt").string(), model, vocabulary().words());
    write_text(dir / "train_log.json",
               json{{"epoch_losses", stats.epoch_losses}, {"final_loss", stats.final_loss}}
                       .dump(2) +
                   "\n");
    std::printf("trained %d steps, final loss %.4f, checkpoint at %s\n", tc.steps,
                stats.final_loss, (dir / "model.ckpt").string().c_str());
    return 0;
}

int cmd_generate(const std::string& ckpt_path, const std::string& prompt_str,
                 std::uint64_t seed, const std::string& out, bool force, int steps,
                 double guidance) {
    const auto words = parse_prompt(prompt_str);
    LoadedModel lm = load_model(ckpt_path);
    const ModelConfig& mc = lm.model->config();
    const auto tokens = pad_tokens(words, mc.max_prompt);
    SampleConfig scfg;
    if (steps > 0) scfg.steps = steps;
    if (guidance >= 0) scfg.guidance = guidance;

    const fs::path dir = make_run_dir(out, force);
    echo_config(dir, json{{"command", "generate"},
                          {"checkpoint", ckpt_path},
                          {"prompt", prompt_str},
                          {"seed", seed},
                          {"steps", scfg.steps},
                          {"guidance", scfg.guidance}});
    Sampler sampler(*lm.model, mc.train_timesteps);
    const LatentVideo z0 = sampler.generate(tokens, seed, scfg);
    LatentCodec codec(mc);
    write_video_frames(dir / "frames", codec.decode(z0));
    std::printf("wrote frames under %s\n", (dir / "frames").string().c_str());
    return 0;
}

int cmd_steer(const std::string& ckpt_path, const std::string& prompt_str,
              const std::vector<std::string>& token_words,
              const std::vector<std::string>& mask_args, const std::string& audio_path,
              std::uint64_t seed, const std::string& out, bool force, const SteerFlags& flags) {
    const auto words = parse_prompt(prompt_str);
    LoadedModel lm = load_model(ckpt_path);
    const ModelConfig& mc = lm.model->config();

    json echo{{"command", "steer"},
              {"checkpoint", ckpt_path},
              {"prompt", prompt_str},
              {"seed", seed}};
    const SteeringConfig cfg = resolve_steering(flags, &echo);

    if (token_words.empty()) throw ConfigError("--token is required");
    std::vector<std::vector<double>> masks;
    if (!audio_path.empty()) {
        if (!mask_args.empty()) throw ConfigError("--mask and --audio are mutually exclusive");
        if (!fs::exists(audio_path)) throw MissingArtifact("audio file not found: " + audio_path);
        EnvelopeParams ep;
        const TemporalMask am = audio_to_mask(read_wav(audio_path), mc.latent_t, ep);
        masks.assign(token_words.size(), am.values);
        echo["audio"] = audio_path;
    } else {
        if (mask_args.size() != token_words.size())
            throw ConfigError("need exactly one --mask per --token");
        for (const auto& a : mask_args) masks.push_back(parse_mask_arg(a));
    }

    SteerPrompt sp;
    sp.tokens = pad_tokens(words, mc.max_prompt);
    for (std::size_t i = 0; i < token_words.size(); ++i) {
        ControlledToken ct;
        ct.group.label = token_words[i];
        for (std::size_t p = 0; p < words.size(); ++p)
            if (words[p] == token_words[i]) ct.group.subtokens.push_back(int(p));
        if (ct.group.subtokens.empty())
            throw ConfigError("controlled token not in prompt: " + token_words[i]);
        if (int(masks[i].size()) != mc.latent_t)
            throw ConfigError("mask length must equal the latent frame count (" +
                              std::to_string(mc.latent_t) + ")");
        ct.mask = masks[i];
        sp.controlled.push_back(std::move(ct));
    }
    echo["tokens"] = token_words;
    echo["masks"] = masks;

    const fs::path dir = make_run_dir(out, force);
    echo_config(dir, echo);

    Sampler sampler(*lm.model, mc.train_timesteps);
    const SteerResult res = steer_generate(sampler, sp, cfg, seed);
    LatentCodec codec(mc);
    write_video_frames(dir / "frames", codec.decode(res.z0));
    write_trace(dir / "trace.jsonl", res.trace);
    write_text(dir / "summary.json",
               steer_summary(res, sp, cfg, mc.dims()).dump(2) + "\n");
    std::printf("wrote steered frames + trace under %s\n", dir.string().c_str());
    return 0;
}

int cmd_audio2mask(const std::string& audio_path, int frames, const std::string& out,
                   const std::string& csv_out, const EnvelopeParams& ep) {
    if (!fs::exists(audio_path)) throw MissingArtifact("audio file not found: " + audio_path);
    if (frames < 1) throw ConfigError("--frames must be >= 1");
    const TemporalMask mask = audio_to_mask(read_wav(audio_path), frames, ep);
    const json j = mask.values;
    if (out.empty())
        std::printf("%s\n", j.dump().c_str());
    else
        write_text(out, j.dump() + "\n");
    if (!csv_out.empty()) {
        std::string csv = "frame,mask\n";
        for (std::size_t i = 0; i < mask.values.size(); ++i)
            csv += std::to_string(i + 1) + "," + std::to_string(mask.values[i]) + "\n";
        write_text(csv_out, csv);
    }
    return 0;
}

int cmd_suite(const std::string& kind, int count, std::uint64_t seed, int latent_t,
              const std::string& out) {
    std::vector<SuiteItem> suite;
    if (kind == "one-object")
        suite = one_object_suite(count, seed, latent_t);
    else if (kind == "two-object")
        suite = two_object_suite(count, seed, latent_t);
    else if (kind == "movement")
        suite = movement_suite(count, seed, latent_t);
    else
        throw ConfigError("unknown suite kind: " + kind);
    if (out.empty()) throw ConfigError("--out is required");
    save_suite(out, suite);
    std::printf("wrote %zu suite items to %s\n", suite.size(), out.c_str());
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& suite_path, std::uint64_t seed,
             int jobs, const std::string& out, bool force, const SteerFlags& flags) {
    if (!fs::exists(suite_path)) throw MissingArtifact("suite not found: " + suite_path);
    const auto suite = load_suite(suite_path);
    LoadedModel lm = load_model(ckpt_path);
    const ModelConfig& mc = lm.model->config();

    json echo{{"command", "eval"},
              {"checkpoint", ckpt_path},
              {"suite", suite_path},
              {"seed", seed},
              {"jobs", jobs}};
    const SteeringConfig cfg = resolve_steering(flags, &echo);
    const fs::path dir = make_run_dir(out, force);
    echo_config(dir, echo);

    Sampler sampler(*lm.model, mc.train_timesteps);
    LatentCodec codec(mc);
    const BenchmarkReport report = benchmark(sampler, codec, suite, cfg, seed, jobs);
    write_text(dir / "report.json", report_to_json(report));
    write_text(dir / "report.csv", report_to_csv(report));
    std::printf("evaluated %zu prompts: baseline overall %.4f -> steered %.4f\n",
                report.rows.size(), report.baseline.overall, report.steered.overall);
    return 0;
}

// ---- report: comparison table + per-token attention/mask plots ----

std::string svg_chart(const std::vector<double>& attention, const std::vector<double>& mask,
                      int frame_offset, const std::string& title) {
    const int W = 560, H = 300, L = 50, R = 20, T = 40, B = 40;
    const int n = int(attention.size());
    double amax = 1e-12;
    for (double v : attention) amax = std::max(amax, v);
    auto xpos = [&](int i) {
        return L + (n <= 1 ? 0.0 : double(i) * (W - L - R) / (n - 1));
    };
    auto ypos = [&](double v, double vmax) { return H - B - v / vmax * (H - T - B); };
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
      << "</text>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
    auto poly = [&](const std::vector<double>& v, double vmax, const char* color) {
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (int i = 0; i < int(v.size()); ++i)
            s << xpos(i) << "," << ypos(v[std::size_t(i)], vmax) << " ";
        s << "\"/>\n";
    };
    poly(attention, amax, "#1f6fb5");  // attention (blue)
    poly(mask, 1.0, "#e08020");        // mask (orange)
    for (int i = 0; i < n; ++i)
        s << "<text x=\"" << xpos(i) << "\" y=\"" << H - B + 18
          << "\" text-anchor=\"middle\" font-size=\"10\">" << frame_offset + i << "</text>\n";
    s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 6
      << "\" text-anchor=\"middle\" font-size=\"11\">latent frame</text>\n";
    s << "</svg>\n";
    return s.str();
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out, bool force) {
    const fs::path dir = make_run_dir(out, force);
    std::string table =
        "| run | arm | Temporal Accuracy | T. Absence | T. Presence | Movement |\n"
        "|---|---|---|---|---|---|\n";
    bool any_rows = false;
    char row[256];
    for (const auto& rd : run_dirs) {
        const fs::path run(rd);
        const std::string name = run.filename().string();
        const fs::path report_path = run / "report.json";
        const fs::path summary_path = run / "summary.json";
        if (!fs::exists(report_path) && !fs::exists(summary_path))
            throw MissingArtifact("no report.json or summary.json in " + rd);

        if (fs::exists(report_path)) {
            std::ifstream in(report_path);
            std::stringstream ss;
            ss << in.rdbuf();
            const BenchmarkReport rep = report_from_json(ss.str());
            for (const char* arm : {"baseline", "steered"}) {
                const BenchAggregate& a =
                    std::string(arm) == "baseline" ? rep.baseline : rep.steered;
                std::snprintf(row, sizeof(row),
                              "| %s | %s | %.2f%% | %.2f%% | %.2f%% | %.2f%% |\n", name.c_str(),
                              arm, 100 * a.overall, 100 * a.absence, 100 * a.presence,
                              100 * a.movement);
                table += row;
                any_rows = true;
            }
        }
        if (fs::exists(summary_path)) {
            std::ifstream in(summary_path);
            json summary = json::parse(in);
            for (const auto& tj : summary.at("tokens")) {
                const std::string label = tj.at("label");
                const std::vector<double> att = tj.at("attention").get<std::vector<double>>();
                const std::vector<double> mask = tj.at("mask").get<std::vector<double>>();
                const int off = tj.at("frame_offset");
                std::string csv = "frame,attention,mask\n";
                char line[96];
                for (std::size_t i = 0; i < att.size(); ++i) {
                    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g\n", off + int(i), att[i],
                                  mask[i]);
                    csv += line;
                }
                write_text(dir / (name + "_" + label + ".csv"), csv);
                write_text(dir / (name + "_" + label + ".svg"),
                           svg_chart(att, mask, off, name + ": " + label));
            }
        }
    }
    if (any_rows) write_text(dir / "table.md", table);
    std::printf("wrote report artifacts under %s\n", dir.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"temporal control for a toy text-to-video diffusion model"};
    app.require_subcommand(1);

    // dataset
    auto* ds = app.add_subcommand("dataset", "render a synthetic training dataset");
    std::string ds_config, ds_out;
    bool ds_force = false;
    std::optional<std::uint64_t> ds_seed;
    ds->add_option("--config", ds_config, "JSON config file");
    ds->add_option("--seed", ds_seed, "RNG seed (overrides config)");
    ds->add_option("--out", ds_out, "output directory")->required();
    ds->add_flag("--force", ds_force, "overwrite existing output");

    // train
    auto* tr = app.add_subcommand("train", "train the denoising model");
    std::string tr_config, tr_dataset, tr_out;
    bool tr_force = false;
    std::optional<std::uint64_t> tr_seed;
    tr->add_option("--config", tr_config, "JSON config file");
    tr->add_option("--dataset", tr_dataset, "dataset directory")->required();
    tr->add_option("--seed", tr_seed, "RNG seed (overrides config)");
    tr->add_option("--out", tr_out, "run directory")->required();
    tr->add_flag("--force", tr_force, "overwrite existing output");

    // generate
    auto* gen = app.add_subcommand("generate", "sample a video without steering");
    std::string gen_ckpt, gen_prompt, gen_out;
    std::uint64_t gen_seed = 0;
    bool gen_force = false;
    int gen_steps = 0;
    double gen_guidance = -1;
    gen->add_option("--checkpoint", gen_ckpt, "model checkpoint")->required();
    gen->add_option("--prompt", gen_prompt, "space-separated prompt words")->required();
    gen->add_option("--seed", gen_seed, "RNG seed");
    gen->add_option("--out", gen_out, "run directory")->required();
    gen->add_flag("--force", gen_force, "overwrite existing output");
    gen->add_option("--steps", gen_steps, "sampling steps");
    gen->add_option("--guidance", gen_guidance, "classifier-free guidance scale");

    // steer
    auto* st = app.add_subcommand("steer", "sample with temporal-mask steering");
    std::string st_ckpt, st_prompt, st_audio, st_out;
    std::vector<std::string> st_tokens, st_masks;
    std::uint64_t st_seed = 0;
    bool st_force = false;
    SteerFlags st_flags;
    st->add_option("--checkpoint", st_ckpt, "model checkpoint")->required();
    st->add_option("--prompt", st_prompt, "space-separated prompt words")->required();
    // one value per occurrence; keeps CLI11 from expanding inline "[...]" masks
    st->add_option("--token", st_tokens, "controlled prompt word (repeatable)")
        ->allow_extra_args(false);
    st->add_option("--mask", st_masks, "temporal mask: inline JSON array or @file (repeatable)")
        ->allow_extra_args(false);
    st->add_option("--audio", st_audio, "WAV file; its onset mask drives every --token");
    st->add_option("--seed", st_seed, "RNG seed");
    st->add_option("--out", st_out, "run directory")->required();
    st->add_flag("--force", st_force, "overwrite existing output");
    add_steer_flags(st, st_flags);

    // audio2mask
    auto* am = app.add_subcommand("audio2mask", "convert a WAV file to a temporal mask");
    std::string am_audio, am_out, am_csv;
    int am_frames = 8;
    EnvelopeParams am_params;
    am->add_option("--audio", am_audio, "WAV file")->required();
    am->add_option("--frames", am_frames, "mask length (latent frames)");
    am->add_option("--out", am_out, "output JSON path (default: stdout)");
    am->add_option("--csv", am_csv, "also write a frame,mask CSV");
    am->add_option("--window", am_params.window, "STFT window (samples, power of two)");
    am->add_option("--hop", am_params.hop, "STFT hop (samples)");
    am->add_option("--tau-audio", am_params.tau_audio, "peak-preservation threshold");
    am->add_option("--sigma", am_params.sigma, "Gaussian smoothing std (frames)");

    // suite
    auto* su = app.add_subcommand("suite", "write a benchmark suite manifest");
    std::string su_kind = "one-object", su_out;
    int su_count = 40, su_latent_t = 8;
    std::uint64_t su_seed = 0;
    su->add_option("--kind", su_kind, "one-object|two-object|movement");
    su->add_option("--count", su_count, "number of prompts");
    su->add_option("--seed", su_seed, "RNG seed");
    su->add_option("--latent-t", su_latent_t, "latent frame count");
    su->add_option("--out", su_out, "output JSONL path")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "paired steered-vs-baseline benchmark");
    std::string ev_ckpt, ev_suite, ev_out;
    std::uint64_t ev_seed = 0;
    int ev_jobs = 1;
    bool ev_force = false;
    SteerFlags ev_flags;
    ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
    ev->add_option("--suite", ev_suite, "suite JSONL manifest")->required();
    ev->add_option("--seed", ev_seed, "RNG seed");
    ev->add_option("--jobs", ev_jobs, "parallel prompt workers");
    ev->add_option("--out", ev_out, "run directory")->required();
    ev->add_flag("--force", ev_force, "overwrite existing output");
    add_steer_flags(ev, ev_flags);

    // report
    auto* rp = app.add_subcommand("report", "tables and plots from run directories");
    std::vector<std::string> rp_dirs;
    std::string rp_out;
    bool rp_force = false;
    rp->add_option("runs", rp_dirs, "run directories")->required();
    rp->add_option("--out", rp_out, "output directory")->required();
    rp->add_flag("--force", rp_force, "overwrite existing output");

    CLI11_PARSE(app, argc, argv);

    try {
        if (ds->parsed()) return cmd_dataset(ds_config, ds_seed, ds_out, ds_force);
        if (tr->parsed()) return cmd_train(tr_config, tr_dataset, tr_seed, tr_out, tr_force);
        if (gen->parsed())
            return cmd_generate(gen_ckpt, gen_prompt, gen_seed, gen_out, gen_force, gen_steps,
                                gen_guidance);
        if (st->parsed())
            return cmd_steer(st_ckpt, st_prompt, st_tokens, st_masks, st_audio, st_seed, st_out,
                             st_force, st_flags);
        if (am->parsed()) return cmd_audio2mask(am_audio, am_frames, am_out, am_csv, am_params);
        if (su->parsed()) return cmd_suite(su_kind, su_count, su_seed, su_latent_t, su_out);
        if (ev->parsed())
            return cmd_eval(ev_ckpt, ev_suite, ev_seed, ev_jobs, ev_out, ev_force, ev_flags);
        if (rp->parsed()) return cmd_report(rp_dirs, rp_out, rp_force);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const MissingArtifact& e) {
        std::fprintf(stderr, "missing artifact: %s\n", e.what());
        return kExitMissing;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime failure: %s\n", e.what());
        return kExitRuntime;
    }
    return 0;
}
