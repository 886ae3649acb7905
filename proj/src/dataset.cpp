#include "temposteer/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "temposteer/imageio.hpp"
#include "temposteer/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace temposteer {
namespace {

json entity_to_json(const Entity& e) {
    return json{{"shape", e.shape},   {"color", e.color}, {"x", e.x},
                {"y", e.y},           {"on", e.on},       {"off", e.off},
                {"verb", e.verb},     {"move_on", e.move_on}, {"move_off", e.move_off}};
}

Entity entity_from_json(const json& j) {
    Entity e;
    e.shape = j.at("shape");
    e.color = j.at("color");
    e.x = j.at("x");
    e.y = j.at("y");
    e.on = j.at("on");
    e.off = j.at("off");
    e.verb = j.at("verb").get<std::string>();
    e.move_on = j.at("move_on");
    e.move_off = j.at("move_off");
    return e;
}

json script_to_json(const SceneScript& s) {
    json ents = json::array();
    for (const auto& e : s.entities) ents.push_back(entity_to_json(e));
    return json{{"entities", ents}, {"frames", s.frames}, {"size", s.size}};
}

SceneScript script_from_json(const json& j) {
    SceneScript s;
    s.frames = j.at("frames");
    s.size = j.at("size");
    for (const auto& ej : j.at("entities")) s.entities.push_back(entity_from_json(ej));
    return s;
}

float pick_coord(Rng& rng, int size) {
    // keep the template inside the canvas with a small margin
    const int side = shape_template_side();
    return float(rng.uniform(side / 2.0 + 1, size - side / 2.0 - 2));
}

}  // namespace

std::string script_to_json_str(const SceneScript& s) { return script_to_json(s).dump(); }
SceneScript script_from_json_str(const std::string& str) {
    return script_from_json(json::parse(str));
}

std::vector<std::string> prompt_appear(const std::string& color, const std::string& shape) {
    return {"empty", "scene", "suddenly", "a", color, shape, "appears"};
}

std::vector<std::string> prompt_two(const std::string& c1, const std::string& s1,
                                    const std::string& c2, const std::string& s2) {
    return {"a", c1, s1, "and", "a", c2, s2};
}

std::vector<std::string> prompt_motion(const std::string& color, const std::string& shape,
                                       const std::string& verb) {
    return {"a", color, shape, verb};
}

std::vector<int> pad_tokens(const std::vector<std::string>& words, int max_prompt) {
    const auto& v = vocabulary();
    if (int(words.size()) > max_prompt) throw std::invalid_argument("prompt too long");
    std::vector<int> ids;
    for (const auto& w : words) ids.push_back(v.id(w));
    ids.resize(max_prompt, pad_token_id());
    return ids;
}

std::vector<DatasetRecord> generate_dataset(const DatasetConfig& cfg,
                                            const std::string& out_dir) {
    const auto& voc = vocabulary();
    fs::create_directories(out_dir);
    if (!fs::is_directory(out_dir)) throw std::runtime_error("unwritable output path: " + out_dir);

    Rng rng(cfg.seed);
    std::vector<DatasetRecord> records;
    const int n_appear = int(std::lround(cfg.count * cfg.frac_appear));
    const int n_two = int(std::lround(cfg.count * cfg.frac_two));

    for (int i = 0; i < cfg.count; ++i) {
        Rng r = rng.split(std::uint64_t(i));
        DatasetRecord rec;
        rec.id = i;
        rec.script.frames = cfg.frames;
        rec.script.size = cfg.size;

        const auto& shapes = voc.shapes();
        const auto& colors = voc.colors();
        const auto& verbs = voc.verbs();

        if (i < n_appear) {
            rec.kind = "appear";
            Entity e;
            e.shape = shapes[r.below(shapes.size())];
            e.color = colors[r.below(colors.size())];
            e.x = pick_coord(r, cfg.size);
            e.y = pick_coord(r, cfg.size);
            e.on = int(r.below(std::uint64_t(cfg.frames - 3)));  // uniform appearance time
            e.off = cfg.frames;
            rec.script.entities.push_back(e);
            rec.prompt = prompt_appear(e.color, e.shape);
        } else if (i < n_appear + n_two) {
            rec.kind = "two";
            Entity e1, e2;
            e1.shape = shapes[r.below(shapes.size())];
            e1.color = colors[r.below(colors.size())];
            do {
                e2.shape = shapes[r.below(shapes.size())];
            } while (e2.shape == e1.shape);
            do {
                e2.color = colors[r.below(colors.size())];
            } while (e2.color == e1.color);
            // non-overlapping spawn positions
            for (int attempt = 0;; ++attempt) {
                e1.x = pick_coord(r, cfg.size);
                e1.y = pick_coord(r, cfg.size);
                e2.x = pick_coord(r, cfg.size);
                e2.y = pick_coord(r, cfg.size);
                const float dx = e1.x - e2.x, dy = e1.y - e2.y;
                if (dx * dx + dy * dy >= 13 * 13 || attempt > 200) break;
            }
            e1.on = 0;
            e1.off = cfg.frames;
            e2.on = 1 + int(r.below(std::uint64_t(cfg.frames - 4)));
            e2.off = cfg.frames;
            rec.script.entities = {e1, e2};
            rec.prompt = prompt_two(e1.color, e1.shape, e2.color, e2.shape);
        } else {
            rec.kind = "motion";
            Entity e;
            e.shape = shapes[r.below(shapes.size())];
            e.color = colors[r.below(colors.size())];
            e.verb = verbs[r.below(verbs.size())];
            e.x = pick_coord(r, cfg.size);
            e.y = pick_coord(r, cfg.size);
            e.on = 0;
            e.off = cfg.frames;
            const int second = int(r.below(std::uint64_t(cfg.frames / 4)));
            e.move_on = second * 4;
            e.move_off = e.move_on + 4;
            rec.script.entities.push_back(e);
            rec.prompt = prompt_motion(e.color, e.shape, e.verb);
        }

        char dirbuf[32];
        std::snprintf(dirbuf, sizeof(dirbuf), "frames/vid_%04d", i);
        rec.frames_dir = dirbuf;
        fs::create_directories(fs::path(out_dir) / rec.frames_dir);
        const Video video = render(rec.script);
        for (int f = 0; f < video.frames; ++f) {
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%04d.png", f + 1);
            write_png((fs::path(out_dir) / rec.frames_dir / name).string(),
                      quantize_frame(video, f));
        }
        records.push_back(std::move(rec));
    }

    std::ofstream manifest(fs::path(out_dir) / "manifest.jsonl");
    if (!manifest) throw std::runtime_error("unwritable output path: " + out_dir);
    for (const auto& rec : records) {
        json row{{"id", rec.id},
                 {"kind", rec.kind},
                 {"prompt", rec.prompt},
                 {"script", script_to_json(rec.script)},
                 {"frames_dir", rec.frames_dir}};
        manifest << row.dump() << "\n";
    }
    return records;
}

std::vector<DatasetRecord> load_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("cannot open manifest: " + manifest_path);
    std::vector<DatasetRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json row = json::parse(line);
        DatasetRecord rec;
        rec.id = row.at("id");
        rec.kind = row.at("kind");
        rec.prompt = row.at("prompt").get<std::vector<std::string>>();
        rec.script = script_from_json(row.at("script"));
        rec.frames_dir = row.at("frames_dir");
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<TrainExample> load_training_data(const std::vector<DatasetRecord>& records,
                                             const LatentCodec& codec, int max_prompt) {
    std::vector<TrainExample> out;
    for (const auto& rec : records) {
        TrainExample ex;
        ex.latent = codec.encode(render(rec.script)).data;
        ex.tokens = pad_tokens(rec.prompt, max_prompt);
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace temposteer
