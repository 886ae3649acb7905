#include "temposteer/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace temposteer {
namespace {

constexpr int kTemplateSide = 11;

const std::unordered_map<std::string, Rgb>& palette() {
    static const std::unordered_map<std::string, Rgb> p = {
        {"red", {0.90f, 0.16f, 0.16f}},
        {"green", {0.16f, 0.78f, 0.24f}},
        {"blue", {0.20f, 0.35f, 0.90f}},
        {"yellow", {0.92f, 0.86f, 0.20f}},
    };
    return p;
}

}  // namespace

Vocabulary::Vocabulary() {
    shapes_ = {"circle", "square", "triangle", "cross", "diamond", "ring"};
    colors_ = {"red", "green", "blue", "yellow"};
    verbs_ = {"slides", "falls", "shakes", "bounces"};
    words_ = {"<pad>", "<uncond>"};
    words_.insert(words_.end(), shapes_.begin(), shapes_.end());
    words_.insert(words_.end(), colors_.begin(), colors_.end());
    words_.insert(words_.end(), verbs_.begin(), verbs_.end());
    const std::vector<std::string> filler = {"a",     "the",  "and",      "scene", "empty",
                                             "suddenly", "appears", "then", "with", "still"};
    words_.insert(words_.end(), filler.begin(), filler.end());
}

int Vocabulary::id(const std::string& word) const {
    for (std::size_t i = 0; i < words_.size(); ++i)
        if (words_[i] == word) return int(i);
    throw std::invalid_argument("unknown vocabulary symbol: " + word);
}

const std::string& Vocabulary::word(int id) const {
    if (id < 0 || id >= size()) throw std::invalid_argument("token id out of range");
    return words_[id];
}

bool Vocabulary::is_shape(const std::string& w) const {
    return std::find(shapes_.begin(), shapes_.end(), w) != shapes_.end();
}
bool Vocabulary::is_color(const std::string& w) const {
    return std::find(colors_.begin(), colors_.end(), w) != colors_.end();
}
bool Vocabulary::is_verb(const std::string& w) const {
    return std::find(verbs_.begin(), verbs_.end(), w) != verbs_.end();
}

const Vocabulary& vocabulary() {
    static const Vocabulary v;
    return v;
}

Rgb palette_color(const std::string& color) {
    auto it = palette().find(color);
    if (it == palette().end()) throw std::invalid_argument("unknown color: " + color);
    return it->second;
}

Rgb background_color() { return {0.12f, 0.12f, 0.12f}; }

int shape_template_side() { return kTemplateSide; }

std::vector<std::uint8_t> shape_template(const std::string& shape, int side) {
    std::vector<std::uint8_t> t(std::size_t(side) * side, 0);
    const float c = (side - 1) / 2.0f;
    const float r = side / 2.0f - 0.5f;
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            const float dx = x - c, dy = y - c;
            bool on = false;
            if (shape == "circle") {
                on = dx * dx + dy * dy <= r * r;
            } else if (shape == "square") {
                on = true;
            } else if (shape == "triangle") {
                // apex up: row y spans a width proportional to y
                const float half = (y + 1) * 0.5f * (side - 1) / side;
                on = std::abs(dx) <= half;
            } else if (shape == "cross") {
                on = std::abs(dx) <= 1.5f || std::abs(dy) <= 1.5f;
            } else if (shape == "diamond") {
                on = std::abs(dx) + std::abs(dy) <= r;
            } else if (shape == "ring") {
                const float d2 = dx * dx + dy * dy;
                on = d2 <= r * r && d2 >= (r - 2.5f) * (r - 2.5f);
            } else {
                throw std::invalid_argument("unknown shape: " + shape);
            }
            if (on) t[std::size_t(y) * side + x] = 1;
        }
    return t;
}

namespace {

// Entity center at frame j, applying the verb's trajectory inside the motion
// window and freezing the accumulated displacement afterwards.
void entity_pos(const Entity& e, int j, float* x, float* y) {
    *x = e.x;
    *y = e.y;
    if (e.verb.empty()) return;
    const int upto = std::min(j + 1, e.move_off) - e.move_on;  // motion frames elapsed
    if (upto <= 0) return;
    const int k = upto;  // 1-based count of motion frames reached
    if (e.verb == "slides") {
        *x = e.x + 1.6f * k;
    } else if (e.verb == "falls") {
        *y = e.y + 1.6f * k;
    } else if (e.verb == "shakes") {
        const bool inside = j < e.move_off && j >= e.move_on;
        *x = e.x + (inside ? ((j - e.move_on) % 2 == 0 ? 2.5f : -2.5f) : 0.f);
    } else if (e.verb == "bounces") {
        const bool inside = j < e.move_off && j >= e.move_on;
        if (inside) {
            const float phase = float(j - e.move_on) / float(std::max(1, e.move_off - e.move_on));
            *y = e.y - 5.0f * std::sin(3.14159265f * phase);
        }
    } else {
        throw std::invalid_argument("unknown verb: " + e.verb);
    }
}

}  // namespace

Video render(const SceneScript& script) {
    Video v;
    v.frames = script.frames;
    v.h = v.w = script.size;
    const Rgb bg = background_color();
    v.data.resize(std::size_t(v.frames) * v.h * v.w * 3);
    for (int j = 0; j < v.frames; ++j) {
        float* f = v.frame(j);
        for (int i = 0; i < v.h * v.w; ++i) {
            f[3 * i + 0] = bg.r;
            f[3 * i + 1] = bg.g;
            f[3 * i + 2] = bg.b;
        }
        for (const Entity& e : script.entities) {
            if (j < e.on || j >= e.off) continue;
            const auto tmpl = shape_template(e.shape, kTemplateSide);
            const Rgb col = palette_color(e.color);
            float cx, cy;
            entity_pos(e, j, &cx, &cy);
            const int x0 = int(std::lround(cx)) - kTemplateSide / 2;
            const int y0 = int(std::lround(cy)) - kTemplateSide / 2;
            for (int ty = 0; ty < kTemplateSide; ++ty)
                for (int tx = 0; tx < kTemplateSide; ++tx) {
                    if (!tmpl[std::size_t(ty) * kTemplateSide + tx]) continue;
                    const int px = x0 + tx, py = y0 + ty;
                    if (px < 0 || py < 0 || px >= v.w || py >= v.h) continue;
                    float* pix = f + 3 * (std::size_t(py) * v.w + px);
                    pix[0] = col.r;
                    pix[1] = col.g;
                    pix[2] = col.b;
                }
        }
    }
    return v;
}

}  // namespace temposteer
