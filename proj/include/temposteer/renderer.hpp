#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace temposteer {

// RGB float video in [0,1], frames x size x size x 3.
struct Video {
    std::vector<float> data;
    int frames = 0, h = 0, w = 0;

    float* frame(int j) { return data.data() + std::size_t(j) * h * w * 3; }
    const float* frame(int j) const { return data.data() + std::size_t(j) * h * w * 3; }
};

// Fixed symbol vocabulary shared by the renderer, the dataset generator and
// the model. Order is part of the checkpoint contract.
class Vocabulary {
public:
    Vocabulary();

    int id(const std::string& word) const;          // throws on unknown word
    const std::string& word(int id) const;
    int size() const { return int(words_.size()); }
    const std::vector<std::string>& words() const { return words_; }

    const std::vector<std::string>& shapes() const { return shapes_; }
    const std::vector<std::string>& colors() const { return colors_; }
    const std::vector<std::string>& verbs() const { return verbs_; }

    bool is_shape(const std::string& w) const;
    bool is_color(const std::string& w) const;
    bool is_verb(const std::string& w) const;

private:
    std::vector<std::string> words_;
    std::vector<std::string> shapes_, colors_, verbs_;
};

const Vocabulary& vocabulary();

// Palette entry for a color word, floats in [0,1].
struct Rgb {
    float r, g, b;
};
Rgb palette_color(const std::string& color);
Rgb background_color();

// One rendered entity: a colored shape with an active interval, an optional
// motion verb and a motion window (frame indices are 0-based, half-open).
struct Entity {
    std::string shape;
    std::string color;
    float x = 0, y = 0;        // center at spawn
    int on = 0, off = 0;       // visible in [on, off)
    std::string verb;          // empty = static
    int move_on = 0, move_off = 0;
};

struct SceneScript {
    std::vector<Entity> entities;
    int frames = 16;
    int size = 32;
};

// Binary shape template (side x side row-major) used by both the renderer
// and the oracle detector.
std::vector<std::uint8_t> shape_template(const std::string& shape, int side);
int shape_template_side();

Video render(const SceneScript& script);

}  // namespace temposteer
