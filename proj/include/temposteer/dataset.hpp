#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "temposteer/diffusion.hpp"
#include "temposteer/renderer.hpp"

namespace temposteer {

struct DatasetConfig {
    int count = 256;
    int frames = 16;
    int size = 32;
    double frac_appear = 0.4;
    double frac_two = 0.3;
    double frac_motion = 0.3;
    std::uint64_t seed = 0;
};

struct DatasetRecord {
    int id = 0;
    std::string kind;  // appear | two | motion
    std::vector<std::string> prompt;
    SceneScript script;
    std::string frames_dir;  // relative to the dataset root
};

// Prompt templates; the same phrasing is used for training data and suites.
std::vector<std::string> prompt_appear(const std::string& color, const std::string& shape);
std::vector<std::string> prompt_two(const std::string& c1, const std::string& s1,
                                    const std::string& c2, const std::string& s2);
std::vector<std::string> prompt_motion(const std::string& color, const std::string& shape,
                                       const std::string& verb);

std::vector<int> pad_tokens(const std::vector<std::string>& words, int max_prompt);

// Writes manifest.jsonl plus per-video PNG frame directories under out_dir.
std::vector<DatasetRecord> generate_dataset(const DatasetConfig& cfg, const std::string& out_dir);

std::vector<DatasetRecord> load_manifest(const std::string& manifest_path);

// Re-renders each record's script and encodes it (frames on disk are the
// rendered truth; scripts regenerate them bit-identically).
std::vector<TrainExample> load_training_data(const std::vector<DatasetRecord>& records,
                                             const LatentCodec& codec, int max_prompt);

SceneScript script_from_json_str(const std::string& s);
std::string script_to_json_str(const SceneScript& s);

}  // namespace temposteer
