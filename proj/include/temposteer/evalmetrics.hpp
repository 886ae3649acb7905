#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "temposteer/diffusion.hpp"
#include "temposteer/losses.hpp"
#include "temposteer/renderer.hpp"
#include "temposteer/steering.hpp"

namespace temposteer {

// One detected object in a frame: the closed-world (color, shape) label.
struct DetectedEntity {
    std::string shape;
    std::string color;
    int pixels = 0;   // pixels quantized to this color
    double iou = 0;   // best template overlap for the reported shape
};

// Presence stream over sampled video frames (indices are 1-based).
struct PresenceSeries {
    std::vector<int> indices;
    std::vector<std::vector<DetectedEntity>> detections;  // one list per index

    bool present(std::size_t k, const std::string& label) const;  // label = "color shape"
};

// `count` evenly spaced 1-based frame indices over [1, total]; duplicates from
// rounding are collapsed, so short videos yield fewer than `count` samples.
std::vector<int> sample_indices(int total_frames, int count);

// Exact closed-world detector: quantize pixels to the nearest palette entry,
// then pick the best-overlap shape template per color blob. An entity is
// reported iff its color covers >= min_pixels pixels.
std::vector<DetectedEntity> detect_frame(const Video& video, int frame, int min_pixels = 4);
PresenceSeries oracle_detect(const Video& video, const std::vector<int>& indices,
                             int min_pixels = 4);

struct AccuracyBreakdown {
    double overall = 0;
    double absence = 0;   // accuracy over frames where the mask is inactive
    double presence = 0;  // accuracy over frames where the mask is active
    int inactive_frames = 0;
    int active_frames = 0;
};

// A sampled frame is correct iff the controlled label's detection state equals
// 1[mask > tau] there (and, if given, the background label is detected). The
// mask (one value per latent frame) maps to video frames by nearest neighbor
// in normalized time. Vacuous conditional accuracies are reported as 1.
AccuracyBreakdown temporal_accuracy(const PresenceSeries& series, const std::string& label,
                                    const std::vector<double>& mask, int video_frames,
                                    double tau = 0.5, const std::string& background_label = "");

// Fraction of sampled frames where the background label is detected.
double label_presence_rate(const PresenceSeries& series, const std::string& label);

struct MovementResult {
    bool correct = false;
    int argmax_second = 0;             // 0-based, ties broken toward earliest
    std::vector<double> per_second;    // mean inter-frame |diff| per second
};

// Per-second motion magnitude from mean absolute differences of consecutive
// sampled frames (fps_sample frames per second).
MovementResult movement_accuracy(const Video& video, int target_second, int fps_sample = 4);

// ---- suites & paired benchmark ----

struct SuiteItem {
    int id = 0;
    std::string kind;                  // one-object | two-object | movement
    std::vector<std::string> prompt;   // unpadded words
    std::string control_word;          // prompt word whose attention is steered
    std::vector<double> mask;          // length = latent frame count
    std::string eval_label;            // "color shape" checked against the mask
    std::string background_label;      // two-object: must always be present
    int target_second = -1;            // movement suites only
};

std::vector<SuiteItem> one_object_suite(int count, std::uint64_t seed, int latent_t);
std::vector<SuiteItem> two_object_suite(int count, std::uint64_t seed, int latent_t);
std::vector<SuiteItem> movement_suite(int count, std::uint64_t seed, int latent_t);

void save_suite(const std::string& path, const std::vector<SuiteItem>& suite);
std::vector<SuiteItem> load_suite(const std::string& path);

struct RunMetrics {
    AccuracyBreakdown acc;
    double background_presence = 1.0;
    bool movement_ok = false;
    int argmax_second = -1;
};

struct BenchRow {
    int id = 0;
    std::string kind;
    std::string prompt;                // space-joined words
    std::uint64_t seed = 0;
    RunMetrics baseline, steered;
};

struct BenchAggregate {
    double overall = 0, absence = 0, presence = 0;
    double background_presence = 0;
    double movement = 0;               // fraction of movement rows with correct timing
};

struct BenchmarkReport {
    std::vector<BenchRow> rows;
    BenchAggregate baseline, steered;
    std::string config_hash;
    std::uint64_t seed = 0;
};

// Runs each suite item twice from identical initial noise (plain sampling vs
// steered sampling) and evaluates both against the item's mask. Rows are
// independent; `jobs` threads may process them in parallel.
BenchmarkReport benchmark(const Sampler& sampler, const LatentCodec& codec,
                          const std::vector<SuiteItem>& suite, const SteeringConfig& steer_cfg,
                          std::uint64_t seed, int jobs = 1);

std::string report_to_json(const BenchmarkReport& report);
BenchmarkReport report_from_json(const std::string& text);
std::string report_to_csv(const BenchmarkReport& report);

}  // namespace temposteer
