#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "temposteer/model.hpp"
#include "temposteer/renderer.hpp"

namespace temposteer {

// Latent video tensor, temporal-major [T', H', W', C] flattened.
struct LatentVideo {
    std::vector<float> data;
    int t = 0, h = 0, w = 0, c = 0;
    int step = 0;

    std::size_t size() const { return std::size_t(t) * h * w * c; }
};

// Cosine noise schedule over discrete training timesteps.
class Schedule {
public:
    explicit Schedule(int train_timesteps);
    double alpha_bar(int t) const { return alpha_bar_.at(t); }
    int timesteps() const { return int(alpha_bar_.size()) - 1; }

private:
    std::vector<double> alpha_bar_;  // index 0..T, alpha_bar_[0] = 1
};

// Fixed linear patch codec standing in for a learned VAE: average-pool the
// video to latent resolution, center, scale, and pad RGB into C channels.
// decode(encode(v)) reproduces the pooled video exactly.
class LatentCodec {
public:
    explicit LatentCodec(const ModelConfig& cfg, int video_frames = 16, int video_size = 32);

    LatentVideo encode(const Video& v) const;
    Video decode(const LatentVideo& z) const;

    int video_frames() const { return tv_; }
    int video_size() const { return size_; }

private:
    ModelConfig cfg_;
    int tv_, size_;
};

struct TrainConfig {
    int steps = 1500;
    int batch = 8;
    double lr = 3e-4;
    double weight_decay = 0.01;
    double cond_drop = 0.1;   // classifier-free guidance dropout
    std::uint64_t seed = 0;
    int epoch_size = 0;       // steps per reported epoch; 0 = dataset/batch
};

struct TrainStats {
    std::vector<double> epoch_losses;
    double final_loss = 0;
};

// Checkpoint container: "TPC1" magic + JSON header + raw little-endian f32.
struct Checkpoint {
    ModelConfig model_cfg;
    std::vector<std::string> vocab;
    std::vector<float> params;
    std::string config_hash;
    int version = 1;
};

void save_checkpoint(const std::string& path, const DiT& model,
                     const std::vector<std::string>& vocab);
Checkpoint load_checkpoint(const std::string& path);
std::unique_ptr<DiT> model_from_checkpoint(const Checkpoint& ck);

// One training example: latent plus padded prompt token ids.
struct TrainExample {
    std::vector<float> latent;
    std::vector<int> tokens;
};

TrainStats train(DiT& model, const std::vector<TrainExample>& data, const TrainConfig& cfg);

struct SampleConfig {
    int steps = 50;
    double guidance = 3.0;
};

class Sampler {
public:
    Sampler(const DiT& model, int train_timesteps)
        : model_(model), schedule_(train_timesteps) {}

    // Timestep ladder for a run of `steps` sampling steps, descending.
    std::vector<int> step_times(int steps) const;

    // One deterministic DDIM update. Returns the conditional pass's
    // cross-attention in `capture` when non-null.
    void denoise_step(LatentVideo& z, const std::vector<int>& tokens, int t, int t_prev,
                      double guidance, AttentionStack* capture) const;

    // Full sampling loop from seeded Gaussian noise.
    LatentVideo generate(const std::vector<int>& tokens, std::uint64_t seed,
                         const SampleConfig& cfg,
                         std::vector<AttentionStack>* attention = nullptr) const;

    LatentVideo initial_noise(std::uint64_t seed) const;

    const DiT& model() const { return model_; }
    const Schedule& schedule() const { return schedule_; }

private:
    const DiT& model_;
    Schedule schedule_;
};

int uncond_token_id();
int pad_token_id();

}  // namespace temposteer
