#pragma once

#include <optional>
#include <string>
#include <vector>

#include "temposteer/diffusion.hpp"
#include "temposteer/losses.hpp"
#include "temposteer/probe.hpp"

namespace temposteer {

enum class SpatialRefMode { PerStep, Initial };

struct SteeringConfig {
    LossWeights weights;       // lambdas, tau, per-term ablation switches
    double lr = 5e-4;
    int steered_steps = 10;    // denoising steps that get inner optimization
    int max_inner_iters = 10;  // gradient updates per steered step
    double tau_corr = 0.9;     // early-stop correlation threshold
    SpatialRefMode spatial_ref = SpatialRefMode::PerStep;
    bool early_stop_enabled = true;
    bool omit_first = true;    // drop latent frame 1 from all temporal losses
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    double weight_decay = 0.0;
    SampleConfig sample;
};

// Appendix-style presets.
SteeringConfig one_object_profile();
SteeringConfig two_object_profile();
SteeringConfig movement_profile();
SteeringConfig multi_object_profile();

struct ControlledToken {
    TokenGroup group;          // prompt positions of the word's subtokens
    std::vector<double> mask;  // length T'
};

struct SteerPrompt {
    std::vector<int> tokens;
    std::vector<ControlledToken> controlled;
};

struct IterationRecord {
    LossBreakdown loss;
    std::vector<std::optional<double>> per_token_r;  // Pearson r, not the loss sign
};

struct StepTrace {
    int t = 0;
    std::vector<IterationRecord> iters;
    std::string stop_reason;  // threshold | iter-budget | nonfinite-abort | (empty: unsteered)
    double wall_ms = 0;
};

struct SteeringTrace {
    std::vector<StepTrace> steps;
};

struct SteerResult {
    LatentVideo z0;
    SteeringTrace trace;
    std::vector<AttentionStack> attention;  // conditional-pass capture per step
};

// Adam with decoupled weight decay applied to the latent across the inner
// iterations of one denoising step.
struct AdamState {
    std::vector<float> m, v;
    long t = 0;
    void reset(std::size_t n);
};

void latent_update(std::vector<float>& z, const std::vector<float>& grad, AdamState& state,
                   const SteeringConfig& cfg);

// True iff at least one token has a defined correlation and every defined
// correlation is >= tau_corr.
bool early_stop(const std::vector<std::optional<double>>& per_token_r, double tau_corr);

SteerResult steer_generate(const Sampler& sampler, const SteerPrompt& prompt,
                           const SteeringConfig& cfg, std::uint64_t seed);

}  // namespace temposteer
