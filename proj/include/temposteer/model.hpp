#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "temposteer/probe.hpp"
#include "temposteer/rng.hpp"

namespace temposteer {

struct ModelConfig {
    int latent_t = 8, latent_h = 8, latent_w = 8, channels = 4;
    int width = 64;
    int blocks = 4;
    int heads = 4;
    int mlp_ratio = 2;
    int vocab = 0;
    int max_prompt = 16;  // n_p, fixed prompt length (padded)
    int train_timesteps = 1000;

    int n_v() const { return latent_t * latent_h * latent_w; }
    int spatial() const { return latent_h * latent_w; }
    int head_dim() const { return width / heads; }
    int mlp_hidden() const { return width * mlp_ratio; }
    LatentDims dims() const { return {latent_t, latent_h, latent_w}; }
};

struct ParamInfo {
    std::string name;
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t count = 0;
};

// Per-forward activation storage; reused across calls to avoid reallocation.
struct Workspace {
    struct Block {
        std::vector<float> x_in;                   // [n_v, D]
        std::vector<float> ln1_hat, ln1_rstd;      // [n_v, D], [n_v]
        std::vector<float> q, k, v;                // [n_v, D]
        std::vector<float> self_probs;             // [groups, H, glen, glen]
        std::vector<float> self_ctx;               // [n_v, D] pre-output-proj
        std::vector<float> x2;                     // after self residual
        std::vector<float> ln2_hat, ln2_rstd;
        std::vector<float> cq;                     // cross queries [n_v, D]
        std::vector<float> ck, cv;                 // text keys/values [P, D]
        std::vector<float> cross_probs;            // [H, n_v, P]
        std::vector<float> cross_ctx;              // [n_v, D]
        std::vector<float> x3;                     // after cross residual
        std::vector<float> ln3_hat, ln3_rstd;
        std::vector<float> mlp_h, mlp_a;           // [n_v, Dm] pre/post activation
        std::vector<float> x4;                     // block output
    };
    std::vector<float> z;         // latent input [n_v, C]
    std::vector<float> x0;        // token embeddings incl. pos + time
    std::vector<float> time_feat; // [D] sinusoidal features
    std::vector<float> time_h;    // [D] hidden pre-activation
    std::vector<float> time_emb;  // [D]
    std::vector<float> text_emb;  // [P, D]
    std::vector<Block> blocks;
    std::vector<float> lnf_hat, lnf_rstd;
    std::vector<float> pred;      // [n_v, C] clean-latent prediction
    std::vector<int> tokens;      // prompt ids used for this pass
    int t = 0;
};

// Toy text-conditioned video diffusion transformer. Blocks alternate
// within-frame (spatial) and across-frame (temporal) self-attention, each
// followed by text cross-attention and an MLP, with pre-layernorm residuals.
class DiT {
public:
    explicit DiT(const ModelConfig& cfg);

    void init_params(Rng& rng);

    // Predicts the clean latent z0 from the noisy latent z, prompt token
    // ids, and timestep t (x0-parameterization).
    // When `capture` is non-null it receives the cross-attention stack
    // (blocks x heads x n_v x n_p) from this pass.
    void forward(const float* z, const std::vector<int>& tokens, int t, Workspace& ws,
                 AttentionStack* capture = nullptr) const;

    // Reverse pass. d_pred may be null (no gradient from the output).
    // d_cross_probs, when non-null, is a gradient injected at the captured
    // cross-attention probabilities (same layout as AttentionStack data).
    // dz (size n_v*C) and param_grads (size params().size()) are optional.
    void backward(const Workspace& ws, const float* d_pred, const float* d_cross_probs,
                  std::vector<float>* dz, std::vector<float>* param_grads) const;

    const ModelConfig& config() const { return cfg_; }
    std::vector<float>& params() { return params_; }
    const std::vector<float>& params() const { return params_; }
    const std::vector<ParamInfo>& param_infos() const { return infos_; }

    std::uint64_t weight_checksum() const;

private:
    float* p(const std::string& name);
    const float* p(const std::string& name) const;
    std::size_t reg(const std::string& name, std::vector<int> shape);
    void layout_params();

    ModelConfig cfg_;
    std::vector<float> params_;
    std::vector<ParamInfo> infos_;
};

}  // namespace temposteer
