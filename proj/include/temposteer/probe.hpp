#pragma once

#include <string>
#include <vector>

#include "temposteer/losses.hpp"

namespace temposteer {

// Raw cross-attention captured at one denoising step:
// layers x heads x video-tokens x text-tokens, softmax-normalized over the
// text-token axis.
struct AttentionStack {
    std::vector<float> data;
    int layers = 0;
    int heads = 0;
    int n_v = 0;
    int n_p = 0;
    int step = 0;

    std::size_t size() const { return std::size_t(layers) * heads * n_v * n_p; }
    float* slice(int l, int h) {
        return data.data() + (std::size_t(l) * heads + h) * n_v * n_p;
    }
    const float* slice(int l, int h) const {
        return data.data() + (std::size_t(l) * heads + h) * n_v * n_p;
    }
};

// A word and the prompt positions of its subtokens (0-based).
struct TokenGroup {
    std::string label;
    std::vector<int> subtokens;
};

struct LatentDims {
    int t = 0, h = 0, w = 0;
    int n_v() const { return t * h * w; }
};

// Mean over the layer and head axes -> n_v x n_p, row-major.
std::vector<double> aggregate(const AttentionStack& stack);

// Mean over the group's columns, reshaped temporal-major to T' x H' x W'.
MapSequence token_maps(const std::vector<double>& agg, int n_v, int n_p,
                       const TokenGroup& group, const LatentDims& dims);

// Per-frame spatial sum; omit_first drops latent frame 1 and sets
// frame_offset = 2 (1-based convention).
TemporalSignal temporal_signal(const MapSequence& maps, bool omit_first);

// Maps from frame `start` (0-based) onward.
MapSequence slice_frames(const MapSequence& maps, int start);

// Adjoint of aggregate+token_maps+reshape: routes d(loss)/d(maps) for each
// token group back to the raw stack. map_grads[i] covers all T' frames
// (zeros where frames were omitted).
std::vector<float> stack_grad(const AttentionStack& stack,
                              const std::vector<TokenGroup>& groups,
                              const std::vector<std::vector<double>>& map_grads,
                              const LatentDims& dims);

}  // namespace temposteer
