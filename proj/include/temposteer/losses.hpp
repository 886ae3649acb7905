#pragma once

#include <optional>
#include <string>
#include <vector>

namespace temposteer {

// Per-latent-frame control target in [0,1] for one token.
struct TemporalMask {
    std::vector<double> values;
    std::string label;
};

// Per-frame spatially summed attention for one token. frame_offset is the
// 1-based index of the first included latent frame (2 under first-frame
// omission, 1 otherwise).
struct TemporalSignal {
    std::vector<double> values;
    int frame_offset = 1;
};

// Sequence of per-frame spatial attention maps for one token, row-major.
struct MapSequence {
    std::vector<double> data;  // frames * h * w
    int frames = 0;
    int h = 0;
    int w = 0;

    double* frame(int j) { return data.data() + std::size_t(j) * h * w; }
    const double* frame(int j) const { return data.data() + std::size_t(j) * h * w; }
    std::size_t cells() const { return std::size_t(h) * w; }
};

struct LossTerms {
    std::optional<double> corr;  // empty when the correlation is undefined
    double energy = 0;
    double entropy = 0;
    double spatial = 0;
    double total = 0;
};

struct LossBreakdown : LossTerms {
    std::vector<LossTerms> per_token;
};

struct LossWeights {
    double lambda1 = 1.0;   // energy
    double lambda2 = 10.0;  // entropy
    double lambda3 = 1.0;   // spatial
    double tau = 0.5;       // activation threshold on the mask
    // ablation switches: a disabled term contributes 0 and no gradient
    bool use_corr = true;
    bool use_energy = true;
    bool use_entropy = true;
    bool use_spatial = true;
};

// Inputs for one controlled token, already frame-aligned (the omitted first
// frame, if any, is dropped from mask and maps alike).
struct TokenLossInput {
    std::vector<double> mask;
    MapSequence maps;      // current attention maps
    MapSequence ref_maps;  // snapshot the spatial penalty compares against
};

// (a - min) / (max - min); a constant signal maps to all zeros.
std::vector<double> minmax_normalize(const std::vector<double>& a);

// Negative Pearson correlation between the mask and the min-max normalized
// signal. Empty when either side has zero variance.
std::optional<double> pearson_loss(const std::vector<double>& m, const std::vector<double>& a);
std::optional<double> pearson_loss_grad(const std::vector<double>& m, const std::vector<double>& a,
                                        std::vector<double>* grad_a);

// Mean attention outside the active set minus mean attention inside it.
double energy_loss(const std::vector<double>& m, const std::vector<double>& a, double tau);
double energy_loss_grad(const std::vector<double>& m, const std::vector<double>& a, double tau,
                        std::vector<double>* grad_a);

// Mean Shannon entropy (nats) of the per-frame maps over active frames; each
// map is renormalized to sum 1, zero-sum maps contribute 0.
double entropy_loss(const MapSequence& maps, const std::vector<double>& m, double tau);
double entropy_loss_grad(const MapSequence& maps, const std::vector<double>& m, double tau,
                         std::vector<double>* grad_maps);

// Squared L2 norm of the per-cell difference of frame-summed maps.
double spatial_consistency_loss(const MapSequence& ref, const MapSequence& cur);
double spatial_consistency_loss_grad(const MapSequence& ref, const MapSequence& cur,
                                     std::vector<double>* grad_cur);

// Combined objective: per token corr + l1*energy + l2*entropy + l3*spatial,
// averaged over tokens. The per-frame signal is the spatial sum of each map.
LossBreakdown total_loss(const std::vector<TokenLossInput>& tokens, const LossWeights& w);

// Same value, plus d(total)/d(maps cell) for every token.
LossBreakdown total_loss_grad(const std::vector<TokenLossInput>& tokens, const LossWeights& w,
                              std::vector<std::vector<double>>* grads);

}  // namespace temposteer
