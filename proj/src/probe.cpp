#include "temposteer/probe.hpp"

#include <numeric>
#include <stdexcept>

namespace temposteer {

std::vector<double> aggregate(const AttentionStack& stack) {
    if (stack.layers < 1 || stack.heads < 1 || stack.n_v < 1 || stack.n_p < 1 ||
        stack.data.size() != stack.size())
        throw std::invalid_argument("malformed attention stack");
    const std::size_t plane = std::size_t(stack.n_v) * stack.n_p;
    std::vector<double> agg(plane, 0.0);
    for (int l = 0; l < stack.layers; ++l)
        for (int h = 0; h < stack.heads; ++h) {
            const float* s = stack.slice(l, h);
            for (std::size_t i = 0; i < plane; ++i) agg[i] += s[i];
        }
    const double inv = 1.0 / (double(stack.layers) * stack.heads);
    for (double& v : agg) v *= inv;
    return agg;
}

MapSequence token_maps(const std::vector<double>& agg, int n_v, int n_p,
                       const TokenGroup& group, const LatentDims& dims) {
    if (dims.n_v() != n_v) throw std::invalid_argument("latent dims inconsistent with n_v");
    if (agg.size() != std::size_t(n_v) * n_p) throw std::invalid_argument("bad aggregate shape");
    if (group.subtokens.empty()) throw std::invalid_argument("empty token group");
    for (int idx : group.subtokens)
        if (idx < 0 || idx >= n_p) throw std::invalid_argument("subtoken index out of range");

    MapSequence maps;
    maps.frames = dims.t;
    maps.h = dims.h;
    maps.w = dims.w;
    maps.data.assign(std::size_t(n_v), 0.0);
    const double inv = 1.0 / double(group.subtokens.size());
    for (int v = 0; v < n_v; ++v) {
        double s = 0;
        for (int idx : group.subtokens) s += agg[std::size_t(v) * n_p + idx];
        maps.data[v] = s * inv;  // video tokens are already temporal-major
    }
    return maps;
}

TemporalSignal temporal_signal(const MapSequence& maps, bool omit_first) {
    TemporalSignal sig;
    const int start = omit_first ? 1 : 0;
    sig.frame_offset = start + 1;
    for (int j = start; j < maps.frames; ++j) {
        const double* f = maps.frame(j);
        sig.values.push_back(std::accumulate(f, f + maps.cells(), 0.0));
    }
    return sig;
}

MapSequence slice_frames(const MapSequence& maps, int start) {
    if (start < 0 || start > maps.frames) throw std::invalid_argument("bad frame slice");
    MapSequence out;
    out.frames = maps.frames - start;
    out.h = maps.h;
    out.w = maps.w;
    out.data.assign(maps.data.begin() + std::size_t(start) * maps.cells(), maps.data.end());
    return out;
}

std::vector<float> stack_grad(const AttentionStack& stack,
                              const std::vector<TokenGroup>& groups,
                              const std::vector<std::vector<double>>& map_grads,
                              const LatentDims& dims) {
    if (groups.size() != map_grads.size())
        throw std::invalid_argument("groups/map_grads size mismatch");
    if (dims.n_v() != stack.n_v) throw std::invalid_argument("latent dims inconsistent with n_v");

    // d(agg)/d(stack slice) = 1/(L*h); d(map)/d(agg column) = 1/|group|
    std::vector<double> dagg(std::size_t(stack.n_v) * stack.n_p, 0.0);
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const auto& g = groups[gi];
        const auto& mg = map_grads[gi];
        if (mg.size() != std::size_t(stack.n_v))
            throw std::invalid_argument("map grad size mismatch");
        const double inv = 1.0 / double(g.subtokens.size());
        for (int v = 0; v < stack.n_v; ++v) {
            const double d = mg[v] * inv;
            for (int idx : g.subtokens) dagg[std::size_t(v) * stack.n_p + idx] += d;
        }
    }
    const float inv_lh = float(1.0 / (double(stack.layers) * stack.heads));
    std::vector<float> out(stack.size());
    const std::size_t plane = std::size_t(stack.n_v) * stack.n_p;
    for (int l = 0; l < stack.layers; ++l)
        for (int h = 0; h < stack.heads; ++h) {
            float* o = out.data() + (std::size_t(l) * stack.heads + h) * plane;
            for (std::size_t i = 0; i < plane; ++i) o[i] = float(dagg[i]) * inv_lh;
        }
    return out;
}

}  // namespace temposteer
