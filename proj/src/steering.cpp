#include "temposteer/steering.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace temposteer {

SteeringConfig one_object_profile() {
    SteeringConfig c;
    c.lr = 5e-4;
    c.tau_corr = 0.9;
    return c;
}

SteeringConfig two_object_profile() {
    SteeringConfig c = one_object_profile();
    c.lr = 1e-3;
    return c;
}

SteeringConfig movement_profile() {
    SteeringConfig c = one_object_profile();
    c.weights.lambda1 = 0.3;
    c.tau_corr = 0.85;
    return c;
}

SteeringConfig multi_object_profile() {
    SteeringConfig c = one_object_profile();
    c.steered_steps = 4;
    c.early_stop_enabled = false;
    return c;
}

void AdamState::reset(std::size_t n) {
    m.assign(n, 0.f);
    v.assign(n, 0.f);
    t = 0;
}

void latent_update(std::vector<float>& z, const std::vector<float>& grad, AdamState& state,
                   const SteeringConfig& cfg) {
    if (grad.size() != z.size() || state.m.size() != z.size())
        throw std::invalid_argument("latent/gradient shape mismatch");
    for (float g : grad)
        if (!std::isfinite(g)) throw std::invalid_argument("non-finite gradient");
    ++state.t;
    const double bc1 = 1 - std::pow(cfg.beta1, double(state.t));
    const double bc2 = 1 - std::pow(cfg.beta2, double(state.t));
    for (std::size_t i = 0; i < z.size(); ++i) {
        state.m[i] = float(cfg.beta1 * state.m[i] + (1 - cfg.beta1) * grad[i]);
        state.v[i] = float(cfg.beta2 * state.v[i] + (1 - cfg.beta2) * double(grad[i]) * grad[i]);
        const double upd = (state.m[i] / bc1) / (std::sqrt(state.v[i] / bc2) + cfg.adam_eps) +
                           cfg.weight_decay * z[i];
        z[i] = float(z[i] - cfg.lr * upd);
    }
}

bool early_stop(const std::vector<std::optional<double>>& per_token_r, double tau_corr) {
    if (per_token_r.empty()) throw std::invalid_argument("no controlled tokens");
    bool any_defined = false;
    for (const auto& r : per_token_r) {
        if (!r) continue;
        any_defined = true;
        if (*r < tau_corr) return false;
    }
    return any_defined;
}

namespace {

void validate_prompt(const SteerPrompt& prompt, const ModelConfig& mc) {
    if (prompt.controlled.empty()) throw std::invalid_argument("no controlled tokens");
    const auto& voc = vocabulary();
    for (const auto& ct : prompt.controlled) {
        if (ct.group.subtokens.empty())
            throw std::invalid_argument("controlled token has no subtokens");
        if (int(ct.mask.size()) != mc.latent_t)
            throw std::invalid_argument("mask length must equal latent frame count");
        for (double v : ct.mask)
            if (v < 0 || v > 1) throw std::invalid_argument("mask values must lie in [0,1]");
        bool found = false;
        for (int idx : ct.group.subtokens) {
            if (idx < 0 || idx >= int(prompt.tokens.size()))
                throw std::invalid_argument("subtoken index out of range");
            const int id = prompt.tokens[idx];
            if (id == pad_token_id() || id == uncond_token_id())
                throw std::invalid_argument("controlled token absent from prompt: " +
                                            ct.group.label);
            if (ct.group.label.empty() || voc.word(id) == ct.group.label) found = true;
        }
        if (!found)
            throw std::invalid_argument("controlled token absent from prompt: " +
                                        ct.group.label);
    }
}

}  // namespace

SteerResult steer_generate(const Sampler& sampler, const SteerPrompt& prompt,
                           const SteeringConfig& cfg, std::uint64_t seed) {
    const DiT& model = sampler.model();
    const ModelConfig& mc = model.config();
    validate_prompt(prompt, mc);

    const LatentDims dims = mc.dims();
    const int start = cfg.omit_first ? 1 : 0;
    const std::size_t n_tokens = prompt.controlled.size();

    SteerResult res;
    LatentVideo z = sampler.initial_noise(seed);
    const std::vector<int> ts = sampler.step_times(cfg.sample.steps);

    std::vector<TokenGroup> groups;
    std::vector<std::vector<double>> masks_aligned;
    for (const auto& ct : prompt.controlled) {
        groups.push_back(ct.group);
        masks_aligned.emplace_back(ct.mask.begin() + start, ct.mask.end());
    }

    // per-token reference maps for the spatial penalty, in Initial mode
    std::vector<MapSequence> initial_refs(n_tokens);
    bool have_initial_refs = false;

    AdamState adam;
    Workspace ws;

    for (std::size_t si = 0; si < ts.size(); ++si) {
        const int t = ts[si];
        const int t_prev = (si + 1 < ts.size()) ? ts[si + 1] : 0;
        StepTrace st;
        st.t = t;
        const auto wall0 = std::chrono::steady_clock::now();

        if (int(si) < cfg.steered_steps && cfg.max_inner_iters > 0) {
            adam.reset(z.data.size());
            std::vector<MapSequence> step_refs(n_tokens);
            bool have_step_refs = false;

            for (int u = 0; u < cfg.max_inner_iters; ++u) {
                AttentionStack stack;
                model.forward(z.data.data(), prompt.tokens, t, ws, &stack);
                const std::vector<double> agg = aggregate(stack);

                std::vector<TokenLossInput> inputs(n_tokens);
                std::vector<MapSequence> full_maps(n_tokens);
                for (std::size_t i = 0; i < n_tokens; ++i) {
                    full_maps[i] = token_maps(agg, stack.n_v, stack.n_p, groups[i], dims);
                    inputs[i].maps = slice_frames(full_maps[i], start);
                    inputs[i].mask = masks_aligned[i];
                }
                if (!have_step_refs) {
                    for (std::size_t i = 0; i < n_tokens; ++i) step_refs[i] = inputs[i].maps;
                    have_step_refs = true;
                    if (!have_initial_refs) {
                        initial_refs = step_refs;
                        have_initial_refs = true;
                    }
                }
                const auto& refs =
                    cfg.spatial_ref == SpatialRefMode::Initial ? initial_refs : step_refs;
                for (std::size_t i = 0; i < n_tokens; ++i) inputs[i].ref_maps = refs[i];

                std::vector<std::vector<double>> map_grads;
                IterationRecord rec;
                rec.loss = total_loss_grad(inputs, cfg.weights, &map_grads);
                for (const auto& tk : rec.loss.per_token)
                    rec.per_token_r.push_back(tk.corr ? std::optional<double>(-*tk.corr)
                                                      : std::nullopt);
                st.iters.push_back(rec);

                if (cfg.early_stop_enabled && early_stop(rec.per_token_r, cfg.tau_corr)) {
                    st.stop_reason = "threshold";
                    break;
                }

                // grads over aligned frames -> full frames (omitted frame gets 0)
                std::vector<std::vector<double>> full_grads(n_tokens);
                for (std::size_t i = 0; i < n_tokens; ++i) {
                    auto& fg = full_grads[i];
                    fg.assign(std::size_t(dims.n_v()), 0.0);
                    const std::size_t cells = full_maps[i].cells();
                    std::copy(map_grads[i].begin(), map_grads[i].end(),
                              fg.begin() + std::size_t(start) * cells);
                }
                const std::vector<float> d_probs = stack_grad(stack, groups, full_grads, dims);

                std::vector<float> dz;
                model.backward(ws, nullptr, d_probs.data(), &dz, nullptr);
                bool finite = std::isfinite(rec.loss.total);
                for (float g : dz)
                    if (!std::isfinite(g)) {
                        finite = false;
                        break;
                    }
                if (!finite) {
                    st.stop_reason = "nonfinite-abort";  // keep the pre-update latent
                    break;
                }
                latent_update(z.data, dz, adam, cfg);
                if (u + 1 == cfg.max_inner_iters) st.stop_reason = "iter-budget";
            }
        }

        AttentionStack step_stack;
        sampler.denoise_step(z, prompt.tokens, t, t_prev, cfg.sample.guidance, &step_stack);
        res.attention.push_back(std::move(step_stack));
        st.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - wall0)
                         .count();
        res.trace.steps.push_back(std::move(st));
    }
    res.z0 = std::move(z);
    return res;
}

}  // namespace temposteer
