#include "temposteer/diffusion.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "temposteer/kernels.hpp"
#include "temposteer/rng.hpp"

namespace temposteer {

using nlohmann::json;

Schedule::Schedule(int train_timesteps) {
    if (train_timesteps < 1) throw std::invalid_argument("train_timesteps must be >= 1");
    alpha_bar_.resize(train_timesteps + 1);
    const double s = 0.008;
    auto f = [&](double t) {
        const double x = (t / train_timesteps + s) / (1 + s) * 1.5707963267948966;
        const double c = std::cos(x);
        return c * c;
    };
    const double f0 = f(0);
    for (int t = 0; t <= train_timesteps; ++t)
        alpha_bar_[t] = std::max(1e-8, f(double(t)) / f0);
}

LatentCodec::LatentCodec(const ModelConfig& cfg, int video_frames, int video_size)
    : cfg_(cfg), tv_(video_frames), size_(video_size) {
    if (tv_ % cfg.latent_t != 0 || size_ % cfg.latent_h != 0 || size_ % cfg.latent_w != 0)
        throw std::invalid_argument("video dims not divisible by latent dims");
    if (cfg.channels < 3) throw std::invalid_argument("codec needs >= 3 latent channels");
}

LatentVideo LatentCodec::encode(const Video& v) const {
    if (v.frames != tv_ || v.h != size_ || v.w != size_)
        throw std::invalid_argument("video dims mismatch");
    const int pt = tv_ / cfg_.latent_t, ps = size_ / cfg_.latent_h;
    LatentVideo z;
    z.t = cfg_.latent_t;
    z.h = cfg_.latent_h;
    z.w = cfg_.latent_w;
    z.c = cfg_.channels;
    z.data.assign(z.size(), 0.f);
    for (int j = 0; j < z.t; ++j)
        for (int y = 0; y < z.h; ++y)
            for (int x = 0; x < z.w; ++x) {
                double acc[3] = {0, 0, 0};
                for (int dj = 0; dj < pt; ++dj)
                    for (int dy = 0; dy < ps; ++dy)
                        for (int dx = 0; dx < ps; ++dx) {
                            const float* p = v.frame(j * pt + dj) +
                                             3 * (std::size_t(y * ps + dy) * size_ + x * ps + dx);
                            acc[0] += p[0];
                            acc[1] += p[1];
                            acc[2] += p[2];
                        }
                const double inv = 1.0 / (double(pt) * ps * ps);
                float* out = z.data.data() +
                             ((std::size_t(j) * z.h + y) * z.w + x) * z.c;
                for (int c = 0; c < 3; ++c) out[c] = float(2.0 * (acc[c] * inv - 0.5));
                for (int c = 3; c < z.c; ++c) out[c] = 0.f;
            }
    return z;
}

Video LatentCodec::decode(const LatentVideo& z) const {
    if (z.t != cfg_.latent_t || z.h != cfg_.latent_h || z.w != cfg_.latent_w ||
        z.c != cfg_.channels)
        throw std::invalid_argument("latent dims mismatch");
    const int pt = tv_ / z.t, ps = size_ / z.h;
    Video v;
    v.frames = tv_;
    v.h = v.w = size_;
    v.data.resize(std::size_t(tv_) * size_ * size_ * 3);
    for (int f = 0; f < tv_; ++f) {
        const int j = f / pt;
        float* frame = v.frame(f);
        for (int py = 0; py < size_; ++py)
            for (int px = 0; px < size_; ++px) {
                const float* cell = z.data.data() +
                                    ((std::size_t(j) * z.h + py / ps) * z.w + px / ps) * z.c;
                float* pix = frame + 3 * (std::size_t(py) * size_ + px);
                for (int c = 0; c < 3; ++c)
                    pix[c] = std::min(1.f, std::max(0.f, cell[c] * 0.5f + 0.5f));
            }
    }
    return v;
}

int uncond_token_id() { return 1; }
int pad_token_id() { return 0; }

namespace {

std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ull;
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
    return buf;
}

json config_json(const ModelConfig& c) {
    return json{{"latent_t", c.latent_t}, {"latent_h", c.latent_h}, {"latent_w", c.latent_w},
                {"channels", c.channels}, {"width", c.width},       {"blocks", c.blocks},
                {"heads", c.heads},       {"mlp_ratio", c.mlp_ratio}, {"vocab", c.vocab},
                {"max_prompt", c.max_prompt}, {"train_timesteps", c.train_timesteps}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.latent_t = j.at("latent_t");
    c.latent_h = j.at("latent_h");
    c.latent_w = j.at("latent_w");
    c.channels = j.at("channels");
    c.width = j.at("width");
    c.blocks = j.at("blocks");
    c.heads = j.at("heads");
    c.mlp_ratio = j.at("mlp_ratio");
    c.vocab = j.at("vocab");
    c.max_prompt = j.at("max_prompt");
    c.train_timesteps = j.at("train_timesteps");
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const DiT& model,
                     const std::vector<std::string>& vocab) {
    json header;
    header["version"] = 1;
    header["model"] = config_json(model.config());
    header["vocab"] = vocab;
    header["config_hash"] = fnv1a_hex(config_json(model.config()).dump());
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write("TPC1", 4);
    const std::uint32_t len = std::uint32_t(hs.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(hs.data(), hs.size());
    const auto& p = model.params();
    out.write(reinterpret_cast<const char*>(p.data()), std::streamsize(p.size() * sizeof(float)));
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "TPC1", 4) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path);
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    std::string hs(len, '\0');
    in.read(hs.data(), len);
    if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
    json header = json::parse(hs);

    Checkpoint ck;
    ck.version = header.at("version");
    ck.model_cfg = config_from_json(header.at("model"));
    ck.vocab = header.at("vocab").get<std::vector<std::string>>();
    ck.config_hash = header.at("config_hash");

    DiT probe(ck.model_cfg);  // for the expected parameter count
    ck.params.resize(probe.params().size());
    in.read(reinterpret_cast<char*>(ck.params.data()),
            std::streamsize(ck.params.size() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated checkpoint weights: " + path);
    return ck;
}

std::unique_ptr<DiT> model_from_checkpoint(const Checkpoint& ck) {
    auto m = std::make_unique<DiT>(ck.model_cfg);
    m->params() = ck.params;
    return m;
}

TrainStats train(DiT& model, const std::vector<TrainExample>& data, const TrainConfig& cfg) {
    if (data.empty()) throw std::invalid_argument("empty training set");
    const auto& mc = model.config();
    const std::size_t zsize = std::size_t(mc.n_v()) * mc.channels;
    const std::size_t psize = model.params().size();
    Rng rng(cfg.seed);
    Rng data_rng = rng.split("data");
    Rng noise_rng = rng.split("noise");
    Rng drop_rng = rng.split("drop");

    Schedule sched(mc.train_timesteps);
    std::vector<float> grads(psize), m1(psize, 0.f), m2(psize, 0.f);
    std::vector<float> zt(zsize), noise(zsize), d_pred(zsize);
    Workspace ws;
    TrainStats stats;

    const int epoch_size =
        cfg.epoch_size > 0 ? cfg.epoch_size : std::max<int>(1, int(data.size()) / cfg.batch);
    double epoch_acc = 0;
    int epoch_n = 0;
    long adam_t = 0;

    for (int step = 0; step < cfg.steps; ++step) {
        std::fill(grads.begin(), grads.end(), 0.f);
        double batch_loss = 0;
        for (int b = 0; b < cfg.batch; ++b) {
            const auto& ex = data[data_rng.below(data.size())];
            const int t = 1 + int(noise_rng.below(std::uint64_t(mc.train_timesteps)));
            const double ab = sched.alpha_bar(t);
            const float sa = float(std::sqrt(ab)), sb = float(std::sqrt(1 - ab));
            for (std::size_t i = 0; i < zsize; ++i) {
                noise[i] = noise_rng.normalf();
                zt[i] = sa * ex.latent[i] + sb * noise[i];
            }
            std::vector<int> tokens = ex.tokens;
            if (drop_rng.uniform() < cfg.cond_drop)
                std::fill(tokens.begin(), tokens.end(), uncond_token_id());
            model.forward(zt.data(), tokens, t, ws);
            double loss = 0;
            const double invn = 1.0 / double(zsize);
            for (std::size_t i = 0; i < zsize; ++i) {
                const double d = double(ws.pred[i]) - ex.latent[i];
                loss += d * d * invn;
                d_pred[i] = float(2.0 * d * invn / cfg.batch);
            }
            if (!std::isfinite(loss))
                throw std::runtime_error("training diverged: non-finite loss at step " +
                                         std::to_string(step));
            batch_loss += loss / cfg.batch;
            model.backward(ws, d_pred.data(), nullptr, nullptr, &grads);
        }

        // AdamW; decay applies to matrices only
        ++adam_t;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double bc1 = 1 - std::pow(b1, double(adam_t));
        const double bc2 = 1 - std::pow(b2, double(adam_t));
        auto& params = model.params();
        for (const auto& info : model.param_infos()) {
            const bool decay = info.shape.size() > 1;
            for (std::size_t i = info.offset; i < info.offset + info.count; ++i) {
                const double g = grads[i];
                m1[i] = float(b1 * m1[i] + (1 - b1) * g);
                m2[i] = float(b2 * m2[i] + (1 - b2) * g * g);
                double upd = (m1[i] / bc1) / (std::sqrt(m2[i] / bc2) + eps);
                if (decay) upd += cfg.weight_decay * params[i];
                params[i] = float(params[i] - cfg.lr * upd);
            }
        }

        epoch_acc += batch_loss;
        if (++epoch_n == epoch_size) {
            stats.epoch_losses.push_back(epoch_acc / epoch_n);
            epoch_acc = 0;
            epoch_n = 0;
        }
        stats.final_loss = batch_loss;
    }
    if (epoch_n > 0) stats.epoch_losses.push_back(epoch_acc / epoch_n);
    return stats;
}

std::vector<int> Sampler::step_times(int steps) const {
    const int T = schedule_.timesteps();
    if (steps < 1 || steps > T) throw std::invalid_argument("bad sampling step count");
    std::vector<int> ts(steps);
    for (int i = 0; i < steps; ++i)
        ts[i] = std::max(1, int(std::lround(double(steps - i) * T / steps)));
    return ts;
}

void Sampler::denoise_step(LatentVideo& z, const std::vector<int>& tokens, int t, int t_prev,
                           double guidance, AttentionStack* capture) const {
    const auto& mc = model_.config();
    if (int(z.data.size()) != mc.n_v() * mc.channels)
        throw std::invalid_argument("latent size mismatch");
    Workspace ws;
    model_.forward(z.data.data(), tokens, t, ws, capture);
    std::vector<float> x0 = ws.pred;
    if (guidance != 1.0) {
        std::vector<int> uncond(tokens.size(), uncond_token_id());
        Workspace wsu;
        model_.forward(z.data.data(), uncond, t, wsu);
        for (std::size_t i = 0; i < x0.size(); ++i)
            x0[i] = float(wsu.pred[i] + guidance * (double(x0[i]) - wsu.pred[i]));
    }
    // DDIM update in the x0-parameterization: derive the implied noise from
    // the prediction, then re-noise to the previous timestep.
    const double ab = schedule_.alpha_bar(t), ab_prev = schedule_.alpha_bar(t_prev);
    const double sa = std::sqrt(ab), sb = std::sqrt(1 - ab);
    const double pa = std::sqrt(ab_prev), pb = std::sqrt(1 - ab_prev);
    for (std::size_t i = 0; i < z.data.size(); ++i) {
        const double z0 = std::min(1.5, std::max(-1.5, double(x0[i])));
        const double eps_hat = (z.data[i] - sa * z0) / sb;
        z.data[i] = float(pa * z0 + pb * eps_hat);
    }
    z.step = t_prev;
}

LatentVideo Sampler::initial_noise(std::uint64_t seed) const {
    const auto& mc = model_.config();
    LatentVideo z;
    z.t = mc.latent_t;
    z.h = mc.latent_h;
    z.w = mc.latent_w;
    z.c = mc.channels;
    z.step = schedule_.timesteps();
    z.data.resize(z.size());
    Rng rng = Rng(seed).split("init_noise");
    for (float& v : z.data) v = rng.normalf();
    return z;
}

LatentVideo Sampler::generate(const std::vector<int>& tokens, std::uint64_t seed,
                              const SampleConfig& cfg,
                              std::vector<AttentionStack>* attention) const {
    LatentVideo z = initial_noise(seed);
    const std::vector<int> ts = step_times(cfg.steps);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const int t_prev = (i + 1 < ts.size()) ? ts[i + 1] : 0;
        AttentionStack stack;
        denoise_step(z, tokens, ts[i], t_prev, cfg.guidance, attention ? &stack : nullptr);
        if (attention) attention->push_back(std::move(stack));
    }
    return z;
}

}  // namespace temposteer
