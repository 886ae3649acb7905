#include "temposteer/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace temposteer {
namespace {

void check_lengths(std::size_t m, std::size_t a) {
    if (m != a) throw std::invalid_argument("mask/signal length mismatch");
}

std::vector<double> spatial_sums(const MapSequence& maps) {
    std::vector<double> a(maps.frames);
    for (int j = 0; j < maps.frames; ++j) {
        const double* f = maps.frame(j);
        a[j] = std::accumulate(f, f + maps.cells(), 0.0);
    }
    return a;
}

}  // namespace

std::vector<double> minmax_normalize(const std::vector<double>& a) {
    if (a.empty()) throw std::invalid_argument("empty signal");
    const auto [lo_it, hi_it] = std::minmax_element(a.begin(), a.end());
    const double lo = *lo_it, hi = *hi_it;
    std::vector<double> out(a.size(), 0.0);
    if (hi == lo) return out;  // constant signal -> all zeros
    const double inv = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] - lo) * inv;
    return out;
}

std::optional<double> pearson_loss(const std::vector<double>& m, const std::vector<double>& a) {
    return pearson_loss_grad(m, a, nullptr);
}

std::optional<double> pearson_loss_grad(const std::vector<double>& m, const std::vector<double>& a,
                                        std::vector<double>* grad_a) {
    check_lengths(m.size(), a.size());
    if (a.empty()) throw std::invalid_argument("empty signal");
    const std::size_t n = a.size();
    if (grad_a) grad_a->assign(n, 0.0);

    // min-max normalize; ties resolved to the first extremum (subgradient choice)
    const std::size_t i_lo = std::min_element(a.begin(), a.end()) - a.begin();
    const std::size_t i_hi = std::max_element(a.begin(), a.end()) - a.begin();
    const double lo = a[i_lo], hi = a[i_hi];
    std::vector<double> v(n, 0.0);
    if (hi > lo)
        for (std::size_t i = 0; i < n; ++i) v[i] = (a[i] - lo) / (hi - lo);

    const double mbar = std::accumulate(m.begin(), m.end(), 0.0) / double(n);
    const double vbar = std::accumulate(v.begin(), v.end(), 0.0) / double(n);
    double suu = 0, svv = 0, suv = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double u = m[i] - mbar, vv = v[i] - vbar;
        suu += u * u;
        svv += vv * vv;
        suv += u * vv;
    }
    if (suu <= 0.0 || svv <= 0.0) return std::nullopt;

    const double r = suv / (std::sqrt(suu) * std::sqrt(svv));
    if (grad_a) {
        // d(-r)/dv, then chain through centering and the min-max map
        std::vector<double> dv(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double u = m[i] - mbar, vv = v[i] - vbar;
            dv[i] = -(u / (std::sqrt(suu) * std::sqrt(svv)) - r * vv / svv);
        }
        // centering: dL/dv_i (centered) already includes it since d(v_i - vbar)/dv_j
        // = delta_ij - 1/n and sum(dv * dvbar-part) cancels: sum_i dv_i has the
        // property sum u = sum vv = 0, so the -1/n correction vanishes; chain the
        // min-max map directly.
        const double s = hi - lo;
        std::vector<double>& g = *grad_a;
        double tot = 0;
        for (std::size_t i = 0; i < n; ++i) {
            g[i] += dv[i] / s;
            tot += dv[i] * v[i];
        }
        // d v_k / d a_{i_lo} = (-1 + v_k)/s ; d v_k / d a_{i_hi} = -v_k/s
        double dsum = std::accumulate(dv.begin(), dv.end(), 0.0);
        g[i_lo] += (tot - dsum) / s;
        g[i_hi] -= tot / s;
    }
    return -r;
}

double energy_loss(const std::vector<double>& m, const std::vector<double>& a, double tau) {
    return energy_loss_grad(m, a, tau, nullptr);
}

double energy_loss_grad(const std::vector<double>& m, const std::vector<double>& a, double tau,
                        std::vector<double>* grad_a) {
    check_lengths(m.size(), a.size());
    if (a.empty()) throw std::invalid_argument("empty signal");
    const double invn = 1.0 / double(a.size());
    if (grad_a) grad_a->assign(a.size(), 0.0);
    double pos = 0, neg = 0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const bool active = m[j] > tau;
        (active ? pos : neg) += a[j] * invn;
        if (grad_a) (*grad_a)[j] = active ? -invn : invn;
    }
    return neg - pos;
}

double entropy_loss(const MapSequence& maps, const std::vector<double>& m, double tau) {
    return entropy_loss_grad(maps, m, tau, nullptr);
}

double entropy_loss_grad(const MapSequence& maps, const std::vector<double>& m, double tau,
                         std::vector<double>* grad_maps) {
    check_lengths(m.size(), std::size_t(maps.frames));
    const std::size_t cells = maps.cells();
    if (grad_maps) grad_maps->assign(maps.data.size(), 0.0);
    const double invn = 1.0 / double(maps.frames);
    double loss = 0;
    for (int j = 0; j < maps.frames; ++j) {
        const double* c = maps.frame(j);
        for (std::size_t k = 0; k < cells; ++k)
            if (c[k] < 0) throw std::invalid_argument("invalid attention map");
        if (!(m[j] > tau)) continue;
        double s = 0, q = 0;  // q = sum c*ln(c)
        for (std::size_t k = 0; k < cells; ++k) {
            s += c[k];
            if (c[k] > 0) q += c[k] * std::log(c[k]);
        }
        if (s <= 0) continue;  // zero-sum map contributes nothing
        const double h = std::log(s) - q / s;
        loss += invn * h;
        if (grad_maps) {
            double* g = grad_maps->data() + std::size_t(j) * cells;
            for (std::size_t k = 0; k < cells; ++k)
                if (c[k] > 0) g[k] = invn * (q / (s * s) - std::log(c[k]) / s);
        }
    }
    return loss;
}

double spatial_consistency_loss(const MapSequence& ref, const MapSequence& cur) {
    return spatial_consistency_loss_grad(ref, cur, nullptr);
}

double spatial_consistency_loss_grad(const MapSequence& ref, const MapSequence& cur,
                                     std::vector<double>* grad_cur) {
    if (ref.frames != cur.frames || ref.h != cur.h || ref.w != cur.w)
        throw std::invalid_argument("map sequence shape mismatch");
    const std::size_t cells = cur.cells();
    std::vector<double> diff(cells, 0.0);
    for (int j = 0; j < cur.frames; ++j) {
        const double* r = ref.frame(j);
        const double* c = cur.frame(j);
        for (std::size_t k = 0; k < cells; ++k) diff[k] += r[k] - c[k];
    }
    double loss = 0;
    for (std::size_t k = 0; k < cells; ++k) loss += diff[k] * diff[k];
    if (grad_cur) {
        grad_cur->assign(cur.data.size(), 0.0);
        for (int j = 0; j < cur.frames; ++j) {
            double* g = grad_cur->data() + std::size_t(j) * cells;
            for (std::size_t k = 0; k < cells; ++k) g[k] = -2.0 * diff[k];
        }
    }
    return loss;
}

LossBreakdown total_loss(const std::vector<TokenLossInput>& tokens, const LossWeights& w) {
    return total_loss_grad(tokens, w, nullptr);
}

LossBreakdown total_loss_grad(const std::vector<TokenLossInput>& tokens, const LossWeights& w,
                              std::vector<std::vector<double>>* grads) {
    if (tokens.empty()) throw std::invalid_argument("no controlled tokens");
    const double invN = 1.0 / double(tokens.size());
    LossBreakdown out;
    if (grads) grads->assign(tokens.size(), {});

    double agg_corr = 0;
    bool any_corr = false;
    for (std::size_t ti = 0; ti < tokens.size(); ++ti) {
        const TokenLossInput& tk = tokens[ti];
        const std::vector<double> a = spatial_sums(tk.maps);
        LossTerms t;

        std::vector<double> da_corr, da_energy, dmap_ent, dmap_sp;
        if (w.use_corr)
            t.corr = pearson_loss_grad(tk.mask, a, grads ? &da_corr : nullptr);
        if (w.use_energy)
            t.energy = energy_loss_grad(tk.mask, a, w.tau, grads ? &da_energy : nullptr);
        if (w.use_entropy)
            t.entropy = entropy_loss_grad(tk.maps, tk.mask, w.tau, grads ? &dmap_ent : nullptr);
        if (w.use_spatial)
            t.spatial = spatial_consistency_loss_grad(tk.ref_maps, tk.maps,
                                                      grads ? &dmap_sp : nullptr);

        t.total = t.corr.value_or(0.0) + w.lambda1 * t.energy + w.lambda2 * t.entropy +
                  w.lambda3 * t.spatial;
        if (t.corr) {
            agg_corr += *t.corr;
            any_corr = true;
        }
        out.energy += t.energy * invN;
        out.entropy += t.entropy * invN;
        out.spatial += t.spatial * invN;
        out.total += t.total * invN;
        out.per_token.push_back(t);

        if (grads) {
            std::vector<double>& g = (*grads)[ti];
            g.assign(tk.maps.data.size(), 0.0);
            const std::size_t cells = tk.maps.cells();
            for (int j = 0; j < tk.maps.frames; ++j) {
                double da = 0;
                if (!da_corr.empty()) da += da_corr[j];
                if (!da_energy.empty()) da += w.lambda1 * da_energy[j];
                double* gj = g.data() + std::size_t(j) * cells;
                for (std::size_t k = 0; k < cells; ++k) {
                    double v = da;
                    if (!dmap_ent.empty()) v += w.lambda2 * dmap_ent[std::size_t(j) * cells + k];
                    if (!dmap_sp.empty()) v += w.lambda3 * dmap_sp[std::size_t(j) * cells + k];
                    gj[k] = v * invN;
                }
            }
        }
    }
    if (any_corr) out.corr = agg_corr * invN;
    return out;
}

}  // namespace temposteer
