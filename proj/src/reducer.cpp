// SPDX-License-Identifier: Apache-2.0
#include "reora/reducer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace reora {

ImportanceState::ImportanceState(const ReducerConfig& c, long layers,
                                 std::uint64_t seed)
    : cfg(c), s(layers, 0.0), rng(seed), n_layers(layers) {
    if (layers <= 0) throw ConfigError("reducer needs at least one layer");
    if (cfg.n_suppressed < 0 || cfg.n_suppressed > layers)
        throw ConfigError("n_suppressed out of range");
    if (cfg.k_active < 0 || cfg.k_active > layers)
        throw ConfigError("k_active out of range");
    if (cfg.ema_beta < 0.0 || cfg.ema_beta >= 1.0)
        throw ConfigError("ema_beta must be in [0,1)");
    if (cfg.probe_interval < 0)
        throw ConfigError("probe_interval must be >= 0 (0 disables probing)");
}

long ImportanceState::n_suppressed() const {
    return cfg.n_suppressed > 0 ? cfg.n_suppressed : std::max(1L, n_layers / 2);
}

long ImportanceState::k_active() const {
    return cfg.k_active > 0 ? cfg.k_active : n_layers;
}

SuppressionScope::SuppressionScope(AdapterState& ad,
                                   const std::vector<long>& layers)
    : ad_(ad), layers_(layers) {
    for (long l : layers_) ad_.gamma[l] = 0.0;
}

SuppressionScope::~SuppressionScope() {
    for (long l : layers_) ad_.gamma[l] = 1.0;
}

ProbeResult probe_and_update_scores(ImportanceState& st, AdapterState& ad,
                                    const std::function<real()>& eval_loss,
                                    bool batch_nonempty) {
    if (!batch_nonempty) throw UsageError("probe requires a non-empty validation batch");
    const long n_sup = st.n_suppressed();

    // Lowest current scores, ties to the lowest layer index.
    std::vector<long> idx(st.n_layers);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](long a, long b) { return st.s[a] < st.s[b]; });
    ProbeResult res;
    res.suppressed.assign(idx.begin(), idx.begin() + n_sup);
    std::sort(res.suppressed.begin(), res.suppressed.end());

    {
        NoGradGuard ng;
        {
            SuppressionScope scope(ad, res.suppressed);
            res.loss_suppressed = eval_loss();
        }
        res.loss_baseline = eval_loss();
    }

    const real increase =
        std::max(res.loss_suppressed - res.loss_baseline, 0.0) / n_sup;
    for (long l : res.suppressed)
        st.s[l] = st.cfg.ema_beta * st.s[l] + (1.0 - st.cfg.ema_beta) * increase;
    return res;
}

std::vector<real> sampling_distribution(const ImportanceState& st) {
    std::vector<real> p(st.n_layers);
    const real sign = st.cfg.sign_mode == SignMode::intent ? 1.0 : -1.0;
    real total = 0.0;
    for (long i = 0; i < st.n_layers; ++i) {
        const real x = sign * st.s[i];
        real raw = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                            : std::exp(x) / (1.0 + std::exp(x));
        if (st.cfg.temperature != 1.0) raw = std::pow(raw, st.cfg.temperature);
        p[i] = raw;
        total += raw;
    }
    for (auto& v : p) v /= total;
    return p;
}

std::vector<long> sample_active_layers(ImportanceState& st) {
    const long k = st.k_active();
    std::vector<long> active;
    if (k >= st.n_layers) {
        active.resize(st.n_layers);
        std::iota(active.begin(), active.end(), 0);
        return active;
    }
    std::vector<real> p = sampling_distribution(st);
    std::vector<long> remaining(st.n_layers);
    std::iota(remaining.begin(), remaining.end(), 0);
    for (long draw = 0; draw < k; ++draw) {
        real total = 0.0;
        for (long i : remaining) total += p[i];
        const real u = st.rng.uniform() * total;
        real acc = 0.0;
        std::size_t pick = remaining.size() - 1;
        for (std::size_t j = 0; j < remaining.size(); ++j) {
            acc += p[remaining[j]];
            if (u < acc) {
                pick = j;
                break;
            }
        }
        active.push_back(remaining[pick]);
        remaining.erase(remaining.begin() + static_cast<long>(pick));
    }
    std::sort(active.begin(), active.end());
    return active;
}

void apply_freeze_mask(AdapterState& ad, const std::vector<long>& active) {
    std::fill(ad.layer_b_trainable.begin(), ad.layer_b_trainable.end(), 0);
    for (long l : active) ad.layer_b_trainable[l] = 1;
    ad.sync_trainability();
}

}  // namespace reora
