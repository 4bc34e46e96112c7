// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "reora/adapter.hpp"
#include "reora/rng.hpp"

namespace reora {

enum class SignMode { intent, paper_literal };

struct ReducerConfig {
    bool enabled = false;
    long probe_interval = 50;
    long n_suppressed = 0;  // 0 -> n_layers / 2
    long k_active = 0;      // 0 -> n_layers (selective update disabled)
    real ema_beta = 0.9;
    SignMode sign_mode = SignMode::intent;
    real temperature = 1.0;  // sharpening exponent on raw scores
    bool suppress_full_layer = false;
    bool freeze_router_with_b = false;
};

/// Per-layer importance scores plus the sampling machinery of the
/// selective-update mechanism.
struct ImportanceState {
    ReducerConfig cfg;
    std::vector<real> s;
    Rng rng;
    long n_layers = 0;

    ImportanceState(const ReducerConfig& c, long layers, std::uint64_t seed);
    long n_suppressed() const;
    long k_active() const;
};

/// RAII suppression: gamma of the chosen layers is zeroed on entry and
/// restored to exactly 1 on exit.
class SuppressionScope {
public:
    SuppressionScope(AdapterState& ad, const std::vector<long>& layers);
    ~SuppressionScope();
    SuppressionScope(const SuppressionScope&) = delete;
    SuppressionScope& operator=(const SuppressionScope&) = delete;

private:
    AdapterState& ad_;
    std::vector<long> layers_;
};

struct ProbeResult {
    std::vector<long> suppressed;
    real loss_suppressed = 0.0;
    real loss_baseline = 0.0;
};

/// Suppression probing: gate the lowest-score layers to zero, measure the
/// validation-loss increase against the restored model on the same batch,
/// and fold it into the scores of the suppressed set. Produces no gradients
/// and mutates nothing but gamma (transiently) and s.
/// `eval_loss` must evaluate the current model/adapters on the held batch.
ProbeResult probe_and_update_scores(ImportanceState& st, AdapterState& ad,
                                    const std::function<real()>& eval_loss,
                                    bool batch_nonempty = true);

/// Normalized sampling distribution over layers: sigmoid(+s) in intent mode,
/// sigmoid(-s) in paper-literal mode, optional sharpening exponent.
std::vector<real> sampling_distribution(const ImportanceState& st);

/// K distinct layers by sequential weighted sampling without replacement
/// under sampling_distribution. K = n_layers short-circuits to all layers
/// without consuming randomness.
std::vector<long> sample_active_layers(ImportanceState& st);

/// B matrices of non-active layers become frozen; A and routers are
/// unaffected (unless freeze_router_with_b).
void apply_freeze_mask(AdapterState& ad, const std::vector<long>& active);

}  // namespace reora
