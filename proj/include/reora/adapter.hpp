// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <map>
#include <memory>
#include <vector>

#include "reora/model.hpp"

namespace reora {

struct AdapterConfig {
    long rank = 16;
    long n_experts = 4;
    real alpha = 32.0;  // applied as alpha / rank
    std::vector<TargetModule> target_modules = {
        TargetModule::q, TargetModule::k, TargetModule::v, TargetModule::up,
        TargetModule::down};
    bool share_a = true;
    real a_init_std = 0.02;
    // A is Gaussian, B zero, router zero (uniform initial gating); with one
    // expert the router is omitted entirely.

    void validate(const ModelConfig& mcfg) const;
};

/// One adapted linear: down-projection A (shared across layers per input-dim
/// group when share_a), m expert up-projections B_i, and a router W_g.
struct AttachPoint {
    Tensor A;       // [r, d_in]; aliases the group tensor when shared
    Tensor router;  // [r, m]; null when m == 1
    std::vector<Tensor> B;  // m tensors [d_out, r]
};

struct AdapterState {
    AdapterConfig cfg;
    ModelConfig mcfg;
    // points[layer][module]; null when the module is not targeted.
    std::vector<std::array<std::unique_ptr<AttachPoint>, kNumTargetModules>> points;
    // One tensor per distinct input dimensionality (sorted); every layer's
    // attachment point of that group references the same object.
    std::vector<std::pair<long, Tensor>> shared_a_groups;
    // Reducer freeze mask (trainable) and drop-experiment mask (alive).
    std::vector<char> layer_b_trainable;        // [layer]
    std::vector<std::vector<char>> alive;       // [layer][expert]
    // Suppression gates on the adapter delta; 1 = passthrough.
    std::vector<real> gamma;                    // [layer]
    bool suppress_full_layer = false;
    bool freeze_router_with_b = false;

    const AttachPoint* point(long layer, TargetModule m) const;
    bool expert_alive(long layer, long i) const { return alive[layer][i] != 0; }
    long n_alive(long layer) const;

    /// Re-derive every tensor's requires_grad flag from the masks.
    void sync_trainability();

    /// Unique parameter tensors in a fixed order (shared A once).
    std::vector<std::pair<std::string, Tensor>> named_tensors() const;
    std::vector<Tensor> unique_params() const;
};

AdapterState init_adapters(const ModelConfig& mcfg, const AdapterConfig& acfg,
                           Rng& rng);

/// Gating weights over experts for down-projected inputs u [..., r];
/// dead experts receive exactly zero. Returns [..., m].
Tensor route(const Tensor& router_w, const Tensor& u,
             const std::vector<char>& alive_mask);

/// The adapted-delta path: u = A x, w = route(W_g, u),
/// delta = (alpha/r) * sum_i w_i * (B_i u). Returns zero tensor if the whole
/// layer is dead. Shapes: x [..., d_in] -> [..., d_out].
Tensor adapter_delta(const AdapterState& st, long layer, TargetModule m,
                     const Tensor& x);

/// Elements of all tensors currently trainable AND alive; shared A groups
/// counted once, dead experts excluded, routers included.
long count_trainable(const AdapterState& st);

void set_layer_alive(AdapterState& st, long layer, bool alive_flag);
void set_expert_alive(AdapterState& st, long layer, long expert, bool alive_flag);

}  // namespace reora
