// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "reora/ops.hpp"
#include "reora/tensor.hpp"

namespace reora {

/// Linear sublayers that can host adapters.
enum class TargetModule { q = 0, k, v, o, up, down };
inline constexpr int kNumTargetModules = 6;

const char* module_name(TargetModule m);
TargetModule parse_module(const std::string& name);
std::vector<TargetModule> parse_module_list(const std::string& csv);
std::string module_list_str(const std::vector<TargetModule>& mods);

struct ModelConfig {
    long n_layers = 8;
    long d_model = 64;
    long n_heads = 4;
    long d_ff = 128;
    long vocab_size = 32;
    long max_seq_len = 32;
    std::vector<TargetModule> target_modules = {
        TargetModule::q, TargetModule::k, TargetModule::v, TargetModule::up,
        TargetModule::down};
    // Backbone identity: init + warmup seed and length. Kept separate from
    // run seeds so one frozen backbone serves a whole sweep.
    std::uint64_t seed = 0x0badcafe;
    long pretrain_steps = 200;
    real pretrain_lr = 5e-3;
    long pretrain_batch = 8;

    void validate() const;
    long d_in(TargetModule m) const;
    long d_out(TargetModule m) const;
    bool targets(TargetModule m) const;
};

/// Frozen transformer backbone: pre-norm attention + MLP blocks, learned
/// positional embeddings, untied readout.
struct Backbone {
    ModelConfig cfg;
    Tensor tok_emb;  // [vocab, d]
    Tensor pos_emb;  // [max_seq, d]
    struct Layer {
        Tensor ln1_g, ln1_b;
        Tensor wq, wk, wv, wo;  // [d, d]
        Tensor ln2_g, ln2_b;
        Tensor w_up;    // [d_ff, d]
        Tensor w_down;  // [d, d_ff]
    };
    std::vector<Layer> layers;
    Tensor lnf_g, lnf_b;
    Tensor w_out;  // [vocab, d]

    std::vector<std::pair<std::string, Tensor>> named_tensors() const;
    void set_trainable(bool trainable);
    std::uint64_t weights_hash() const;
    const Tensor& module_weight(long layer, TargetModule m) const;
};

Backbone build_backbone(const ModelConfig& cfg, Rng& rng);

struct AdapterState;  // adapter.hpp

/// Token-level LM logits [B, T, vocab] with causal attention. Target linears
/// compute Wx plus the adapter delta when adapters are attached.
Tensor forward(const Backbone& bb, const std::vector<long>& tokens, long batch,
               long seq, const AdapterState* adapters = nullptr);

/// Sequence classifier: full attention, mean-pooled final state, readout
/// restricted to the first n_classes rows. Returns [B, n_classes].
Tensor forward_classifier(const Backbone& bb, const std::vector<long>& tokens,
                          long batch, long seq, long n_classes,
                          const AdapterState* adapters = nullptr);

}  // namespace reora
