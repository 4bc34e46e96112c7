// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>

#include "reora/adapter.hpp"
#include "reora/checkpoint.hpp"
#include "reora/metrics.hpp"
#include "reora/model.hpp"
#include "reora/optim.hpp"
#include "reora/reducer.hpp"
#include "reora/tasks.hpp"

namespace reora {

struct TrainConfig {
    real lr = 2e-3;  // toy-scale default; paper-scale reference is 2e-4
    long steps = 1000;
    long batch_size = 16;
    OptKind optimizer = OptKind::adamw;
    real grad_clip = 0.0;
    long eval_every = 100;
    long eval_examples = 128;  // per domain
    Split eval_split = Split::val;
    std::uint64_t seed = 1;
    ReducerConfig reducer;

    void validate() const;
};

struct EvalResult {
    std::vector<real> acc;
    std::vector<real> nll;
    real mean_acc() const;
    real mean_nll() const;
};

struct ProbeEvent {
    long step = 0;
    std::vector<long> suppressed;
    real loss_suppressed = 0.0;
    real loss_baseline = 0.0;
    std::vector<real> scores;
};

struct TrainResult {
    std::vector<MetricsRecord> log;
    std::vector<ProbeEvent> probes;
    std::vector<real> final_scores;
    real final_train_loss = 0.0;
    EvalResult final_eval;
    double wall_ms = 0.0;  // console reporting only, keeps artifacts replayable
};

/// Scalar loss of one batch (graph-recorded when grads are enabled).
Tensor batch_loss(const Backbone& bb, const AdapterState* ad,
                  const TokenBatch& batch);

/// Pure evaluation (no graph). Classification: argmax accuracy + CE;
/// LM: next-token argmax accuracy on positions past the first + mean NLL.
EvalResult evaluate(const Backbone& bb, const AdapterState* ad,
                    const EvalSet& eval_set);

/// The training controller: per step sample batch -> forward -> loss ->
/// backward -> freeze mask per the sampled active set -> optimizer step,
/// with periodic suppression probes and evals. Deterministic given seeds.
TrainResult train(const Backbone& bb, AdapterState& ad, const MixtureSpec& task,
                  const TrainConfig& cfg, MetricsWriter* metrics = nullptr,
                  ScoresWriter* scores = nullptr);

/// Backbone lifecycle: Gaussian init from the config seed, brief
/// self-supervised warmup on task-agnostic synthetic text, then frozen.
Backbone make_pretrained_backbone(const ModelConfig& cfg);

}  // namespace reora
