// SPDX-License-Identifier: Apache-2.0
#include "reora/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

namespace reora {

void TrainConfig::validate() const {
    if (lr <= 0) throw ConfigError("lr must be positive");
    if (steps < 0) throw ConfigError("steps must be >= 0");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (eval_examples <= 0) throw ConfigError("eval_examples must be positive");
}

real EvalResult::mean_acc() const {
    real s = 0.0;
    for (real a : acc) s += a;
    return acc.empty() ? 0.0 : s / acc.size();
}

real EvalResult::mean_nll() const {
    real s = 0.0;
    for (real a : nll) s += a;
    return nll.empty() ? 0.0 : s / nll.size();
}

Tensor batch_loss(const Backbone& bb, const AdapterState* ad,
                  const TokenBatch& batch) {
    if (batch.empty()) throw UsageError("batch_loss: empty batch");
    if (batch.kind == TaskKind::seq_classification) {
        Tensor logits = forward_classifier(bb, batch.tokens, batch.batch,
                                           batch.seq, 2, ad);
        return cross_entropy(logits, batch.labels);
    }
    Tensor logits = forward(bb, batch.tokens, batch.batch, batch.seq, ad);
    Tensor flat = reshape(logits, {batch.batch * batch.seq, bb.cfg.vocab_size});
    return cross_entropy(flat, batch.labels);
}

namespace {

// accuracy and NLL of one batch; assumes NoGradGuard is active
std::pair<real, real> eval_batch(const Backbone& bb, const AdapterState* ad,
                                 const TokenBatch& b) {
    if (b.kind == TaskKind::seq_classification) {
        Tensor logits = forward_classifier(bb, b.tokens, b.batch, b.seq, 2, ad);
        long correct = 0;
        for (long i = 0; i < b.batch; ++i) {
            const real* row = logits->data.data() + i * 2;
            const long pred = row[1] > row[0] ? 1 : 0;
            correct += (pred == b.labels[i]);
        }
        const real nll = cross_entropy(logits, b.labels)->data[0];
        return {static_cast<real>(correct) / b.batch, nll};
    }
    Tensor logits = forward(bb, b.tokens, b.batch, b.seq, ad);
    const long v = bb.cfg.vocab_size;
    long correct = 0, counted = 0;
    for (long i = 0; i < b.batch; ++i) {
        // position 0 predicts the free start token; skip it for accuracy
        for (long t = 1; t < b.seq; ++t) {
            const real* row = logits->data.data() + (i * b.seq + t) * v;
            long arg = 0;
            for (long j = 1; j < v; ++j)
                if (row[j] > row[arg]) arg = j;
            correct += (arg == b.labels[i * b.seq + t]);
            ++counted;
        }
    }
    Tensor flat = reshape(logits, {b.batch * b.seq, v});
    const real nll = cross_entropy(flat, b.labels)->data[0];
    return {counted ? static_cast<real>(correct) / counted : 0.0, nll};
}

}  // namespace

EvalResult evaluate(const Backbone& bb, const AdapterState* ad,
                    const EvalSet& eval_set) {
    NoGradGuard ng;
    EvalResult res;
    for (const auto& batches : eval_set.per_domain) {
        real acc = 0.0, nll = 0.0;
        long total = 0;
        for (const auto& b : batches) {
            auto [a, n] = eval_batch(bb, ad, b);
            acc += a * b.batch;
            nll += n * b.batch;
            total += b.batch;
        }
        res.acc.push_back(total ? acc / total : 0.0);
        res.nll.push_back(total ? nll / total : 0.0);
    }
    return res;
}

TrainResult train(const Backbone& bb, AdapterState& ad, const MixtureSpec& task,
                  const TrainConfig& cfg, MetricsWriter* metrics,
                  ScoresWriter* scores) {
    cfg.validate();
    if (task.required_vocab() > bb.cfg.vocab_size)
        throw ConfigError("task needs vocab " +
                          std::to_string(task.required_vocab()) +
                          " but model has " + std::to_string(bb.cfg.vocab_size));
    const auto t0 = std::chrono::steady_clock::now();
    const long n_layers = bb.cfg.n_layers;

    BatchStream train_stream(task, cfg.batch_size,
                             child_seed(cfg.seed, "train.batches"), Split::train);
    BatchStream probe_stream(task, cfg.batch_size,
                             child_seed(cfg.seed, "probe.val"), Split::val);
    EvalSet eval_set = build_eval_set(task, cfg.eval_examples, 32,
                                      child_seed(cfg.seed, "eval"),
                                      cfg.eval_split);

    ImportanceState red(cfg.reducer, n_layers, child_seed(cfg.seed, "reducer"));
    ad.suppress_full_layer = cfg.reducer.suppress_full_layer;
    ad.freeze_router_with_b = cfg.reducer.freeze_router_with_b;
    ad.sync_trainability();

    OptConfig oc;
    oc.kind = cfg.optimizer;
    oc.lr = cfg.lr;
    oc.grad_clip = cfg.grad_clip;
    Optimizer opt(oc, ad.unique_params());

    TrainResult result;
    std::vector<long> all_layers(n_layers);
    std::iota(all_layers.begin(), all_layers.end(), 0);

    auto push_record = [&](MetricsRecord rec) {
        if (metrics) metrics->write(rec);
        result.log.push_back(std::move(rec));
    };

    {
        MetricsRecord rec;
        rec.step = 0;
        rec.has_eval = true;
        EvalResult e = evaluate(bb, &ad, eval_set);
        rec.domain_acc = e.acc;
        rec.domain_nll = e.nll;
        rec.trainable_params = count_trainable(ad);
        rec.active_layers = all_layers;
        result.final_eval = e;
        push_record(std::move(rec));
    }

    for (long step = 1; step <= cfg.steps; ++step) {
        std::vector<long> active = all_layers;
        if (cfg.reducer.enabled) {
            active = sample_active_layers(red);
            apply_freeze_mask(ad, active);
        }

        TokenBatch batch = train_stream.next();
        Tensor loss = batch_loss(bb, &ad, batch);
        const real loss_val = loss->data[0];
        if (!std::isfinite(loss_val)) {
            MetricsRecord rec;
            rec.step = step;
            rec.train_loss = std::nan("");
            rec.has_loss = true;
            rec.trainable_params = count_trainable(ad);
            rec.active_layers = active;
            push_record(std::move(rec));
            throw NumericError("non-finite training loss at step " +
                               std::to_string(step));
        }
        opt.zero_grad();
        backward(loss);
        opt.step();

        const long budget = count_trainable(ad);
        if (opt.last_step_param_elements() != budget)
            throw NumericError("update budget mismatch at step " +
                               std::to_string(step) + ": stepped " +
                               std::to_string(opt.last_step_param_elements()) +
                               " vs trainable " + std::to_string(budget));

        if (cfg.reducer.enabled && cfg.reducer.probe_interval > 0 &&
            step % cfg.reducer.probe_interval == 0) {
            TokenBatch vb = probe_stream.next();
            auto loss_fn = [&]() -> real {
                return batch_loss(bb, &ad, vb)->data[0];
            };
            ProbeResult pr = probe_and_update_scores(red, ad, loss_fn, !vb.empty());
            ProbeEvent ev;
            ev.step = step;
            ev.suppressed = pr.suppressed;
            ev.loss_suppressed = pr.loss_suppressed;
            ev.loss_baseline = pr.loss_baseline;
            ev.scores = red.s;
            result.probes.push_back(ev);
            if (scores)
                scores->write(step, red.s, sampling_distribution(red), active);
        }

        MetricsRecord rec;
        rec.step = step;
        rec.train_loss = loss_val;
        rec.has_loss = true;
        rec.trainable_params = budget;
        rec.active_layers = active;
        const bool do_eval =
            (cfg.eval_every > 0 && step % cfg.eval_every == 0) || step == cfg.steps;
        if (do_eval) {
            EvalResult e = evaluate(bb, &ad, eval_set);
            rec.has_eval = true;
            rec.domain_acc = e.acc;
            rec.domain_nll = e.nll;
            result.final_eval = e;
        }
        result.final_train_loss = loss_val;
        push_record(std::move(rec));
    }

    result.final_scores = red.s;
    result.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    return result;
}

Backbone make_pretrained_backbone(const ModelConfig& cfg) {
    Rng init_rng(child_seed(cfg.seed, "backbone.init"));
    Backbone bb = build_backbone(cfg, init_rng);
    if (cfg.pretrain_steps > 0) {
        bb.set_trainable(true);
        std::vector<Tensor> params;
        for (auto& [name, t] : bb.named_tensors()) params.push_back(t);
        OptConfig oc;
        oc.kind = OptKind::adamw;
        oc.lr = cfg.pretrain_lr;
        Optimizer opt(oc, params);
        Rng data_rng(child_seed(cfg.seed, "backbone.warmup"));
        const std::uint64_t chain = child_seed(cfg.seed, "backbone.chain");
        const long seq = std::min<long>(cfg.max_seq_len, 16);
        for (long step = 0; step < cfg.pretrain_steps; ++step) {
            TokenBatch batch = generic_text_batch(cfg.vocab_size,
                                                  cfg.pretrain_batch, seq, chain,
                                                  data_rng);
            Tensor loss = batch_loss(bb, nullptr, batch);
            if (!std::isfinite(loss->data[0]))
                throw NumericError("non-finite warmup loss");
            opt.zero_grad();
            backward(loss);
            opt.step();
        }
        bb.set_trainable(false);
    }
    return bb;
}

}  // namespace reora
