// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "reora/adapter.hpp"
#include "reora/checkpoint.hpp"
#include "reora/model.hpp"
#include "reora/train.hpp"

using namespace reora;

namespace {
ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.d_ff = 32;
    cfg.vocab_size = 16;
    cfg.max_seq_len = 12;
    cfg.pretrain_steps = 0;
    return cfg;
}

std::vector<long> random_tokens(long n, long vocab, Rng& rng) {
    std::vector<long> t(n);
    for (auto& x : t) x = rng.uniform_int(vocab);
    return t;
}
}  // namespace

TEST_CASE("build_backbone is deterministic and frozen") {
    ModelConfig cfg = tiny_config();
    Rng r1(99), r2(99);
    Backbone a = build_backbone(cfg, r1);
    Backbone b = build_backbone(cfg, r2);
    CHECK(a.weights_hash() == b.weights_hash());
    Rng r3(100);
    Backbone c = build_backbone(cfg, r3);
    CHECK(a.weights_hash() != c.weights_hash());
    for (auto& [name, t] : a.named_tensors()) CHECK(!t->requires_grad);
}

TEST_CASE("config validation") {
    ModelConfig cfg = tiny_config();
    CHECK(cfg.d_model / cfg.n_heads == 8);

    ModelConfig bad = cfg;
    bad.d_model = 63;
    bad.n_heads = 4;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    ModelConfig no_targets = cfg;
    no_targets.target_modules.clear();
    CHECK_THROWS_AS(no_targets.validate(), ConfigError);

    ModelConfig neg = cfg;
    neg.d_ff = 0;
    CHECK_THROWS_AS(neg.validate(), ConfigError);

    CHECK_THROWS_AS(parse_module("gate"), ConfigError);
}

TEST_CASE("forward shapes and input validation") {
    ModelConfig cfg = tiny_config();
    Rng rng(1);
    Backbone bb = build_backbone(cfg, rng);
    Rng trng(2);
    auto toks = random_tokens(2 * 8, cfg.vocab_size, trng);
    Tensor logits = forward(bb, toks, 2, 8);
    CHECK(logits->shape == std::vector<long>{2, 8, 16});

    auto bad = toks;
    bad[3] = cfg.vocab_size;
    CHECK_THROWS_AS(forward(bb, bad, 2, 8), InputError);

    auto long_toks = random_tokens(2 * (cfg.max_seq_len + 1), cfg.vocab_size, trng);
    CHECK_THROWS_AS(forward(bb, long_toks, 2, cfg.max_seq_len + 1), InputError);

    Tensor cls = forward_classifier(bb, toks, 2, 8, 2);
    CHECK(cls->shape == std::vector<long>{2, 2});
}

TEST_CASE("zero-B adapters leave logits bit-identical to the bare backbone") {
    ModelConfig cfg = tiny_config();
    Rng rng(7);
    Backbone bb = build_backbone(cfg, rng);
    AdapterConfig acfg;
    acfg.rank = 4;
    acfg.n_experts = 3;
    Rng arng(8);
    AdapterState ad = init_adapters(cfg, acfg, arng);

    Rng trng(9);
    for (int trial = 0; trial < 5; ++trial) {
        auto toks = random_tokens(2 * 6, cfg.vocab_size, trng);
        Tensor base = forward(bb, toks, 2, 6);
        Tensor adapted = forward(bb, toks, 2, 6, &ad);
        REQUIRE(base->numel() == adapted->numel());
        for (long i = 0; i < base->numel(); ++i)
            CHECK(base->data[i] == adapted->data[i]);
    }
}

TEST_CASE("suppressing every layer restores base logits") {
    ModelConfig cfg = tiny_config();
    Rng rng(17);
    Backbone bb = build_backbone(cfg, rng);
    AdapterConfig acfg;
    acfg.rank = 4;
    acfg.n_experts = 2;
    Rng arng(18);
    AdapterState ad = init_adapters(cfg, acfg, arng);
    // make the adapters matter
    Rng brng(19);
    for (long l = 0; l < cfg.n_layers; ++l)
        for (int mi = 0; mi < kNumTargetModules; ++mi)
            if (auto* pt = const_cast<AttachPoint*>(ad.point(l, static_cast<TargetModule>(mi))))
                for (auto& b : pt->B)
                    for (auto& x : b->data) x = brng.normal(0.0, 0.05);

    Rng trng(20);
    auto toks = random_tokens(2 * 6, cfg.vocab_size, trng);
    Tensor adapted = forward(bb, toks, 2, 6, &ad);
    Tensor base = forward(bb, toks, 2, 6);
    real max_diff = 0.0;
    for (long i = 0; i < base->numel(); ++i)
        max_diff = std::max(max_diff, std::fabs(adapted->data[i] - base->data[i]));
    CHECK(max_diff > 1e-6);  // adapters actually contribute

    for (long l = 0; l < cfg.n_layers; ++l) ad.gamma[l] = 0.0;
    Tensor gated = forward(bb, toks, 2, 6, &ad);
    for (long i = 0; i < base->numel(); ++i)
        CHECK(std::fabs(gated->data[i] - base->data[i]) <= 1e-12);
    for (long l = 0; l < cfg.n_layers; ++l) ad.gamma[l] = 1.0;

    Tensor again = forward(bb, toks, 2, 6, &ad);
    for (long i = 0; i < adapted->numel(); ++i)
        CHECK(again->data[i] == adapted->data[i]);
}

TEST_CASE("frozen-backbone invariant across a training run") {
    ModelConfig cfg = tiny_config();
    cfg.pretrain_steps = 5;
    Backbone bb = make_pretrained_backbone(cfg);
    const auto h0 = bb.weights_hash();

    AdapterConfig acfg;
    acfg.rank = 4;
    acfg.n_experts = 2;
    Rng arng(4);
    AdapterState ad = init_adapters(cfg, acfg, arng);

    TrainConfig tc;
    tc.steps = 12;
    tc.batch_size = 4;
    tc.eval_every = 0;
    tc.eval_examples = 16;
    MixtureSpec task = MixtureSpec::single(gen_longtail_lm(3, {8, 8, 3, 0.5}));
    train(bb, ad, task, tc);
    CHECK(bb.weights_hash() == h0);
}

TEST_CASE("pretrained backbone is deterministic and warmup reduces loss") {
    ModelConfig cfg = tiny_config();
    cfg.pretrain_steps = 30;
    Backbone a = make_pretrained_backbone(cfg);
    Backbone b = make_pretrained_backbone(cfg);
    CHECK(a.weights_hash() == b.weights_hash());

    // warmup should beat the raw init on its own data distribution
    Rng init_rng(child_seed(cfg.seed, "backbone.init"));
    Backbone raw = build_backbone(cfg, init_rng);
    Rng drng(child_seed(cfg.seed, "backbone.eval"));
    TokenBatch batch = generic_text_batch(cfg.vocab_size, 16, 8,
                                          child_seed(cfg.seed, "backbone.chain"),
                                          drng);
    NoGradGuard ng;
    const real warm = batch_loss(a, nullptr, batch)->data[0];
    const real cold = batch_loss(raw, nullptr, batch)->data[0];
    CHECK(warm < cold);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    ModelConfig cfg = tiny_config();
    Rng rng(31);
    Backbone bb = build_backbone(cfg, rng);
    const auto path = std::filesystem::temp_directory_path() / "reora_bb_test.ckpt";
    save_backbone(path.string(), bb);
    Backbone loaded = load_backbone(path.string());
    CHECK(loaded.weights_hash() == bb.weights_hash());
    CHECK(loaded.cfg.n_layers == cfg.n_layers);
    CHECK(loaded.cfg.d_model == cfg.d_model);

    Rng trng(32);
    auto toks = random_tokens(2 * 5, cfg.vocab_size, trng);
    Tensor a = forward(bb, toks, 2, 5);
    Tensor b = forward(loaded, toks, 2, 5);
    for (long i = 0; i < a->numel(); ++i) CHECK(a->data[i] == b->data[i]);
    std::filesystem::remove(path);

    CHECK_THROWS_AS(load_backbone("/nonexistent/path.ckpt"), InputError);
}
