// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "reora/reducer.hpp"
#include "reora/train.hpp"

using namespace reora;

namespace {

ModelConfig tiny_config(long layers = 4) {
    ModelConfig cfg;
    cfg.n_layers = layers;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.d_ff = 32;
    cfg.vocab_size = 20;
    cfg.max_seq_len = 16;
    cfg.pretrain_steps = 0;
    return cfg;
}

AdapterState warm_adapters(const ModelConfig& mcfg, long n_experts,
                           std::uint64_t seed, real b_scale = 0.05) {
    AdapterConfig acfg;
    acfg.rank = 4;
    acfg.n_experts = n_experts;
    Rng rng(seed);
    AdapterState st = init_adapters(mcfg, acfg, rng);
    for (long l = 0; l < mcfg.n_layers; ++l)
        for (int mi = 0; mi < kNumTargetModules; ++mi)
            if (auto* pt = const_cast<AttachPoint*>(
                    st.point(l, static_cast<TargetModule>(mi))))
                for (auto& b : pt->B)
                    for (auto& v : b->data) v = rng.normal(0.0, b_scale);
    return st;
}

// enumeration of the sequential without-replacement process for K=2
std::vector<real> inclusion_oracle_k2(const std::vector<real>& p) {
    const long n = static_cast<long>(p.size());
    std::vector<real> inc(n, 0.0);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < n; ++j) {
            if (i == j) continue;
            const real prob = p[i] * p[j] / (1.0 - p[i]);
            inc[i] += prob;
            inc[j] += prob;
        }
    return inc;
}

}  // namespace

TEST_CASE("sampling distribution: uniform at zero scores, oracle values") {
    ReducerConfig rc;
    ImportanceState st(rc, 8, 1);
    auto p = sampling_distribution(st);
    for (real v : p) CHECK(v == doctest::Approx(1.0 / 8).epsilon(1e-14));

    st.cfg.sign_mode = SignMode::paper_literal;
    p = sampling_distribution(st);
    for (real v : p) CHECK(v == doctest::Approx(1.0 / 8).epsilon(1e-14));

    ImportanceState two(rc, 2, 1);
    two.s = {2.0, 0.0};
    auto pi = sampling_distribution(two);
    // long-double exp-normalize oracle
    const long double s2 = 1.0L / (1.0L + expl(-2.0L));
    const long double s0 = 0.5L;
    CHECK(std::fabs(pi[0] - static_cast<double>(s2 / (s2 + s0))) <= 1e-12);
    CHECK(std::fabs(pi[1] - static_cast<double>(s0 / (s2 + s0))) <= 1e-12);
    CHECK(pi[0] == doctest::Approx(0.6379).epsilon(1e-3));
    CHECK(pi[1] == doctest::Approx(0.3621).epsilon(1e-3));

    // monotone in intent mode, reversed in paper-literal mode
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        ImportanceState m(rc, 6, 1);
        for (auto& v : m.s) v = rng.normal(0.0, 2.0);
        auto pm = sampling_distribution(m);
        m.cfg.sign_mode = SignMode::paper_literal;
        auto pl = sampling_distribution(m);
        real sum_m = 0.0, sum_l = 0.0;
        for (long i = 0; i < 6; ++i) {
            sum_m += pm[i];
            sum_l += pl[i];
            for (long j = 0; j < 6; ++j) {
                if (m.s[i] > m.s[j]) {
                    CHECK(pm[i] > pm[j]);
                    CHECK(pl[i] < pl[j]);
                }
            }
        }
        CHECK(std::fabs(sum_m - 1.0) <= 1e-12);
        CHECK(std::fabs(sum_l - 1.0) <= 1e-12);
    }
}

TEST_CASE("sample_active_layers: exhaustive K, concentration, determinism") {
    ReducerConfig rc;
    rc.k_active = 6;
    ImportanceState st(rc, 6, 7);
    auto all = sample_active_layers(st);
    CHECK(all == std::vector<long>{0, 1, 2, 3, 4, 5});
    // short-circuit must not consume randomness
    Rng fresh(7);
    (void)sample_active_layers(st);
    CHECK(st.rng.next_u64() == fresh.next_u64());

    ReducerConfig conc;
    conc.k_active = 1;
    conc.temperature = 40.0;
    ImportanceState cst(conc, 5, 11);
    cst.s = {20.0, 0.0, 0.0, 0.0, 0.0};
    auto p = sampling_distribution(cst);
    CHECK(p[0] > 0.99);
    long hits = 0;
    for (int i = 0; i < 100000; ++i)
        hits += (sample_active_layers(cst)[0] == 0);
    CHECK(hits >= 99000);

    ReducerConfig det;
    det.k_active = 2;
    ImportanceState a(det, 5, 42), b(det, 5, 42);
    a.s = b.s = {0.3, -0.2, 1.0, 0.0, 0.5};
    for (int i = 0; i < 50; ++i)
        CHECK(sample_active_layers(a) == sample_active_layers(b));
}

TEST_CASE("inclusion frequencies match the brute-force oracle (n=5, K=2)") {
    ReducerConfig rc;
    rc.k_active = 2;
    ImportanceState st(rc, 5, 123);
    st.s = {0.8, -0.5, 0.1, 1.5, -1.0};
    auto p = sampling_distribution(st);
    auto expect = inclusion_oracle_k2(p);

    std::vector<long> counts(5, 0);
    const long draws = 100000;
    for (long d = 0; d < draws; ++d)
        for (long l : sample_active_layers(st)) ++counts[l];
    long max_s_layer = 0;
    for (long i = 1; i < 5; ++i)
        if (st.s[i] > st.s[max_s_layer]) max_s_layer = i;
    long max_count_layer = 0;
    for (long i = 1; i < 5; ++i)
        if (counts[i] > counts[max_count_layer]) max_count_layer = i;
    CHECK(max_count_layer == max_s_layer);
    for (long i = 0; i < 5; ++i) {
        const real freq = static_cast<real>(counts[i]) / draws;
        CHECK_MESSAGE(std::fabs(freq - expect[i]) <= 0.01,
                      "layer " << i << " freq " << freq << " vs " << expect[i]);
    }
}

TEST_CASE("probe: inert adapters decay scores, gamma restores bit-exactly") {
    ModelConfig mcfg = tiny_config();
    Rng brng(5);
    Backbone bb = build_backbone(mcfg, brng);
    AdapterConfig acfg;
    acfg.rank = 4;
    acfg.n_experts = 2;
    Rng arng(6);
    AdapterState ad = init_adapters(mcfg, acfg, arng);  // B = 0, inert

    MixtureSpec task = MixtureSpec::single(gen_longtail_lm(3, {8, 8, 3, 0.5}));
    BatchStream vs(task, 8, 77, Split::val);
    TokenBatch vb = vs.next();
    auto loss_fn = [&]() { return batch_loss(bb, &ad, vb)->data[0]; };

    ReducerConfig rc;
    rc.n_suppressed = 2;
    rc.ema_beta = 0.5;
    ImportanceState st(rc, mcfg.n_layers, 9);
    st.s = {0.4, 0.1, 0.8, 0.2};

    Tensor before = forward(bb, vb.tokens, vb.batch, vb.seq, &ad);
    ProbeResult pr = probe_and_update_scores(st, ad, loss_fn);
    Tensor after = forward(bb, vb.tokens, vb.batch, vb.seq, &ad);
    for (long i = 0; i < before->numel(); ++i)
        CHECK(before->data[i] == after->data[i]);

    // lowest-score layers 1 and 3 probed; zero-B adapters leave the loss
    // unchanged, so their scores decay by exactly ema_beta
    CHECK(pr.suppressed == std::vector<long>{1, 3});
    CHECK(pr.loss_suppressed == pr.loss_baseline);
    CHECK(st.s[1] == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(st.s[3] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(st.s[0] == 0.4);
    CHECK(st.s[2] == 0.8);

    CHECK_THROWS_AS(probe_and_update_scores(st, ad, loss_fn, false), UsageError);
}

TEST_CASE("probe purity: parameters untouched, only scores move") {
    ModelConfig mcfg = tiny_config();
    Rng brng(15);
    Backbone bb = build_backbone(mcfg, brng);
    AdapterState ad = warm_adapters(mcfg, 2, 16);
    MixtureSpec task = MixtureSpec::single(gen_longtail_lm(3, {8, 8, 3, 0.5}));
    BatchStream vs(task, 8, 78, Split::val);
    TokenBatch vb = vs.next();

    std::uint64_t h = 0;
    for (const auto& t : ad.unique_params()) h ^= hash_reals(t->data);
    const auto bb_hash = bb.weights_hash();

    ReducerConfig rc;
    ImportanceState st(rc, mcfg.n_layers, 9);
    auto loss_fn = [&]() { return batch_loss(bb, &ad, vb)->data[0]; };
    ProbeResult pr = probe_and_update_scores(st, ad, loss_fn);
    // warmed adapters contribute, so suppression moves the loss
    CHECK(pr.loss_suppressed != pr.loss_baseline);

    std::uint64_t h2 = 0;
    for (const auto& t : ad.unique_params()) h2 ^= hash_reals(t->data);
    CHECK(h2 == h);
    CHECK(bb.weights_hash() == bb_hash);
    for (real g : ad.gamma) CHECK(g == 1.0);
}

TEST_CASE("planted fixture: useful layer's score rises, inert layer's stays") {
    ModelConfig mcfg = tiny_config(2);
    mcfg.pretrain_steps = 20;
    Backbone bb = make_pretrained_backbone(mcfg);

    AdapterConfig acfg;
    acfg.rank = 4;
    acfg.n_experts = 1;
    Rng arng(21);
    AdapterState ad = init_adapters(mcfg, acfg, arng);

    // hand-train only layer 0 so it is the sole fix for the task
    MixtureSpec task = MixtureSpec::single(gen_longtail_lm(5, {8, 8, 3, 0.5}));
    ad.layer_b_trainable[1] = 0;
    ad.sync_trainability();
    TrainConfig tc;
    tc.steps = 120;
    tc.batch_size = 8;
    tc.eval_every = 0;
    tc.eval_examples = 16;
    tc.lr = 5e-3;
    train(bb, ad, task, tc);
    ad.layer_b_trainable[1] = 1;
    ad.sync_trainability();

    BatchStream vs(task, 16, 79, Split::val);
    ReducerConfig rc;
    rc.n_suppressed = 1;
    rc.ema_beta = 0.7;
    ImportanceState st(rc, 2, 22);
    for (int cycle = 0; cycle < 10; ++cycle) {
        TokenBatch vb = vs.next();
        auto loss_fn = [&]() { return batch_loss(bb, &ad, vb)->data[0]; };
        probe_and_update_scores(st, ad, loss_fn);
    }
    CHECK(st.s[0] > st.s[1]);
    CHECK(st.s[0] > 0.0);
    CHECK(st.s[1] < 0.1 * st.s[0]);
}

TEST_CASE("freeze mask: only active layers' B step; A and router always step") {
    ModelConfig mcfg = tiny_config();
    Rng brng(31);
    Backbone bb = build_backbone(mcfg, brng);
    AdapterState ad = warm_adapters(mcfg, 2, 32);
    MixtureSpec task = MixtureSpec::single(gen_longtail_lm(3, {8, 8, 3, 0.5}));
    BatchStream ts(task, 8, 80, Split::train);

    Optimizer opt({}, ad.unique_params());
    apply_freeze_mask(ad, {0});

    auto layer_b_hash = [&](long l) {
        std::uint64_t h = 0;
        for (int mi = 0; mi < kNumTargetModules; ++mi)
            if (auto* pt = ad.point(l, static_cast<TargetModule>(mi)))
                for (const auto& b : pt->B) h ^= hash_reals(b->data);
        return h;
    };
    std::vector<std::uint64_t> before;
    for (long l = 0; l < mcfg.n_layers; ++l) before.push_back(layer_b_hash(l));
    auto a_hash = hash_reals(ad.shared_a_groups[0].second->data);
    auto router_hash = hash_reals(ad.point(1, TargetModule::q)->router->data);

    TokenBatch b = ts.next();
    Tensor loss = batch_loss(bb, &ad, b);
    opt.zero_grad();
    backward(loss);
    opt.step();

    CHECK(layer_b_hash(0) != before[0]);
    for (long l = 1; l < mcfg.n_layers; ++l) CHECK(layer_b_hash(l) == before[l]);
    CHECK(hash_reals(ad.shared_a_groups[0].second->data) != a_hash);
    CHECK(hash_reals(ad.point(1, TargetModule::q)->router->data) != router_hash);

    // with freeze_router_with_b, frozen layers' routers hold still too
    ad.freeze_router_with_b = true;
    apply_freeze_mask(ad, {0});
    auto r1 = hash_reals(ad.point(1, TargetModule::q)->router->data);
    TokenBatch b2 = ts.next();
    opt.zero_grad();
    backward(batch_loss(bb, &ad, b2));
    opt.step();
    CHECK(hash_reals(ad.point(1, TargetModule::q)->router->data) == r1);
    ad.freeze_router_with_b = false;
    apply_freeze_mask(ad, {0, 1, 2, 3});
}

TEST_CASE("selective updates off (K = n_layers) reproduce the plain trajectory") {
    ModelConfig mcfg = tiny_config();
    mcfg.pretrain_steps = 10;
    Backbone bb = make_pretrained_backbone(mcfg);
    MixtureSpec task = MixtureSpec::single(gen_longtail_lm(3, {8, 8, 3, 0.5}));

    auto run = [&](bool reducer_on) {
        AdapterConfig acfg;
        acfg.rank = 4;
        acfg.n_experts = 2;
        Rng arng(41);
        AdapterState ad = init_adapters(mcfg, acfg, arng);
        TrainConfig tc;
        tc.steps = 50;
        tc.batch_size = 8;
        tc.eval_every = 0;
        tc.eval_examples = 16;
        tc.seed = 4242;
        tc.reducer.enabled = reducer_on;
        tc.reducer.k_active = mcfg.n_layers;
        tc.reducer.probe_interval = 0;
        TrainResult tr = train(bb, ad, task, tc);
        std::vector<real> losses;
        for (const auto& rec : tr.log)
            if (rec.has_loss) losses.push_back(rec.train_loss);
        return losses;
    };
    auto off = run(false);
    auto on = run(true);
    REQUIRE(off.size() == on.size());
    for (std::size_t i = 0; i < off.size(); ++i) CHECK(off[i] == on[i]);
}
