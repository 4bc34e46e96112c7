// SPDX-License-Identifier: Apache-2.0
#include "reora/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

namespace reora {

namespace {

using nlohmann::json;

json load_fixtures(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream is(path);
    if (!is) throw InputError("cannot open fixtures file: " + path);
    json j;
    is >> j;
    return j;
}

std::string run_csv_path(const std::string& out_dir, const std::string& tag) {
    const std::string dir = out_dir + "/runs";
    std::filesystem::create_directories(dir);
    return dir + "/" + tag + ".csv";
}

// One training run from a fresh adapter; returns test-split per-domain
// accuracy plus the train result.
struct RunOutcome {
    TrainResult tr;
    EvalResult test_eval;
};

RunOutcome run_one(const Backbone& bb, const RunConfig& cfg,
                   const MixtureSpec& mixture, const AdapterConfig& acfg,
                   const TrainConfig& tc, AdapterState* keep_adapters,
                   const std::string& out_dir, const std::string& tag) {
    Rng arng(child_seed(tc.seed, "adapter"));
    AdapterState ad = init_adapters(cfg.model, acfg, arng);
    MetricsWriter mw(run_csv_path(out_dir, tag),
                     static_cast<long>(mixture.parts.size()));
    RunOutcome out;
    out.tr = train(bb, ad, mixture, tc, &mw, nullptr);
    EvalSet test_set = build_eval_set(mixture, tc.eval_examples, 32,
                                      child_seed(tc.seed, "eval.test"),
                                      Split::test);
    out.test_eval = evaluate(bb, &ad, test_set);
    if (keep_adapters) *keep_adapters = std::move(ad);
    return out;
}

std::vector<long> lowest_score_layers(const std::vector<real>& s, long n) {
    std::vector<long> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](long a, long b) { return s[a] < s[b]; });
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<long> random_layers(long n_layers, long n, Rng& rng) {
    std::vector<long> pool(n_layers);
    std::iota(pool.begin(), pool.end(), 0);
    for (long i = n_layers - 1; i > 0; --i)
        std::swap(pool[i], pool[rng.uniform_int(i + 1)]);
    pool.resize(n);
    std::sort(pool.begin(), pool.end());
    return pool;
}

real mean_of(const std::vector<real>& v) {
    real s = 0.0;
    for (real x : v) s += x;
    return v.empty() ? 0.0 : s / v.size();
}

}  // namespace

json config_json(const RunConfig& cfg) {
    json j = json::object();
    for (const auto& [section, key, value] : config_items(cfg)) j[section][key] = value;
    return j;
}

json run_drop_sweep(const RunConfig& cfg, const std::string& out_dir) {
    for (real r : cfg.exp_ratios)
        if (r < 0.0 || r >= 1.0)
            throw InputError("drop ratio " + format_real(r) + " outside [0,1)");

    MixtureSpec mixture = cfg.build_mixture();
    Backbone bb = make_pretrained_backbone(cfg.model);
    TrainConfig tc = cfg.build_train();
    if (!tc.reducer.enabled)
        throw ConfigError("drop-sweep needs the selective updater enabled "
                          "(reducer.enabled=true) to converge importance scores");

    AdapterState ad;
    RunOutcome base = run_one(bb, cfg, mixture, cfg.adapter, tc, &ad, out_dir,
                              "dropsweep_train");
    EvalSet test_set = build_eval_set(mixture, tc.eval_examples, 32,
                                      child_seed(tc.seed, "eval.test"),
                                      Split::test);
    const std::vector<real>& scores = base.tr.final_scores;
    const long n_layers = cfg.model.n_layers;

    auto eval_with_killed = [&](const std::vector<long>& killed) {
        for (long l : killed) set_layer_alive(ad, l, false);
        const real acc = evaluate(bb, &ad, test_set).mean_acc();
        for (long l : killed) set_layer_alive(ad, l, true);
        return acc;
    };

    const real baseline_acc = evaluate(bb, &ad, test_set).mean_acc();
    json rows = json::array();
    bool importance_ge_random = true;
    real rho50_importance_drop = 0.0;
    bool saw_rho50 = false;
    for (real ratio : cfg.exp_ratios) {
        const long n_kill =
            static_cast<long>(std::ceil(ratio * static_cast<real>(n_layers)));
        json row;
        row["ratio"] = ratio;
        row["n_killed"] = n_kill;
        const auto imp_layers = lowest_score_layers(scores, n_kill);
        const real imp_acc = eval_with_killed(imp_layers);
        row["importance_acc"] = imp_acc;
        row["importance_killed"] = imp_layers;
        std::vector<real> rnd_accs;
        for (long i = 0; i < cfg.exp_seeds; ++i) {
            Rng rng(child_seed(tc.seed, "drop.random." + format_real(ratio) +
                                            "." + std::to_string(i)));
            rnd_accs.push_back(eval_with_killed(random_layers(n_layers, n_kill, rng)));
        }
        row["random_accs"] = rnd_accs;
        const real rnd_mean = mean_of(rnd_accs);
        row["random_mean_acc"] = rnd_mean;
        rows.push_back(row);
        if (imp_acc < rnd_mean) importance_ge_random = false;
        if (std::fabs(ratio - 0.5) < 1e-9) {
            saw_rho50 = true;
            rho50_importance_drop = baseline_acc - imp_acc;
        }
    }

    json result;
    result["experiment"] = "drop-sweep";
    result["config"] = config_json(cfg);
    result["baseline_acc"] = baseline_acc;
    result["final_scores"] = scores;
    result["rows"] = rows;

    json checks = json::array();
    checks.push_back({{"name", "importance_ge_random_mean_at_every_ratio"},
                      {"pass", importance_ge_random}});
    const json fixtures = load_fixtures(cfg.exp_fixtures);
    if (saw_rho50 && fixtures.contains("drop_sweep")) {
        const real bound = fixtures["drop_sweep"]["rho50_max_acc_drop"].get<real>();
        checks.push_back({{"name", "rho50_importance_drop_within_bound"},
                          {"pass", rho50_importance_drop <= bound},
                          {"bound", bound},
                          {"observed", rho50_importance_drop}});
    }
    result["checks"] = checks;
    return result;
}

json run_head_ablation(const RunConfig& cfg, const std::string& out_dir) {
    MixtureSpec mixture = cfg.build_mixture();
    if (mixture.n_domains() < 2)
        throw ConfigError("head-ablation needs a mixture with >= 2 domains");
    Backbone bb = make_pretrained_backbone(cfg.model);

    json rows = json::array();
    std::vector<std::vector<real>> accs_per_m;
    for (long m : cfg.exp_head_counts) {
        AdapterConfig acfg = cfg.adapter;
        acfg.n_experts = m;
        std::vector<real> accs;
        for (long i = 0; i < cfg.exp_seeds; ++i) {
            TrainConfig tc = cfg.build_train();
            tc.seed = child_seed(cfg.train.seed, "headabl.seed" + std::to_string(i));
            RunOutcome out = run_one(bb, cfg, mixture, acfg, tc, nullptr, out_dir,
                                     "headabl_m" + std::to_string(m) + "_s" +
                                         std::to_string(i));
            accs.push_back(out.test_eval.mean_acc());
        }
        json row;
        row["heads"] = m;
        row["accs"] = accs;
        row["mean_acc"] = mean_of(accs);
        rows.push_back(row);
        accs_per_m.push_back(accs);
    }

    json result;
    result["experiment"] = "head-ablation";
    result["config"] = config_json(cfg);
    result["rows"] = rows;

    json checks = json::array();
    if (accs_per_m.size() >= 2) {
        const auto& lo = accs_per_m.front();
        const auto& hi = accs_per_m.back();
        long wins = 0;
        real diff_sum = 0.0;
        for (std::size_t i = 0; i < lo.size(); ++i) {
            wins += (hi[i] > lo[i]);
            diff_sum += hi[i] - lo[i];
        }
        const bool paired =
            diff_sum / lo.size() > 0.0 && 2 * wins > static_cast<long>(lo.size());
        checks.push_back({{"name", "paired_max_heads_beats_min_heads"},
                          {"pass", paired},
                          {"wins", wins},
                          {"mean_paired_diff", diff_sum / lo.size()}});
        bool increasing = true;
        for (std::size_t i = 1; i < accs_per_m.size(); ++i)
            if (mean_of(accs_per_m[i]) <= mean_of(accs_per_m[i - 1]))
                increasing = false;
        checks.push_back(
            {{"name", "mean_acc_strictly_increasing_in_heads"}, {"pass", increasing}});
    }
    result["checks"] = checks;
    return result;
}

json run_interference(const RunConfig& cfg, const std::string& out_dir) {
    if (cfg.task_name != "conflict_pair")
        throw ConfigError("interference runs on task.name=conflict_pair");
    auto [task_a, task_b] = gen_domain_pair(cfg.task_seed, cfg.conflict);
    MixtureSpec mix = MixtureSpec::of(
        {{task_a, cfg.mixture_weights.at(0)}, {task_b, cfg.mixture_weights.at(1)}});
    Backbone bb = make_pretrained_backbone(cfg.model);

    AdapterConfig single_cfg = cfg.adapter;
    single_cfg.n_experts = 1;
    AdapterConfig multi_cfg = cfg.adapter;

    json per_seed = json::array();
    std::vector<real> gaps, recoveries;
    for (long i = 0; i < cfg.exp_seeds; ++i) {
        TrainConfig tc = cfg.build_train();
        tc.seed = child_seed(cfg.train.seed, "intf.seed" + std::to_string(i));
        const std::string s = std::to_string(i);

        RunOutcome single_a = run_one(bb, cfg, MixtureSpec::single(task_a),
                                      single_cfg, tc, nullptr, out_dir,
                                      "intf_singleA_s" + s);
        RunOutcome single_b = run_one(bb, cfg, MixtureSpec::single(task_b),
                                      single_cfg, tc, nullptr, out_dir,
                                      "intf_singleB_s" + s);
        RunOutcome mix1 = run_one(bb, cfg, mix, single_cfg, tc, nullptr, out_dir,
                                  "intf_mix1_s" + s);
        RunOutcome mixm = run_one(bb, cfg, mix, multi_cfg, tc, nullptr, out_dir,
                                  "intf_mixM_s" + s);

        const real sa = single_a.test_eval.acc[0];
        const real sb = single_b.test_eval.acc[0];
        const real m1a = mix1.test_eval.acc[0], m1b = mix1.test_eval.acc[1];
        const real mma = mixm.test_eval.acc[0], mmb = mixm.test_eval.acc[1];
        const real gap = 0.5 * ((sa - m1a) + (sb - m1b));
        const real rec = 0.5 * ((mma - m1a) + (mmb - m1b));
        gaps.push_back(gap);
        recoveries.push_back(rec);
        per_seed.push_back({{"seed_index", i},
                            {"single_domain_acc", {sa, sb}},
                            {"mix_single_b_acc", {m1a, m1b}},
                            {"mix_multi_b_acc", {mma, mmb}},
                            {"gap", gap},
                            {"recovery", rec}});
    }

    const real mean_gap = mean_of(gaps);
    const real mean_rec = mean_of(recoveries);
    json result;
    result["experiment"] = "interference";
    result["config"] = config_json(cfg);
    result["per_seed"] = per_seed;
    result["mean_gap"] = mean_gap;
    result["mean_recovery"] = mean_rec;

    json checks = json::array();
    checks.push_back({{"name", "mixture_hurts_single_shared_adapter"},
                      {"pass", mean_gap > 0.0},
                      {"mean_gap", mean_gap}});
    checks.push_back({{"name", "multi_head_recovers_half_gap"},
                      {"pass", mean_rec >= 0.5 * mean_gap},
                      {"mean_recovery", mean_rec},
                      {"target", 0.5 * mean_gap}});
    const json fixtures = load_fixtures(cfg.exp_fixtures);
    if (fixtures.contains("interference")) {
        const real min_gap = fixtures["interference"]["min_mean_gap"].get<real>();
        checks.push_back({{"name", "gap_at_least_fixture"},
                          {"pass", mean_gap >= min_gap},
                          {"bound", min_gap},
                          {"observed", mean_gap}});
    }
    result["checks"] = checks;
    return result;
}

std::vector<std::string> experiment_names() {
    return {"drop-sweep", "head-ablation", "interference"};
}

json run_experiment(const std::string& name, const RunConfig& cfg,
                    const std::string& out_dir) {
    if (name == "drop-sweep") return run_drop_sweep(cfg, out_dir);
    if (name == "head-ablation") return run_head_ablation(cfg, out_dir);
    if (name == "interference") return run_interference(cfg, out_dir);
    std::string valid;
    for (const auto& n : experiment_names()) valid += " " + n;
    throw UsageError("unknown experiment '" + name + "'; valid:" + valid);
}

}  // namespace reora
