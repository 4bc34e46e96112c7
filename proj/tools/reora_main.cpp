// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: train / experiment / count / eval / export-task.
// Exit codes: 0 ok, 2 usage or config error, 3 numeric failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "reora/accounting.hpp"
#include "reora/experiments.hpp"
#include "reora/runconfig.hpp"

namespace fs = std::filesystem;
using namespace reora;

namespace {

// Remaining argv tokens of the form --section.key=value become config
// overrides; --seed N is shorthand for train.seed.
std::vector<std::string> collect_overrides(std::vector<std::string> extras,
                                           const std::string& seed_flag) {
    std::vector<std::string> overrides;
    // CLI11 hands extras back in reverse order
    std::reverse(extras.begin(), extras.end());
    for (const auto& raw : extras) {
        std::string tok = raw;
        if (tok.rfind("--", 0) == 0) tok = tok.substr(2);
        if (tok.find('=') == std::string::npos || tok.find('.') == std::string::npos)
            throw UsageError("unrecognized argument '" + raw +
                             "' (overrides look like --section.key=value)");
        overrides.push_back(tok);
    }
    if (!seed_flag.empty()) overrides.push_back("train.seed=" + seed_flag);
    return overrides;
}

std::string resolve_out_dir(const RunConfig& cfg) {
    if (const char* env = std::getenv("REORA_OUT")) return env;
    return cfg.out_dir;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot write " + path);
    os << text;
}

int cmd_train(const std::string& config_path,
              const std::vector<std::string>& overrides) {
    RunConfig cfg = parse_run_config(config_path, overrides);
    const std::string out_dir = resolve_out_dir(cfg);
    fs::create_directories(out_dir);
    write_text(out_dir + "/config_echo.cfg", config_echo(cfg, overrides));

    MixtureSpec mixture = cfg.build_mixture();
    std::cout << "building backbone (seed " << cfg.model.seed << ", "
              << cfg.model.pretrain_steps << " warmup steps)\n";
    Backbone bb = make_pretrained_backbone(cfg.model);
    save_backbone(out_dir + "/backbone.ckpt", bb);

    Rng arng(child_seed(cfg.train.seed, "adapter"));
    AdapterState ad = init_adapters(cfg.model, cfg.adapter, arng);

    MetricsWriter metrics(out_dir + "/metrics.csv", mixture.n_domains());
    ScoresWriter scores(out_dir + "/scores.csv");
    TrainConfig tc = cfg.build_train();
    TrainResult tr = train(bb, ad, mixture, tc, &metrics, &scores);
    save_adapters(out_dir + "/adapter.ckpt", ad);

    std::cout << "steps " << tc.steps << ", final loss "
              << format_real(tr.final_train_loss) << ", mean acc "
              << format_real(tr.final_eval.mean_acc()) << ", wall "
              << static_cast<long>(tr.wall_ms) << " ms\n"
              << "artifacts in " << out_dir << "\n";
    return 0;
}

int cmd_experiment(const std::string& name, const std::string& config_path,
                   const std::vector<std::string>& overrides) {
    RunConfig cfg = parse_run_config(config_path, overrides);
    const std::string out_dir = resolve_out_dir(cfg);
    fs::create_directories(out_dir);
    write_text(out_dir + "/config_echo.cfg", config_echo(cfg, overrides));

    nlohmann::json result = run_experiment(name, cfg, out_dir);
    write_text(out_dir + "/result.json", result.dump(2) + "\n");

    bool all_pass = true;
    for (const auto& check : result["checks"]) {
        const bool pass = check["pass"].get<bool>();
        all_pass &= pass;
        std::cout << (pass ? "[pass] " : "[FAIL] ")
                  << check["name"].get<std::string>() << "\n";
    }
    std::cout << "result: " << out_dir << "/result.json\n";
    return all_pass ? 0 : 1;
}

int cmd_count(const std::string& arch_path, const std::string& scheme_name,
              long rank, long heads, bool no_share_a, long dropped,
              long active_k, double match_target, const std::string& json_out) {
    ArchSpec arch = load_arch(arch_path);
    SchemeSpec scheme;
    scheme.kind = scheme_name == "lora" ? SchemeSpec::Kind::lora
                                        : SchemeSpec::Kind::reora;
    if (scheme_name != "lora" && scheme_name != "reora")
        throw UsageError("--scheme must be lora or reora");
    if (rank <= 0) throw UsageError("--rank must be positive");
    scheme.rank = rank;
    scheme.heads = heads;
    scheme.share_a = !no_share_a;
    scheme.dropped_layers = dropped;
    scheme.active_layers = active_k;

    SchemeSpec baseline;  // lora r=16 reference for relative cost
    const long long params = count_params(arch, scheme);
    const double pct = percent_of_backbone(params, arch);
    const double rel = relative_flops(arch, scheme, baseline);

    std::cout << "arch: " << arch.name << " (" << arch.n_layers << " layers, "
              << format_real(arch.backbone_params) << " backbone params)\n"
              << "scheme: " << scheme.describe() << "\n"
              << "trainable params: " << with_thousands(params) << "\n"
              << "percent of backbone: " << format_real(pct) << "%\n"
              << "relative train FLOPs vs lora r=16: " << format_real(rel)
              << "  (analytic per-token MACs of the adapter path, forward +"
                 " 2x-forward backward, expert-B grads skipped on frozen layers)\n";

    nlohmann::json j;
    j["arch"] = arch.name;
    j["scheme"] = scheme.describe();
    j["trainable_params"] = params;
    j["percent_of_backbone"] = pct;
    j["relative_flops_vs_lora16"] = rel;

    if (match_target > 0) {
        auto hits = drop_counts_near(arch, scheme, match_target, 0.05);
        std::cout << "drop counts within 5% of " << format_real(match_target)
                  << ":";
        nlohmann::json matches = nlohmann::json::array();
        for (auto [d, c] : hits) {
            std::cout << " drop=" << d << " -> " << with_thousands(c);
            matches.push_back({{"dropped_layers", d}, {"params", c}});
        }
        if (hits.empty()) std::cout << " none";
        std::cout << "\n";
        j["match_target"] = match_target;
        j["matches"] = matches;
    }
    if (!json_out.empty()) write_text(json_out, j.dump(2) + "\n");
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& run_dir_flag,
             const std::vector<std::string>& overrides) {
    RunConfig cfg = parse_run_config(config_path, overrides);
    const std::string run_dir =
        run_dir_flag.empty() ? resolve_out_dir(cfg) : run_dir_flag;
    Backbone bb = load_backbone(run_dir + "/backbone.ckpt");
    AdapterState ad = load_adapters(run_dir + "/adapter.ckpt");
    MixtureSpec mixture = cfg.build_mixture();
    EvalSet es = build_eval_set(mixture, cfg.train.eval_examples, 32,
                                child_seed(cfg.train.seed, "eval"),
                                cfg.train.eval_split);
    EvalResult res = evaluate(bb, &ad, es);
    nlohmann::json j;
    j["domain_acc"] = res.acc;
    j["domain_nll"] = res.nll;
    j["mean_acc"] = res.mean_acc();
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_export_task(const std::string& config_path, const std::string& split,
                    long n, long domain, const std::string& out_path,
                    const std::vector<std::string>& overrides) {
    RunConfig cfg = parse_run_config(config_path, overrides);
    MixtureSpec mixture = cfg.build_mixture();
    if (domain < 0 || domain >= mixture.n_domains())
        throw UsageError("--domain out of range");
    Split sp;
    if (split == "train") sp = Split::train;
    else if (split == "val") sp = Split::val;
    else if (split == "test") sp = Split::test;
    else throw UsageError("--split must be train, val, or test");
    export_split(mixture.parts[domain].first, sp, n, out_path, cfg.task_seed);
    std::cout << "wrote " << n << " examples to " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"resource-efficient low-rank adaptation workbench"};
    app.require_subcommand(1);
    app.allow_extras();

    std::string config_path, exp_name, seed_flag;
    std::string arch_path, scheme = "lora", json_out;
    long rank = 16, heads = 1, dropped = 0, active_k = -1;
    bool no_share_a = false;
    double match_target = 0;
    std::string run_dir, split = "train", out_path = "task.txt";
    long n_export = 100, domain = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config", config_path, "run config file")->required();
        sub->add_option("--seed", seed_flag, "override train.seed");
        sub->allow_extras();
    };

    CLI::App* train_cmd = app.add_subcommand("train", "train adapters on a task");
    add_common(train_cmd);

    CLI::App* exp_cmd =
        app.add_subcommand("experiment", "run a named experiment suite");
    exp_cmd->add_option("name", exp_name, "drop-sweep | head-ablation | interference")
        ->required();
    add_common(exp_cmd);

    CLI::App* count_cmd = app.add_subcommand(
        "count", "closed-form parameter and FLOP accounting for an architecture");
    count_cmd->add_option("arch", arch_path, "architecture shape file (json)")
        ->required();
    count_cmd->add_option("--scheme", scheme, "lora | reora");
    count_cmd->add_option("--rank", rank, "adapter rank");
    count_cmd->add_option("--heads", heads, "expert count (reora)");
    count_cmd->add_flag("--no-share-a", no_share_a, "per-layer A (reora)");
    count_cmd->add_option("--drop-layers", dropped, "removed B banks (reora)");
    count_cmd->add_option("--active-layers", active_k, "K updated layers for FLOPs");
    count_cmd->add_option("--match-target", match_target,
                          "scan drop counts within 5% of this parameter total");
    count_cmd->add_option("--json", json_out, "also write a json report");

    CLI::App* eval_cmd =
        app.add_subcommand("eval", "evaluate a saved run on its task");
    add_common(eval_cmd);
    eval_cmd->add_option("--run-dir", run_dir, "run directory (default [output].dir)");

    CLI::App* export_cmd =
        app.add_subcommand("export-task", "write task examples as text");
    add_common(export_cmd);
    export_cmd->add_option("--split", split, "train | val | test");
    export_cmd->add_option("--n", n_export, "number of examples");
    export_cmd->add_option("--domain", domain, "mixture domain index");
    export_cmd->add_option("--out", out_path, "output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*train_cmd)
            return cmd_train(config_path,
                             collect_overrides(train_cmd->remaining(), seed_flag));
        if (*exp_cmd)
            return cmd_experiment(exp_name, config_path,
                                  collect_overrides(exp_cmd->remaining(), seed_flag));
        if (*count_cmd)
            return cmd_count(arch_path, scheme, rank, heads, no_share_a, dropped,
                             active_k, match_target, json_out);
        if (*eval_cmd)
            return cmd_eval(config_path, run_dir,
                            collect_overrides(eval_cmd->remaining(), seed_flag));
        if (*export_cmd)
            return cmd_export_task(config_path, split, n_export, domain, out_path,
                                   collect_overrides(export_cmd->remaining(),
                                                     seed_flag));
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
