// SPDX-License-Identifier: Apache-2.0
#include "reora/runconfig.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include "reora/metrics.hpp"

namespace reora {

namespace {

long parse_long(const std::string& v) {
    std::size_t pos = 0;
    long out = std::stol(v, &pos);
    if (pos != v.size()) throw ConfigError("invalid integer '" + v + "'");
    return out;
}

std::uint64_t parse_u64(const std::string& v) {
    std::size_t pos = 0;
    std::uint64_t out = std::stoull(v, &pos);
    if (pos != v.size()) throw ConfigError("invalid integer '" + v + "'");
    return out;
}

real parse_real(const std::string& v) {
    std::size_t pos = 0;
    real out = std::stod(v, &pos);
    if (pos != v.size()) throw ConfigError("invalid number '" + v + "'");
    return out;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("invalid bool '" + v + "' (use true/false)");
}

std::vector<std::string> split_csv(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<real> parse_real_list(const std::string& v) {
    std::vector<real> out;
    for (const auto& s : split_csv(v)) out.push_back(parse_real(s));
    return out;
}

std::vector<long> parse_long_list(const std::string& v) {
    std::vector<long> out;
    for (const auto& s : split_csv(v)) out.push_back(parse_long(s));
    return out;
}

std::string real_list_str(const std::vector<real>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += format_real(v[i]);
    }
    return s;
}

struct Entry {
    std::string section, key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

const std::vector<Entry>& entries() {
    static const std::vector<Entry> kEntries = [] {
        std::vector<Entry> e;
        auto add = [&](const char* sec, const char* key, auto setter, auto getter) {
            e.push_back({sec, key, setter, getter});
        };

        // [model]
        add("model", "n_layers",
            [](RunConfig& c, const std::string& v) { c.model.n_layers = parse_long(v); },
            [](const RunConfig& c) { return std::to_string(c.model.n_layers); });
        add("model", "d_model",
            [](RunConfig& c, const std::string& v) { c.model.d_model = parse_long(v); },
            [](const RunConfig& c) { return std::to_string(c.model.d_model); });
        add("model", "n_heads",
            [](RunConfig& c, const std::string& v) { c.model.n_heads = parse_long(v); },
            [](const RunConfig& c) { return std::to_string(c.model.n_heads); });
        add("model", "d_ff",
            [](RunConfig& c, const std::string& v) { c.model.d_ff = parse_long(v); },
            [](const RunConfig& c) { return std::to_string(c.model.d_ff); });
        add("model", "vocab_size",
            [](RunConfig& c, const std::string& v) { c.model.vocab_size = parse_long(v); },
            [](const RunConfig& c) { return std::to_string(c.model.vocab_size); });
        add("model", "max_seq_len",
            [](RunConfig& c, const std::string& v) { c.model.max_seq_len = parse_long(v); },
            [](const RunConfig& c) { return std::to_string(c.model.max_seq_len); });
        add("model", "target_modules",
            [](RunConfig& c, const std::string& v) {
                c.model.target_modules = parse_module_list(v);
            },
            [](const RunConfig& c) { return module_list_str(c.model.target_modules); });
        add("model", "seed",
            [](RunConfig& c, const std::string& v) { c.model.seed = parse_u64(v); },
            [](const RunConfig& c) { return std::to_string(c.model.seed); });
        add("model", "pretrain_steps",
            [](RunConfig& c, const std::string& v) { c.model.pretrain_steps = parse_long(v); },
            [](const RunConfig& c) { return std::to_string(c.model.pretrain_steps); });
        add("model", "pretrain_lr",
            [](RunConfig& c, const std::string& v) { c.model.pretrain_lr = parse_real(v); },
            [](const RunConfig& c) { return format_real(c.model.pretrain_lr); });
        add("model", "pretrain_batch",
            [](RunConfig& c, const std::string& v) { c.model.pretrain_batch = parse_long(v); },
            [](const RunConfig& c) { return std::to_string(c.model.pretrain_batch); });

        // [adapter]
        add("adapter", "rank",
            [](RunConfig& c, const std::string& v) { c.adapter.rank = parse_long(v); },
            [](const RunConfig& c) { return std::to_string(c.adapter.rank); });
        add("adapter", "n_experts",
            [](RunConfig& c, const std::string& v) { c.adapter.n_experts = parse_long(v); },
            [](const RunConfig& c) { return std::to_string(c.adapter.n_experts); });
        add("adapter", "alpha",
            [](RunConfig& c, const std::string& v) { c.adapter.alpha = parse_real(v); },
            [](const RunConfig& c) { return format_real(c.adapter.alpha); });
        add("adapter", "target_modules",
            [](RunConfig& c, const std::string& v) {
                c.adapter.target_modules = parse_module_list(v);
            },
            [](const RunConfig& c) { return module_list_str(c.adapter.target_modules); });
        add("adapter", "share_a",
            [](RunConfig& c, const std::string& v) { c.adapter.share_a = parse_bool(v); },
            [](const RunConfig& c) { return c.adapter.share_a ? "true" : "false"; });
        add("adapter", "a_init_std",
            [](RunConfig& c, const std::string& v) { c.adapter.a_init_std = parse_real(v); },
            [](const RunConfig& c) { return format_real(c.adapter.a_init_std); });

        // [reducer]
        add("reducer", "enabled",
            [](RunConfig& c, const std::string& v) { c.reducer.enabled = parse_bool(v); },
            [](const RunConfig& c) { return c.reducer.enabled ? "true" : "false"; });
        add("reducer", "probe_interval",
            [](RunConfig& c, const std::string& v) { c.reducer.probe_interval = parse_long(v); },
            [](const RunConfig& c) { return std::to_string(c.reducer.probe_interval); });
        add("reducer", "n_suppressed",
            [](RunConfig& c, const std::string& v) { c.reducer.n_suppressed = parse_long(v); },
            [](const RunConfig& c) { return std::to_string(c.reducer.n_suppressed); });
        add("reducer", "k_active",
            [](RunConfig& c, const std::string& v) { c.reducer.k_active = parse_long(v); },
            [](const RunConfig& c) { return std::to_string(c.reducer.k_active); });
        add("reducer", "ema_beta",
            [](RunConfig& c, const std::string& v) { c.reducer.ema_beta = parse_real(v); },
            [](const RunConfig& c) { return format_real(c.reducer.ema_beta); });
        add("reducer", "sign_mode",
            [](RunConfig& c, const std::string& v) {
                if (v == "intent") c.reducer.sign_mode = SignMode::intent;
                else if (v == "paper_literal") c.reducer.sign_mode = SignMode::paper_literal;
                else throw ConfigError("sign_mode must be intent or paper_literal");
            },
            [](const RunConfig& c) {
                return c.reducer.sign_mode == SignMode::intent ? "intent"
                                                               : "paper_literal";
            });
        add("reducer", "temperature",
            [](RunConfig& c, const std::string& v) { c.reducer.temperature = parse_real(v); },
            [](const RunConfig& c) { return format_real(c.reducer.temperature); });
        add("reducer", "suppress_full_layer",
            [](RunConfig& c, const std::string& v) {
                c.reducer.suppress_full_layer = parse_bool(v);
            },
            [](const RunConfig& c) {
                return c.reducer.suppress_full_layer ? "true" : "false";
            });
        add("reducer", "freeze_router_with_b",
            [](RunConfig& c, const std::string& v) {
                c.reducer.freeze_router_with_b = parse_bool(v);
            },
            [](const RunConfig& c) {
                return c.reducer.freeze_router_with_b ? "true" : "false";
            });

        // [task]
        add("task", "name",
            [](RunConfig& c, const std::string& v) { c.task_name = v; },
            [](const RunConfig& c) { return c.task_name; });
        add("task", "seed",
            [](RunConfig& c, const std::string& v) { c.task_seed = parse_u64(v); },
            [](const RunConfig& c) { return std::to_string(c.task_seed); });
        add("task", "domain",
            [](RunConfig& c, const std::string& v) { c.task_domain = parse_long(v); },
            [](const RunConfig& c) { return std::to_string(c.task_domain); });
        add("task", "alphabet",
            [](RunConfig& c, const std::string& v) {
                c.conflict.alphabet = c.longtail.alphabet = parse_long(v);
            },
            [](const RunConfig& c) { return std::to_string(c.conflict.alphabet); });
        add("task", "seq_len",
            [](RunConfig& c, const std::string& v) {
                c.conflict.seq_len = c.longtail.seq_len = parse_long(v);
            },
            [](const RunConfig& c) { return std::to_string(c.conflict.seq_len); });
        add("task", "flip_tokens",
            [](RunConfig& c, const std::string& v) { c.conflict.flip_tokens = parse_long(v); },
            [](const RunConfig& c) { return std::to_string(c.conflict.flip_tokens); });
        add("task", "parity_rule",
            [](RunConfig& c, const std::string& v) { c.conflict.parity_rule = parse_bool(v); },
            [](const RunConfig& c) { return c.conflict.parity_rule ? "true" : "false"; });
        add("task", "n_patterns",
            [](RunConfig& c, const std::string& v) { c.longtail.n_patterns = parse_long(v); },
            [](const RunConfig& c) { return std::to_string(c.longtail.n_patterns); });
        add("task", "pattern_decay",
            [](RunConfig& c, const std::string& v) { c.longtail.pattern_decay = parse_real(v); },
            [](const RunConfig& c) { return format_real(c.longtail.pattern_decay); });
        add("task", "restart_prob",
            [](RunConfig& c, const std::string& v) { c.longtail.restart_prob = parse_real(v); },
            [](const RunConfig& c) { return format_real(c.longtail.restart_prob); });
        add("task", "weights",
            [](RunConfig& c, const std::string& v) { c.mixture_weights = parse_real_list(v); },
            [](const RunConfig& c) { return real_list_str(c.mixture_weights); });

        // [train]
        add("train", "lr",
            [](RunConfig& c, const std::string& v) { c.train.lr = parse_real(v); },
            [](const RunConfig& c) { return format_real(c.train.lr); });
        add("train", "steps",
            [](RunConfig& c, const std::string& v) { c.train.steps = parse_long(v); },
            [](const RunConfig& c) { return std::to_string(c.train.steps); });
        add("train", "batch_size",
            [](RunConfig& c, const std::string& v) { c.train.batch_size = parse_long(v); },
            [](const RunConfig& c) { return std::to_string(c.train.batch_size); });
        add("train", "optimizer",
            [](RunConfig& c, const std::string& v) {
                if (v == "sgd") c.train.optimizer = OptKind::sgd;
                else if (v == "adamw") c.train.optimizer = OptKind::adamw;
                else throw ConfigError("optimizer must be sgd or adamw");
            },
            [](const RunConfig& c) {
                return c.train.optimizer == OptKind::sgd ? "sgd" : "adamw";
            });
        add("train", "grad_clip",
            [](RunConfig& c, const std::string& v) { c.train.grad_clip = parse_real(v); },
            [](const RunConfig& c) { return format_real(c.train.grad_clip); });
        add("train", "eval_every",
            [](RunConfig& c, const std::string& v) { c.train.eval_every = parse_long(v); },
            [](const RunConfig& c) { return std::to_string(c.train.eval_every); });
        add("train", "eval_examples",
            [](RunConfig& c, const std::string& v) { c.train.eval_examples = parse_long(v); },
            [](const RunConfig& c) { return std::to_string(c.train.eval_examples); });
        add("train", "eval_split",
            [](RunConfig& c, const std::string& v) {
                if (v == "val") c.train.eval_split = Split::val;
                else if (v == "test") c.train.eval_split = Split::test;
                else throw ConfigError("eval_split must be val or test");
            },
            [](const RunConfig& c) {
                return c.train.eval_split == Split::val ? "val" : "test";
            });
        add("train", "seed",
            [](RunConfig& c, const std::string& v) { c.train.seed = parse_u64(v); },
            [](const RunConfig& c) { return std::to_string(c.train.seed); });

        // [output]
        add("output", "dir",
            [](RunConfig& c, const std::string& v) { c.out_dir = v; },
            [](const RunConfig& c) { return c.out_dir; });

        // [experiment]
        add("experiment", "ratios",
            [](RunConfig& c, const std::string& v) { c.exp_ratios = parse_real_list(v); },
            [](const RunConfig& c) { return real_list_str(c.exp_ratios); });
        add("experiment", "seeds",
            [](RunConfig& c, const std::string& v) { c.exp_seeds = parse_long(v); },
            [](const RunConfig& c) { return std::to_string(c.exp_seeds); });
        add("experiment", "head_counts",
            [](RunConfig& c, const std::string& v) { c.exp_head_counts = parse_long_list(v); },
            [](const RunConfig& c) {
                std::string s;
                for (std::size_t i = 0; i < c.exp_head_counts.size(); ++i) {
                    if (i) s += ",";
                    s += std::to_string(c.exp_head_counts[i]);
                }
                return s;
            });
        add("experiment", "fixtures",
            [](RunConfig& c, const std::string& v) { c.exp_fixtures = v; },
            [](const RunConfig& c) { return c.exp_fixtures; });
        return e;
    }();
    return kEntries;
}

const Entry* find_entry(const std::string& section, const std::string& key) {
    for (const auto& e : entries())
        if (e.section == section && e.key == key) return &e;
    return nullptr;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

void apply_kv(RunConfig& cfg, const std::string& section, const std::string& key,
              const std::string& value, const std::string& where) {
    const Entry* e = find_entry(section, key);
    if (!e)
        throw ConfigError(where + ": unknown key '" + section + "." + key + "'");
    try {
        e->set(cfg, value);
    } catch (const ConfigError& err) {
        throw ConfigError(where + ": " + section + "." + key + ": " + err.what());
    }
}

}  // namespace

MixtureSpec RunConfig::build_mixture() const {
    if (task_name == "longtail_lm")
        return MixtureSpec::single(gen_longtail_lm(task_seed, longtail));
    if (task_name == "conflict_pair") {
        auto [a, b] = gen_domain_pair(task_seed, conflict);
        if (mixture_weights.size() != 2)
            throw ConfigError("conflict_pair needs exactly two mixture weights");
        return MixtureSpec::of({{a, mixture_weights[0]}, {b, mixture_weights[1]}});
    }
    if (task_name == "conflict_single") {
        auto [a, b] = gen_domain_pair(task_seed, conflict);
        if (task_domain != 0 && task_domain != 1)
            throw ConfigError("task.domain must be 0 or 1");
        return MixtureSpec::single(task_domain == 0 ? a : b);
    }
    throw ConfigError("unknown task.name '" + task_name +
                      "' (longtail_lm, conflict_pair, conflict_single)");
}

TrainConfig RunConfig::build_train() const {
    TrainConfig tc = train;
    tc.reducer = reducer;
    return tc;
}

void RunConfig::validate() const {
    model.validate();
    adapter.validate(model);
    train.validate();
    build_mixture();
}

RunConfig parse_run_config_text(const std::string& text,
                                const std::vector<std::string>& overrides,
                                const std::string& origin) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line, section;
    long line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string where = origin + ":" + std::to_string(line_no);
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError(where + ": malformed section header '" + t + "'");
            section = t.substr(1, t.size() - 2);
            bool known = false;
            for (const auto& e : entries()) known |= (e.section == section);
            if (!known)
                throw ConfigError(where + ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(where + ": expected 'key = value', got '" + t + "'");
        if (section.empty())
            throw ConfigError(where + ": key before any [section]");
        apply_kv(cfg, section, trim(t.substr(0, eq)), trim(t.substr(eq + 1)), where);
    }

    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        const auto dot = ov.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq)
            throw ConfigError("override must look like section.key=value: '" +
                              ov + "'");
        apply_kv(cfg, ov.substr(0, dot), ov.substr(dot + 1, eq - dot - 1),
                 trim(ov.substr(eq + 1)), "override '" + ov + "'");
    }
    cfg.validate();
    return cfg;
}

RunConfig parse_run_config(const std::string& path,
                           const std::vector<std::string>& overrides) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_run_config_text(buf.str(), overrides, path);
}

std::vector<std::array<std::string, 3>> config_items(const RunConfig& cfg) {
    std::vector<std::array<std::string, 3>> out;
    for (const auto& e : entries()) out.push_back({e.section, e.key, e.get(cfg)});
    return out;
}

std::string config_echo(const RunConfig& cfg,
                        const std::vector<std::string>& overrides) {
    std::string out = "# resolved configuration (defaults included)\n";
    for (const auto& ov : overrides) out += "# override: " + ov + "\n";
    std::string section;
    for (const auto& e : entries()) {
        if (e.section != section) {
            section = e.section;
            out += "\n[" + section + "]\n";
        }
        out += e.key + " = " + e.get(cfg) + "\n";
    }
    return out;
}

}  // namespace reora
