// SPDX-License-Identifier: Apache-2.0
#include "reora/accounting.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace reora {

void ArchSpec::validate() const {
    if (n_layers <= 0) throw ConfigError("arch: n_layers must be positive");
    if (modules.empty()) throw ConfigError("arch: modules must be nonempty");
    for (const auto& m : modules)
        if (m.d_in <= 0 || m.d_out <= 0)
            throw ConfigError("arch: module dims must be positive (" + m.name + ")");
    if (backbone_params <= 0)
        throw ConfigError("arch: backbone_params must be positive");
}

ArchSpec load_arch(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot open arch file: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw InputError("arch file parse error: " + std::string(e.what()));
    }
    ArchSpec a;
    a.name = j.value("name", "arch");
    a.n_layers = j.at("n_layers").get<long>();
    a.backbone_params = j.at("backbone_params").get<double>();
    for (const auto& m : j.at("modules")) {
        a.modules.push_back({m.at("name").get<std::string>(),
                             m.at("d_in").get<long>(),
                             m.at("d_out").get<long>()});
    }
    a.validate();
    return a;
}

void SchemeSpec::validate(const ArchSpec& arch) const {
    if (rank <= 0) throw ConfigError("scheme: rank must be positive");
    if (heads < 1) throw ConfigError("scheme: heads must be >= 1");
    if (kind == Kind::lora && heads != 1)
        throw ConfigError("scheme lora has a single B; use reora for heads > 1");
    if (kind == Kind::lora && dropped_layers != 0)
        throw ConfigError("layer dropping applies to the shared-A scheme");
    if (dropped_layers < 0 || dropped_layers >= arch.n_layers)
        throw ConfigError("scheme: dropped_layers out of range");
    const long kept = arch.n_layers - dropped_layers;
    if (active_layers != -1 && (active_layers < 1 || active_layers > kept))
        throw ConfigError("scheme: active_layers out of range");
}

std::string SchemeSpec::describe() const {
    std::string s = kind == Kind::lora ? "lora" : "reora";
    s += " r=" + std::to_string(rank);
    if (kind == Kind::reora) {
        s += " heads=" + std::to_string(heads);
        s += share_a ? " shared-A" : " per-layer-A";
        if (dropped_layers) s += " dropped=" + std::to_string(dropped_layers);
        if (active_layers != -1) s += " K=" + std::to_string(active_layers);
    }
    return s;
}

long long count_params(const ArchSpec& arch, const SchemeSpec& scheme) {
    arch.validate();
    scheme.validate(arch);
    const long long r = scheme.rank;
    if (scheme.kind == SchemeSpec::Kind::lora) {
        long long per_layer = 0;
        for (const auto& m : arch.modules) per_layer += r * (m.d_in + m.d_out);
        return per_layer * arch.n_layers;
    }
    const long long kept = arch.n_layers - scheme.dropped_layers;
    long long total = 0;
    if (scheme.share_a) {
        std::set<long> dims;
        for (const auto& m : arch.modules) dims.insert(m.d_in);
        for (long d : dims) total += r * d;
    } else {
        for (const auto& m : arch.modules) total += arch.n_layers * r * m.d_in;
    }
    for (const auto& m : arch.modules) {
        total += kept * scheme.heads * static_cast<long long>(m.d_out) * r;
        if (scheme.heads > 1) total += kept * r * scheme.heads;  // router
    }
    return total;
}

double percent_of_backbone(long long params, const ArchSpec& arch) {
    return 100.0 * static_cast<double>(params) / arch.backbone_params;
}

double flops_units(const ArchSpec& arch, const SchemeSpec& scheme) {
    arch.validate();
    scheme.validate(arch);
    const double r = static_cast<double>(scheme.rank);
    const double h = static_cast<double>(scheme.heads);
    const long kept = arch.n_layers - scheme.dropped_layers;
    const long k_active = scheme.active_layers == -1 ? kept : scheme.active_layers;

    double fwd = 0.0, grad_b = 0.0;
    for (const auto& m : arch.modules) {
        fwd += r * m.d_in + h * r * m.d_out;
        if (scheme.heads > 1) fwd += r * h + h * m.d_out;  // router + mixing
        grad_b += h * r * m.d_out;
    }
    const double bwd_active = 2.0 * fwd;
    const double bwd_frozen = 2.0 * fwd - grad_b;
    return kept * fwd + k_active * bwd_active + (kept - k_active) * bwd_frozen;
}

double relative_flops(const ArchSpec& arch, const SchemeSpec& scheme,
                      const SchemeSpec& baseline) {
    return flops_units(arch, scheme) / flops_units(arch, baseline);
}

std::vector<std::pair<long, long long>> drop_counts_near(
    const ArchSpec& arch, SchemeSpec scheme, double target, double tol_frac) {
    std::vector<std::pair<long, long long>> hits;
    for (long d = 0; d < arch.n_layers; ++d) {
        scheme.dropped_layers = d;
        scheme.active_layers = -1;
        const long long c = count_params(arch, scheme);
        if (std::abs(static_cast<double>(c) - target) <= tol_frac * target)
            hits.emplace_back(d, c);
    }
    return hits;
}

}  // namespace reora
