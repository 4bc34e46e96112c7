// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "reora/common.hpp"

namespace reora {

/// Architecture shape for closed-form accounting (no weights materialized),
/// so full-scale model configs are cheap to analyze.
struct ArchSpec {
    std::string name;
    long n_layers = 0;
    struct ModuleDims {
        std::string name;
        long d_in = 0, d_out = 0;
    };
    std::vector<ModuleDims> modules;
    double backbone_params = 0.0;

    void validate() const;
};

ArchSpec load_arch(const std::string& path);

struct SchemeSpec {
    enum class Kind { lora, reora };
    Kind kind = Kind::lora;
    long rank = 16;
    long heads = 1;        // expert count (reora)
    bool share_a = true;   // reora: one A per input-dim group
    long dropped_layers = 0;  // layers whose B bank is removed (reora)
    long active_layers = -1;  // K for the FLOP model; -1 = all kept layers

    void validate(const ArchSpec& arch) const;
    std::string describe() const;
};

/// Closed-form trainable-parameter count.
/// lora:  n_layers * sum_m rank*(d_in+d_out)
/// reora: per-group shared A + per-kept-layer expert B banks + routers
///        (router only when heads > 1; per-layer A when share_a=false).
long long count_params(const ArchSpec& arch, const SchemeSpec& scheme);

double percent_of_backbone(long long params, const ArchSpec& arch);

/// Analytic per-token training MACs of the adapter path (documented basis:
/// forward + backward at 2x forward, with expert-B gradient segments skipped
/// on frozen layers). Absolute units are arbitrary; use ratios.
double flops_units(const ArchSpec& arch, const SchemeSpec& scheme);
double relative_flops(const ArchSpec& arch, const SchemeSpec& scheme,
                      const SchemeSpec& baseline);

/// Dropped-layer counts whose parameter total lands within +-tol_frac of
/// target (scan over 0..n_layers).
std::vector<std::pair<long, long long>> drop_counts_near(
    const ArchSpec& arch, SchemeSpec scheme, double target, double tol_frac);

}  // namespace reora
