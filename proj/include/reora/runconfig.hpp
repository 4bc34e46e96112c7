// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "reora/adapter.hpp"
#include "reora/reducer.hpp"
#include "reora/tasks.hpp"
#include "reora/train.hpp"

namespace reora {

/// Full run description: sections [model] [adapter] [reducer] [task] [train]
/// [output] [experiment] in simple `key = value` text. Unknown sections or
/// keys are hard errors; every run can be reproduced from the emitted echo.
struct RunConfig {
    ModelConfig model;
    AdapterConfig adapter;
    ReducerConfig reducer;
    TrainConfig train;  // reducer is embedded by build_train()

    std::string task_name = "longtail_lm";
    std::uint64_t task_seed = 99;
    long task_domain = 0;
    ConflictParams conflict;
    LongtailParams longtail;
    std::vector<real> mixture_weights = {0.5, 0.5};

    std::string out_dir = "runs/out";

    std::vector<real> exp_ratios = {0.25, 0.5, 0.75};
    long exp_seeds = 5;
    std::vector<long> exp_head_counts = {1, 2, 3, 4};
    std::string exp_fixtures;  // optional fixtures.json for bound checks

    MixtureSpec build_mixture() const;
    TrainConfig build_train() const;
    void validate() const;
};

/// Parse a config file plus `section.key=value` overrides.
RunConfig parse_run_config(const std::string& path,
                           const std::vector<std::string>& overrides = {});
RunConfig parse_run_config_text(const std::string& text,
                                const std::vector<std::string>& overrides = {},
                                const std::string& origin = "<string>");

/// Fully-resolved echo (defaults included) plus the override list.
std::string config_echo(const RunConfig& cfg,
                        const std::vector<std::string>& overrides = {});

/// (section, key, value) triples of the resolved config, in echo order.
std::vector<std::array<std::string, 3>> config_items(const RunConfig& cfg);

}  // namespace reora
