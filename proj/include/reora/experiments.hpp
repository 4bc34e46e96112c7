// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include "reora/runconfig.hpp"

namespace reora {

// Each runner trains at toy scale, aggregates over seeds, optionally checks
// pinned fixture bounds, and returns the result document (also written to
// <out_dir>/result.json by the CLI). Per-run metrics CSVs land under
// <out_dir>/runs/.

/// Permanent pruning sweep: train once with the selective-update mechanism,
/// then for each ratio kill ceil(ratio * n_layers) layers' B banks, either by
/// lowest importance score or uniformly at random (averaged over seeds).
nlohmann::json run_drop_sweep(const RunConfig& cfg, const std::string& out_dir);

/// Expert-count ablation: train every head count from scratch under an
/// identical budget and seed pairing, report mean accuracy per count.
nlohmann::json run_head_ablation(const RunConfig& cfg, const std::string& out_dir);

/// Mixed-domain interference study: per-domain accuracy of single-domain
/// runs vs a shared single-B adapter on the mixture vs the multi-head
/// configuration on the mixture.
nlohmann::json run_interference(const RunConfig& cfg, const std::string& out_dir);

nlohmann::json run_experiment(const std::string& name, const RunConfig& cfg,
                              const std::string& out_dir);
std::vector<std::string> experiment_names();

/// Resolved config as a JSON object (echo embedded in result documents).
nlohmann::json config_json(const RunConfig& cfg);

}  // namespace reora
