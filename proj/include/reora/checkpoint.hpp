// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "reora/adapter.hpp"
#include "reora/model.hpp"

namespace reora {

// Binary tensor container: magic, version, JSON config block, then named
// tensors as (name-length, name, dtype tag, rank, extents, little-endian
// payload). f64 round-trips bit-exactly; f32 payloads load with widening.

struct TensorFile {
    std::string config_json;
    std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_tensor_file(const std::string& path, const std::string& config_json,
                      const std::vector<std::pair<std::string, Tensor>>& tensors);
TensorFile load_tensor_file(const std::string& path);

void save_backbone(const std::string& path, const Backbone& bb);
Backbone load_backbone(const std::string& path);

/// Adapter checkpoints carry a manifest with both configs plus the alive and
/// trainable masks.
void save_adapters(const std::string& path, const AdapterState& st);
AdapterState load_adapters(const std::string& path);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& js);

}  // namespace reora
