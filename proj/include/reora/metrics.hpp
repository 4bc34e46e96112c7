// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "reora/common.hpp"

namespace reora {

struct MetricsRecord {
    long step = 0;
    real train_loss = 0.0;
    bool has_loss = false;
    bool has_eval = false;
    std::vector<real> domain_acc;
    std::vector<real> domain_nll;
    long trainable_params = 0;
    std::vector<long> active_layers;
};

/// Shortest-exact formatting for reals in CSV/JSON artifacts: parses back to
/// the same double, so reruns are byte-identical.
std::string format_real(real v);

/// Header-first fixed-column CSV, UTF-8, LF. Columns:
/// step,train_loss,trainable_params,active_layers,acc_d*,nll_d*
/// (eval columns empty on non-eval rows; wall-clock timing is reported on
/// the console, never here).
class MetricsWriter {
public:
    MetricsWriter(const std::string& path, long n_domains);
    void write(const MetricsRecord& rec);

private:
    std::ofstream os_;
    long n_domains_;
};

/// Per-probe score snapshots: step,layer,s,p,active
class ScoresWriter {
public:
    explicit ScoresWriter(const std::string& path);
    void write(long step, const std::vector<real>& s, const std::vector<real>& p,
               const std::vector<long>& active_layers);

private:
    std::ofstream os_;
};

std::string join_longs(const std::vector<long>& v, char sep = ';');

}  // namespace reora
