// SPDX-License-Identifier: Apache-2.0
#include "reora/metrics.hpp"

#include <cmath>
#include <cstdio>

namespace reora {

std::string format_real(real v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    // shortest representation that round-trips
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

std::string join_longs(const std::vector<long>& v, char sep) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += sep;
        s += std::to_string(v[i]);
    }
    return s;
}

MetricsWriter::MetricsWriter(const std::string& path, long n_domains)
    : os_(path, std::ios::binary), n_domains_(n_domains) {
    if (!os_) throw InputError("cannot open metrics csv: " + path);
    os_ << "step,train_loss,trainable_params,active_layers";
    for (long d = 0; d < n_domains_; ++d) os_ << ",acc_d" << d;
    for (long d = 0; d < n_domains_; ++d) os_ << ",nll_d" << d;
    os_ << "\n";
}

void MetricsWriter::write(const MetricsRecord& rec) {
    os_ << rec.step << ',';
    if (rec.has_loss) os_ << format_real(rec.train_loss);
    os_ << ',' << rec.trainable_params << ',' << join_longs(rec.active_layers);
    for (long d = 0; d < n_domains_; ++d) {
        os_ << ',';
        if (rec.has_eval) os_ << format_real(rec.domain_acc[d]);
    }
    for (long d = 0; d < n_domains_; ++d) {
        os_ << ',';
        if (rec.has_eval) os_ << format_real(rec.domain_nll[d]);
    }
    os_ << '\n';
    os_.flush();
}

ScoresWriter::ScoresWriter(const std::string& path) : os_(path, std::ios::binary) {
    if (!os_) throw InputError("cannot open scores csv: " + path);
    os_ << "step,layer,s,p,active\n";
}

void ScoresWriter::write(long step, const std::vector<real>& s,
                         const std::vector<real>& p,
                         const std::vector<long>& active_layers) {
    std::vector<char> active(s.size(), 0);
    for (long l : active_layers) active[l] = 1;
    for (std::size_t l = 0; l < s.size(); ++l) {
        os_ << step << ',' << l << ',' << format_real(s[l]) << ','
            << format_real(p[l]) << ',' << int(active[l]) << '\n';
    }
    os_.flush();
}

}  // namespace reora
