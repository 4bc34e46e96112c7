// SPDX-License-Identifier: Apache-2.0
#include "reora/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace reora {

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        default: return "test";
    }
}

long TaskSpec::marker_id(long variant) const { return variant; }

long TaskSpec::content_base() const {
    return kind == TaskKind::seq_classification ? 2 : 2 + n_patterns;
}

long TaskSpec::required_vocab() const { return content_base() + alphabet; }

long TaskSpec::rule_label(const std::vector<long>& content) const {
    long count = 0;
    for (long c : content) count += (c == marked_token);
    long base = parity_rule ? (count % 2) : (count >= count_threshold ? 1 : 0);
    if (domain_id == 1 && flip_set[content[0]]) base ^= 1;
    return base;
}

MixtureSpec MixtureSpec::single(TaskSpec spec) {
    MixtureSpec m;
    m.parts.emplace_back(std::move(spec), 1.0);
    return m;
}

MixtureSpec MixtureSpec::of(std::vector<std::pair<TaskSpec, real>> parts) {
    if (parts.empty()) throw ConfigError("mixture needs at least one task");
    real total = 0.0;
    for (auto& [spec, w] : parts) {
        if (w <= 0) throw ConfigError("mixture weights must be positive");
        total += w;
    }
    for (auto& [spec, w] : parts) w /= total;
    MixtureSpec m;
    m.parts = std::move(parts);
    return m;
}

long MixtureSpec::required_vocab() const {
    long v = 0;
    for (const auto& [spec, w] : parts) v = std::max(v, spec.required_vocab());
    return v;
}

std::pair<TaskSpec, TaskSpec> gen_domain_pair(std::uint64_t seed,
                                              const ConflictParams& params) {
    if (params.flip_tokens < 1 || params.flip_tokens > params.alphabet)
        throw ConfigError("flip_tokens out of range");
    Rng rng(child_seed(seed, "task.conflict"));
    TaskSpec a;
    a.name = "conflict_a";
    a.kind = TaskKind::seq_classification;
    a.domain_id = 0;
    a.alphabet = params.alphabet;
    a.seq_len = params.seq_len;
    a.rule_seed = seed;
    a.marked_token = rng.uniform_int(params.alphabet);
    a.parity_rule = params.parity_rule;
    // threshold near the median count keeps classes balanced
    a.count_threshold = std::max(1L, params.seq_len / params.alphabet + 1);
    a.flip_set.assign(params.alphabet, 0);
    std::vector<long> perm(params.alphabet);
    std::iota(perm.begin(), perm.end(), 0);
    for (long i = params.alphabet - 1; i > 0; --i)
        std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
    for (long i = 0; i < params.flip_tokens; ++i) a.flip_set[perm[i]] = 1;

    TaskSpec b = a;
    b.name = "conflict_b";
    b.domain_id = 1;
    return {a, b};
}

TaskSpec gen_longtail_lm(std::uint64_t seed, const LongtailParams& params) {
    if (params.n_patterns < 1) throw ConfigError("n_patterns must be >= 1");
    if (params.pattern_decay <= 0 || params.pattern_decay > 1)
        throw ConfigError("pattern_decay must be in (0,1]");
    Rng rng(child_seed(seed, "task.longtail"));
    TaskSpec t;
    t.name = "longtail_lm";
    t.kind = TaskKind::char_lm;
    t.domain_id = 0;
    t.alphabet = params.alphabet;
    t.seq_len = params.seq_len;
    t.rule_seed = seed;
    t.n_patterns = params.n_patterns;
    t.pattern_decay = params.pattern_decay;
    t.restart_prob = params.restart_prob;
    for (long j = 0; j < params.n_patterns; ++j) {
        // odd multiplier keeps the affine map a bijection for power-of-two
        // alphabets, so every start token yields a full-information sequence
        t.pattern_mul.push_back(2 * rng.uniform_int(params.alphabet / 2) + 1);
        t.pattern_add.push_back(rng.uniform_int(params.alphabet));
    }
    return t;
}

std::vector<real> pattern_probs(const TaskSpec& spec) {
    std::vector<real> p(spec.n_patterns);
    real total = 0.0;
    for (long j = 0; j < spec.n_patterns; ++j) {
        p[j] = std::pow(spec.pattern_decay, static_cast<real>(j));
        total += p[j];
    }
    for (auto& v : p) v /= total;
    return p;
}

Split split_of_tokens(const std::vector<long>& tokens) {
    const std::uint64_t h =
        fnv1a64(tokens.data(), tokens.size() * sizeof(long));
    const std::uint64_t bucket = h % 10;
    if (bucket < 8) return Split::train;
    return bucket == 8 ? Split::val : Split::test;
}

Sample draw_sample(const TaskSpec& spec, Split split, Rng& rng) {
    const long base = spec.content_base();
    Sample s;
    s.domain_id = spec.domain_id;
    // Rejection against the hash partition keeps splits disjoint by
    // construction.
    for (;;) {
        std::vector<long> content(spec.seq_len);
        long marker;
        if (spec.kind == TaskKind::seq_classification) {
            for (auto& c : content) c = rng.uniform_int(spec.alphabet);
            marker = spec.marker_id(spec.domain_id);
        } else {
            const auto probs = pattern_probs(spec);
            const real u = rng.uniform();
            long j = spec.n_patterns - 1;
            real acc = 0.0;
            for (long i = 0; i < spec.n_patterns; ++i) {
                acc += probs[i];
                if (u < acc) {
                    j = i;
                    break;
                }
            }
            content[0] = rng.uniform_int(spec.alphabet);
            for (long i = 1; i < spec.seq_len; ++i) {
                if (rng.uniform() < spec.restart_prob)
                    content[i] = rng.uniform_int(spec.alphabet);
                else
                    content[i] = (spec.pattern_mul[j] * content[i - 1] +
                                  spec.pattern_add[j]) %
                                 spec.alphabet;
            }
            marker = spec.marker_id(j);
            s.label = j;
        }
        std::vector<long> tokens;
        tokens.reserve(spec.seq_len + 1);
        tokens.push_back(marker);
        for (long c : content) tokens.push_back(base + c);
        if (split_of_tokens(tokens) != split) continue;
        if (spec.kind == TaskKind::seq_classification)
            s.label = spec.rule_label(content);
        s.tokens = std::move(tokens);
        return s;
    }
}

TokenBatch make_batch(const std::vector<Sample>& samples, TaskKind kind) {
    TokenBatch b;
    b.kind = kind;
    b.batch = static_cast<long>(samples.size());
    if (samples.empty()) return b;
    const long full = static_cast<long>(samples[0].tokens.size());
    if (kind == TaskKind::seq_classification) {
        b.seq = full;
        for (const auto& s : samples) {
            b.tokens.insert(b.tokens.end(), s.tokens.begin(), s.tokens.end());
            b.labels.push_back(s.label);
            b.domain_ids.push_back(s.domain_id);
        }
    } else {
        // input is tokens[0..T), target t is tokens[t+1]
        b.seq = full - 1;
        for (const auto& s : samples) {
            b.tokens.insert(b.tokens.end(), s.tokens.begin(),
                            s.tokens.end() - 1);
            b.labels.insert(b.labels.end(), s.tokens.begin() + 1, s.tokens.end());
            b.domain_ids.push_back(s.domain_id);
        }
    }
    return b;
}

BatchStream::BatchStream(MixtureSpec mixture, long batch_size,
                         std::uint64_t seed, Split split)
    : mixture_(std::move(mixture)),
      batch_size_(batch_size),
      split_(split),
      rng_(seed) {
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    const TaskKind k = mixture_.kind();
    for (const auto& [spec, w] : mixture_.parts)
        if (spec.kind != k)
            throw ConfigError("mixture tasks must share one kind");
}

TokenBatch BatchStream::next() {
    std::vector<Sample> samples;
    samples.reserve(batch_size_);
    for (long i = 0; i < batch_size_; ++i) {
        std::size_t d = mixture_.parts.size() - 1;
        if (mixture_.parts.size() > 1) {
            const real u = rng_.uniform();
            real acc = 0.0;
            for (std::size_t j = 0; j < mixture_.parts.size(); ++j) {
                acc += mixture_.parts[j].second;
                if (u < acc) {
                    d = j;
                    break;
                }
            }
        }
        samples.push_back(draw_sample(mixture_.parts[d].first, split_, rng_));
    }
    return make_batch(samples, mixture_.kind());
}

EvalSet build_eval_set(const MixtureSpec& mixture, long examples_per_domain,
                       long batch_size, std::uint64_t seed, Split split) {
    EvalSet es;
    for (std::size_t d = 0; d < mixture.parts.size(); ++d) {
        Rng rng(child_seed(seed, "eval." + std::to_string(d)));
        std::vector<TokenBatch> batches;
        long remaining = examples_per_domain;
        while (remaining > 0) {
            const long n = std::min(remaining, batch_size);
            std::vector<Sample> samples;
            samples.reserve(n);
            for (long i = 0; i < n; ++i)
                samples.push_back(draw_sample(mixture.parts[d].first, split, rng));
            batches.push_back(make_batch(samples, mixture.kind()));
            remaining -= n;
        }
        es.per_domain.push_back(std::move(batches));
    }
    return es;
}

double conflict_fraction(const TaskSpec& a, const TaskSpec& b) {
    if (a.kind != TaskKind::seq_classification)
        throw UsageError("conflict_fraction applies to classification tasks");
    long total = 1;
    for (long i = 0; i < a.seq_len; ++i) {
        total *= a.alphabet;
        if (total > (1 << 24))
            throw UsageError("conflict enumeration space too large");
    }
    long disagree = 0;
    std::vector<long> content(a.seq_len, 0);
    for (long n = 0; n < total; ++n) {
        long x = n;
        for (long i = 0; i < a.seq_len; ++i) {
            content[i] = x % a.alphabet;
            x /= a.alphabet;
        }
        disagree += (a.rule_label(content) != b.rule_label(content));
    }
    return static_cast<double>(disagree) / static_cast<double>(total);
}

void export_split(const TaskSpec& spec, Split split, long n,
                  const std::string& path, std::uint64_t seed) {
    std::ofstream os(path);
    if (!os) throw InputError("cannot open for writing: " + path);
    Rng rng(child_seed(seed, std::string("export.") + split_name(split)));
    for (long i = 0; i < n; ++i) {
        Sample s = draw_sample(spec, split, rng);
        for (std::size_t t = 0; t < s.tokens.size(); ++t) {
            if (t) os << ' ';
            os << s.tokens[t];
        }
        os << '\t' << s.label << '\n';
    }
}

namespace {
std::vector<real> probe_features(const Sample& s, long alphabet,
                                 long content_base) {
    // token counts + one-hot of the first content token + bias
    std::vector<real> f(2 * alphabet + 1, 0.0);
    for (std::size_t i = 1; i < s.tokens.size(); ++i)
        f[s.tokens[i] - content_base] += 1.0;
    f[alphabet + (s.tokens[1] - content_base)] = 1.0;
    f[2 * alphabet] = 1.0;
    return f;
}
}  // namespace

double linear_probe_accuracy(const std::vector<Sample>& train,
                             const std::vector<Sample>& test, long alphabet,
                             long content_base) {
    const long dim = 2 * alphabet + 1;
    std::vector<real> w(dim, 0.0);
    const real lr = 0.5;
    for (int epoch = 0; epoch < 300; ++epoch) {
        std::vector<real> grad(dim, 0.0);
        for (const auto& s : train) {
            const auto f = probe_features(s, alphabet, content_base);
            real z = 0.0;
            for (long i = 0; i < dim; ++i) z += w[i] * f[i];
            const real p = 1.0 / (1.0 + std::exp(-z));
            const real err = p - static_cast<real>(s.label);
            for (long i = 0; i < dim; ++i) grad[i] += err * f[i];
        }
        for (long i = 0; i < dim; ++i) w[i] -= lr * grad[i] / train.size();
    }
    long correct = 0;
    for (const auto& s : test) {
        const auto f = probe_features(s, alphabet, content_base);
        real z = 0.0;
        for (long i = 0; i < dim; ++i) z += w[i] * f[i];
        correct += ((z > 0.0 ? 1 : 0) == s.label);
    }
    return static_cast<double>(correct) / test.size();
}

TokenBatch generic_text_batch(long vocab_size, long batch, long seq,
                              std::uint64_t chain_seed, Rng& rng) {
    // Row-stochastic transition table from the chain seed; sampling uses the
    // caller's stream.
    Rng chain(chain_seed);
    std::vector<real> trans(vocab_size * vocab_size);
    for (long i = 0; i < vocab_size; ++i) {
        real total = 0.0;
        for (long j = 0; j < vocab_size; ++j) {
            const real u = chain.uniform();
            trans[i * vocab_size + j] = u * u;  // skewed rows are learnable
            total += trans[i * vocab_size + j];
        }
        for (long j = 0; j < vocab_size; ++j) trans[i * vocab_size + j] /= total;
    }
    TokenBatch b;
    b.kind = TaskKind::char_lm;
    b.batch = batch;
    b.seq = seq;
    for (long i = 0; i < batch; ++i) {
        std::vector<long> toks(seq + 1);
        toks[0] = rng.uniform_int(vocab_size);
        for (long t = 1; t <= seq; ++t) {
            const real u = rng.uniform();
            real acc = 0.0;
            long next = vocab_size - 1;
            for (long j = 0; j < vocab_size; ++j) {
                acc += trans[toks[t - 1] * vocab_size + j];
                if (u < acc) {
                    next = j;
                    break;
                }
            }
            toks[t] = next;
        }
        b.tokens.insert(b.tokens.end(), toks.begin(), toks.end() - 1);
        b.labels.insert(b.labels.end(), toks.begin() + 1, toks.end());
        b.domain_ids.push_back(0);
    }
    return b;
}

}  // namespace reora
