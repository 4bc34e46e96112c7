// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "reora/model.hpp"
#include "reora/rng.hpp"

namespace reora {

enum class TaskKind { seq_classification, char_lm };
enum class Split { train, val, test };

const char* split_name(Split s);

/// Deterministic synthetic task. Classification tasks implement a label rule
/// over shared n-gram statistics; LM tasks emit marker-prefixed pattern
/// sequences with geometrically decaying pattern frequencies.
struct TaskSpec {
    std::string name;
    TaskKind kind = TaskKind::seq_classification;
    int domain_id = 0;
    long alphabet = 4;
    long seq_len = 6;
    std::uint64_t rule_seed = 1;

    // classification rule (derived from rule_seed by the generators)
    long marked_token = 0;        // count this content symbol
    long count_threshold = 2;     // base label: count >= threshold
    bool parity_rule = false;     // base label: count parity instead
    std::vector<char> flip_set;   // [alphabet]; domain 1 flips when content[0] in set

    // char-lm pattern bank
    long n_patterns = 5;
    real pattern_decay = 0.5;
    real restart_prob = 0.25;  // chance a position redraws uniformly, which
                               // keeps the sequence space large enough that
                               // only the transition rule generalizes
    std::vector<long> pattern_mul, pattern_add;  // affine next-token rules

    // split sizes (used by export and eval-set construction)
    long train_size = 4096, val_size = 512, test_size = 512;

    long n_classes() const { return 2; }
    /// Tokens: [marker][content...]; markers occupy low ids.
    long marker_id(long variant) const;
    long content_base() const;
    long required_vocab() const;
    /// Ground-truth label for a content sequence (classification only).
    long rule_label(const std::vector<long>& content) const;
};

struct MixtureSpec {
    std::vector<std::pair<TaskSpec, real>> parts;  // weights normalized on build
    static MixtureSpec single(TaskSpec spec);
    static MixtureSpec of(std::vector<std::pair<TaskSpec, real>> parts);
    long n_domains() const { return static_cast<long>(parts.size()); }
    TaskKind kind() const { return parts.at(0).first.kind; }
    long required_vocab() const;
};

struct ConflictParams {
    long alphabet = 4;
    long seq_len = 6;
    long flip_tokens = 2;  // conflict fraction = flip_tokens / alphabet
    bool parity_rule = false;
};

/// Two classification tasks over one alphabet with a shared count feature
/// and rules that disagree exactly on the flip region.
std::pair<TaskSpec, TaskSpec> gen_domain_pair(std::uint64_t seed,
                                              const ConflictParams& params = {});

struct LongtailParams {
    long alphabet = 8;
    long seq_len = 12;
    long n_patterns = 5;
    real pattern_decay = 0.5;
    real restart_prob = 0.25;
};

/// Char-LM over affine-recurrence patterns with geometric frequencies.
TaskSpec gen_longtail_lm(std::uint64_t seed, const LongtailParams& params = {});

std::vector<real> pattern_probs(const TaskSpec& spec);

struct Sample {
    std::vector<long> tokens;  // marker + content
    long label = 0;            // class (classification) or pattern id (lm)
    int domain_id = 0;
};

Split split_of_tokens(const std::vector<long>& tokens);
Sample draw_sample(const TaskSpec& spec, Split split, Rng& rng);

struct TokenBatch {
    TaskKind kind = TaskKind::seq_classification;
    long batch = 0, seq = 0;
    std::vector<long> tokens;      // [batch*seq]
    std::vector<long> labels;      // [batch] (cls) or [batch*seq] (lm, shifted)
    std::vector<int> domain_ids;   // [batch]
    bool empty() const { return batch == 0; }
};

/// Infinite deterministic batch stream; mixtures interleave domains
/// proportionally and tag every item with its domain.
class BatchStream {
public:
    BatchStream(MixtureSpec mixture, long batch_size, std::uint64_t seed,
                Split split);
    TokenBatch next();
    const MixtureSpec& mixture() const { return mixture_; }

private:
    MixtureSpec mixture_;
    long batch_size_;
    Split split_;
    Rng rng_;
};

TokenBatch make_batch(const std::vector<Sample>& samples, TaskKind kind);

/// Fixed per-domain evaluation batches.
struct EvalSet {
    std::vector<std::vector<TokenBatch>> per_domain;
};
EvalSet build_eval_set(const MixtureSpec& mixture, long examples_per_domain,
                       long batch_size, std::uint64_t seed, Split split);

/// Exhaustive disagreement fraction of the two rules over all content
/// sequences (small alphabets only).
double conflict_fraction(const TaskSpec& a, const TaskSpec& b);

void export_split(const TaskSpec& spec, Split split, long n,
                  const std::string& path, std::uint64_t seed);

/// Logistic probe on bag-of-token + first-token features; deterministic
/// full-batch training. Returns test accuracy. Analysis utility for the
/// interference witness.
double linear_probe_accuracy(const std::vector<Sample>& train,
                             const std::vector<Sample>& test, long alphabet,
                             long content_base);

/// Task-agnostic warmup text: seeded first-order Markov chain over the
/// whole vocabulary.
TokenBatch generic_text_batch(long vocab_size, long batch, long seq,
                              std::uint64_t chain_seed, Rng& rng);

}  // namespace reora
