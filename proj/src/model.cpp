// SPDX-License-Identifier: Apache-2.0
#include "reora/model.hpp"

#include <cmath>

#include "reora/adapter.hpp"

namespace reora {

namespace {
const char* kModuleNames[kNumTargetModules] = {"q", "k", "v", "o", "up", "down"};
}

const char* module_name(TargetModule m) { return kModuleNames[static_cast<int>(m)]; }

TargetModule parse_module(const std::string& name) {
    for (int i = 0; i < kNumTargetModules; ++i)
        if (name == kModuleNames[i]) return static_cast<TargetModule>(i);
    throw ConfigError("unknown target module '" + name +
                      "' (expected one of q,k,v,o,up,down)");
}

std::vector<TargetModule> parse_module_list(const std::string& csv) {
    std::vector<TargetModule> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(parse_module(cur));
            cur.clear();
        }
    };
    for (char c : csv) {
        if (c == ',' || c == ' ') {
            flush();
        } else {
            cur += c;
        }
    }
    flush();
    if (out.empty()) throw ConfigError("target_modules must be nonempty");
    return out;
}

std::string module_list_str(const std::vector<TargetModule>& mods) {
    std::string s;
    for (std::size_t i = 0; i < mods.size(); ++i) {
        if (i) s += ",";
        s += module_name(mods[i]);
    }
    return s;
}

void ModelConfig::validate() const {
    if (n_layers <= 0 || d_model <= 0 || n_heads <= 0 || d_ff <= 0 ||
        vocab_size <= 0 || max_seq_len <= 0)
        throw ConfigError("model dims must be positive");
    if (d_model % n_heads != 0)
        throw ConfigError("d_model " + std::to_string(d_model) +
                          " not divisible by n_heads " + std::to_string(n_heads));
    if (target_modules.empty())
        throw ConfigError("target_modules must be nonempty");
}

long ModelConfig::d_in(TargetModule m) const {
    return m == TargetModule::down ? d_ff : d_model;
}

long ModelConfig::d_out(TargetModule m) const {
    return m == TargetModule::up ? d_ff : d_model;
}

bool ModelConfig::targets(TargetModule m) const {
    for (auto t : target_modules)
        if (t == m) return true;
    return false;
}

std::vector<std::pair<std::string, Tensor>> Backbone::named_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("tok_emb", tok_emb);
    out.emplace_back("pos_emb", pos_emb);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& L = layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        out.emplace_back(p + "ln1_g", L.ln1_g);
        out.emplace_back(p + "ln1_b", L.ln1_b);
        out.emplace_back(p + "wq", L.wq);
        out.emplace_back(p + "wk", L.wk);
        out.emplace_back(p + "wv", L.wv);
        out.emplace_back(p + "wo", L.wo);
        out.emplace_back(p + "ln2_g", L.ln2_g);
        out.emplace_back(p + "ln2_b", L.ln2_b);
        out.emplace_back(p + "w_up", L.w_up);
        out.emplace_back(p + "w_down", L.w_down);
    }
    out.emplace_back("lnf_g", lnf_g);
    out.emplace_back("lnf_b", lnf_b);
    out.emplace_back("w_out", w_out);
    return out;
}

void Backbone::set_trainable(bool trainable) {
    for (auto& [name, t] : named_tensors()) t->requires_grad = trainable;
}

std::uint64_t Backbone::weights_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, t] : named_tensors()) {
        h = fnv1a64(name.data(), name.size(), h);
        h = fnv1a64(t->data.data(), t->data.size() * sizeof(real), h);
    }
    return h;
}

const Tensor& Backbone::module_weight(long layer, TargetModule m) const {
    const auto& L = layers[layer];
    switch (m) {
        case TargetModule::q: return L.wq;
        case TargetModule::k: return L.wk;
        case TargetModule::v: return L.wv;
        case TargetModule::o: return L.wo;
        case TargetModule::up: return L.w_up;
        default: return L.w_down;
    }
}

Backbone build_backbone(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    Backbone bb;
    bb.cfg = cfg;
    const real lin_std = 1.0 / std::sqrt(static_cast<real>(cfg.d_model));
    const real ff_std = 1.0 / std::sqrt(static_cast<real>(cfg.d_ff));

    bb.tok_emb = gaussian_tensor({cfg.vocab_size, cfg.d_model}, rng, 0.02);
    bb.pos_emb = gaussian_tensor({cfg.max_seq_len, cfg.d_model}, rng, 0.02);
    bb.layers.resize(cfg.n_layers);
    for (auto& L : bb.layers) {
        L.ln1_g = make_tensor({cfg.d_model});
        L.ln1_g->data.assign(cfg.d_model, 1.0);
        L.ln1_b = make_tensor({cfg.d_model});
        L.wq = gaussian_tensor({cfg.d_model, cfg.d_model}, rng, lin_std);
        L.wk = gaussian_tensor({cfg.d_model, cfg.d_model}, rng, lin_std);
        L.wv = gaussian_tensor({cfg.d_model, cfg.d_model}, rng, lin_std);
        L.wo = gaussian_tensor({cfg.d_model, cfg.d_model}, rng, lin_std);
        L.ln2_g = make_tensor({cfg.d_model});
        L.ln2_g->data.assign(cfg.d_model, 1.0);
        L.ln2_b = make_tensor({cfg.d_model});
        L.w_up = gaussian_tensor({cfg.d_ff, cfg.d_model}, rng, lin_std);
        L.w_down = gaussian_tensor({cfg.d_model, cfg.d_ff}, rng, ff_std);
    }
    bb.lnf_g = make_tensor({cfg.d_model});
    bb.lnf_g->data.assign(cfg.d_model, 1.0);
    bb.lnf_b = make_tensor({cfg.d_model});
    bb.w_out = gaussian_tensor({cfg.vocab_size, cfg.d_model}, rng, lin_std);
    bb.set_trainable(false);
    return bb;
}

namespace {

// Wx plus the gated adapter delta for one target linear.
Tensor adapted_linear(const Backbone& bb, long layer, TargetModule m,
                      const Tensor& x, const AdapterState* ad) {
    Tensor y = linear(x, bb.module_weight(layer, m));
    if (!ad || !ad->point(layer, m)) return y;
    Tensor delta = adapter_delta(*ad, layer, m, x);
    if (!delta) return y;
    const real g = ad->gamma[layer];
    if (!ad->suppress_full_layer && g != 1.0) delta = scale(delta, g);
    return add(y, delta);
}

Tensor transformer_hidden(const Backbone& bb, const std::vector<long>& tokens,
                          long batch, long seq, bool causal,
                          const AdapterState* ad) {
    const auto& cfg = bb.cfg;
    if (seq > cfg.max_seq_len)
        throw InputError("sequence length " + std::to_string(seq) +
                         " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
    for (long t : tokens)
        if (t < 0 || t >= cfg.vocab_size)
            throw InputError("token id " + std::to_string(t) +
                             " out of range [0," + std::to_string(cfg.vocab_size) +
                             ")");

    Tensor h = embedding(bb.tok_emb, tokens, {batch, seq});
    std::vector<long> pos_ids(seq);
    for (long i = 0; i < seq; ++i) pos_ids[i] = i;
    h = add(h, embedding(bb.pos_emb, pos_ids, {seq}));

    Tensor mask;
    if (causal) {
        mask = make_tensor({seq, seq});
        for (long i = 0; i < seq; ++i)
            for (long j = i + 1; j < seq; ++j) mask->data[i * seq + j] = kMaskNegInf;
    }

    const real att_scale = 1.0 / std::sqrt(static_cast<real>(cfg.d_model / cfg.n_heads));
    for (long l = 0; l < cfg.n_layers; ++l) {
        const auto& L = bb.layers[l];
        Tensor n1 = layernorm(h, L.ln1_g, L.ln1_b);
        Tensor q = split_heads(adapted_linear(bb, l, TargetModule::q, n1, ad), cfg.n_heads);
        Tensor k = split_heads(adapted_linear(bb, l, TargetModule::k, n1, ad), cfg.n_heads);
        Tensor v = split_heads(adapted_linear(bb, l, TargetModule::v, n1, ad), cfg.n_heads);
        Tensor scores = scale(bmm(q, k, /*trans_b=*/true), att_scale);
        if (mask) scores = add(scores, mask);
        Tensor att = merge_heads(bmm(softmax(scores), v));
        Tensor attn_out = adapted_linear(bb, l, TargetModule::o, att, ad);
        h = add(h, attn_out);

        Tensor n2 = layernorm(h, L.ln2_g, L.ln2_b);
        Tensor up = gelu(adapted_linear(bb, l, TargetModule::up, n2, ad));
        Tensor mlp_out = adapted_linear(bb, l, TargetModule::down, up, ad);
        h = add(h, mlp_out);

        if (ad && ad->suppress_full_layer && ad->gamma[l] != 1.0)
            h = scale(h, ad->gamma[l]);
    }
    return layernorm(h, bb.lnf_g, bb.lnf_b);
}

}  // namespace

Tensor forward(const Backbone& bb, const std::vector<long>& tokens, long batch,
               long seq, const AdapterState* adapters) {
    Tensor h = transformer_hidden(bb, tokens, batch, seq, /*causal=*/true, adapters);
    return linear(h, bb.w_out);
}

Tensor forward_classifier(const Backbone& bb, const std::vector<long>& tokens,
                          long batch, long seq, long n_classes,
                          const AdapterState* adapters) {
    if (n_classes <= 0 || n_classes > bb.cfg.vocab_size)
        throw InputError("n_classes " + std::to_string(n_classes) +
                         " out of range for vocab " +
                         std::to_string(bb.cfg.vocab_size));
    Tensor h = transformer_hidden(bb, tokens, batch, seq, /*causal=*/false, adapters);
    Tensor pooled = mean_axis1(h);
    Tensor logits = linear(pooled, bb.w_out);
    return slice_lastdim(logits, 0, n_classes);
}

}  // namespace reora
