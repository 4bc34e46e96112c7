// SPDX-License-Identifier: Apache-2.0
#include "reora/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace reora {

static_assert(std::endian::native == std::endian::little,
              "tensor container assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'R', 'E', 'O', 'R', 'A', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 0;
constexpr std::uint8_t kDtypeF32 = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw InputError("tensor container truncated");
    return v;
}

using nlohmann::json;

json model_config_json(const ModelConfig& cfg) {
    return json{{"n_layers", cfg.n_layers},
                {"d_model", cfg.d_model},
                {"n_heads", cfg.n_heads},
                {"d_ff", cfg.d_ff},
                {"vocab_size", cfg.vocab_size},
                {"max_seq_len", cfg.max_seq_len},
                {"target_modules", module_list_str(cfg.target_modules)},
                {"seed", cfg.seed},
                {"pretrain_steps", cfg.pretrain_steps},
                {"pretrain_lr", cfg.pretrain_lr},
                {"pretrain_batch", cfg.pretrain_batch}};
}

ModelConfig model_config_parse(const json& j) {
    ModelConfig cfg;
    cfg.n_layers = j.at("n_layers").get<long>();
    cfg.d_model = j.at("d_model").get<long>();
    cfg.n_heads = j.at("n_heads").get<long>();
    cfg.d_ff = j.at("d_ff").get<long>();
    cfg.vocab_size = j.at("vocab_size").get<long>();
    cfg.max_seq_len = j.at("max_seq_len").get<long>();
    cfg.target_modules = parse_module_list(j.at("target_modules").get<std::string>());
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.pretrain_steps = j.at("pretrain_steps").get<long>();
    cfg.pretrain_lr = j.at("pretrain_lr").get<real>();
    cfg.pretrain_batch = j.at("pretrain_batch").get<long>();
    return cfg;
}

json adapter_config_json(const AdapterConfig& cfg) {
    return json{{"rank", cfg.rank},
                {"n_experts", cfg.n_experts},
                {"alpha", cfg.alpha},
                {"target_modules", module_list_str(cfg.target_modules)},
                {"share_a", cfg.share_a},
                {"a_init_std", cfg.a_init_std}};
}

AdapterConfig adapter_config_parse(const json& j) {
    AdapterConfig cfg;
    cfg.rank = j.at("rank").get<long>();
    cfg.n_experts = j.at("n_experts").get<long>();
    cfg.alpha = j.at("alpha").get<real>();
    cfg.target_modules = parse_module_list(j.at("target_modules").get<std::string>());
    cfg.share_a = j.at("share_a").get<bool>();
    cfg.a_init_std = j.at("a_init_std").get<real>();
    return cfg;
}

}  // namespace

void save_tensor_file(const std::string& path, const std::string& config_json,
                      const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot open for writing: " + path);
    os.write(kMagic, sizeof(kMagic));
    write_pod(os, kVersion);
    write_pod(os, static_cast<std::uint64_t>(config_json.size()));
    os.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
    write_pod(os, static_cast<std::uint64_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        write_pod(os, static_cast<std::uint64_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(os, kDtypeF64);
        write_pod(os, static_cast<std::uint32_t>(t->shape.size()));
        for (long e : t->shape) write_pod(os, static_cast<std::int64_t>(e));
        os.write(reinterpret_cast<const char*>(t->data.data()),
                 static_cast<std::streamsize>(t->data.size() * sizeof(real)));
    }
    if (!os) throw InputError("write failed: " + path);
}

TensorFile load_tensor_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw InputError("not a tensor container: " + path);
    const auto version = read_pod<std::uint32_t>(is);
    if (version != kVersion)
        throw InputError("unsupported container version " + std::to_string(version));
    TensorFile tf;
    const auto cfg_len = read_pod<std::uint64_t>(is);
    tf.config_json.resize(cfg_len);
    is.read(tf.config_json.data(), static_cast<std::streamsize>(cfg_len));
    const auto n_tensors = read_pod<std::uint64_t>(is);
    for (std::uint64_t i = 0; i < n_tensors; ++i) {
        const auto name_len = read_pod<std::uint64_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(name_len));
        const auto dtype = read_pod<std::uint8_t>(is);
        const auto rank = read_pod<std::uint32_t>(is);
        std::vector<long> shape(rank);
        for (auto& e : shape) e = static_cast<long>(read_pod<std::int64_t>(is));
        auto t = make_tensor(shape);
        if (dtype == kDtypeF64) {
            is.read(reinterpret_cast<char*>(t->data.data()),
                    static_cast<std::streamsize>(t->data.size() * sizeof(double)));
        } else if (dtype == kDtypeF32) {
            std::vector<float> tmp(t->data.size());
            is.read(reinterpret_cast<char*>(tmp.data()),
                    static_cast<std::streamsize>(tmp.size() * sizeof(float)));
            for (std::size_t k = 0; k < tmp.size(); ++k) t->data[k] = tmp[k];
        } else {
            throw InputError("unknown dtype tag " + std::to_string(dtype));
        }
        if (!is) throw InputError("tensor container truncated: " + path);
        tf.tensors.emplace_back(std::move(name), std::move(t));
    }
    return tf;
}

std::string model_config_to_json(const ModelConfig& cfg) {
    return model_config_json(cfg).dump();
}

ModelConfig model_config_from_json(const std::string& js) {
    return model_config_parse(nlohmann::json::parse(js));
}

void save_backbone(const std::string& path, const Backbone& bb) {
    nlohmann::json cfg;
    cfg["kind"] = "backbone";
    cfg["model"] = model_config_json(bb.cfg);
    save_tensor_file(path, cfg.dump(), bb.named_tensors());
}

Backbone load_backbone(const std::string& path) {
    TensorFile tf = load_tensor_file(path);
    auto j = nlohmann::json::parse(tf.config_json);
    if (j.value("kind", "") != "backbone")
        throw InputError("not a backbone checkpoint: " + path);
    ModelConfig cfg = model_config_parse(j.at("model"));
    Rng scratch(0);
    Backbone bb = build_backbone(cfg, scratch);
    auto want = bb.named_tensors();
    if (want.size() != tf.tensors.size())
        throw InputError("backbone checkpoint tensor count mismatch");
    for (std::size_t i = 0; i < want.size(); ++i) {
        auto& [wname, wt] = want[i];
        auto& [fname, ft] = tf.tensors[i];
        if (wname != fname || wt->shape != ft->shape)
            throw InputError("backbone checkpoint layout mismatch at " + fname);
        wt->data = ft->data;
    }
    bb.set_trainable(false);
    return bb;
}

void save_adapters(const std::string& path, const AdapterState& st) {
    nlohmann::json cfg;
    cfg["kind"] = "adapters";
    cfg["model"] = model_config_json(st.mcfg);
    cfg["adapter"] = adapter_config_json(st.cfg);
    cfg["alive"] = st.alive;
    cfg["layer_b_trainable"] = st.layer_b_trainable;
    cfg["freeze_router_with_b"] = st.freeze_router_with_b;
    save_tensor_file(path, cfg.dump(), st.named_tensors());
}

AdapterState load_adapters(const std::string& path) {
    TensorFile tf = load_tensor_file(path);
    auto j = nlohmann::json::parse(tf.config_json);
    if (j.value("kind", "") != "adapters")
        throw InputError("not an adapter checkpoint: " + path);
    ModelConfig mcfg = model_config_parse(j.at("model"));
    AdapterConfig acfg = adapter_config_parse(j.at("adapter"));
    Rng scratch(0);
    AdapterState st = init_adapters(mcfg, acfg, scratch);
    st.alive = j.at("alive").get<std::vector<std::vector<char>>>();
    st.layer_b_trainable = j.at("layer_b_trainable").get<std::vector<char>>();
    st.freeze_router_with_b = j.value("freeze_router_with_b", false);
    auto want = st.named_tensors();
    if (want.size() != tf.tensors.size())
        throw InputError("adapter checkpoint tensor count mismatch");
    for (std::size_t i = 0; i < want.size(); ++i) {
        auto& [wname, wt] = want[i];
        auto& [fname, ft] = tf.tensors[i];
        if (wname != fname || wt->shape != ft->shape)
            throw InputError("adapter checkpoint layout mismatch at " + fname);
        wt->data = ft->data;
    }
    st.sync_trainability();
    return st;
}

}  // namespace reora
