// SPDX-License-Identifier: Apache-2.0
#include "reora/adapter.hpp"

#include <algorithm>
#include <set>

namespace reora {

void AdapterConfig::validate(const ModelConfig& mcfg) const {
    if (rank <= 0) throw ConfigError("adapter rank must be positive");
    if (n_experts < 1) throw ConfigError("n_experts must be >= 1");
    if (alpha <= 0) throw ConfigError("alpha must be positive");
    if (a_init_std <= 0) throw ConfigError("a_init_std must be positive");
    if (target_modules.empty())
        throw ConfigError("adapter target_modules must be nonempty");
    for (auto m : target_modules) {
        const long lim = std::min(mcfg.d_in(m), mcfg.d_out(m));
        if (rank >= lim)
            throw ConfigError("rank " + std::to_string(rank) +
                              " must be < min(d_in,d_out)=" + std::to_string(lim) +
                              " for module " + module_name(m));
    }
}

const AttachPoint* AdapterState::point(long layer, TargetModule m) const {
    return points[layer][static_cast<int>(m)].get();
}

long AdapterState::n_alive(long layer) const {
    long n = 0;
    for (char a : alive[layer]) n += (a != 0);
    return n;
}

void AdapterState::sync_trainability() {
    for (long l = 0; l < mcfg.n_layers; ++l) {
        for (int mi = 0; mi < kNumTargetModules; ++mi) {
            AttachPoint* pt = points[l][mi].get();
            if (!pt) continue;
            for (long i = 0; i < cfg.n_experts; ++i)
                pt->B[i]->requires_grad =
                    layer_b_trainable[l] != 0 && alive[l][i] != 0;
            if (pt->router)
                pt->router->requires_grad =
                    !freeze_router_with_b || layer_b_trainable[l] != 0;
            if (!cfg.share_a) pt->A->requires_grad = true;
        }
    }
    for (auto& [dim, a] : shared_a_groups) a->requires_grad = true;
}

std::vector<std::pair<std::string, Tensor>> AdapterState::named_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& [dim, a] : shared_a_groups)
        out.emplace_back("A.d" + std::to_string(dim), a);
    for (long l = 0; l < mcfg.n_layers; ++l) {
        for (int mi = 0; mi < kNumTargetModules; ++mi) {
            const AttachPoint* pt = points[l][mi].get();
            if (!pt) continue;
            const std::string p = "layer" + std::to_string(l) + "." +
                                  module_name(static_cast<TargetModule>(mi)) + ".";
            if (!cfg.share_a) out.emplace_back(p + "A", pt->A);
            if (pt->router) out.emplace_back(p + "router", pt->router);
            for (long i = 0; i < cfg.n_experts; ++i)
                out.emplace_back(p + "B" + std::to_string(i), pt->B[i]);
        }
    }
    return out;
}

std::vector<Tensor> AdapterState::unique_params() const {
    std::vector<Tensor> out;
    std::set<TensorImpl*> seen;
    for (const auto& [name, t] : named_tensors())
        if (seen.insert(t.get()).second) out.push_back(t);
    return out;
}

AdapterState init_adapters(const ModelConfig& mcfg, const AdapterConfig& acfg,
                           Rng& rng) {
    mcfg.validate();
    acfg.validate(mcfg);
    AdapterState st;
    st.cfg = acfg;
    st.mcfg = mcfg;
    st.points.resize(mcfg.n_layers);
    st.layer_b_trainable.assign(mcfg.n_layers, 1);
    st.alive.assign(mcfg.n_layers, std::vector<char>(acfg.n_experts, 1));
    st.gamma.assign(mcfg.n_layers, 1.0);

    if (acfg.share_a) {
        // One A per distinct input dimensionality among targeted modules.
        std::set<long> dims;
        for (auto m : acfg.target_modules) dims.insert(mcfg.d_in(m));
        for (long d : dims)
            st.shared_a_groups.emplace_back(
                d, gaussian_tensor({acfg.rank, d}, rng, acfg.a_init_std, true));
    }

    auto group_a = [&](long d_in) -> Tensor {
        for (auto& [dim, a] : st.shared_a_groups)
            if (dim == d_in) return a;
        throw ShapeError("no shared A group for d_in " + std::to_string(d_in));
    };

    for (long l = 0; l < mcfg.n_layers; ++l) {
        for (auto m : acfg.target_modules) {
            auto pt = std::make_unique<AttachPoint>();
            const long din = mcfg.d_in(m);
            const long dout = mcfg.d_out(m);
            pt->A = acfg.share_a
                        ? group_a(din)
                        : gaussian_tensor({acfg.rank, din}, rng, acfg.a_init_std,
                                          true);
            if (acfg.n_experts > 1)
                pt->router = make_tensor({acfg.rank, acfg.n_experts}, true);
            for (long i = 0; i < acfg.n_experts; ++i)
                pt->B.push_back(make_tensor({dout, acfg.rank}, true));
            st.points[l][static_cast<int>(m)] = std::move(pt);
        }
    }
    st.sync_trainability();
    return st;
}

Tensor route(const Tensor& router_w, const Tensor& u,
             const std::vector<char>& alive_mask) {
    if (u->shape.back() != router_w->shape[0])
        throw ShapeError("route: input dim " + shape_str(u->shape) +
                         " does not match router " + shape_str(router_w->shape));
    const long m = router_w->shape[1];
    Tensor z = matmul(u, router_w);
    bool any_dead = false;
    for (long i = 0; i < m; ++i)
        if (!alive_mask[i]) any_dead = true;
    if (any_dead) {
        auto mask = make_tensor({m});
        for (long i = 0; i < m; ++i)
            mask->data[i] = alive_mask[i] ? 0.0 : kMaskNegInf;
        z = add(z, mask);
    }
    return softmax(z);
}

Tensor adapter_delta(const AdapterState& st, long layer, TargetModule mod,
                     const Tensor& x) {
    const AttachPoint* pt = st.point(layer, mod);
    if (!pt) throw UsageError("adapter_delta: module not targeted");
    const long m = st.cfg.n_experts;
    const real scaling = st.cfg.alpha / static_cast<real>(st.cfg.rank);

    std::vector<long> live;
    for (long i = 0; i < m; ++i)
        if (st.alive[layer][i]) live.push_back(i);
    if (live.empty()) return nullptr;  // fully dead layer contributes nothing

    // Normative order: project down, route on the projection, mix experts.
    Tensor u = linear(x, pt->A);
    if (m == 1) return scale(linear(u, pt->B[0]), scaling);

    Tensor w = route(pt->router, u, st.alive[layer]);
    Tensor acc;
    for (long i : live) {
        Tensor yi = linear(u, pt->B[i]);
        Tensor wi = slice_lastdim(w, i, 1);
        Tensor term = mul(yi, wi);
        acc = acc ? add(acc, term) : term;
    }
    return scale(acc, scaling);
}

long count_trainable(const AdapterState& st) {
    long total = 0;
    std::set<TensorImpl*> seen;
    for (const auto& [dim, a] : st.shared_a_groups)
        if (seen.insert(a.get()).second) total += a->numel();
    for (long l = 0; l < st.mcfg.n_layers; ++l) {
        for (int mi = 0; mi < kNumTargetModules; ++mi) {
            const AttachPoint* pt = st.points[l][mi].get();
            if (!pt) continue;
            if (!st.cfg.share_a && seen.insert(pt->A.get()).second)
                total += pt->A->numel();
            if (pt->router && pt->router->requires_grad) total += pt->router->numel();
            for (long i = 0; i < st.cfg.n_experts; ++i)
                if (pt->B[i]->requires_grad) total += pt->B[i]->numel();
        }
    }
    return total;
}

void set_layer_alive(AdapterState& st, long layer, bool alive_flag) {
    for (long i = 0; i < st.cfg.n_experts; ++i)
        st.alive[layer][i] = alive_flag ? 1 : 0;
    st.sync_trainability();
}

void set_expert_alive(AdapterState& st, long layer, long expert, bool alive_flag) {
    st.alive[layer][expert] = alive_flag ? 1 : 0;
    st.sync_trainability();
}

}  // namespace reora
