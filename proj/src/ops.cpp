// SPDX-License-Identifier: Apache-2.0
#include "reora/ops.hpp"

#include <algorithm>
#include <cmath>

namespace reora {

namespace {

bool track(const std::initializer_list<Tensor>& inputs) {
    if (!grad_enabled()) return false;
    for (const auto& t : inputs)
        if (t->requires_grad) return true;
    return false;
}

void attach(const Tensor& out, std::initializer_list<Tensor> parents,
            std::function<void()> fn) {
    out->requires_grad = true;
    out->parents.assign(parents);
    out->backward_fn = std::move(fn);
}

long leading(const std::vector<long>& shape, std::size_t keep_last) {
    long n = 1;
    for (std::size_t i = 0; i + keep_last < shape.size(); ++i) n *= shape[i];
    return n;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a->shape.size() < 2 || b->shape.size() != 2)
        throw ShapeError("matmul expects a of rank>=2 and b of rank 2, got " +
                         shape_str(a->shape) + " x " + shape_str(b->shape));
    const long q = a->shape.back();
    const long s = b->shape[1];
    if (b->shape[0] != q)
        throw ShapeError("matmul inner extents differ: " + shape_str(a->shape) +
                         " x " + shape_str(b->shape));
    const long m = leading(a->shape, 1);
    std::vector<long> out_shape(a->shape.begin(), a->shape.end() - 1);
    out_shape.push_back(s);
    auto y = make_tensor(std::move(out_shape));

    const real* ad = a->data.data();
    const real* bd = b->data.data();
    real* yd = y->data.data();
    for (long i = 0; i < m; ++i) {
        const real* arow = ad + i * q;
        real* yrow = yd + i * s;
        for (long k = 0; k < q; ++k) {
            const real av = arow[k];
            if (av == 0.0) continue;
            const real* brow = bd + k * s;
            for (long j = 0; j < s; ++j) yrow[j] += av * brow[j];
        }
    }

    if (track({a, b})) {
        TensorImpl* yp = y.get();
        attach(y, {a, b}, [a, b, yp, m, q, s]() {
            const real* g = yp->grad.data();
            if (a->requires_grad) {
                a->ensure_grad();
                real* ga = a->grad.data();
                const real* bd2 = b->data.data();
                for (long i = 0; i < m; ++i) {
                    const real* grow = g + i * s;
                    real* garow = ga + i * q;
                    for (long k = 0; k < q; ++k) {
                        const real* brow = bd2 + k * s;
                        real acc = 0.0;
                        for (long j = 0; j < s; ++j) acc += grow[j] * brow[j];
                        garow[k] += acc;
                    }
                }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                real* gb = b->grad.data();
                const real* ad2 = a->data.data();
                for (long i = 0; i < m; ++i) {
                    const real* grow = g + i * s;
                    const real* arow = ad2 + i * q;
                    for (long k = 0; k < q; ++k) {
                        const real av = arow[k];
                        if (av == 0.0) continue;
                        real* gbrow = gb + k * s;
                        for (long j = 0; j < s; ++j) gbrow[j] += av * grow[j];
                    }
                }
            }
        });
    }
    return y;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool trans_b) {
    if (a->shape.size() < 3 || a->shape.size() != b->shape.size())
        throw ShapeError("bmm expects equal ranks >= 3, got " +
                         shape_str(a->shape) + " x " + shape_str(b->shape));
    for (std::size_t i = 0; i + 2 < a->shape.size(); ++i)
        if (a->shape[i] != b->shape[i])
            throw ShapeError("bmm leading dims differ: " + shape_str(a->shape) +
                             " x " + shape_str(b->shape));
    const long p = a->shape[a->shape.size() - 2];
    const long q = a->shape.back();
    const long bq = trans_b ? b->shape.back() : b->shape[b->shape.size() - 2];
    const long s = trans_b ? b->shape[b->shape.size() - 2] : b->shape.back();
    if (bq != q)
        throw ShapeError("bmm inner extents differ: " + shape_str(a->shape) +
                         " x " + shape_str(b->shape));
    const long n = leading(a->shape, 2);
    std::vector<long> out_shape(a->shape.begin(), a->shape.end() - 2);
    out_shape.push_back(p);
    out_shape.push_back(s);
    auto y = make_tensor(std::move(out_shape));

    const real* ad = a->data.data();
    const real* bd = b->data.data();
    real* yd = y->data.data();
    for (long bi = 0; bi < n; ++bi) {
        const real* A = ad + bi * p * q;
        const real* B = bd + bi * q * s;
        real* Y = yd + bi * p * s;
        if (!trans_b) {
            for (long i = 0; i < p; ++i)
                for (long k = 0; k < q; ++k) {
                    const real av = A[i * q + k];
                    const real* Brow = B + k * s;
                    real* Yrow = Y + i * s;
                    for (long j = 0; j < s; ++j) Yrow[j] += av * Brow[j];
                }
        } else {
            for (long i = 0; i < p; ++i)
                for (long j = 0; j < s; ++j) {
                    const real* Arow = A + i * q;
                    const real* Brow = B + j * q;
                    real acc = 0.0;
                    for (long k = 0; k < q; ++k) acc += Arow[k] * Brow[k];
                    Y[i * s + j] = acc;
                }
        }
    }

    if (track({a, b})) {
        TensorImpl* yp = y.get();
        attach(y, {a, b}, [a, b, yp, n, p, q, s, trans_b]() {
            const real* g = yp->grad.data();
            const real* ad2 = a->data.data();
            const real* bd2 = b->data.data();
            for (long bi = 0; bi < n; ++bi) {
                const real* G = g + bi * p * s;
                const real* A = ad2 + bi * p * q;
                const real* B = bd2 + bi * q * s;
                if (a->requires_grad) {
                    a->ensure_grad();
                    real* GA = a->grad.data() + bi * p * q;
                    if (!trans_b) {
                        // dA = G . B^T
                        for (long i = 0; i < p; ++i)
                            for (long k = 0; k < q; ++k) {
                                const real* Grow = G + i * s;
                                const real* Brow = B + k * s;
                                real acc = 0.0;
                                for (long j = 0; j < s; ++j) acc += Grow[j] * Brow[j];
                                GA[i * q + k] += acc;
                            }
                    } else {
                        // dA = G . B
                        for (long i = 0; i < p; ++i)
                            for (long j = 0; j < s; ++j) {
                                const real gv = G[i * s + j];
                                if (gv == 0.0) continue;
                                const real* Brow = B + j * q;
                                real* GArow = GA + i * q;
                                for (long k = 0; k < q; ++k) GArow[k] += gv * Brow[k];
                            }
                    }
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    real* GB = b->grad.data() + bi * q * s;
                    if (!trans_b) {
                        // dB = A^T . G
                        for (long i = 0; i < p; ++i)
                            for (long k = 0; k < q; ++k) {
                                const real av = A[i * q + k];
                                if (av == 0.0) continue;
                                const real* Grow = G + i * s;
                                real* GBrow = GB + k * s;
                                for (long j = 0; j < s; ++j) GBrow[j] += av * Grow[j];
                            }
                    } else {
                        // dB = G^T . A  (B stored [s, q])
                        for (long j = 0; j < s; ++j)
                            for (long i = 0; i < p; ++i) {
                                const real gv = G[i * s + j];
                                if (gv == 0.0) continue;
                                const real* Arow = A + i * q;
                                real* GBrow = GB + j * q;
                                for (long k = 0; k < q; ++k) GBrow[k] += gv * Arow[k];
                            }
                    }
                }
            }
        });
    }
    return y;
}

Tensor linear(const Tensor& x, const Tensor& w) {
    if (x->shape.empty() || w->shape.size() != 2)
        throw ShapeError("linear expects weight of rank 2, got " +
                         shape_str(x->shape) + " x " + shape_str(w->shape));
    const long in = x->shape.back();
    if (w->shape[1] != in)
        throw ShapeError("linear input dim mismatch: " + shape_str(x->shape) +
                         " x " + shape_str(w->shape));
    const long out = w->shape[0];
    const long m = leading(x->shape, 1);
    std::vector<long> out_shape(x->shape.begin(), x->shape.end() - 1);
    out_shape.push_back(out);
    auto y = make_tensor(std::move(out_shape));

    const real* xd = x->data.data();
    const real* wd = w->data.data();
    real* yd = y->data.data();
    for (long i = 0; i < m; ++i) {
        const real* xrow = xd + i * in;
        real* yrow = yd + i * out;
        for (long o = 0; o < out; ++o) {
            const real* wrow = wd + o * in;
            real acc = 0.0;
            for (long k = 0; k < in; ++k) acc += xrow[k] * wrow[k];
            yrow[o] = acc;
        }
    }

    if (track({x, w})) {
        TensorImpl* yp = y.get();
        attach(y, {x, w}, [x, w, yp, m, in, out]() {
            const real* g = yp->grad.data();
            if (x->requires_grad) {
                x->ensure_grad();
                real* gx = x->grad.data();
                const real* wd2 = w->data.data();
                for (long i = 0; i < m; ++i) {
                    const real* grow = g + i * out;
                    real* gxrow = gx + i * in;
                    for (long o = 0; o < out; ++o) {
                        const real gv = grow[o];
                        if (gv == 0.0) continue;
                        const real* wrow = wd2 + o * in;
                        for (long k = 0; k < in; ++k) gxrow[k] += gv * wrow[k];
                    }
                }
            }
            if (w->requires_grad) {
                w->ensure_grad();
                real* gw = w->grad.data();
                const real* xd2 = x->data.data();
                for (long i = 0; i < m; ++i) {
                    const real* grow = yp->grad.data() + i * out;
                    const real* xrow = xd2 + i * in;
                    for (long o = 0; o < out; ++o) {
                        const real gv = grow[o];
                        if (gv == 0.0) continue;
                        real* gwrow = gw + o * in;
                        for (long k = 0; k < in; ++k) gwrow[k] += gv * xrow[k];
                    }
                }
            }
        });
    }
    return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
    const bool same = a->shape == b->shape;
    if (!same) {
        if (b->shape.size() >= a->shape.size() ||
            !std::equal(b->shape.begin(), b->shape.end(),
                        a->shape.end() - b->shape.size()))
            throw ShapeError("add: shape " + shape_str(b->shape) +
                             " is not a suffix of " + shape_str(a->shape));
    }
    const long bn = b->numel();
    const long reps = a->numel() / bn;
    auto y = make_tensor(a->shape);
    const real* ad = a->data.data();
    const real* bd = b->data.data();
    real* yd = y->data.data();
    for (long r = 0; r < reps; ++r)
        for (long i = 0; i < bn; ++i) yd[r * bn + i] = ad[r * bn + i] + bd[i];

    if (track({a, b})) {
        TensorImpl* yp = y.get();
        attach(y, {a, b}, [a, b, yp, reps, bn]() {
            const real* g = yp->grad.data();
            if (a->requires_grad) {
                a->ensure_grad();
                real* ga = a->grad.data();
                const long n = yp->numel();
                for (long i = 0; i < n; ++i) ga[i] += g[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                real* gb = b->grad.data();
                for (long r = 0; r < reps; ++r)
                    for (long i = 0; i < bn; ++i) gb[i] += g[r * bn + i];
            }
        });
    }
    return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const bool same = a->shape == b->shape;
    bool last_bcast = false;
    if (!same) {
        last_bcast = b->shape.size() == a->shape.size() &&
                     b->shape.back() == 1 &&
                     std::equal(a->shape.begin(), a->shape.end() - 1,
                                b->shape.begin());
        if (!last_bcast)
            throw ShapeError("mul: incompatible shapes " + shape_str(a->shape) +
                             " and " + shape_str(b->shape));
    }
    const long d = a->shape.back();
    const long rows = a->numel() / d;
    auto y = make_tensor(a->shape);
    const real* ad = a->data.data();
    const real* bd = b->data.data();
    real* yd = y->data.data();
    if (same) {
        const long n = a->numel();
        for (long i = 0; i < n; ++i) yd[i] = ad[i] * bd[i];
    } else {
        for (long r = 0; r < rows; ++r) {
            const real bv = bd[r];
            for (long j = 0; j < d; ++j) yd[r * d + j] = ad[r * d + j] * bv;
        }
    }

    if (track({a, b})) {
        TensorImpl* yp = y.get();
        attach(y, {a, b}, [a, b, yp, same, rows, d]() {
            const real* g = yp->grad.data();
            const real* ad2 = a->data.data();
            const real* bd2 = b->data.data();
            if (a->requires_grad) {
                a->ensure_grad();
                real* ga = a->grad.data();
                if (same) {
                    const long n = a->numel();
                    for (long i = 0; i < n; ++i) ga[i] += g[i] * bd2[i];
                } else {
                    for (long r = 0; r < rows; ++r) {
                        const real bv = bd2[r];
                        for (long j = 0; j < d; ++j) ga[r * d + j] += g[r * d + j] * bv;
                    }
                }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                real* gb = b->grad.data();
                if (same) {
                    const long n = b->numel();
                    for (long i = 0; i < n; ++i) gb[i] += g[i] * ad2[i];
                } else {
                    for (long r = 0; r < rows; ++r) {
                        real acc = 0.0;
                        for (long j = 0; j < d; ++j) acc += g[r * d + j] * ad2[r * d + j];
                        gb[r] += acc;
                    }
                }
            }
        });
    }
    return y;
}

Tensor scale(const Tensor& a, real c) {
    auto y = make_tensor(a->shape);
    const long n = a->numel();
    for (long i = 0; i < n; ++i) y->data[i] = a->data[i] * c;
    if (track({a})) {
        TensorImpl* yp = y.get();
        attach(y, {a}, [a, yp, c, n]() {
            if (!a->requires_grad) return;
            a->ensure_grad();
            for (long i = 0; i < n; ++i) a->grad[i] += yp->grad[i] * c;
        });
    }
    return y;
}

Tensor softmax(const Tensor& z) {
    if (z->shape.empty()) throw ShapeError("softmax: empty shape");
    for (real v : z->data)
        if (!std::isfinite(v)) throw NumericError("softmax: non-finite input");
    const long d = z->shape.back();
    const long rows = z->numel() / d;
    auto y = make_tensor(z->shape);
    const real* zd = z->data.data();
    real* yd = y->data.data();
    for (long r = 0; r < rows; ++r) {
        const real* zr = zd + r * d;
        real* yr = yd + r * d;
        real mx = zr[0];
        for (long j = 1; j < d; ++j) mx = std::max(mx, zr[j]);
        real sum = 0.0;
        for (long j = 0; j < d; ++j) {
            yr[j] = std::exp(zr[j] - mx);
            sum += yr[j];
        }
        const real inv = 1.0 / sum;
        for (long j = 0; j < d; ++j) yr[j] *= inv;
    }
    if (track({z})) {
        TensorImpl* yp = y.get();
        attach(y, {z}, [z, yp, rows, d]() {
            if (!z->requires_grad) return;
            z->ensure_grad();
            const real* g = yp->grad.data();
            const real* yd2 = yp->data.data();
            real* gz = z->grad.data();
            for (long r = 0; r < rows; ++r) {
                const real* gr = g + r * d;
                const real* yr = yd2 + r * d;
                real dot = 0.0;
                for (long j = 0; j < d; ++j) dot += gr[j] * yr[j];
                real* gzr = gz + r * d;
                for (long j = 0; j < d; ++j) gzr[j] += yr[j] * (gr[j] - dot);
            }
        });
    }
    return y;
}

Tensor sigmoid(const Tensor& x) {
    auto y = make_tensor(x->shape);
    const long n = x->numel();
    for (long i = 0; i < n; ++i) {
        const real v = x->data[i];
        if (v >= 0.0) {
            y->data[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const real e = std::exp(v);
            y->data[i] = e / (1.0 + e);
        }
    }
    if (track({x})) {
        TensorImpl* yp = y.get();
        attach(y, {x}, [x, yp, n]() {
            if (!x->requires_grad) return;
            x->ensure_grad();
            for (long i = 0; i < n; ++i) {
                const real s = yp->data[i];
                x->grad[i] += yp->grad[i] * s * (1.0 - s);
            }
        });
    }
    return y;
}

Tensor gelu(const Tensor& x) {
    static const real kInvSqrt2 = 1.0 / std::sqrt(2.0);
    static const real kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * M_PI);
    auto y = make_tensor(x->shape);
    const long n = x->numel();
    for (long i = 0; i < n; ++i) {
        const real v = x->data[i];
        y->data[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
    if (track({x})) {
        TensorImpl* yp = y.get();
        attach(y, {x}, [x, yp, n]() {
            if (!x->requires_grad) return;
            x->ensure_grad();
            for (long i = 0; i < n; ++i) {
                const real v = x->data[i];
                const real cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                const real pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                x->grad[i] += yp->grad[i] * (cdf + v * pdf);
            }
        });
    }
    return y;
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 real eps) {
    const long d = x->shape.back();
    if (gamma->numel() != d || beta->numel() != d)
        throw ShapeError("layernorm: affine params must have extent " +
                         std::to_string(d));
    const long rows = x->numel() / d;
    auto y = make_tensor(x->shape);
    std::vector<real> inv_sigma(rows), mean(rows);
    const real* xd = x->data.data();
    const real* gd = gamma->data.data();
    const real* bd = beta->data.data();
    real* yd = y->data.data();
    for (long r = 0; r < rows; ++r) {
        const real* xr = xd + r * d;
        real mu = 0.0;
        for (long j = 0; j < d; ++j) mu += xr[j];
        mu /= d;
        real var = 0.0;
        for (long j = 0; j < d; ++j) {
            const real c = xr[j] - mu;
            var += c * c;
        }
        var /= d;
        const real is = 1.0 / std::sqrt(var + eps);
        mean[r] = mu;
        inv_sigma[r] = is;
        real* yr = yd + r * d;
        for (long j = 0; j < d; ++j) yr[j] = (xr[j] - mu) * is * gd[j] + bd[j];
    }
    if (track({x, gamma, beta})) {
        TensorImpl* yp = y.get();
        attach(y, {x, gamma, beta},
               [x, gamma, beta, yp, rows, d, mean, inv_sigma]() {
                   const real* g = yp->grad.data();
                   const real* xd2 = x->data.data();
                   const real* gd2 = gamma->data.data();
                   for (long r = 0; r < rows; ++r) {
                       const real* gr = g + r * d;
                       const real* xr = xd2 + r * d;
                       const real mu = mean[r];
                       const real is = inv_sigma[r];
                       if (gamma->requires_grad) {
                           gamma->ensure_grad();
                           for (long j = 0; j < d; ++j)
                               gamma->grad[j] += gr[j] * (xr[j] - mu) * is;
                       }
                       if (beta->requires_grad) {
                           beta->ensure_grad();
                           for (long j = 0; j < d; ++j) beta->grad[j] += gr[j];
                       }
                       if (x->requires_grad) {
                           x->ensure_grad();
                           real* gx = x->grad.data() + r * d;
                           // dxhat_j = g_j * gamma_j; dx via standard LN backward
                           real sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                           for (long j = 0; j < d; ++j) {
                               const real xhat = (xr[j] - mu) * is;
                               const real dxh = gr[j] * gd2[j];
                               sum_dxhat += dxh;
                               sum_dxhat_xhat += dxh * xhat;
                           }
                           for (long j = 0; j < d; ++j) {
                               const real xhat = (xr[j] - mu) * is;
                               const real dxh = gr[j] * gd2[j];
                               gx[j] += is * (dxh - sum_dxhat / d -
                                              xhat * sum_dxhat_xhat / d);
                           }
                       }
                   }
               });
    }
    return y;
}

Tensor embedding(const Tensor& table, const std::vector<long>& ids,
                 std::vector<long> lead_shape) {
    if (table->shape.size() != 2)
        throw ShapeError("embedding: table must be rank 2, got " +
                         shape_str(table->shape));
    const long v = table->shape[0];
    const long d = table->shape[1];
    if (numel_of(lead_shape) != static_cast<long>(ids.size()))
        throw ShapeError("embedding: ids length does not match lead shape " +
                         shape_str(lead_shape));
    for (long id : ids)
        if (id < 0 || id >= v)
            throw InputError("embedding: id " + std::to_string(id) +
                             " out of range [0," + std::to_string(v) + ")");
    std::vector<long> out_shape = std::move(lead_shape);
    out_shape.push_back(d);
    auto y = make_tensor(std::move(out_shape));
    const real* td = table->data.data();
    real* yd = y->data.data();
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy(td + ids[i] * d, td + (ids[i] + 1) * d, yd + i * d);

    if (track({table})) {
        TensorImpl* yp = y.get();
        attach(y, {table}, [table, yp, ids, d]() {
            if (!table->requires_grad) return;
            table->ensure_grad();
            real* gt = table->grad.data();
            const real* g = yp->grad.data();
            for (std::size_t i = 0; i < ids.size(); ++i) {
                real* row = gt + ids[i] * d;
                const real* grow = g + i * d;
                for (long j = 0; j < d; ++j) row[j] += grow[j];
            }
        });
    }
    return y;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<long>& labels) {
    if (logits->shape.size() != 2)
        throw ShapeError("cross_entropy: logits must be rank 2, got " +
                         shape_str(logits->shape));
    const long n = logits->shape[0];
    const long c = logits->shape[1];
    if (static_cast<long>(labels.size()) != n)
        throw InputError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
    for (long l : labels)
        if (l < 0 || l >= c)
            throw InputError("cross_entropy: label " + std::to_string(l) +
                             " out of range [0," + std::to_string(c) + ")");

    auto probs = std::make_shared<std::vector<real>>(logits->data.size());
    const real* ld = logits->data.data();
    real loss = 0.0;
    for (long i = 0; i < n; ++i) {
        const real* row = ld + i * c;
        real mx = row[0];
        for (long j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        real sum = 0.0;
        for (long j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
        const real lse = mx + std::log(sum);
        loss += lse - row[labels[i]];
        real* prow = probs->data() + i * c;
        for (long j = 0; j < c; ++j) prow[j] = std::exp(row[j] - lse);
    }
    auto y = scalar_tensor(loss / n);
    if (track({logits})) {
        TensorImpl* yp = y.get();
        attach(y, {logits}, [logits, yp, probs, labels, n, c]() {
            if (!logits->requires_grad) return;
            logits->ensure_grad();
            const real g = yp->grad[0] / n;
            real* gl = logits->grad.data();
            const real* p = probs->data();
            for (long i = 0; i < n; ++i) {
                for (long j = 0; j < c; ++j) gl[i * c + j] += g * p[i * c + j];
                gl[i * c + labels[i]] -= g;
            }
        });
    }
    return y;
}

Tensor sum(const Tensor& x) {
    real acc = 0.0;
    for (real v : x->data) acc += v;
    auto y = scalar_tensor(acc);
    if (track({x})) {
        TensorImpl* yp = y.get();
        attach(y, {x}, [x, yp]() {
            if (!x->requires_grad) return;
            x->ensure_grad();
            const real g = yp->grad[0];
            for (auto& gv : x->grad) gv += g;
        });
    }
    return y;
}

Tensor mean_axis1(const Tensor& x) {
    if (x->shape.size() != 3)
        throw ShapeError("mean_axis1 expects rank 3, got " + shape_str(x->shape));
    const long b = x->shape[0], t = x->shape[1], d = x->shape[2];
    auto y = make_tensor({b, d});
    const real* xd = x->data.data();
    real* yd = y->data.data();
    for (long i = 0; i < b; ++i)
        for (long j = 0; j < t; ++j) {
            const real* row = xd + (i * t + j) * d;
            real* yrow = yd + i * d;
            for (long k = 0; k < d; ++k) yrow[k] += row[k];
        }
    const real inv = 1.0 / t;
    for (long i = 0; i < b * d; ++i) yd[i] *= inv;
    if (track({x})) {
        TensorImpl* yp = y.get();
        attach(y, {x}, [x, yp, b, t, d, inv]() {
            if (!x->requires_grad) return;
            x->ensure_grad();
            real* gx = x->grad.data();
            const real* g = yp->grad.data();
            for (long i = 0; i < b; ++i)
                for (long j = 0; j < t; ++j) {
                    real* row = gx + (i * t + j) * d;
                    const real* grow = g + i * d;
                    for (long k = 0; k < d; ++k) row[k] += grow[k] * inv;
                }
        });
    }
    return y;
}

Tensor reshape(const Tensor& x, std::vector<long> shape) {
    if (numel_of(shape) != x->numel())
        throw ShapeError("reshape: " + shape_str(x->shape) + " to " +
                         shape_str(shape) + " changes element count");
    auto y = make_tensor(std::move(shape), x->data);
    y->requires_grad = false;
    if (track({x})) {
        TensorImpl* yp = y.get();
        attach(y, {x}, [x, yp]() {
            if (!x->requires_grad) return;
            x->ensure_grad();
            const long n = x->numel();
            for (long i = 0; i < n; ++i) x->grad[i] += yp->grad[i];
        });
    }
    return y;
}

Tensor slice_lastdim(const Tensor& x, long start, long len) {
    const long d = x->shape.back();
    if (start < 0 || len <= 0 || start + len > d)
        throw ShapeError("slice_lastdim: [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of extent " +
                         std::to_string(d));
    const long rows = x->numel() / d;
    std::vector<long> out_shape = x->shape;
    out_shape.back() = len;
    auto y = make_tensor(std::move(out_shape));
    const real* xd = x->data.data();
    real* yd = y->data.data();
    for (long r = 0; r < rows; ++r)
        std::copy(xd + r * d + start, xd + r * d + start + len, yd + r * len);
    if (track({x})) {
        TensorImpl* yp = y.get();
        attach(y, {x}, [x, yp, rows, d, start, len]() {
            if (!x->requires_grad) return;
            x->ensure_grad();
            real* gx = x->grad.data();
            const real* g = yp->grad.data();
            for (long r = 0; r < rows; ++r)
                for (long j = 0; j < len; ++j)
                    gx[r * d + start + j] += g[r * len + j];
        });
    }
    return y;
}

Tensor split_heads(const Tensor& x, long n_heads) {
    if (x->shape.size() != 3)
        throw ShapeError("split_heads expects rank 3, got " + shape_str(x->shape));
    const long b = x->shape[0], t = x->shape[1], d = x->shape[2];
    if (d % n_heads != 0)
        throw ShapeError("split_heads: " + std::to_string(d) +
                         " not divisible by " + std::to_string(n_heads));
    const long dh = d / n_heads;
    auto y = make_tensor({b, n_heads, t, dh});
    const real* xd = x->data.data();
    real* yd = y->data.data();
    for (long i = 0; i < b; ++i)
        for (long h = 0; h < n_heads; ++h)
            for (long j = 0; j < t; ++j)
                std::copy(xd + (i * t + j) * d + h * dh,
                          xd + (i * t + j) * d + (h + 1) * dh,
                          yd + ((i * n_heads + h) * t + j) * dh);
    if (track({x})) {
        TensorImpl* yp = y.get();
        attach(y, {x}, [x, yp, b, t, d, n_heads, dh]() {
            if (!x->requires_grad) return;
            x->ensure_grad();
            real* gx = x->grad.data();
            const real* g = yp->grad.data();
            for (long i = 0; i < b; ++i)
                for (long h = 0; h < n_heads; ++h)
                    for (long j = 0; j < t; ++j) {
                        const real* grow = g + ((i * n_heads + h) * t + j) * dh;
                        real* xrow = gx + (i * t + j) * d + h * dh;
                        for (long k = 0; k < dh; ++k) xrow[k] += grow[k];
                    }
        });
    }
    return y;
}

Tensor merge_heads(const Tensor& x) {
    if (x->shape.size() != 4)
        throw ShapeError("merge_heads expects rank 4, got " + shape_str(x->shape));
    const long b = x->shape[0], h = x->shape[1], t = x->shape[2], dh = x->shape[3];
    const long d = h * dh;
    auto y = make_tensor({b, t, d});
    const real* xd = x->data.data();
    real* yd = y->data.data();
    for (long i = 0; i < b; ++i)
        for (long hh = 0; hh < h; ++hh)
            for (long j = 0; j < t; ++j)
                std::copy(xd + ((i * h + hh) * t + j) * dh,
                          xd + ((i * h + hh) * t + j + 1) * dh,
                          yd + (i * t + j) * d + hh * dh);
    if (track({x})) {
        TensorImpl* yp = y.get();
        attach(y, {x}, [x, yp, b, h, t, dh, d]() {
            if (!x->requires_grad) return;
            x->ensure_grad();
            real* gx = x->grad.data();
            const real* g = yp->grad.data();
            for (long i = 0; i < b; ++i)
                for (long hh = 0; hh < h; ++hh)
                    for (long j = 0; j < t; ++j) {
                        const real* grow = g + (i * t + j) * d + hh * dh;
                        real* xrow = gx + ((i * h + hh) * t + j) * dh;
                        for (long k = 0; k < dh; ++k) xrow[k] += grow[k];
                    }
        });
    }
    return y;
}

}  // namespace reora
