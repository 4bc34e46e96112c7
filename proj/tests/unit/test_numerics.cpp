// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <quadmath.h>

#include <cmath>

#include "reora/ops.hpp"
#include "reora/rng.hpp"
#include "reora/tensor.hpp"
#include "test_util.hpp"

using namespace reora;
using reora::testing::check_grad_fd;

TEST_CASE("matmul identity and hand arithmetic") {
    auto eye = make_tensor({2, 2}, {1, 0, 0, 1});
    auto m = make_tensor({2, 2}, {3.5, -1, 2, 7});
    auto y = matmul(eye, m);
    for (int i = 0; i < 4; ++i) CHECK(y->data[i] == m->data[i]);

    auto a = make_tensor({2, 2}, {1, 2, 3, 4});
    auto b = make_tensor({2, 1}, {0, 1});
    auto c = matmul(a, b);
    CHECK(c->data[0] == 2);
    CHECK(c->data[1] == 4);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    auto a = make_tensor({2, 3});
    auto b = make_tensor({2, 2});
    try {
        matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[2x2]") != std::string::npos);
    }
}

TEST_CASE("matmul gradient: d sum(AB) / dA == ones * B^T, and FD") {
    Rng rng(7);
    auto a = gaussian_tensor({3, 4}, rng, 1.0, true);
    auto b = gaussian_tensor({4, 2}, rng, 1.0, true);
    auto loss = sum(matmul(a, b));
    backward(loss);
    // expected dA[i,k] = sum_j B[k,j]
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 4; ++k) {
            real expect = b->data[k * 2] + b->data[k * 2 + 1];
            CHECK(a->grad[i * 4 + k] == doctest::Approx(expect).epsilon(1e-12));
        }
    auto res = check_grad_fd(a, [&] { return sum(matmul(a, b)); }, 1e-6, 1e-5);
    CHECK_MESSAGE(res.ok, res.detail);
    auto res_b = check_grad_fd(b, [&] { return sum(matmul(a, b)); }, 1e-6, 1e-5);
    CHECK_MESSAGE(res_b.ok, res_b.detail);
}

TEST_CASE("softmax simplex and symmetry") {
    auto z = make_tensor({4}, {0, 0, 0, 0});
    auto y = softmax(z);
    for (int i = 0; i < 4; ++i) CHECK(y->data[i] == doctest::Approx(0.25).epsilon(1e-15));

    // shift invariance: constant vectors map to uniform
    for (real c : {-3.0, 0.0, 17.5}) {
        auto zc = make_tensor({5}, std::vector<real>(5, c));
        auto yc = softmax(zc);
        for (int i = 0; i < 5; ++i)
            CHECK(yc->data[i] == doctest::Approx(0.2).epsilon(1e-14));
    }

    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        auto zr = gaussian_tensor({7}, rng, 5.0);
        auto yr = softmax(zr);
        real s = 0.0;
        for (real v : yr->data) {
            CHECK(v >= 0.0);
            s += v;
        }
        CHECK(std::fabs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("softmax matches a float128 exp-normalize oracle") {
    auto z = make_tensor({3}, {1, 2, 3});
    auto y = softmax(z);
    __float128 e1 = expq(1), e2 = expq(2), e3 = expq(3);
    __float128 s = e1 + e2 + e3;
    double expect[3] = {static_cast<double>(e1 / s), static_cast<double>(e2 / s),
                        static_cast<double>(e3 / s)};
    for (int i = 0; i < 3; ++i) CHECK(std::fabs(y->data[i] - expect[i]) <= 1e-12);
}

TEST_CASE("softmax rejects non-finite input") {
    auto z = make_tensor({2}, {1.0, std::nan("")});
    CHECK_THROWS_AS(softmax(z), NumericError);
    auto zi = make_tensor({2}, {1.0, std::numeric_limits<real>::infinity()});
    CHECK_THROWS_AS(softmax(zi), NumericError);
}

TEST_CASE("sigmoid fixed points, complement identity, saturation") {
    auto x = scalar_tensor(0.0);
    CHECK(sigmoid(x)->data[0] == 0.5);

    Rng rng(11);
    auto s = gaussian_tensor({16}, rng, 4.0);
    auto neg = scale(s, -1.0);
    auto a = sigmoid(s);
    auto b = sigmoid(neg);
    for (int i = 0; i < 16; ++i)
        CHECK(a->data[i] + b->data[i] == doctest::Approx(1.0).epsilon(1e-14));

    auto big = make_tensor({2}, {50.0, -50.0});
    auto yb = sigmoid(big);
    CHECK(std::fabs(yb->data[0] - 1.0) <= 1e-12);
    CHECK(std::fabs(yb->data[1] - 0.0) <= 1e-12);
    CHECK(std::isfinite(yb->data[0]));
    CHECK(std::isfinite(yb->data[1]));
}

TEST_CASE("cross_entropy analytic values") {
    // uniform logits -> ln(classes) regardless of label
    auto logits = make_tensor({2, 8});
    auto loss = cross_entropy(logits, {3, 5});
    CHECK(loss->data[0] == doctest::Approx(std::log(8.0)).epsilon(1e-12));

    // concentrated logits -> tiny loss
    auto conc = make_tensor({1, 4});
    conc->data[2] = 50.0;
    CHECK(cross_entropy(conc, {2})->data[0] < 1e-9);

    CHECK_THROWS_AS(cross_entropy(logits, {0, 8}), InputError);
    CHECK_THROWS_AS(cross_entropy(logits, {-1, 0}), InputError);
}

TEST_CASE("cross_entropy gradient equals (softmax - onehot)/batch and FD") {
    Rng rng(5);
    auto logits = gaussian_tensor({3, 5}, rng, 2.0, true);
    std::vector<long> labels{1, 4, 0};
    auto loss = cross_entropy(logits, labels);
    backward(loss);
    auto sm = softmax(logits);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 5; ++j) {
            real expect = (sm->data[i * 5 + j] - (labels[i] == j ? 1.0 : 0.0)) / 3.0;
            CHECK(logits->grad[i * 5 + j] == doctest::Approx(expect).epsilon(1e-10));
        }
    auto res = check_grad_fd(logits, [&] { return cross_entropy(logits, labels); },
                             1e-6, 1e-5);
    CHECK_MESSAGE(res.ok, res.detail);
}

TEST_CASE("backward basics") {
    auto x = make_tensor({3}, {1, 2, 3}, true);
    auto loss = sum(x);
    backward(loss);
    for (int i = 0; i < 3; ++i) CHECK(x->grad[i] == 1.0);

    x->zero_grad();
    auto loss2 = sum(mul(x, x));
    backward(loss2);
    CHECK(x->grad[0] == 2.0);
    CHECK(x->grad[1] == 4.0);
    CHECK(x->grad[2] == 6.0);

    // repeated backward accumulates additively
    backward(loss2);
    CHECK(x->grad[1] == 8.0);

    auto vec = make_tensor({2}, {1, 2}, true);
    CHECK_THROWS_AS(backward(mul(vec, vec)), UsageError);
}

TEST_CASE("elementwise and structural op gradients vs finite differences") {
    Rng rng(23);

    auto x = gaussian_tensor({2, 3, 4}, rng, 1.0, true);
    auto res = check_grad_fd(x, [&] { return sum(gelu(x)); });
    CHECK_MESSAGE(res.ok, (std::string("gelu: ") + res.detail));

    res = check_grad_fd(x, [&] { return sum(sigmoid(x)); });
    CHECK_MESSAGE(res.ok, (std::string("sigmoid: ") + res.detail));

    res = check_grad_fd(x, [&] { return sum(mul(softmax(x), x)); });
    CHECK_MESSAGE(res.ok, (std::string("softmax: ") + res.detail));

    auto g = gaussian_tensor({4}, rng, 0.3, true);
    auto b = gaussian_tensor({4}, rng, 0.3, true);
    res = check_grad_fd(x, [&] { return sum(mul(layernorm(x, g, b), x)); });
    CHECK_MESSAGE(res.ok, (std::string("layernorm x: ") + res.detail));
    res = check_grad_fd(g, [&] { return sum(mul(layernorm(x, g, b), x)); });
    CHECK_MESSAGE(res.ok, (std::string("layernorm gamma: ") + res.detail));
    res = check_grad_fd(b, [&] { return sum(mul(layernorm(x, g, b), x)); });
    CHECK_MESSAGE(res.ok, (std::string("layernorm beta: ") + res.detail));

    auto table = gaussian_tensor({6, 3}, rng, 1.0, true);
    std::vector<long> ids{0, 5, 2, 2};
    res = check_grad_fd(table, [&] {
        auto e = embedding(table, ids, {2, 2});
        return sum(mul(e, e));
    });
    CHECK_MESSAGE(res.ok, (std::string("embedding: ") + res.detail));
    CHECK_THROWS_AS(embedding(table, {6}, {1}), InputError);

    auto p = gaussian_tensor({2, 3, 4}, rng, 1.0, true);
    auto q = gaussian_tensor({2, 4, 5}, rng, 1.0, true);
    res = check_grad_fd(p, [&] { return sum(bmm(p, q)); });
    CHECK_MESSAGE(res.ok, (std::string("bmm a: ") + res.detail));
    res = check_grad_fd(q, [&] { return sum(bmm(p, q)); });
    CHECK_MESSAGE(res.ok, (std::string("bmm b: ") + res.detail));

    auto qt = gaussian_tensor({2, 5, 4}, rng, 1.0, true);
    res = check_grad_fd(qt, [&] { return sum(bmm(p, qt, true)); });
    CHECK_MESSAGE(res.ok, (std::string("bmm trans_b: ") + res.detail));

    auto w = gaussian_tensor({5, 4}, rng, 1.0, true);
    res = check_grad_fd(w, [&] { return sum(mul(linear(x, w), linear(x, w))); });
    CHECK_MESSAGE(res.ok, (std::string("linear w: ") + res.detail));
    res = check_grad_fd(x, [&] { return sum(mul(linear(x, w), linear(x, w))); });
    CHECK_MESSAGE(res.ok, (std::string("linear x: ") + res.detail));

    res = check_grad_fd(x, [&] { return sum(mul(mean_axis1(x), mean_axis1(x))); });
    CHECK_MESSAGE(res.ok, (std::string("mean_axis1: ") + res.detail));

    res = check_grad_fd(x, [&] {
        auto s = slice_lastdim(x, 1, 2);
        return sum(mul(s, s));
    });
    CHECK_MESSAGE(res.ok, (std::string("slice: ") + res.detail));

    auto xh = gaussian_tensor({2, 3, 6}, rng, 1.0, true);
    res = check_grad_fd(xh, [&] {
        auto h = split_heads(xh, 2);
        auto m = merge_heads(h);
        return sum(mul(m, xh));
    });
    CHECK_MESSAGE(res.ok, (std::string("split/merge heads: ") + res.detail));

    // suffix-broadcast add: bias over leading dims
    auto bias = gaussian_tensor({3, 4}, rng, 1.0, true);
    res = check_grad_fd(bias, [&] {
        auto s = add(x, bias);
        return sum(mul(s, s));
    });
    CHECK_MESSAGE(res.ok, (std::string("add broadcast: ") + res.detail));

    // last-dim-1 broadcast mul (gating pattern)
    auto gate = gaussian_tensor({2, 3, 1}, rng, 1.0, true);
    res = check_grad_fd(gate, [&] { return sum(mul(x, gate)); });
    CHECK_MESSAGE(res.ok, (std::string("mul gate: ") + res.detail));
    res = check_grad_fd(x, [&] { return sum(mul(x, gate)); });
    CHECK_MESSAGE(res.ok, (std::string("mul gated x: ") + res.detail));
}

// Random compositions of the op set, all leaves checked against FD.
TEST_CASE("property: random graphs have FD-consistent gradients") {
    for (std::uint64_t trial = 0; trial < 12; ++trial) {
        Rng rng(1000 + trial);
        const long b = 1 + rng.uniform_int(2);
        const long t = 2 + rng.uniform_int(3);
        const long d = 2 + rng.uniform_int(3) * 2;
        auto x0 = gaussian_tensor({b, t, d}, rng, 1.0, true);
        auto w1 = gaussian_tensor({d, d}, rng, 0.7, true);
        auto g = gaussian_tensor({d}, rng, 0.3, true);
        auto bb = gaussian_tensor({d}, rng, 0.3, true);

        auto build = [&]() {
            Tensor h = x0;
            for (int depth = 0; depth < 3; ++depth) {
                switch ((trial + depth) % 5) {
                    case 0: h = gelu(linear(h, w1)); break;
                    case 1: h = add(h, sigmoid(h)); break;
                    case 2: h = layernorm(h, g, bb); break;
                    case 3: h = mul(h, softmax(h)); break;
                    default: h = scale(add(h, x0), 0.5); break;
                }
            }
            return sum(mul(h, h));
        };
        for (auto& leaf : {x0, w1, g, bb}) {
            auto res = check_grad_fd(leaf, build, 1e-5, 1e-4, 1e-7);
            CHECK_MESSAGE(res.ok, "trial " << trial << ": " << res.detail);
        }
    }
}

TEST_CASE("no-grad guard suppresses recording") {
    auto x = make_tensor({2}, {1, 2}, true);
    Tensor y;
    {
        NoGradGuard ng;
        y = sum(mul(x, x));
    }
    CHECK(!y->requires_grad);
    CHECK(y->parents.empty());
}

TEST_CASE("rng determinism and stream properties") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng c(42), d(43);
    bool differ = false;
    for (int i = 0; i < 8; ++i) differ |= (c.next_u64() != d.next_u64());
    CHECK(differ);

    Rng u(7);
    double mn = 1.0, mx = 0.0, mean = 0.0;
    for (int i = 0; i < 20000; ++i) {
        double v = u.uniform();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
        mn = std::min(mn, v);
        mx = std::max(mx, v);
        mean += v;
    }
    mean /= 20000;
    CHECK(mean == doctest::Approx(0.5).epsilon(0.02));

    Rng n(9);
    double m1 = 0.0, m2 = 0.0;
    const int N = 50000;
    for (int i = 0; i < N; ++i) {
        double v = n.normal();
        m1 += v;
        m2 += v * v;
    }
    m1 /= N;
    m2 /= N;
    CHECK(std::fabs(m1) < 0.02);
    CHECK(m2 == doctest::Approx(1.0).epsilon(0.03));

    CHECK(child_seed(1, "adapter") != child_seed(1, "backbone"));
    CHECK(child_seed(1, "adapter") != child_seed(2, "adapter"));
    CHECK(child_seed(1, "adapter") == child_seed(1, "adapter"));

    // bounded uniform_int
    Rng ui(13);
    for (int i = 0; i < 1000; ++i) {
        long v = ui.uniform_int(7);
        CHECK(v >= 0);
        CHECK(v < 7);
    }
}

TEST_CASE("determinism: same seed, same op sequence, bit-identical") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        auto x = gaussian_tensor({4, 6}, rng, 1.0, true);
        auto w = gaussian_tensor({6, 6}, rng, 0.5, true);
        auto y = softmax(gelu(matmul(x, w)));
        backward(sum(mul(y, x)));
        return std::make_pair(hash_reals(y->data), hash_reals(x->grad));
    };
    CHECK(run(123) == run(123));
    CHECK(run(123) != run(124));
}
