// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "reora/tensor.hpp"

namespace reora {

// Fixed op set for the recorded reverse-mode graph. Every op computes the
// forward value eagerly and, when recording is enabled and an input requires
// grad, registers a closure that accumulates into the inputs' grads.

/// Contract a's last dim with b's first: [.., p, q] x [q, s] -> [.., p, s].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Batched matmul: [.., p, q] x [.., q, s] (or [.., s, q] when trans_b),
/// identical leading dims.
Tensor bmm(const Tensor& a, const Tensor& b, bool trans_b = false);

/// Affine-free linear layer: x [.., in] with weight w [out, in] -> [.., out].
Tensor linear(const Tensor& x, const Tensor& w);

/// Elementwise add; b may have lower rank, broadcast over a's leading dims
/// (b.shape must be a suffix of a.shape).
Tensor add(const Tensor& a, const Tensor& b);

/// Elementwise multiply; alternatively b has a's shape with last extent 1 and
/// broadcasts along the last dim.
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, real c);

/// Numerically stabilized softmax over the last dim. Rejects NaN/Inf input.
Tensor softmax(const Tensor& z);

Tensor sigmoid(const Tensor& x);

Tensor gelu(const Tensor& x);

/// LayerNorm over the last dim with affine params gamma/beta of that extent.
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 real eps = 1e-5);

/// Row gather: table [V, d], ids (host) -> [lead.., d]. Grad scatters.
Tensor embedding(const Tensor& table, const std::vector<long>& ids,
                 std::vector<long> lead_shape);

/// Mean negative log-likelihood over rows of logits [N, C]; grad on logits is
/// (softmax - onehot) / N.
Tensor cross_entropy(const Tensor& logits, const std::vector<long>& labels);

Tensor sum(const Tensor& x);

/// [B, T, d] -> [B, d], mean over the middle axis.
Tensor mean_axis1(const Tensor& x);

Tensor reshape(const Tensor& x, std::vector<long> shape);

Tensor slice_lastdim(const Tensor& x, long start, long len);

/// [B, T, H*dh] -> [B, H, T, dh]
Tensor split_heads(const Tensor& x, long n_heads);
/// [B, H, T, dh] -> [B, T, H*dh]
Tensor merge_heads(const Tensor& x);

/// Finite stand-in for -inf in masked softmax inputs; exp underflows to 0.
inline constexpr real kMaskNegInf = -1e30;

}  // namespace reora
