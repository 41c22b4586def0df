#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "ragdial/nn/tape.hpp"

// Differentiable ops over rank-2 tensors. Each op records its backward
// closure on the tape of its inputs.
namespace ragdial::nn::ops {

using TokenId = std::int32_t;

Var add(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double s);
Var sum(Var a);         // -> 1x1

// [n x k] * [k x m]
Var matmul(Var a, Var b);
// [n x k] * [m x k]^T -> [n x m]
Var matmul_transposed(Var a, Var b);
// x [n x in] * w [in x out] + b [1 x out]
Var linear(Var x, Var w, Var b);
Var linear(Var x, Var w);

// Row gather: table [V x d], ids -> [ids.size() x d]
Var embedding(Var table, std::span<const TokenId> ids);
// First `n` rows of `table` (positional embeddings).
Var take_rows(Var table, std::size_t n);
Var row(Var x, std::size_t r);  // -> [1 x cols]
// Stack 1x1 scalars into a [1 x n] row.
Var concat_scalars(const std::vector<Var>& scalars);

Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var relu(Var x);
Var gelu(Var x);
// Inverted dropout. Identity when rate == 0.
Var dropout(Var x, double rate, std::mt19937_64& rng);

// Multi-head scaled dot-product attention over already projected q/k/v.
// q [n x d], k/v [m x d]; with `causal`, query i sees keys j <= i.
Var attention(Var q, Var k, Var v, std::size_t heads, bool causal);

Var log_softmax(Var x);  // row-wise
Var logsumexp(Var x);    // over all elements -> 1x1
// Sum of logp[i, targets[i]] over rows whose target is not `ignore`.
Var pick_sum(Var logp, std::span<const TokenId> targets, TokenId ignore = -1);

}  // namespace ragdial::nn::ops
