#pragma once

// Differentiable primitives. Every function records one tape node whose
// adjoint is written in closed form. Matrix-style ops treat the last axis as
// columns and fold leading axes into rows.

#include <cstddef>
#include <span>
#include <vector>

#include "oreo/numerics/tape.hpp"

namespace oreo::num {

using Index = std::vector<std::size_t>;

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double s);
// x[r, :] + bias for every row r.
Var add_bias(Var x, Var bias);
// x[r, c] * v[c] for every row r.
Var mul_cols(Var x, Var v);
Var exp(Var x);
Var relu(Var x);
Var gelu(Var x);

Var sum(Var x);
Var mean(Var x);
// Sum of a list of scalars; an empty list gives constant 0.
Var add_n(Tape& tape, std::span<const Var> terms);

// [m x k] * [k x n]
Var matmul(Var a, Var b);
// [m x k] * [n x k]^T
Var matmul_nt(Var a, Var b);
// x * W + b with W stored [in x out].
Var linear(Var x, Var w, Var b);

// W2 * relu(W1 * x + b1) + b2, weights stored [in x out].
Var mlp_project(Var x, Var w1, Var b1, Var w2, Var b2);

Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

// Numerically stable softmax / log-softmax along `axis`.
Var softmax(Var x, std::size_t axis);
Var log_softmax(Var x, std::size_t axis);

// Slices along `axis` with positive sum are divided by that sum; zero-sum
// slices are replaced by the matching slice of `fallback` (same shape as x).
// Negative entries raise DomainError.
Var l1_normalize(Var x, std::size_t axis, Var fallback);

// out[.., j, ..] = sum over k with idx[k] = j of src[.., k, ..], summed in
// ascending k. idx.size() must equal the extent of src along `axis`.
Var scatter_add(Var src, const Index& idx, std::size_t out_extent, std::size_t axis);
// out[.., k, ..] = x[.., idx[k], ..]
Var gather(Var x, const Index& idx, std::size_t axis);
// Copy of `base` with rows idx[k] replaced by rows[k]; idx entries distinct.
Var set_rows(Var base, const Index& idx, Var rows);

// Mean over rows of -log softmax(logits[r])[targets[r]]; 0 for no rows.
Var cross_entropy(Var logits, const Index& targets);
// Sum over rows of -<target[r], log softmax(logits[r])>.
Var soft_cross_entropy(Var logits, const Tensor& target);

// Multi-head scaled dot-product self-attention over [n x d] projections.
Var attention(Var q, Var k, Var v, std::size_t heads);

// Forward-only helpers shared with tests and the dense oracle.
Tensor softmax_values(const Tensor& x, std::size_t axis);

}  // namespace oreo::num
