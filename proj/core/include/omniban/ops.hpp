#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "omniban/tape.hpp"

namespace omniban {

// Differentiable operations over tape values. Every op records one node,
// reports its forward cost to the current FlopMeter and, when any input needs
// a gradient, a backward rule.
//
// Broadcasting for add/sub/mul follows the trailing-alignment rule: shapes
// are right-aligned, missing leading dimensions count as 1, and each aligned
// pair must be equal or contain a 1. Gradients of a broadcast operand are
// summed over the dimensions it was stretched along.

/// [m x k] . [k x n] -> [m x n]
Var matmul(Var a, Var b);
/// x . w + bias for x [n x d_in], w [d_in x d_out], bias [d_out].
Var linear(Var x, Var w, Var bias);
/// x . w without a bias term.
Var linear(Var x, Var w);

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Hadamard product.
Var mul(Var a, Var b);
/// Elementwise quotient; division by zero is the caller's concern.
Var div(Var a, Var b);
Var scale(Var x, double factor);

Var transpose(Var x);
Var reshape(Var x, Shape shape);
/// Columns [begin, begin + count) of a matrix.
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);

/// Replaces entries whose `keep` flag is false with -inf. `keep` is laid out
/// like x's data.
Var mask_fill(Var x, const std::vector<bool>& keep);
/// Numerically stable softmax along `axis`. -inf entries map to exactly 0;
/// a slice with no finite entry raises MaskError("fully masked softmax slice").
Var softmax(Var x, std::size_t axis);

Var relu(Var x);
Var square(Var x);
/// Sum of all entries, as a rank-0 scalar.
Var sum(Var x);
/// [m x n] -> [1 x n], summing over rows.
Var sum_rows(Var x);
/// Each row divided by its Euclidean norm; zero rows stay zero.
Var l2_normalize_rows(Var x);

/// Mean over all entries of max(x,0) - x*t + log(1 + exp(-|x|)).
/// Targets must lie in [0, 1].
Var bce_with_logits(Var logits, const Tensor& target);

/// Broadcast result shape of two operands, or DimensionError.
Shape broadcast_shape(const Shape& a, const Shape& b);

/// keep-pattern for a [rows x keys] score matrix whose columns follow `key_mask`.
std::vector<bool> key_mask_pattern(std::size_t rows, const std::vector<bool>& key_mask);
/// [n x 1] column of 1/0 from a mask.
Tensor mask_column(const std::vector<bool>& mask);

}  // namespace omniban
