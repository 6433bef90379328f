#pragma once

#include <span>
#include <vector>

#include "fisale/autodiff.hpp"

// Differentiable primitives. Every function records one node on the graph
// owning its first operand.
namespace fisale::ops {

Var matmul(Var a, Var b, bool transpose_a = false, bool transpose_b = false);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// Adds a constant tensor of the same shape.
Var add_constant(Var a, const Tensor& c);
/// a[i,:] + bias for every row i; bias has `a.cols()` entries.
Var add_row(Var a, Var bias);
/// x * w + b with scalar (single-entry) w and b.
Var scalar_affine(Var x, Var w, Var b);

Var softmax(Var x, int axis);
/// Gaussian-error linear unit, exact erf form.
Var gelu(Var x);
Var square(Var x);
Var sqrt(Var x);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
/// Splits into equal row blocks of `block` rows each.
std::vector<Var> chunk_rows(Var x, std::size_t block);

/// Sum of all entries as a {1} tensor.
Var sum(Var x);
Var mean(Var x);

/// out[i,:] = sum_j weights[i,j] * values[index[i*k + j], :], with k = weights.cols().
Var neighbor_mix(Var weights, Var values, std::span<const std::size_t> index);

}  // namespace fisale::ops
