#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mtvrp/autodiff/tape.hpp"

// Differentiable operations. Matrix-shaped ops take rank-2 inputs [rows, cols]; no implicit
// broadcasting beyond what each op documents.
namespace mtvrp::ad {

// Boolean mask, row-major, same element count as the tensor it masks. 1 = keep.
using Mask = std::vector<std::uint8_t>;

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
// Elementwise product with a constant tensor (no gradient to the constant).
Var mul_const(Var a, const Tensor& c);

Var relu(Var a);
// c * tanh(a); the pointer-logit clip uses c = 10.
Var tanh(Var a, double c = 1.0);
Var sigmoid(Var a);
Var softplus(Var a);
Var log(Var a);
Var exp(Var a);

Var sum(Var a);
Var mean(Var a);

// y = x W^T + b, x [R, d2], W [d1, d2], b [d1] -> [R, d1].
Var linear(Var x, Var w, std::optional<Var> b = std::nullopt);

// Row-wise softmax over unmasked entries; masked entries are exactly 0.
// An empty mask keeps everything. Throws if a row has no unmasked entry.
Var masked_softmax(Var logits, const Mask& mask = {});
// Row-wise log-softmax over unmasked entries; masked entries hold -inf and get no gradient.
Var masked_log_softmax(Var logits, const Mask& mask = {});

// Multi-head scaled dot-product attention.
// q [Rq, d], k [Rk, d], v [Rk, dv]; mask [Rq, Rk] (empty = no mask); d and dv divisible by heads.
Var attention(Var q, Var k, Var v, const Mask& mask, int heads);

// out[r] = x[r, idx[r]], shape [R, 1].
Var gather(Var x, std::span<const int> idx);
// out[i, :] = x[idx[i], :], shape [idx.size(), C].
Var gather_rows(Var x, std::span<const int> idx);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
// [R, C] -> [1, C].
Var mean_rows(Var x);
// [1, C] -> [n, C].
Var repeat_rows(Var x, int n);
// [R, C] -> [R, 1].
Var col(Var x, int j);
// x [R, C] times per-row scalar s [R, 1].
Var scale_rows(Var x, Var s);
// x / max(row sum, eps), x [R, C].
Var row_normalize(Var x, double eps);
// Per-row normalization with affine gamma [C], beta [C].
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

}  // namespace mtvrp::ad
