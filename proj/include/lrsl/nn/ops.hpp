#pragma once

#include "lrsl/nn/tensor.hpp"

#include <span>
#include <vector>

// Differentiable operations over Tensor. Row-vector convention: one token per row.
namespace lrsl::nn {

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T. Linear layers use this with weights stored as (out x in).
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);

/// x + bias for every row; bias is 1 x cols.
Tensor add_row(const Tensor& x, const Tensor& bias);
/// x * gain for every row; gain is 1 x cols.
Tensor mul_row(const Tensor& x, const Tensor& gain);

/// Per-row standardisation (x - mean) / sqrt(var + eps), no affine part.
Tensor normalize_rows(const Tensor& x, double eps = 1e-5);
/// LayerNorm with gain and bias of shape 1 x cols.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// GELU, tanh approximation.
Tensor gelu(const Tensor& x);

/// Rows of `table` selected by `ids`.
Tensor embedding(const Tensor& table, std::span<const int> ids);

/// Rows [0, n) of x.
Tensor slice_rows(const Tensor& x, std::size_t n);
Tensor slice_cols(const Tensor& x, std::size_t lo, std::size_t hi);
Tensor concat_cols(const std::vector<Tensor>& parts);

/// Row-wise softmax restricted to columns j <= i; masked entries are exactly 0.
Tensor causal_softmax(const Tensor& scores);

Tensor sum(const Tensor& x);

/// Mean over rows where mask[i] is true of -log softmax(logits_i)[targets_i].
/// Result is 1x1. All-false mask yields 0.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, std::span<const bool> mask);
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

/// Numerically stable log-softmax of every row (value only, no graph).
Matrix log_softmax_rows(const Matrix& logits);

} // namespace lrsl::nn
