#pragma once

#include <span>
#include <vector>

#include "touchadd/nn/tensor.hpp"

namespace touchadd::nn {

Tensor matmul(const Tensor& a, const Tensor& b);
/// x * w + b, with b a row vector broadcast over rows.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real s);
/// Adds a 1 x cols row vector to every row.
Tensor add_row(const Tensor& a, const Tensor& row);
/// Adds a rows x 1 column vector to every column (per-channel bias).
Tensor add_col(const Tensor& a, const Tensor& col);

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // tanh approximation
Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps = 1e-5);

/// Rows of `table` selected by `ids`.
Tensor embedding(const Tensor& table, std::span<const int> ids);
/// Sum of the rows of `table` selected by `ids`, as a 1 x d row.
Tensor embedding_bag(const Tensor& table, std::span<const int> ids);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, Index begin, Index count);
/// Transposed copy.
Tensor transpose(const Tensor& x);

/// Multi-head causal self-attention. q, k, v are [L, d]; d divisible by heads.
/// Position i attends to positions 0..i.
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads);

/// 3x3 convolution, stride 1, zero padding 1. x is [cin, h*w], weight is
/// [cout, cin*9] (cin-major, then ky, kx), bias is [cout, 1].
Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias, int height, int width);
/// 2x2 average pooling of a [c, h*w] map (h, w even).
Tensor avg_pool2(const Tensor& x, int height, int width);
/// Nearest-neighbour 2x upsampling of a [c, h*w] map.
Tensor upsample2(const Tensor& x, int height, int width);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Mean over rows of -log softmax(logits[r])[targets[r]].
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);
/// Mean squared error over all entries.
Tensor mse(const Tensor& a, const Tensor& b);
/// 1 - (2 sum(p g) + eps) / (sum p + sum g + eps). `target` is a constant.
Tensor dice_loss(const Tensor& probs, const Mat& target, Real eps = 1e-6);

}  // namespace touchadd::nn
