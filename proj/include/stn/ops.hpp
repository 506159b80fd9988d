#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stn/tensor.hpp"

// Differentiable primitives. Every op rejects non-conforming shapes with
// std::invalid_argument naming the offending shapes.
namespace stn::ops {

// a [..., m, k] x b [k, n] -> [..., m, n]; leading axes of a are flattened.
Tensor matmul(const Tensor& a, const Tensor& b);
// Batched: a [N, m, k] x b [N, k, n] -> [N, m, n]. With transpose_b, b is [N, n, k].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

// Elementwise. b may equal a's shape or a trailing suffix of it (row broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor exp(const Tensor& a);
// Rejects any element <= 0.
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
// Exact (erf) form.
Tensor gelu(const Tensor& a);
// x^exponent for x >= 0. The derivative at x = 0 is taken as 0 when exponent < 1.
Tensor pow(const Tensor& a, double exponent);
// Gradient passes only where the input is above the floor.
Tensor clamp_min(const Tensor& a, double floor);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);

// Normalizes each row over the last axis; gamma/beta, when defined, have the
// shape of that axis.
inline constexpr double kLayerNormEps = 1e-5;
Tensor layer_norm(const Tensor& x, const Tensor& gamma = {}, const Tensor& beta = {},
                  double eps = kLayerNormEps);

// table [V, D], ids of any shape S -> [S..., D]. Rejects ids outside [0, V).
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids, const Shape& id_shape);

// Inverted dropout: zeroes with probability `rate` and scales survivors by
// 1/(1 - rate) when training; identity otherwise.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// Softmax over the last axis restricted to positions where mask == 1.
// Masked outputs are exactly 0. mask has x's shape and holds only 0/1.
Tensor masked_softmax(const Tensor& scores, const Tensor& mask);
Tensor softmax(const Tensor& scores);

// Layout.
Tensor reshape(const Tensor& x, Shape shape);
// x [..., a, b] -> [..., b, a]
Tensor transpose_last(const Tensor& x);
// Drops `axis`, keeping slice `index`.
Tensor select(const Tensor& x, std::size_t axis, std::size_t index);
// Keeps [begin, end) of the last axis.
Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t end);
// x [B, L, F], positions[b] < L -> [B, F] with row b = x[b, positions[b], :].
Tensor gather_positions(const Tensor& x, std::span<const std::size_t> positions);
// x [B, C], index[b] < C -> [B] with entry b = x[b, index[b]].
Tensor gather_columns(const Tensor& x, std::span<const std::size_t> index);
// x [B, L, H*dh] -> [B*H, L, dh]
Tensor split_heads(const Tensor& x, std::size_t heads);
// x [B*H, L, dh] -> [B, L, H*dh]
Tensor merge_heads(const Tensor& x, std::size_t heads);

}  // namespace stn::ops
