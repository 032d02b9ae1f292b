#pragma once

#include <cstdint>
#include <vector>

#include "catsnn/autograd.hpp"

// Differentiable op vocabulary. Binary elementwise ops accept equal shapes or
// a one-element right operand; there is no general broadcasting.
namespace catsnn::ops {

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
/// x[N x in] times w[out x in] transposed.
Var linear(const Var& x, const Var& w);
/// Cross-correlation of x[N x Cin x H x W] with w[Cout x Cin x kh x kw].
Var conv2d(const Var& x, const Var& w, std::size_t stride = 1, std::size_t pad = 0);
/// Non-overlapping k x k average pooling; trailing rows/cols that do not fill
/// a window are dropped.
Var avg_pool2d(const Var& x, std::size_t k = 2);

Var reshape(const Var& x, Shape shape);
/// Collapse all axes after the first.
Var flatten(const Var& x);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add(const Var& a, double s);
Var scale(const Var& a, double s);
Var square(const Var& a);
Var clamp(const Var& a, double lo, double hi);
Var relu(const Var& a);

/// Reduce over `axes`; empty axes means every axis. Output keeps the
/// non-reduced axes (shape {1} for a full reduction).
Var sum(const Var& a, std::vector<std::size_t> axes = {});
Var mean(const Var& a, std::vector<std::size_t> axes = {});

/// Mean softmax cross-entropy of logits[N x K] against integer labels.
Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels);

/// out[i] = table[index[i]] reshaped to `shape`; backward scatter-adds.
Var gather(const Var& table, const std::vector<std::int32_t>& index, Shape shape);

/// Multiply channel c (axis 1) of x by gate[c].
Var channel_scale(const Var& x, const Var& gate);

}  // namespace catsnn::ops
