#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lcn4/tensor.hpp"

// Differentiable operations over Tensor. Binary elementwise ops accept either
// identical shapes or a single-element operand (scalar broadcast); nothing
// else broadcasts.
namespace lcn4 {

enum class Elementwise { add, sub, mul, div, relu, sin, cos, exp, log, scale };

// Generic entry point; unary kinds ignore `b`, `scale` multiplies by `b`.
Tensor elementwise(Elementwise op, const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double value);
Tensor scale(const Tensor& a, double factor);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double f) { return scale(a, f); }
inline Tensor operator*(double f, const Tensor& a) { return scale(a, f); }

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Mean over one axis; that axis is removed from the result.
Tensor mean_axis(const Tensor& a, std::size_t axis);

// Layout.
Tensor reshape(const Tensor& a, Shape shape);
// out.shape[i] = a.shape[perm[i]]; materialises a contiguous copy.
Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
// Slice [start, start+length) along one axis.
Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);  // [m x p] . [p x q]
Tensor bmm(const Tensor& a, const Tensor& b);     // [B x m x p] . [B x p x q]

// Convolution stack (NCHW).
// "Same" cross-correlation: square odd kernel, zero padding ksize/2.
Tensor conv2d(const Tensor& input, const Tensor& kernel);
// 2x2 window, stride 2; H and W must be even.
Tensor maxpool2d(const Tensor& input);
// [B x C x H x W] -> [B x C]
Tensor global_avg_pool(const Tensor& input);

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

// Per-channel normalisation over (B, H, W). Train mode uses batch statistics
// and updates the running estimates; eval mode uses the running estimates.
Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, bool train);

// Numerically stabilised softmax along `axis`.
Tensor softmax(const Tensor& a, std::size_t axis);
// Prefix sums along `axis`.
Tensor cumulative_sum(const Tensor& a, std::size_t axis);

// out[..., n] = a[...] * factors[n]  (appends a trailing axis of len(factors)).
Tensor expand_last(const Tensor& a, std::span<const double> factors);

// Mean cross-entropy of row-wise softmax(logits) against integer labels.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

// [m x d], [n x d] -> [m x n] cosine similarities; norms clamped at `eps`.
Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps = 1e-12);

// Euclidean distances [n x d] x [k x d] -> [n x k]. Gradient flows to `points`
// only; `centers` is read as a constant.
Tensor euclidean_distances(const Tensor& points, const Tensor& centers);

}  // namespace lcn4
