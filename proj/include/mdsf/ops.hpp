#pragma once

#include "mdsf/tensor.hpp"

#include <vector>

namespace mdsf {

// Elementwise binary ops broadcast NumPy-style (shapes aligned from the right,
// size-1 dimensions stretch). Gradients are summed back onto the input shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator+(const Tensor& a, double b);
Tensor operator+(double a, const Tensor& b);
Tensor operator-(const Tensor& a, double b);
Tensor operator-(double a, const Tensor& b);
Tensor operator*(const Tensor& a, double b);
Tensor operator*(double a, const Tensor& b);
Tensor operator/(const Tensor& a, double b);
Tensor operator/(double a, const Tensor& b);
Tensor operator-(const Tensor& a);

Tensor minimum(const Tensor& a, double b);
Tensor maximum(const Tensor& a, double b);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
/// Square root; the gradient at exactly 0 is taken as 0.
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor pow(const Tensor& x, double exponent);
Tensor abs(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
/// x * sigmoid(x)
Tensor silu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor atan(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, Index axis, bool keepdim = false);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, Index axis, bool keepdim = false);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<Index>& axes);
/// Swaps the two axes of a rank-2 tensor.
Tensor transpose(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, Index axis);
Tensor narrow(const Tensor& x, Index axis, Index start, Index length);
std::vector<Tensor> split(const Tensor& x, Index axis, const std::vector<Index>& sizes);
/// Gathers slices along `axis`; indices may repeat (gradients accumulate).
Tensor index_select(const Tensor& x, Index axis, const std::vector<Index>& indices);

Tensor matmul(const Tensor& a, const Tensor& b);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, Index axis);
/// Normalizes to zero mean and unit (population) variance along `axis`, no affine.
Tensor layer_norm(const Tensor& x, Index axis, double eps = 1e-5);

/// Per-channel 2-D cross-correlation of x[C,H,W] with kernel[C,k,k].
/// Zero padding of dilation*(k-1)/2 keeps H,W at stride 1; with stride s the
/// output is ceil(H/s) x ceil(W/s).
Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel, Index dilation = 1, Index stride = 1);

/// Gathers the 3x3 neighbourhood at spacing d around every pixel of x[C,H,W].
/// Output is [C,9,H,W]; slot k holds offset (k/3-1, k%3-1)*d, zero outside bounds.
Tensor unfold_neighborhood(const Tensor& x, Index dilation);

/// Half-pixel-centred bilinear resampling of x[C,H,W] to [C,out_h,out_w].
Tensor resize_bilinear(const Tensor& x, Index out_h, Index out_w);

inline Tensor detach(const Tensor& x) { return x.detach(); }
/// Constant (non-trainable) tensor of `ref`'s shape filled with v.
inline Tensor constant_like(double v, const Tensor& ref) { return Tensor::full(ref.shape(), v); }

// Scalar counterparts so box-loss templates instantiate for plain doubles.
inline double minimum(double a, double b) { return a < b ? a : b; }
inline double maximum(double a, double b) { return a > b ? a : b; }
inline double detach(double x) { return x; }
inline double constant_like(double v, double) { return v; }

}  // namespace mdsf
