#pragma once

#include <cstddef>

#include "naclip/tensor.hpp"

namespace naclip {

inline constexpr float kLayerNormEps = 1e-5f;

// C = A x B for A [m x k], B [k x n]. Each output element accumulates its
// k products in double, in increasing k order, then rounds once to float.
// Rows are distributed over OpenMP threads; the per-element reduction order
// does not depend on the thread count.
Tensor matmul(const Tensor& a, const Tensor& b);

// x [.. x in] times weight [in x out] plus bias [out]. Row-major
// "output = input x W" convention used by every linear layer in the archive.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Normalizes every vector along the last axis (population variance, mean and
// variance accumulated in double), then applies gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = kLayerNormEps);

// x * sigmoid(1.702 x), the activation the CLIP checkpoints were trained with.
Tensor quick_gelu(const Tensor& x);
float quick_gelu(float x) noexcept;

// Softmax over the last axis with row-max subtraction; the normalizer is
// accumulated in double.
Tensor softmax_rows(const Tensor& x);

// Bilinear resize of a [C x h x w] tensor with half-pixel centres
// (align_corners = false): source coordinate s = (d + 0.5) * in/out - 0.5,
// negative s clamped to 0, the upper neighbour clamped to the last row/column.
// Matches torch.nn.functional.interpolate(mode="bilinear",
// align_corners=False, antialias=False).
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);

Tensor transpose(const Tensor& x);

void add_inplace(Tensor& dst, const Tensor& src);

// Row-wise L2 normalization; rows with norm below eps are divided by eps.
Tensor l2_normalize_rows(const Tensor& x, float eps = 1e-12f);

}  // namespace naclip
