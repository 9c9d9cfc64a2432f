#pragma once

// Serial, loop-for-loop implementations kept as test oracles and as the
// benchmark baseline. Nothing here calls the optimized kernels; only the data
// types are shared.

#include <cstddef>

#include "naclip/attention.hpp"
#include "naclip/image_io.hpp"
#include "naclip/model_config.hpp"
#include "naclip/pamr.hpp"
#include "naclip/segmenter.hpp"
#include "naclip/tensor.hpp"
#include "naclip/text_encoder.hpp"
#include "naclip/visual_encoder.hpp"

namespace naclip::reference {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);
Tensor quick_gelu(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);

// exp(-((m-i)^2 + (n-j)^2) / (2 sigma^2)) evaluated directly.
float prior_value(std::size_t i, std::size_t j, std::size_t m, std::size_t n, double sigma);

// Explicit O(N^2 d) loops per head. For prior-based variants `grid` gives the
// token layout (N == h*w).
Tensor self_attention(const Tensor& tokens, const AttentionWeights& w, const AttentionConfig& cfg, GridSize grid);

Tensor encoder_block(const Tensor& tokens, const EncoderBlockWeights& w, const AttentionConfig& cfg, GridSize grid);

FeatureGrid forward_features(const Tensor& image, const VisionWeights& weights, const VisionConfig& cfg,
                             const EncoderOptions& options);

// Evaluates all context positions with an explicit causal mask.
Tensor text_forward(const TokenSequence& tokens, const TextWeights& weights, const TextConfig& cfg);

Tensor pamr_refine(const Tensor& image, const Tensor& probs, const PamrConfig& cfg);

// End-to-end image -> mask, written straight through without the library's
// tiling/volume helpers.
LabelMap segment(const Tensor& image, const VisionModel& model, const ClassEmbeddingSet& classes,
                 const SegmentOptions& options);

}  // namespace naclip::reference
