#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "naclip/gaussian_prior.hpp"
#include "naclip/tensor.hpp"

namespace naclip {

// Which logits feed the attention softmax.
//   vanilla            q_i . k_j / sqrt(d)
//   key_key            k_i . k_j / sqrt(d)
//   neighbourhood_only omega(i)_j             (similarity term fixed at 0)
//   naclip             k_i . k_j / sqrt(d) + omega(i)_j   (omega unscaled)
enum class AttentionVariant { vanilla, key_key, neighbourhood_only, naclip };

std::string_view to_string(AttentionVariant v) noexcept;
// Accepts the CLI spellings: vanilla, kk, n-only, naclip (and the enum names).
AttentionVariant parse_attention_variant(std::string_view s);
bool needs_prior(AttentionVariant v) noexcept;

struct AttentionConfig {
    AttentionVariant variant = AttentionVariant::vanilla;
    double sigma = GaussianPrior::kDefaultSigma;
    std::size_t num_heads = 1;
    // Row i may only attend to columns <= i (text encoder).
    bool causal = false;

    // width / num_heads; throws ConfigError unless it divides evenly.
    std::size_t head_dim(std::size_t width) const;
};

// Linear weights in "output = input x W" layout. The qkv columns are
// [q | k | v], each `width` wide; head h owns columns [h*d, (h+1)*d) of
// every block.
struct AttentionWeights {
    Tensor qkv_weight;  // [D x 3D]
    Tensor qkv_bias;    // [3D]
    Tensor out_weight;  // [D x D]
    Tensor out_bias;    // [D]

    std::size_t width() const { return out_bias.size(); }
    void check_shapes(std::size_t width) const;
};

struct HeadProjections {
    std::vector<Tensor> q, k, v;  // per head, [N x d]
};

// Per-head row-stochastic [N x N] maps, rows indexed by query token.
struct AttentionMaps {
    std::vector<Tensor> heads;
};

HeadProjections project_qkv(const Tensor& tokens, const AttentionWeights& w, std::size_t num_heads);

// Pre-softmax logits for one head. `prior` must be given (with N == h*w)
// when the variant uses it; it is added identically to every head.
Tensor attention_logits(const Tensor& q, const Tensor& k, const PriorTensor* prior, const AttentionConfig& cfg);

// softmax_rows(logits) x v. With `causal`, entries above the diagonal are
// excluded from the softmax.
Tensor attend(const Tensor& logits, const Tensor& v, bool causal = false);

// Multi-head self-attention over the N rows of `tokens` [N x D]: heads are
// concatenated in order and passed through the output projection.
Tensor self_attention(const Tensor& tokens, const AttentionWeights& w, const AttentionConfig& cfg,
                      const PriorTensor* prior, AttentionMaps* maps = nullptr);

}  // namespace naclip
