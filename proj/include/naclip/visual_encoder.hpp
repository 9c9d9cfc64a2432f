#pragma once

#include <cstddef>
#include <string_view>

#include "naclip/attention.hpp"
#include "naclip/model_config.hpp"
#include "naclip/tensor.hpp"

namespace naclip {

// Architecture of the last encoder block.
//   vanilla  Z + SA(LN(Z)), then + MLP(LN(.))
//   reduced  SA(LN(Z)) over patch tokens only; no residuals, no MLP
enum class ArchMode { vanilla, reduced };

std::string_view to_string(ArchMode a) noexcept;
ArchMode parse_arch_mode(std::string_view s);

struct EncoderOptions {
    AttentionVariant variant = AttentionVariant::naclip;
    ArchMode arch = ArchMode::reduced;
    double sigma = GaussianPrior::kDefaultSigma;
    // Apply `variant` in every block instead of only the last one. The
    // reduction still touches only the last block.
    bool modify_all_blocks = false;

    static EncoderOptions clip_baseline() { return {AttentionVariant::vanilla, ArchMode::vanilla}; }
};

// Patch embeddings after the encoder. Row i*w + j holds patch (i, j), with
// i the row (y) and j the column (x) of the patch grid.
struct FeatureGrid {
    std::size_t h = 0;
    std::size_t w = 0;
    Tensor embeddings;  // [hw x D_out]

    std::span<const float> at(std::size_t i, std::size_t j) const { return embeddings.row(i * w + j); }
};

// [3 x S x S] normalized image -> [(1+hw) x D]: [CLS] row first, then patches
// in row-major grid order, positional embeddings added. A patch is flattened
// as (channel, y, x) before the projection.
Tensor embed_patches(const Tensor& image, const VisionWeights& weights, const VisionConfig& cfg);

Tensor mlp(const Tensor& x, const EncoderBlockWeights& w);

// Full pre-LN block over however many tokens Z holds. `prior` is consulted
// only by variants that use it.
Tensor encoder_block(const Tensor& tokens, const EncoderBlockWeights& w, const AttentionConfig& attn,
                     const PriorTensor* prior = nullptr, AttentionMaps* maps = nullptr);

// SA(LN(Z)) on the patch tokens of Z [(1+hw) x D]; returns [hw x D].
Tensor reduced_final_block(const Tensor& tokens, const EncoderBlockWeights& w, const AttentionConfig& attn,
                           const PriorTensor* prior, AttentionMaps* maps = nullptr);

// Image [3 x S x S] (already normalized) -> per-patch embeddings. Blocks
// before the last run vanilla attention over all tokens. Any block that runs a
// modified variant, and a reduced last block, attends over patch tokens only;
// the [CLS] token is dropped at that point. Final LN and projection are
// applied to every patch token. `final_maps` receives the last block's
// attention maps when non-null.
FeatureGrid forward_features(const Tensor& image, const VisionWeights& weights, const VisionConfig& cfg,
                             const EncoderOptions& options, AttentionMaps* final_maps = nullptr);

}  // namespace naclip
