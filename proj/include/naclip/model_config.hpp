#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "naclip/attention.hpp"
#include "naclip/tensor.hpp"
#include "naclip/weight_store.hpp"

namespace naclip {

struct VisionConfig {
    std::size_t image_size = 224;
    std::size_t patch_size = 16;
    std::size_t layers = 12;
    std::size_t width = 768;
    std::size_t heads = 12;
    std::size_t output_dim = 512;
    std::size_t mlp_ratio = 4;
    // Per-channel RGB normalization applied to [0,1] pixel values.
    std::array<float, 3> mean{0.48145466f, 0.4578275f, 0.40821073f};
    std::array<float, 3> std{0.26862954f, 0.26130258f, 0.27577711f};

    std::size_t grid_side() const noexcept { return image_size / patch_size; }
    std::size_t num_patches() const noexcept { return grid_side() * grid_side(); }
    std::size_t num_tokens() const noexcept { return 1 + num_patches(); }
    std::size_t patch_dim() const noexcept { return 3 * patch_size * patch_size; }
    void check() const;
};

struct TextConfig {
    std::size_t context_length = 77;
    std::size_t vocab_size = 49408;
    std::size_t layers = 12;
    std::size_t width = 512;
    std::size_t heads = 8;
    std::size_t output_dim = 512;
    std::size_t mlp_ratio = 4;
    void check() const;
};

struct ModelConfig {
    std::string name;
    VisionConfig vision;
    TextConfig text;
};

// "ViT-B/16", "ViT-B/32", "ViT-L/14" and "tiny" (L=2, D=8, 2 heads on both
// towers; for tests and smoke runs).
ModelConfig model_preset(std::string_view name);
std::vector<std::string> preset_names();

// Canonical archive names:
//   visual.patch_embed.weight          [3*P*P x D]  input flattened as (channel, y, x)
//   visual.patch_embed.bias            [D]
//   visual.class_embedding             [D]
//   visual.positional_embedding        [(1+hw) x D] row 0 is the [CLS] slot
//   visual.ln_pre.{weight,bias}        [D]
//   visual.blocks.{i}.ln_1.{weight,bias}, .ln_2.{weight,bias}        [D]
//   visual.blocks.{i}.attn.qkv.weight  [D x 3D]  .attn.qkv.bias [3D]
//   visual.blocks.{i}.attn.out_proj.weight [D x D] .attn.out_proj.bias [D]
//   visual.blocks.{i}.mlp.fc1.weight   [D x rD]  .mlp.fc1.bias [rD]
//   visual.blocks.{i}.mlp.fc2.weight   [rD x D]  .mlp.fc2.bias [D]
//   visual.ln_post.{weight,bias}       [D]
//   visual.proj                        [D x D_out]
//   text.token_embedding               [vocab x Dt]
//   text.positional_embedding          [ctx x Dt]
//   text.blocks.{i}.*                  as for visual blocks, width Dt
//   text.ln_final.{weight,bias}        [Dt]
//   text.projection                    [Dt x D_out]
WeightManifest vision_manifest(const VisionConfig& cfg);
WeightManifest text_manifest(const TextConfig& cfg);
WeightManifest model_manifest(const ModelConfig& cfg);

struct LayerNormWeights {
    Tensor gamma;
    Tensor beta;
};

struct EncoderBlockWeights {
    LayerNormWeights ln_1;
    AttentionWeights attn;
    LayerNormWeights ln_2;
    Tensor fc1_weight, fc1_bias;
    Tensor fc2_weight, fc2_bias;
};

struct VisionWeights {
    Tensor patch_weight, patch_bias;
    Tensor class_embedding;
    Tensor positional_embedding;
    LayerNormWeights ln_pre;
    std::vector<EncoderBlockWeights> blocks;
    LayerNormWeights ln_post;
    Tensor proj;
};

struct TextWeights {
    Tensor token_embedding;
    Tensor positional_embedding;
    std::vector<EncoderBlockWeights> blocks;
    LayerNormWeights ln_final;
    Tensor projection;
};

// Both assume validate() already passed for the matching manifest.
VisionWeights load_vision_weights(const TensorArchive& archive, const VisionConfig& cfg);
TextWeights load_text_weights(const TensorArchive& archive, const TextConfig& cfg);

// Randomly initialized tensors covering model_manifest(cfg): linear weights
// ~ N(0, 1/in), biases ~ N(0, 0.02), LN gains near 1, embeddings ~ N(0, 0.5).
std::vector<NamedTensor> random_model_tensors(const ModelConfig& cfg, std::uint64_t seed);

}  // namespace naclip
