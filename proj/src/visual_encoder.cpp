#include "naclip/visual_encoder.hpp"

#include <algorithm>

#include "naclip/error.hpp"
#include "naclip/numerics.hpp"

namespace naclip {

std::string_view to_string(ArchMode a) noexcept {
    return a == ArchMode::vanilla ? "vanilla" : "reduced";
}

ArchMode parse_arch_mode(std::string_view s) {
    if (s == "vanilla") return ArchMode::vanilla;
    if (s == "reduced") return ArchMode::reduced;
    throw ConfigError("unknown architecture '" + std::string(s) + "' (expected vanilla or reduced)");
}

Tensor embed_patches(const Tensor& image, const VisionWeights& weights, const VisionConfig& cfg) {
    const std::size_t s = cfg.image_size, p = cfg.patch_size, g = cfg.grid_side();
    if (image.shape() != Shape{3, s, s})
        throw DimensionError("visual encoder expects a [3 x " + std::to_string(s) + " x " + std::to_string(s) +
                             "] window, got " + shape_str(image.shape()));

    Tensor patches({g * g, cfg.patch_dim()});
    for (std::size_t gi = 0; gi < g; ++gi) {
        for (std::size_t gj = 0; gj < g; ++gj) {
            auto dst = patches.row(gi * g + gj).begin();
            for (std::size_t c = 0; c < 3; ++c)
                for (std::size_t y = 0; y < p; ++y) {
                    const float* src = image.data() + (c * s + gi * p + y) * s + gj * p;
                    dst = std::copy_n(src, p, dst);
                }
        }
    }
    const Tensor projected = linear(patches, weights.patch_weight, weights.patch_bias);

    const std::size_t d = cfg.width;
    Tensor tokens({1 + g * g, d});
    std::copy_n(weights.class_embedding.data(), d, tokens.row(0).begin());
    for (std::size_t t = 0; t < g * g; ++t) std::copy_n(projected.row(t).begin(), d, tokens.row(t + 1).begin());
    add_inplace(tokens, weights.positional_embedding);
    return tokens;
}

Tensor mlp(const Tensor& x, const EncoderBlockWeights& w) {
    return linear(quick_gelu(linear(x, w.fc1_weight, w.fc1_bias)), w.fc2_weight, w.fc2_bias);
}

Tensor encoder_block(const Tensor& tokens, const EncoderBlockWeights& w, const AttentionConfig& attn,
                     const PriorTensor* prior, AttentionMaps* maps) {
    Tensor z = tokens;
    add_inplace(z, self_attention(layer_norm(tokens, w.ln_1.gamma, w.ln_1.beta), w.attn, attn, prior, maps));
    add_inplace(z, mlp(layer_norm(z, w.ln_2.gamma, w.ln_2.beta), w));
    z.check_finite("encoder block output");
    return z;
}

namespace {

Tensor reduce_patches(const Tensor& patches, const EncoderBlockWeights& w, const AttentionConfig& attn,
                      const PriorTensor* prior, AttentionMaps* maps) {
    return self_attention(layer_norm(patches, w.ln_1.gamma, w.ln_1.beta), w.attn, attn, prior, maps);
}

}  // namespace

Tensor reduced_final_block(const Tensor& tokens, const EncoderBlockWeights& w, const AttentionConfig& attn,
                           const PriorTensor* prior, AttentionMaps* maps) {
    if (tokens.rank() != 2 || tokens.dim(0) < 2)
        throw DimensionError("reduced block expects [(1+hw) x D], got " + shape_str(tokens.shape()));
    return reduce_patches(tokens.slice_rows(1, tokens.dim(0)), w, attn, prior, maps);
}

FeatureGrid forward_features(const Tensor& image, const VisionWeights& weights, const VisionConfig& cfg,
                             const EncoderOptions& options, AttentionMaps* final_maps) {
    cfg.check();
    if (weights.blocks.size() != cfg.layers)
        throw ConfigError("vision weights have " + std::to_string(weights.blocks.size()) + " blocks, config expects " +
                          std::to_string(cfg.layers));
    const std::size_t g = cfg.grid_side();
    std::shared_ptr<const PriorTensor> prior;
    if (needs_prior(options.variant)) prior = cached_prior_tensor({g, g}, options.sigma);

    Tensor z = embed_patches(image, weights, cfg);
    z = layer_norm(z, weights.ln_pre.gamma, weights.ln_pre.beta);
    bool has_cls = true;

    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const bool last = l + 1 == cfg.layers;
        const AttentionConfig attn{
            .variant = (last || options.modify_all_blocks) ? options.variant : AttentionVariant::vanilla,
            .sigma = options.sigma,
            .num_heads = cfg.heads,
        };
        const bool reduced = last && options.arch == ArchMode::reduced;
        AttentionMaps* maps = last ? final_maps : nullptr;
        if (reduced) {
            z = reduce_patches(has_cls ? z.slice_rows(1, z.dim(0)) : z, weights.blocks[l], attn, prior.get(), maps);
            has_cls = false;
            continue;
        }
        if (has_cls && attn.variant != AttentionVariant::vanilla) {
            z = z.slice_rows(1, z.dim(0));
            has_cls = false;
        }
        z = encoder_block(z, weights.blocks[l], attn, prior.get(), maps);
    }
    if (has_cls) z = z.slice_rows(1, z.dim(0));

    z = layer_norm(z, weights.ln_post.gamma, weights.ln_post.beta);
    FeatureGrid fg{g, g, matmul(z, weights.proj)};
    fg.embeddings.check_finite("patch features");
    return fg;
}

}  // namespace naclip
