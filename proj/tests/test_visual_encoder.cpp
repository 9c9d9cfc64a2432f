#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "naclip/error.hpp"
#include "naclip/numerics.hpp"
#include "naclip/reference.hpp"
#include "naclip/visual_encoder.hpp"
#include "test_support.hpp"

using namespace naclip;
using naclip::testing::random_block;
using naclip::testing::random_tensor;

namespace {

AttentionConfig cfg_for(AttentionVariant v, std::size_t heads) { return {.variant = v, .sigma = 5.0, .num_heads = heads}; }

VisionConfig small_vision() {
    VisionConfig c;
    c.image_size = 32;
    c.patch_size = 8;
    c.layers = 2;
    c.width = 8;
    c.heads = 2;
    c.output_dim = 8;
    return c;
}

}  // namespace

TEST_CASE("embed_patches") {
    const VisionModel tiny = testing::tiny_vision();
    VisionWeights w = tiny.weights;
    const VisionConfig& cfg = tiny.config;

    SUBCASE("zero image and positions give the patch bias") {
        w.positional_embedding = Tensor(w.positional_embedding.shape());
        const Tensor t = embed_patches(Tensor({3, 224, 224}), w, cfg);
        CHECK(t.shape() == Shape{197, 8});
        CHECK(t.row(0)[3] == w.class_embedding[3]);
        for (std::size_t r = 1; r < 197; ++r)
            for (std::size_t c = 0; c < 8; ++c) CHECK(t.at(r, c) == w.patch_bias[c]);
    }
    SUBCASE("one nonzero patch touches one row") {
        w.positional_embedding = Tensor(w.positional_embedding.shape());
        Tensor img({3, 224, 224});
        img[(1 * 224 + 2 * 16 + 5) * 224 + 3 * 16 + 7] = 1.0f;  // channel 1, patch (2, 3)
        const Tensor t = embed_patches(img, w, cfg);
        const Tensor base = embed_patches(Tensor({3, 224, 224}), w, cfg);
        for (std::size_t r = 0; r < 197; ++r) {
            const bool changed = max_abs_diff(Tensor({8}, std::vector<float>(t.row(r).begin(), t.row(r).end())),
                                              Tensor({8}, std::vector<float>(base.row(r).begin(), base.row(r).end()))) > 0;
            CHECK(changed == (r == 1 + 2 * 14 + 3));
        }
        const std::size_t flat = 1 * 256 + 5 * 16 + 7;
        CHECK(t.at(1 + 2 * 14 + 3, 4) == doctest::Approx(base.at(1, 4) + w.patch_weight.at(flat, 4)));
    }
    SUBCASE("wrong input size") {
        CHECK_THROWS_AS(embed_patches(Tensor({3, 336, 336}), w, cfg), DimensionError);
        CHECK_THROWS_AS(embed_patches(Tensor({1, 224, 224}), w, cfg), DimensionError);
    }
    CHECK(model_preset("ViT-B/16").vision.num_tokens() == 197);
}

TEST_CASE("encoder_block") {
    std::mt19937_64 rng(21);
    const EncoderBlockWeights w = random_block(8, rng);
    const Tensor z = random_tensor({10, 8}, rng);
    const auto cfg = cfg_for(AttentionVariant::vanilla, 2);

    SUBCASE("zero weights are the identity") {
        EncoderBlockWeights zero = w;
        for (Tensor* t : {&zero.attn.qkv_weight, &zero.attn.qkv_bias, &zero.attn.out_weight, &zero.attn.out_bias,
                          &zero.fc1_weight, &zero.fc1_bias, &zero.fc2_weight, &zero.fc2_bias})
            *t = Tensor(t->shape());
        CHECK(encoder_block(z, zero, cfg) == z);
    }
    SUBCASE("matches the straight-line reference") {
        CHECK(max_abs_diff(encoder_block(z, w, cfg), reference::encoder_block(z, w, cfg, {})) <= 1e-5f);
        const PriorTensor prior(GridSize{2, 5}, 5.0);
        const auto na = cfg_for(AttentionVariant::naclip, 2);
        CHECK(max_abs_diff(encoder_block(z, w, na, &prior), reference::encoder_block(z, w, na, {2, 5})) <= 1e-5f);
    }
    SUBCASE("the MLP residual matters") {
        const Tensor full = encoder_block(z, w, cfg);
        Tensor attn_only = z;
        add_inplace(attn_only, self_attention(layer_norm(z, w.ln_1.gamma, w.ln_1.beta), w.attn, cfg, nullptr));
        CHECK(max_abs_diff(full, attn_only) > 1e-3f);
        Tensor expect = attn_only;
        add_inplace(expect, mlp(layer_norm(attn_only, w.ln_2.gamma, w.ln_2.beta), w));
        CHECK(max_abs_diff(full, expect) <= 1e-6f);
    }
    CHECK(encoder_block(z, w, cfg).shape() == z.shape());
}

TEST_CASE("reduced_final_block") {
    std::mt19937_64 rng(22);
    const EncoderBlockWeights w = random_block(8, rng);
    const Tensor z = random_tensor({1 + 12, 8}, rng);
    const Tensor patches = z.slice_rows(1, 13);
    const PriorTensor prior(GridSize{3, 4}, 5.0);

    for (auto v : {AttentionVariant::vanilla, AttentionVariant::naclip}) {
        const auto cfg = cfg_for(v, 2);
        const Tensor out = reduced_final_block(z, w, cfg, &prior);
        CHECK(out.shape() == Shape{12, 8});
        const Tensor manual = self_attention(layer_norm(patches, w.ln_1.gamma, w.ln_1.beta), w.attn, cfg, &prior);
        CHECK(out == manual);
        CHECK(max_abs_diff(out, encoder_block(z, w, cfg_for(AttentionVariant::vanilla, 2)).slice_rows(1, 13)) > 1e-3f);
    }
    CHECK_THROWS_AS(reduced_final_block(patches, w, cfg_for(AttentionVariant::naclip, 2), &prior), DimensionError);
}

TEST_CASE("forward_features") {
    const VisionModel tiny = testing::tiny_vision();
    std::mt19937_64 rng(23);
    const Tensor img = random_tensor({3, 224, 224}, rng, -2, 2);

    SUBCASE("grid shape and determinism") {
        const FeatureGrid a = forward_features(img, tiny.weights, tiny.config, EncoderOptions{});
        const FeatureGrid b = forward_features(img, tiny.weights, tiny.config, EncoderOptions{});
        CHECK(a.h == 14);
        CHECK(a.w == 14);
        CHECK(a.embeddings.shape() == Shape{196, 8});
        CHECK(a.embeddings == b.embeddings);
        CHECK(a.at(2, 3).data() == a.embeddings.row(2 * 14 + 3).data());
    }
    SUBCASE("every ablation matches the reference model") {
        for (auto arch : {ArchMode::vanilla, ArchMode::reduced})
            for (auto v : {AttentionVariant::vanilla, AttentionVariant::key_key, AttentionVariant::neighbourhood_only,
                           AttentionVariant::naclip})
                for (bool all : {false, true}) {
                    EncoderOptions o;
                    o.arch = arch;
                    o.variant = v;
                    o.modify_all_blocks = all;
                    const FeatureGrid a = forward_features(img, tiny.weights, tiny.config, o);
                    const FeatureGrid r = reference::forward_features(img, tiny.weights, tiny.config, o);
                    CAPTURE(to_string(arch));
                    CAPTURE(to_string(v));
                    CHECK(max_abs_diff(a.embeddings, r.embeddings) <= 1e-5f);
                }
    }
    SUBCASE("configurations differ") {
        const Tensor base =
            forward_features(img, tiny.weights, tiny.config, EncoderOptions::clip_baseline()).embeddings;
        const Tensor full = forward_features(img, tiny.weights, tiny.config, EncoderOptions{}).embeddings;
        CHECK(max_abs_diff(base, full) > 1e-4f);
    }
    SUBCASE("final maps cover the patch grid") {
        AttentionMaps maps;
        forward_features(img, tiny.weights, tiny.config, EncoderOptions{}, &maps);
        REQUIRE(maps.heads.size() == 2);
        CHECK(maps.heads[0].shape() == Shape{196, 196});
        AttentionMaps vanilla_maps;
        forward_features(img, tiny.weights, tiny.config, EncoderOptions::clip_baseline(), &vanilla_maps);
        CHECK(vanilla_maps.heads[0].shape() == Shape{197, 197});
    }
    SUBCASE("smaller patch grid") {
        const VisionConfig c = small_vision();
        ModelConfig mc = model_preset("tiny");
        mc.vision = c;
        const TensorArchive a = decode_archive(encode_archive(random_model_tensors(mc, 5)));
        const VisionWeights w = load_vision_weights(a, c);
        const FeatureGrid f = forward_features(random_tensor({3, 32, 32}, rng), w, c, EncoderOptions{});
        CHECK(f.embeddings.shape() == Shape{16, 8});
    }
    CHECK(parse_arch_mode("reduced") == ArchMode::reduced);
    CHECK_THROWS_AS(parse_arch_mode("tiny"), ConfigError);
}
