// OpenMP kernels against the serial reference loops.
//
//   build/naclip_bench --benchmark_filter=Matmul
//   OMP_NUM_THREADS=4 build/naclip_bench

#include <random>

#include <benchmark/benchmark.h>

#include "naclip/attention.hpp"
#include "naclip/numerics.hpp"
#include "naclip/reference.hpp"
#include "naclip/visual_encoder.hpp"
#include "naclip/weight_store.hpp"

using namespace naclip;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> d(0.0f, 1.0f);
    Tensor t(std::move(shape));
    for (float& v : t.values()) v = d(rng);
    return t;
}

AttentionWeights attention_weights(std::size_t width) {
    const float s = 1.0f / std::sqrt(static_cast<float>(width));
    AttentionWeights w{random_tensor({width, 3 * width}, 1), random_tensor({3 * width}, 2), random_tensor({width, width}, 3),
                       random_tensor({width}, 4)};
    for (Tensor* t : {&w.qkv_weight, &w.out_weight})
        for (float& v : t->values()) v *= s;
    return w;
}

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Tensor a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

void BM_MatmulReference(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Tensor a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
    for (auto _ : state) benchmark::DoNotOptimize(reference::matmul(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

// B/16 final block: 196 patch tokens, width 768, 12 heads.
void BM_NaclipAttention(benchmark::State& state) {
    const std::size_t width = 768;
    const Tensor z = random_tensor({196, width}, 5);
    const AttentionWeights w = attention_weights(width);
    const AttentionConfig cfg{.variant = AttentionVariant::naclip, .sigma = 5.0, .num_heads = 12};
    const auto prior = cached_prior_tensor({14, 14}, 5.0);
    for (auto _ : state) benchmark::DoNotOptimize(self_attention(z, w, cfg, prior.get()));
}

void BM_NaclipAttentionReference(benchmark::State& state) {
    const std::size_t width = 768;
    const Tensor z = random_tensor({196, width}, 5);
    const AttentionWeights w = attention_weights(width);
    const AttentionConfig cfg{.variant = AttentionVariant::naclip, .sigma = 5.0, .num_heads = 12};
    for (auto _ : state) benchmark::DoNotOptimize(reference::self_attention(z, w, cfg, {14, 14}));
}

void BM_BilinearUpsample(benchmark::State& state) {
    const Tensor logits = random_tensor({21, 14, 14}, 6);
    for (auto _ : state) benchmark::DoNotOptimize(bilinear_resize(logits, 224, 224));
}

void BM_BilinearUpsampleReference(benchmark::State& state) {
    const Tensor logits = random_tensor({21, 14, 14}, 6);
    for (auto _ : state) benchmark::DoNotOptimize(reference::bilinear_resize(logits, 224, 224));
}

// Full B/16-width forward on random weights, two blocks.
struct ForwardFixture {
    VisionConfig cfg;
    VisionWeights weights;
    Tensor image;

    ForwardFixture() {
        ModelConfig mc = model_preset("ViT-B/16");
        mc.vision.layers = 2;
        mc.text.layers = 1;
        cfg = mc.vision;
        weights = load_vision_weights(decode_archive(encode_archive(random_model_tensors(mc, 9))), cfg);
        image = random_tensor({3, 224, 224}, 7);
    }
};

const ForwardFixture& forward_fixture() {
    static const ForwardFixture f;
    return f;
}

void BM_ForwardFeatures(benchmark::State& state) {
    const auto& f = forward_fixture();
    for (auto _ : state) benchmark::DoNotOptimize(forward_features(f.image, f.weights, f.cfg, EncoderOptions{}));
}

void BM_ForwardFeaturesReference(benchmark::State& state) {
    const auto& f = forward_fixture();
    for (auto _ : state)
        benchmark::DoNotOptimize(reference::forward_features(f.image, f.weights, f.cfg, EncoderOptions{}));
}

}  // namespace

BENCHMARK(BM_Matmul)->Arg(64)->Arg(256)->Arg(768)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MatmulReference)->Arg(64)->Arg(256)->Arg(768)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NaclipAttention)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NaclipAttentionReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BilinearUpsample)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_BilinearUpsampleReference)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ForwardFeatures)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardFeaturesReference)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
