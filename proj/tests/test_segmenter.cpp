#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "naclip/error.hpp"
#include "naclip/numerics.hpp"
#include "naclip/pamr.hpp"
#include "naclip/reference.hpp"
#include "naclip/segmenter.hpp"
#include "test_support.hpp"

using namespace naclip;
using naclip::testing::random_tensor;

namespace {

std::set<std::pair<std::size_t, std::size_t>> origins(const TiledImage& t) {
    std::set<std::pair<std::size_t, std::size_t>> s;
    for (const auto& w : t.windows) s.insert({w.y, w.x});
    return s;
}

SegmentOptions no_pamr(std::size_t short_side = 224) {
    SegmentOptions o;
    o.sliding.short_side = short_side;
    o.pamr.enabled = false;
    return o;
}

}  // namespace

TEST_CASE("tile_origins") {
    CHECK(tile_origins(336, 224, 112) == std::vector<std::size_t>{0, 112});
    CHECK(tile_origins(448, 224, 112) == std::vector<std::size_t>{0, 112, 224});
    CHECK(tile_origins(224, 224, 112) == std::vector<std::size_t>{0});
    CHECK(tile_origins(400, 224, 112) == std::vector<std::size_t>{0, 112, 176});
    CHECK_THROWS_AS(tile_origins(100, 224, 112), DimensionError);
}

TEST_CASE("resize_and_tile") {
    SlidingConfig cfg;
    SUBCASE("square input") {
        const TiledImage t = resize_and_tile(Tensor({3, 336, 336}), cfg);
        CHECK(t.windows.size() == 4);
        CHECK(origins(t) == std::set<std::pair<std::size_t, std::size_t>>{{0, 0}, {0, 112}, {112, 0}, {112, 112}});
        for (const auto& w : t.windows) CHECK(w.pixels.shape() == Shape{3, 224, 224});
    }
    SUBCASE("landscape input") {
        const TiledImage t = resize_and_tile(Tensor({3, 336, 448}), cfg);
        CHECK(t.windows.size() == 6);
        CHECK(t.resized.shape() == Shape{3, 336, 448});
    }
    SUBCASE("short side override to the window size") {
        cfg.short_side = 224;
        const TiledImage t = resize_and_tile(Tensor({3, 224, 224}), cfg);
        CHECK(t.windows.size() == 1);
    }
    SUBCASE("rescaling") {
        const TiledImage t = resize_and_tile(Tensor({3, 100, 150}, 0.25f), cfg);
        CHECK(t.resized.shape() == Shape{3, 336, 504});
        CHECK(t.windows.size() == 8);
        CHECK(resize_short_side(Tensor({3, 480, 333}), 336).shape() == Shape{3, 484, 336});
    }
    SUBCASE("window pixels are crops") {
        std::mt19937_64 rng(41);
        const TiledImage t = resize_and_tile(testing::random_image(336, 448, rng), cfg);
        const Window& w = t.windows.back();
        CHECK(w.pixels[(2 * 224 + 10) * 224 + 20] == t.resized[(2 * 336 + w.y + 10) * 448 + w.x + 20]);
    }
    SUBCASE("bad configs") {
        cfg.stride = 300;
        CHECK_THROWS_AS(cfg.check(), ConfigError);
        cfg = {};
        cfg.short_side = 100;
        CHECK_THROWS_AS(cfg.check(), ConfigError);
    }
}

TEST_CASE("window_logits") {
    std::mt19937_64 rng(42);
    ClassEmbeddingSet classes = testing::random_classes(5, 6, rng);
    FeatureGrid fg{2, 2, random_tensor({4, 6}, rng)};
    for (std::size_t c = 0; c < 6; ++c) fg.embeddings.at(1, c) = classes.embeddings.at(3, c);

    const Tensor l = window_logits(fg, classes, 100.0f);
    CHECK(l.shape() == Shape{5, 2, 2});
    CHECK(l[3 * 4 + 1] == doctest::Approx(100.0f).epsilon(1e-6));
    for (std::size_t c = 0; c < 5; ++c)
        if (c != 3) CHECK(l[c * 4 + 1] < l[3 * 4 + 1]);

    FeatureGrid scaled = fg;
    for (float& v : scaled.embeddings.values()) v *= 5.0f;
    CHECK(max_abs_diff(window_logits(scaled, classes, 100.0f), l) <= 1e-4f);

    for (std::size_t c = 0; c < 5; ++c)
        for (std::size_t p = 0; p < 4; ++p) {
            double dot = 0, na = 0, nb = 0;
            for (std::size_t k = 0; k < 6; ++k) {
                dot += double(fg.embeddings.at(p, k)) * classes.embeddings.at(c, k);
                na += double(fg.embeddings.at(p, k)) * fg.embeddings.at(p, k);
                nb += double(classes.embeddings.at(c, k)) * classes.embeddings.at(c, k);
            }
            CHECK(std::abs(window_logits(fg, classes, 1.0f)[c * 4 + p] - dot / std::sqrt(na * nb)) <= 1e-6);
        }
}

TEST_CASE("LogitVolume") {
    std::mt19937_64 rng(43);
    const Tensor a = random_tensor({2, 4, 4}, rng), b = random_tensor({2, 4, 4}, rng);

    SUBCASE("single window") {
        LogitVolume v(2, 8, 8);
        v.accumulate(a, 0, 0, 8);
        CHECK(v.finalize() == bilinear_resize(a, 8, 8));
    }
    SUBCASE("identical overlapping windows average to themselves") {
        const Tensor flat({2, 4, 4}, 1.5f);
        LogitVolume v(2, 8, 12);
        v.accumulate(flat, 0, 0, 8);
        v.accumulate(flat, 0, 4, 8);
        CHECK(v.coverage()[5] == 2);
        CHECK(v.coverage()[0] == 1);
        const Tensor out = v.finalize();
        for (float x : out.values()) CHECK(x == doctest::Approx(1.5f));
    }
    SUBCASE("different windows average elementwise") {
        LogitVolume v(2, 8, 12);
        v.accumulate(a, 0, 0, 8);
        v.accumulate(b, 0, 4, 8);
        const Tensor out = v.finalize(), ua = bilinear_resize(a, 8, 8), ub = bilinear_resize(b, 8, 8);
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t y = 0; y < 8; ++y)
                for (std::size_t x = 0; x < 12; ++x) {
                    float expect;
                    if (x < 4) expect = ua[(c * 8 + y) * 8 + x];
                    else if (x >= 8) expect = ub[(c * 8 + y) * 8 + x - 4];
                    else expect = (ua[(c * 8 + y) * 8 + x] + ub[(c * 8 + y) * 8 + x - 4]) / 2;
                    CHECK(out[(c * 8 + y) * 12 + x] == doctest::Approx(expect).epsilon(1e-6));
                }
    }
    SUBCASE("uncovered pixels and bad placement") {
        LogitVolume v(2, 8, 12);
        v.accumulate(a, 0, 0, 8);
        CHECK(v.min_coverage() == 0);
        CHECK_THROWS_AS(v.finalize(), DimensionError);
        CHECK_THROWS_AS(v.accumulate(a, 1, 0, 8), DimensionError);
        CHECK_THROWS_AS(v.accumulate(Tensor({3, 4, 4}), 0, 0, 8), DimensionError);
    }
}

TEST_CASE("pamr_refine") {
    std::mt19937_64 rng(44);
    const Tensor img = random_tensor({3, 9, 11}, rng);
    const Tensor probs = softmax_classes(random_tensor({4, 9, 11}, rng, -3, 3));

    SUBCASE("zero iterations") {
        PamrConfig cfg;
        cfg.iterations = 0;
        CHECK(pamr_refine(img, probs, cfg) == probs);
    }
    SUBCASE("constant image averages the eight neighbours") {
        const Tensor p({1, 3, 3}, {0, 1, 2, 3, 4, 5, 6, 7, 8});
        PamrConfig cfg;
        cfg.iterations = 1;
        cfg.dilations = {1};
        const Tensor out = pamr_refine(Tensor({3, 3, 3}, 0.7f), p, cfg);
        const std::vector<float> expect{1.5f, 2.125f, 2.75f, 3.375f, 4.0f, 4.625f, 5.25f, 5.875f, 6.5f};
        for (std::size_t i = 0; i < 9; ++i) CHECK(out[i] == doctest::Approx(expect[i]).epsilon(1e-6));
    }
    SUBCASE("convex combination") {
        const Tensor out = pamr_refine(img, probs, PamrConfig{});
        for (std::size_t y = 0; y < 9; ++y)
            for (std::size_t x = 0; x < 11; ++x) {
                double s = 0;
                for (std::size_t c = 0; c < 4; ++c) {
                    const float v = out[(c * 9 + y) * 11 + x];
                    CHECK(v >= 0.0f);
                    s += v;
                }
                CHECK(std::abs(s - 1.0) <= 1e-5);
            }
    }
    SUBCASE("matches the reference") {
        PamrConfig cfg;
        cfg.iterations = 3;
        CHECK(max_abs_diff(pamr_refine(img, probs, cfg), reference::pamr_refine(img, probs, cfg)) <= 1e-6f);
    }
    SUBCASE("edges attract less than flat regions") {
        Tensor step({1, 1, 6});
        for (std::size_t x = 3; x < 6; ++x) step[x] = 1.0f;
        const Tensor p({2, 1, 6}, {1, 1, 1, 0, 0, 0, 0, 0, 0, 1, 1, 1});
        PamrConfig cfg;
        cfg.dilations = {1};
        const Tensor out = pamr_refine(step, p, cfg);
        CHECK(out[2] > 0.9f);
        CHECK(out[9] > 0.9f);
    }
    CHECK_THROWS_AS(pamr_refine(Tensor({3, 4, 4}), probs, PamrConfig{}), DimensionError);
}

TEST_CASE("argmax and nearest resize") {
    const Tensor vol({3, 1, 3}, {1, 5, 2, 1, 5, 9, 0, 4, 9});
    const LabelMap m = argmax_classes(vol);
    CHECK(m.labels == std::vector<std::uint16_t>{0, 0, 1});

    LabelMap small{2, 2, {0, 1, 2, 3}};
    const LabelMap big = resize_nearest(small, 4, 6);
    CHECK(big.width == 6);
    CHECK(big.height == 4);
    CHECK(big.at(0, 2) == 0);
    CHECK(big.at(0, 3) == 1);
    CHECK(big.at(3, 5) == 3);
    CHECK(resize_nearest(big, 2, 2) == small);
    CHECK(resize_nearest(small, 2, 2) == small);
}

TEST_CASE("segment") {
    const VisionModel model = testing::tiny_vision();
    std::mt19937_64 rng(45);
    const Tensor img = testing::random_image(224, 224, rng);

    SUBCASE("one class") {
        const SegmentResult r = segment(img, model, testing::random_classes(1, 8, rng), SegmentOptions{});
        CHECK(r.mask.width == 224);
        for (auto l : r.mask.labels) CHECK(l == 0);
    }
    SUBCASE("duplicate classes resolve to the lower index") {
        ClassEmbeddingSet classes = testing::random_classes(6, 8, rng);
        for (std::size_t c = 0; c < 8; ++c) classes.embeddings.at(5, c) = classes.embeddings.at(2, c);
        const SegmentResult r = segment(img, model, classes, no_pamr());
        for (auto l : r.mask.labels) CHECK(l != 5);
        const SegmentResult rp = segment(img, model, classes, SegmentOptions{});
        for (auto l : rp.mask.labels) CHECK(l != 5);
    }
    SUBCASE("single window without refinement is the upsampled window argmax") {
        const ClassEmbeddingSet classes = testing::random_classes(3, 8, rng);
        const SegmentOptions o = no_pamr();
        const SegmentResult r = segment(img, model, classes, o);
        const FeatureGrid fg = forward_features(normalize_image(img, model.config), model.weights, model.config, o.encoder);
        const LabelMap direct = argmax_classes(bilinear_resize(window_logits(fg, classes), 224, 224));
        CHECK(r.mask == direct);
    }
    SUBCASE("temperature does not change the mask") {
        const Tensor wide = testing::random_image(200, 260, rng);
        const ClassEmbeddingSet classes = testing::random_classes(4, 8, rng);
        SegmentOptions hot = no_pamr(336), cold = no_pamr(336);
        hot.temperature = 100.0f;
        cold.temperature = 1.0f;
        const SegmentResult a = segment(wide, model, classes, hot);
        CHECK(a.mask.width == 260);
        CHECK(a.mask.height == 200);
        CHECK(a.mask == segment(wide, model, classes, cold).mask);
    }
    SUBCASE("deterministic and equal to the reference pipeline") {
        const ClassEmbeddingSet classes = testing::random_classes(2, 8, rng);
        const Tensor img2 = testing::random_image(240, 300, rng);
        SegmentOptions o;
        o.pamr.iterations = 2;
        const SegmentResult a = segment(img2, model, classes, o, true);
        CHECK(a.mask == segment(img2, model, classes, o).mask);
        CHECK(a.mask == reference::segment(img2, model, classes, o));
        CHECK(a.attention.heads.size() == 2);
        CHECK(a.volume.shape() == Shape{2, 336, 420});
    }
    SUBCASE("errors") {
        ClassEmbeddingSet none;
        CHECK_THROWS_AS(segment(img, model, none, SegmentOptions{}), ConfigError);
        SegmentOptions o;
        o.sliding.window = 112;
        o.sliding.stride = 56;
        CHECK_THROWS_AS(segment(img, model, testing::random_classes(2, 8, rng), o), ConfigError);
    }
}
