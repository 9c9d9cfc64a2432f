#include "naclip/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include "naclip/error.hpp"
#include "naclip/numerics.hpp"

namespace naclip {

void SlidingConfig::check() const {
    if (window == 0 || stride == 0) throw ConfigError("window and stride must be positive");
    if (stride > window) throw ConfigError("stride larger than the window leaves gaps");
    if (short_side < window) throw ConfigError("short side must be at least the window size");
}

std::vector<std::size_t> tile_origins(std::size_t extent, std::size_t window, std::size_t stride) {
    if (extent < window) throw DimensionError("extent smaller than the sliding window");
    const std::size_t count = (extent - window + stride - 1) / stride + 1;
    std::vector<std::size_t> origins;
    origins.reserve(count);
    for (std::size_t i = 0; i < count; ++i) origins.push_back(std::min(i * stride, extent - window));
    return origins;
}

Tensor resize_short_side(const Tensor& image, std::size_t short_side) {
    if (image.rank() != 3) throw DimensionError("expected [C x H x W], got " + shape_str(image.shape()));
    const std::size_t h = image.dim(1), w = image.dim(2);
    if (h == 0 || w == 0) throw DimensionError("empty image");
    std::size_t out_h, out_w;
    if (h <= w) {
        out_h = short_side;
        out_w = static_cast<std::size_t>(std::lround(static_cast<double>(w) * short_side / h));
    } else {
        out_w = short_side;
        out_h = static_cast<std::size_t>(std::lround(static_cast<double>(h) * short_side / w));
    }
    return bilinear_resize(image, out_h, out_w);
}

TiledImage resize_and_tile(const Tensor& image, const SlidingConfig& cfg) {
    cfg.check();
    TiledImage out{resize_short_side(image, cfg.short_side), {}};
    const std::size_t c = out.resized.dim(0), h = out.resized.dim(1), w = out.resized.dim(2);
    for (std::size_t y : tile_origins(h, cfg.window, cfg.stride)) {
        for (std::size_t x : tile_origins(w, cfg.window, cfg.stride)) {
            Tensor win({c, cfg.window, cfg.window});
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t r = 0; r < cfg.window; ++r)
                    std::copy_n(out.resized.data() + (ch * h + y + r) * w + x, cfg.window,
                                win.data() + (ch * cfg.window + r) * cfg.window);
            out.windows.push_back({std::move(win), y, x});
        }
    }
    return out;
}

Tensor normalize_image(const Tensor& image, const VisionConfig& cfg) {
    if (image.rank() != 3 || image.dim(0) != 3) throw DimensionError("expected an RGB [3 x H x W] image");
    Tensor out = image;
    const std::size_t plane = image.dim(1) * image.dim(2);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = (image[c * plane + i] - cfg.mean[c]) / cfg.std[c];
    return out;
}

Tensor window_logits(const FeatureGrid& features, const ClassEmbeddingSet& classes, float temperature) {
    const Tensor& emb = features.embeddings;
    const Tensor& cls = classes.embeddings;
    if (emb.rank() != 2 || cls.rank() != 2 || emb.dim(1) != cls.dim(1))
        throw DimensionError("patch features " + shape_str(emb.shape()) + " and class embeddings " +
                             shape_str(cls.shape()) + " disagree");
    const std::size_t n = emb.dim(0), c = cls.dim(0), d = emb.dim(1);
    if (n != features.h * features.w) throw DimensionError("feature grid size mismatch");
    constexpr double eps = 1e-12;

    std::vector<double> cls_norm(c);
    for (std::size_t k = 0; k < c; ++k) {
        double s = 0.0;
        for (float v : cls.row(k)) s += static_cast<double>(v) * v;
        cls_norm[k] = std::max(std::sqrt(s), eps);
    }
    Tensor out({c, features.h, features.w});
    for (std::size_t t = 0; t < n; ++t) {
        auto p = emb.row(t);
        double s = 0.0;
        for (float v : p) s += static_cast<double>(v) * v;
        const double p_norm = std::max(std::sqrt(s), eps);
        for (std::size_t k = 0; k < c; ++k) {
            auto q = cls.row(k);
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += static_cast<double>(p[j]) * q[j];
            out[k * n + t] = static_cast<float>(dot / (p_norm * cls_norm[k])) * temperature;
        }
    }
    return out;
}

LogitVolume::LogitVolume(std::size_t classes, std::size_t height, std::size_t width)
    : sum_({classes, height, width}), coverage_(height * width, 0) {}

void LogitVolume::accumulate(const Tensor& logits, std::size_t y, std::size_t x, std::size_t window) {
    const std::size_t c = sum_.dim(0), h = sum_.dim(1), w = sum_.dim(2);
    if (logits.rank() != 3 || logits.dim(0) != c)
        throw DimensionError("window logits " + shape_str(logits.shape()) + " do not match " + std::to_string(c) +
                             " classes");
    if (y + window > h || x + window > w)
        throw DimensionError("window at (" + std::to_string(y) + ", " + std::to_string(x) + ") exceeds the " +
                             std::to_string(h) + "x" + std::to_string(w) + " volume");
    const Tensor up = bilinear_resize(logits, window, window);
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t r = 0; r < window; ++r) {
            float* dst = sum_.data() + (k * h + y + r) * w + x;
            const float* src = up.data() + (k * window + r) * window;
            for (std::size_t q = 0; q < window; ++q) dst[q] += src[q];
        }
    for (std::size_t r = 0; r < window; ++r)
        for (std::size_t q = 0; q < window; ++q) ++coverage_[(y + r) * w + x + q];
}

std::uint32_t LogitVolume::min_coverage() const noexcept {
    return coverage_.empty() ? 0 : *std::min_element(coverage_.begin(), coverage_.end());
}

Tensor LogitVolume::finalize() const {
    if (min_coverage() == 0) throw DimensionError("logit volume has uncovered pixels");
    Tensor out = sum_;
    const std::size_t plane = coverage_.size();
    for (std::size_t k = 0; k < sum_.dim(0); ++k)
        for (std::size_t i = 0; i < plane; ++i) out[k * plane + i] /= static_cast<float>(coverage_[i]);
    return out;
}

Tensor softmax_classes(const Tensor& volume) {
    if (volume.rank() != 3) throw DimensionError("expected [C x H x W]");
    const std::size_t c = volume.dim(0), plane = volume.dim(1) * volume.dim(2);
    Tensor out(volume.shape());
    for (std::size_t i = 0; i < plane; ++i) {
        float mx = volume[i];
        for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, volume[k * plane + i]);
        double z = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            out[k * plane + i] = std::exp(volume[k * plane + i] - mx);
            z += out[k * plane + i];
        }
        for (std::size_t k = 0; k < c; ++k) out[k * plane + i] = static_cast<float>(out[k * plane + i] / z);
    }
    return out;
}

LabelMap argmax_classes(const Tensor& volume) {
    if (volume.rank() != 3) throw DimensionError("expected [C x H x W]");
    const std::size_t c = volume.dim(0), h = volume.dim(1), w = volume.dim(2), plane = h * w;
    if (c == 0 || c > 65535) throw ConfigError("class count must lie in [1, 65535]");
    LabelMap m{w, h, std::vector<std::uint16_t>(plane, 0)};
    for (std::size_t i = 0; i < plane; ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < c; ++k)
            if (volume[k * plane + i] > volume[best * plane + i]) best = k;
        m.labels[i] = static_cast<std::uint16_t>(best);
    }
    return m;
}

LabelMap resize_nearest(const LabelMap& labels, std::size_t out_h, std::size_t out_w) {
    if (out_h == labels.height && out_w == labels.width) return labels;
    LabelMap out{out_w, out_h, std::vector<std::uint16_t>(out_h * out_w)};
    const float sy = static_cast<float>(labels.height) / static_cast<float>(out_h);
    const float sx = static_cast<float>(labels.width) / static_cast<float>(out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        const std::size_t iy = std::min(static_cast<std::size_t>(std::floor(static_cast<float>(y) * sy)), labels.height - 1);
        for (std::size_t x = 0; x < out_w; ++x) {
            const std::size_t ix = std::min(static_cast<std::size_t>(std::floor(static_cast<float>(x) * sx)), labels.width - 1);
            out.labels[y * out_w + x] = labels.labels[iy * labels.width + ix];
        }
    }
    return out;
}

SegmentResult segment(const Tensor& image, const VisionModel& model, const ClassEmbeddingSet& classes,
                      const SegmentOptions& options, bool capture_attention) {
    if (classes.size() == 0 || classes.embeddings.rows() == 0) throw ConfigError("segment needs at least one class");
    if (classes.embeddings.dim(0) != classes.size()) throw ConfigError("class names and embeddings disagree");
    if (image.rank() != 3 || image.dim(0) != 3) throw DimensionError("expected an RGB [3 x H x W] image");
    if (options.sliding.window != model.config.image_size)
        throw ConfigError("sliding window " + std::to_string(options.sliding.window) +
                          " differs from the encoder input size " + std::to_string(model.config.image_size));

    const std::size_t orig_h = image.dim(1), orig_w = image.dim(2);
    const TiledImage tiles = resize_and_tile(normalize_image(image, model.config), options.sliding);

    const std::size_t n_windows = tiles.windows.size();
    std::vector<Tensor> logits(n_windows);
    SegmentResult result;
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n_windows); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        try {
            AttentionMaps* maps = capture_attention && i == 0 ? &result.attention : nullptr;
            const FeatureGrid fg = forward_features(tiles.windows[i].pixels, model.weights, model.config,
                                                    options.encoder, maps);
            logits[i] = window_logits(fg, classes, options.temperature);
        } catch (...) {
#pragma omp critical(naclip_segment_error)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    LogitVolume volume(classes.size(), tiles.resized.dim(1), tiles.resized.dim(2));
    for (std::size_t i = 0; i < n_windows; ++i)
        volume.accumulate(logits[i], tiles.windows[i].y, tiles.windows[i].x, options.sliding.window);
    result.volume = volume.finalize();

    const bool refine = options.pamr.enabled && options.pamr.iterations > 0;
    const Tensor scores = refine ? pamr_refine(tiles.resized, softmax_classes(result.volume), options.pamr) : result.volume;
    result.mask = resize_nearest(argmax_classes(scores), orig_h, orig_w);
    return result;
}

}  // namespace naclip
