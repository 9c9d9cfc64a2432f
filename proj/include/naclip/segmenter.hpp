#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "naclip/attention.hpp"
#include "naclip/image_io.hpp"
#include "naclip/model_config.hpp"
#include "naclip/pamr.hpp"
#include "naclip/tensor.hpp"
#include "naclip/text_encoder.hpp"
#include "naclip/visual_encoder.hpp"

namespace naclip {

struct SlidingConfig {
    std::size_t window = 224;
    std::size_t stride = 112;
    std::size_t short_side = 336;  // 560 for high-resolution datasets
    void check() const;
};

inline constexpr float kDefaultTemperature = 100.0f;

struct Window {
    Tensor pixels;  // [3 x window x window]
    std::size_t y = 0;
    std::size_t x = 0;
};

struct TiledImage {
    Tensor resized;  // [3 x H' x W'], min(H', W') == short_side
    std::vector<Window> windows;
};

// Window origins along one axis: multiples of stride, the last one pulled
// back flush with the far edge. extent must be >= window.
std::vector<std::size_t> tile_origins(std::size_t extent, std::size_t window, std::size_t stride);

// Short side scaled to cfg.short_side (the long side rounded to nearest).
Tensor resize_short_side(const Tensor& image, std::size_t short_side);

TiledImage resize_and_tile(const Tensor& image, const SlidingConfig& cfg);

// Per-channel (x - mean) / std on a [3 x H x W] image in [0, 1].
Tensor normalize_image(const Tensor& image, const VisionConfig& cfg);

// Cosine similarity of every patch with every class embedding, times
// `temperature`. Returns [C x h x w].
Tensor window_logits(const FeatureGrid& features, const ClassEmbeddingSet& classes,
                     float temperature = kDefaultTemperature);

// Overlap-averaged class logits over the resized image.
class LogitVolume {
public:
    LogitVolume(std::size_t classes, std::size_t height, std::size_t width);

    // Upsamples [C x h x w] logits to window x window and adds them at
    // (y, x); the window must lie inside the volume.
    void accumulate(const Tensor& logits, std::size_t y, std::size_t x, std::size_t window);

    const std::vector<std::uint32_t>& coverage() const noexcept { return coverage_; }
    std::uint32_t min_coverage() const noexcept;
    // Sum divided by coverage; throws if any pixel is uncovered.
    Tensor finalize() const;

private:
    Tensor sum_;
    std::vector<std::uint32_t> coverage_;
};

// Softmax across the class axis of a [C x H x W] volume.
Tensor softmax_classes(const Tensor& volume);

// Per-pixel argmax over [C x H x W]; ties go to the lowest class index.
LabelMap argmax_classes(const Tensor& volume);

// Nearest-neighbour resize of a label map (source index floor(d * in/out)).
LabelMap resize_nearest(const LabelMap& labels, std::size_t out_h, std::size_t out_w);

struct SegmentOptions {
    EncoderOptions encoder;
    SlidingConfig sliding;
    PamrConfig pamr;
    float temperature = kDefaultTemperature;
};

struct VisionModel {
    VisionConfig config;
    VisionWeights weights;
};

struct SegmentResult {
    LabelMap mask;           // original resolution
    Tensor volume;           // finalized logits at the resized resolution
    AttentionMaps attention; // last block of the first window, when requested
};

// Image [3 x H x W] in [0, 1] -> mask over the classes. Windows are encoded in
// parallel; their logits are accumulated in window order.
SegmentResult segment(const Tensor& image, const VisionModel& model, const ClassEmbeddingSet& classes,
                      const SegmentOptions& options, bool capture_attention = false);

}  // namespace naclip
