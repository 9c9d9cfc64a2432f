#pragma once

#include <cstddef>
#include <vector>

#include "naclip/tensor.hpp"

namespace naclip {

struct PamrConfig {
    std::size_t iterations = 10;
    std::vector<std::size_t> dilations{1, 2, 4, 8, 12, 24};
    bool enabled = true;
};

// Pixel-adaptive refinement of per-pixel class scores `probs` [C x H x W]
// guided by `image` [K x H x W].
//
// Neighbours of a pixel are the 8 surrounding taps of a 3x3 stencil at each
// dilation, with coordinates clamped to the image (replicate padding). For
// channel k, sd_k is the sample standard deviation (n-1) of the 9 taps of
// every dilation pooled together. The affinity to neighbour p is
// softmax_p( mean_k( -|I_k(x) - I_k(p)| / (1e-8 + 0.1 sd_k) ) ).
// Each iteration replaces every score by the affinity-weighted sum of its
// neighbours' scores. iterations == 0 returns probs unchanged.
Tensor pamr_refine(const Tensor& image, const Tensor& probs, const PamrConfig& cfg);

}  // namespace naclip
