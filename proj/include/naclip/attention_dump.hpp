#pragma once

#include <filesystem>

#include "naclip/attention.hpp"
#include "naclip/gaussian_prior.hpp"

namespace naclip {

// Writes a grey PNG of (h*h) x (w*w) pixels: tile (i, j) is the head-averaged
// attention map of query patch (i, j), each tile scaled to its own maximum.
// Maps over 1 + hw tokens have their [CLS] row and column dropped first.
void write_attention_grid(const std::filesystem::path& path, const AttentionMaps& maps, GridSize grid);

}  // namespace naclip
