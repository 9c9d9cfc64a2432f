#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "naclip/tensor.hpp"

namespace naclip {

// 8-bit RGB, interleaved, row-major.
struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // height * width * 3
};

// One class index per pixel (predictions and ground truth).
struct LabelMap {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint16_t> labels;  // height * width

    std::uint16_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
    friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

// PNG or JPEG (sniffed from the file header); grey and palette inputs are
// expanded to RGB.
RgbImage read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);

// Single-channel PNG of raw indices. Palette PNGs yield their palette indices
// (the PASCAL VOC convention); 8- and 16-bit grey yield the stored values.
LabelMap read_label_png(const std::filesystem::path& path);
// Written as 8-bit grey when every label fits, 16-bit otherwise.
void write_label_png(const std::filesystem::path& path, const LabelMap& labels);

void write_gray_png(const std::filesystem::path& path, std::size_t width, std::size_t height,
                    const std::vector<std::uint8_t>& values);

// [3 x H x W] floats in [0, 1].
Tensor to_tensor(const RgbImage& image);

}  // namespace naclip
