#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "naclip/bpe_tokenizer.hpp"
#include "naclip/metrics.hpp"
#include "naclip/model_config.hpp"
#include "naclip/segmenter.hpp"

namespace naclip {

inline constexpr int kMetricsSchemaVersion = 1;

// <root>/images/<stem>.{jpg,jpeg,png}, <root>/masks/<stem>.png, <root>/classes.txt
struct DatasetSpec {
    std::filesystem::path image_dir;
    std::filesystem::path mask_dir;
    std::filesystem::path class_file;
    std::uint16_t ignore_index = kIgnoreIndex;
    // When false, a class named "background" is left out of the mean.
    bool include_background = true;

    static DatasetSpec from_root(const std::filesystem::path& root);
};

struct Sample {
    std::string stem;
    std::filesystem::path image;
    std::filesystem::path mask;
};

// Sorted by stem; every image must have a mask.
std::vector<Sample> list_samples(const DatasetSpec& spec);

// Everything needed to segment: both towers, tokenizer and the resolved
// model configuration.
struct Engine {
    ModelConfig config;
    VisionModel vision;
    TextWeights text;
    BpeTokenizer tokenizer;
};

// Preset: explicit argument, else archive metadata "preset", else ViT-B/16.
Engine load_engine(const std::filesystem::path& weights, const std::optional<std::string>& preset,
                   const std::filesystem::path& vocab = default_vocab_path());

using Palette = std::vector<std::array<std::uint8_t, 3>>;

// PASCAL VOC colour map extended to n entries.
Palette default_palette(std::size_t n);
// One "r g b" triple per line.
Palette read_palette(const std::filesystem::path& path);
RgbImage overlay(const RgbImage& image, const LabelMap& mask, const Palette& palette, float alpha = 0.5f);

struct EvalOptions {
    DatasetSpec dataset;
    std::vector<std::string> templates = kDefaultTemplates;
    SegmentOptions segment;
    std::size_t limit = 0;  // 0 = all images
    std::optional<std::filesystem::path> masks_out;
    std::optional<std::filesystem::path> overlays_out;
    std::optional<std::filesystem::path> attention_out;
};

struct EvalResult {
    ConfusionMatrix confusion;
    MetricsReport report;
    std::size_t images = 0;
};

EvalResult evaluate(const Engine& engine, const EvalOptions& options);

// The resolved configuration recorded next to the metrics.
nlohmann::json describe(const Engine& engine, const SegmentOptions& options, const std::vector<std::string>& templates);

// {"schema_version", "config", "images", "miou", "scored_pixels", "per_class"}
nlohmann::json metrics_json(const EvalResult& result, const nlohmann::json& config);

}  // namespace naclip
