#include "naclip/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "naclip/attention_dump.hpp"
#include "naclip/error.hpp"

namespace naclip {

namespace fs = std::filesystem;

DatasetSpec DatasetSpec::from_root(const fs::path& root) {
    DatasetSpec spec;
    spec.image_dir = root / "images";
    spec.mask_dir = root / "masks";
    spec.class_file = root / "classes.txt";
    return spec;
}

std::vector<Sample> list_samples(const DatasetSpec& spec) {
    if (!fs::is_directory(spec.image_dir)) throw IoError("image directory not found: " + spec.image_dir.string());
    if (!fs::is_directory(spec.mask_dir)) throw IoError("mask directory not found: " + spec.mask_dir.string());
    std::map<std::string, fs::path> images;
    for (const auto& e : fs::directory_iterator(spec.image_dir)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext != ".jpg" && ext != ".jpeg" && ext != ".png") continue;
        const std::string stem = e.path().stem().string();
        if (!images.emplace(stem, e.path()).second)
            throw FormatError("two images share the stem '" + stem + "' in " + spec.image_dir.string());
    }
    std::vector<Sample> out;
    for (const auto& [stem, image] : images) {
        const fs::path mask = spec.mask_dir / (stem + ".png");
        if (!fs::is_regular_file(mask)) throw FormatError("no ground-truth mask for image " + image.string());
        out.push_back({stem, image, mask});
    }
    return out;
}

namespace {

// Prefixes a failing stage's error with what was being done.
template <class F>
auto in_stage(const std::string& what, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        throw Error(what + ": " + e.what());
    }
}

}  // namespace

Engine load_engine(const fs::path& weights, const std::optional<std::string>& preset, const fs::path& vocab) {
    const TensorArchive archive = in_stage("loading weights " + weights.string(), [&] { return load_archive(weights); });
    std::string name = "ViT-B/16";
    if (preset) name = *preset;
    else if (archive.metadata().contains("preset")) name = archive.metadata()["preset"].get<std::string>();
    ModelConfig cfg = model_preset(name);
    const ValidationReport report =
        in_stage("validating " + weights.string() + " as " + name, [&] { return validate(archive, model_manifest(cfg)); });
    for (const auto& extra : report.extra) std::cerr << "warning: archive tensor not in manifest: " << extra << '\n';
    VisionModel vision{cfg.vision, load_vision_weights(archive, cfg.vision)};
    TextWeights text = load_text_weights(archive, cfg.text);
    BpeTokenizer tokenizer = in_stage("loading vocabulary " + vocab.string(), [&] { return BpeTokenizer::from_file(vocab); });
    if (tokenizer.vocab_size() != cfg.text.vocab_size)
        throw ConfigError("tokenizer vocabulary (" + std::to_string(tokenizer.vocab_size()) +
                          ") differs from the text tower (" + std::to_string(cfg.text.vocab_size) + ")");
    return Engine{std::move(cfg), std::move(vision), std::move(text), std::move(tokenizer)};
}

Palette default_palette(std::size_t n) {
    Palette p(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t lab = i;
        std::array<std::uint8_t, 3> c{0, 0, 0};
        for (int shift = 7; lab; --shift, lab >>= 3)
            for (int ch = 0; ch < 3; ++ch) c[static_cast<std::size_t>(ch)] |= static_cast<std::uint8_t>(((lab >> ch) & 1) << shift);
        p[i] = c;
    }
    return p;
}

Palette read_palette(const fs::path& path) {
    Palette p;
    for (const auto& line : read_lines(path)) {
        std::istringstream is(line);
        int r, g, b;
        if (!(is >> r >> g >> b) || r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255)
            throw FormatError("bad palette line '" + line + "' in " + path.string());
        p.push_back({static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)});
    }
    return p;
}

RgbImage overlay(const RgbImage& image, const LabelMap& mask, const Palette& palette, float alpha) {
    if (image.width != mask.width || image.height != mask.height) throw DimensionError("overlay size mismatch");
    RgbImage out = image;
    for (std::size_t i = 0; i < mask.labels.size(); ++i) {
        const auto label = mask.labels[i];
        if (label >= palette.size()) continue;
        for (std::size_t c = 0; c < 3; ++c) {
            const float v = (1.0f - alpha) * image.pixels[i * 3 + c] + alpha * palette[label][c];
            out.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::clamp(v + 0.5f, 0.0f, 255.0f));
        }
    }
    return out;
}

namespace {

bool is_background(std::string name) {
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    return name == "background";
}

}  // namespace

EvalResult evaluate(const Engine& engine, const EvalOptions& options) {
    const std::string class_file = options.dataset.class_file.string();
    const std::vector<std::string> names = in_stage("reading classes", [&] { return read_lines(class_file); });
    if (names.empty()) throw ConfigError("class file " + class_file + " is empty");
    const ClassEmbeddingSet classes = in_stage("embedding classes from " + class_file, [&] {
        return embed_classes(names, options.templates, engine.tokenizer, engine.text, engine.config.text);
    });

    auto samples = list_samples(options.dataset);
    if (options.limit && samples.size() > options.limit) samples.resize(options.limit);
    if (samples.empty()) throw ConfigError("dataset has no images");
    if (options.masks_out) fs::create_directories(*options.masks_out);
    if (options.overlays_out) fs::create_directories(*options.overlays_out);
    const Palette palette = default_palette(names.size());
    if (options.attention_out) fs::create_directories(*options.attention_out);

    EvalResult result{ConfusionMatrix(names.size()), {}, 0};
    for (const auto& sample : samples) {
        try {
            const RgbImage rgb = read_image(sample.image);
            const SegmentResult seg =
                segment(to_tensor(rgb), engine.vision, classes, options.segment, options.attention_out.has_value());
            const LabelMap gt = read_label_png(sample.mask);
            result.confusion.accumulate(seg.mask, gt, options.dataset.ignore_index);
            if (options.masks_out) write_label_png(*options.masks_out / (sample.stem + ".png"), seg.mask);
            if (options.overlays_out)
                write_png(*options.overlays_out / (sample.stem + ".png"), overlay(rgb, seg.mask, palette));
            if (options.attention_out) {
                const std::size_t g = engine.config.vision.grid_side();
                write_attention_grid(*options.attention_out / (sample.stem + ".png"), seg.attention, {g, g});
            }
        } catch (const Error& e) {
            throw Error("while processing " + sample.image.string() + ": " + e.what());
        }
        ++result.images;
    }

    std::vector<bool> include(names.size(), true);
    if (!options.dataset.include_background)
        for (std::size_t c = 0; c < names.size(); ++c)
            if (is_background(names[c])) include[c] = false;
    result.report = compute_miou(result.confusion, names, include);
    return result;
}

nlohmann::json describe(const Engine& engine, const SegmentOptions& o, const std::vector<std::string>& templates) {
    return {
        {"preset", engine.config.name},
        {"variant", std::string(to_string(o.encoder.variant))},
        {"arch", std::string(to_string(o.encoder.arch))},
        {"sigma", o.encoder.sigma},
        {"modify_all_blocks", o.encoder.modify_all_blocks},
        {"window", o.sliding.window},
        {"stride", o.sliding.stride},
        {"short_side", o.sliding.short_side},
        {"temperature", o.temperature},
        {"pamr", {{"enabled", o.pamr.enabled && o.pamr.iterations > 0},
                  {"iterations", o.pamr.iterations},
                  {"dilations", o.pamr.dilations}}},
        {"templates", templates},
    };
}

nlohmann::json metrics_json(const EvalResult& result, const nlohmann::json& config) {
    nlohmann::json j = to_json(result.report);
    j["schema_version"] = kMetricsSchemaVersion;
    j["config"] = config;
    j["images"] = result.images;
    return j;
}

}  // namespace naclip
