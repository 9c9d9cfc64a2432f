#include "naclip/model_config.hpp"

#include <cmath>
#include <random>

#include "naclip/error.hpp"

namespace naclip {

void VisionConfig::check() const {
    if (patch_size == 0 || image_size % patch_size != 0)
        throw ConfigError("image size " + std::to_string(image_size) + " not divisible by patch size " +
                          std::to_string(patch_size));
    if (heads == 0 || width % heads != 0) throw ConfigError("vision width not divisible by head count");
    if (layers == 0) throw ConfigError("vision tower needs at least one block");
}

void TextConfig::check() const {
    if (heads == 0 || width % heads != 0) throw ConfigError("text width not divisible by head count");
    if (context_length < 2) throw ConfigError("text context must hold SOT and EOT");
    if (layers == 0) throw ConfigError("text tower needs at least one block");
}

ModelConfig model_preset(std::string_view name) {
    ModelConfig cfg;
    cfg.name = std::string(name);
    if (name == "ViT-B/16") {
        return cfg;
    }
    if (name == "ViT-B/32") {
        cfg.vision.patch_size = 32;
        return cfg;
    }
    if (name == "ViT-L/14") {
        cfg.vision.patch_size = 14;
        cfg.vision.layers = 24;
        cfg.vision.width = 1024;
        cfg.vision.heads = 16;
        cfg.vision.output_dim = 768;
        cfg.text.width = 768;
        cfg.text.heads = 12;
        cfg.text.output_dim = 768;
        return cfg;
    }
    if (name == "tiny") {
        cfg.vision.layers = 2;
        cfg.vision.width = 8;
        cfg.vision.heads = 2;
        cfg.vision.output_dim = 8;
        cfg.text.layers = 2;
        cfg.text.width = 8;
        cfg.text.heads = 2;
        cfg.text.output_dim = 8;
        return cfg;
    }
    throw ConfigError("unknown model preset '" + std::string(name) + "'");
}

std::vector<std::string> preset_names() {
    return {"ViT-B/16", "ViT-B/32", "ViT-L/14", "tiny"};
}

namespace {

void append_block(WeightManifest& m, const std::string& prefix, std::size_t d, std::size_t hidden) {
    m.push_back({prefix + "ln_1.weight", {d}});
    m.push_back({prefix + "ln_1.bias", {d}});
    m.push_back({prefix + "attn.qkv.weight", {d, 3 * d}});
    m.push_back({prefix + "attn.qkv.bias", {3 * d}});
    m.push_back({prefix + "attn.out_proj.weight", {d, d}});
    m.push_back({prefix + "attn.out_proj.bias", {d}});
    m.push_back({prefix + "ln_2.weight", {d}});
    m.push_back({prefix + "ln_2.bias", {d}});
    m.push_back({prefix + "mlp.fc1.weight", {d, hidden}});
    m.push_back({prefix + "mlp.fc1.bias", {hidden}});
    m.push_back({prefix + "mlp.fc2.weight", {hidden, d}});
    m.push_back({prefix + "mlp.fc2.bias", {d}});
}

std::string block_prefix(const char* tower, std::size_t i) {
    return std::string(tower) + ".blocks." + std::to_string(i) + ".";
}

}  // namespace

WeightManifest vision_manifest(const VisionConfig& cfg) {
    cfg.check();
    const std::size_t d = cfg.width;
    WeightManifest m;
    m.push_back({"visual.patch_embed.weight", {cfg.patch_dim(), d}});
    m.push_back({"visual.patch_embed.bias", {d}});
    m.push_back({"visual.class_embedding", {d}});
    m.push_back({"visual.positional_embedding", {cfg.num_tokens(), d}});
    m.push_back({"visual.ln_pre.weight", {d}});
    m.push_back({"visual.ln_pre.bias", {d}});
    for (std::size_t i = 0; i < cfg.layers; ++i) append_block(m, block_prefix("visual", i), d, cfg.mlp_ratio * d);
    m.push_back({"visual.ln_post.weight", {d}});
    m.push_back({"visual.ln_post.bias", {d}});
    m.push_back({"visual.proj", {d, cfg.output_dim}});
    return m;
}

WeightManifest text_manifest(const TextConfig& cfg) {
    cfg.check();
    const std::size_t d = cfg.width;
    WeightManifest m;
    m.push_back({"text.token_embedding", {cfg.vocab_size, d}});
    m.push_back({"text.positional_embedding", {cfg.context_length, d}});
    for (std::size_t i = 0; i < cfg.layers; ++i) append_block(m, block_prefix("text", i), d, cfg.mlp_ratio * d);
    m.push_back({"text.ln_final.weight", {d}});
    m.push_back({"text.ln_final.bias", {d}});
    m.push_back({"text.projection", {d, cfg.output_dim}});
    return m;
}

WeightManifest model_manifest(const ModelConfig& cfg) {
    if (cfg.vision.output_dim != cfg.text.output_dim)
        throw ConfigError("vision and text towers project to different dimensions");
    WeightManifest m = vision_manifest(cfg.vision);
    const WeightManifest t = text_manifest(cfg.text);
    m.insert(m.end(), t.begin(), t.end());
    return m;
}

namespace {

EncoderBlockWeights load_block(const TensorArchive& a, const std::string& p) {
    EncoderBlockWeights b;
    b.ln_1 = {a.tensor(p + "ln_1.weight"), a.tensor(p + "ln_1.bias")};
    b.attn = {a.tensor(p + "attn.qkv.weight"), a.tensor(p + "attn.qkv.bias"), a.tensor(p + "attn.out_proj.weight"),
              a.tensor(p + "attn.out_proj.bias")};
    b.ln_2 = {a.tensor(p + "ln_2.weight"), a.tensor(p + "ln_2.bias")};
    b.fc1_weight = a.tensor(p + "mlp.fc1.weight");
    b.fc1_bias = a.tensor(p + "mlp.fc1.bias");
    b.fc2_weight = a.tensor(p + "mlp.fc2.weight");
    b.fc2_bias = a.tensor(p + "mlp.fc2.bias");
    return b;
}

}  // namespace

VisionWeights load_vision_weights(const TensorArchive& a, const VisionConfig& cfg) {
    validate(a, vision_manifest(cfg));
    VisionWeights w;
    w.patch_weight = a.tensor("visual.patch_embed.weight");
    w.patch_bias = a.tensor("visual.patch_embed.bias");
    w.class_embedding = a.tensor("visual.class_embedding");
    w.positional_embedding = a.tensor("visual.positional_embedding");
    w.ln_pre = {a.tensor("visual.ln_pre.weight"), a.tensor("visual.ln_pre.bias")};
    for (std::size_t i = 0; i < cfg.layers; ++i) w.blocks.push_back(load_block(a, block_prefix("visual", i)));
    w.ln_post = {a.tensor("visual.ln_post.weight"), a.tensor("visual.ln_post.bias")};
    w.proj = a.tensor("visual.proj");
    return w;
}

TextWeights load_text_weights(const TensorArchive& a, const TextConfig& cfg) {
    validate(a, text_manifest(cfg));
    TextWeights w;
    w.token_embedding = a.tensor("text.token_embedding");
    w.positional_embedding = a.tensor("text.positional_embedding");
    for (std::size_t i = 0; i < cfg.layers; ++i) w.blocks.push_back(load_block(a, block_prefix("text", i)));
    w.ln_final = {a.tensor("text.ln_final.weight"), a.tensor("text.ln_final.bias")};
    w.projection = a.tensor("text.projection");
    return w;
}

std::vector<NamedTensor> random_model_tensors(const ModelConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<NamedTensor> out;
    auto ends_with = [](const std::string& s, std::string_view suffix) {
        return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    for (const auto& entry : model_manifest(cfg)) {
        Tensor t(entry.shape);
        const bool is_ln = entry.name.find(".ln_") != std::string::npos;
        double mean = 0.0, stddev = 0.02;
        if (is_ln && ends_with(entry.name, ".weight")) {
            mean = 1.0;
            stddev = 0.05;
        } else if (is_ln) {
            stddev = 0.02;
        } else if (entry.shape.size() == 2 && entry.name.find("embedding") == std::string::npos) {
            stddev = 1.0 / std::sqrt(static_cast<double>(entry.shape[0]));
        } else if (entry.name.find("embedding") != std::string::npos) {
            stddev = 0.5;
        }
        std::normal_distribution<double> dist(mean, stddev);
        for (float& v : t.values()) v = static_cast<float>(dist(rng));
        out.push_back({entry.name, std::move(t)});
    }
    return out;
}

}  // namespace naclip
