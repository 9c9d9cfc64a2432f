#include "naclip/text_encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>

#include "naclip/error.hpp"
#include "naclip/numerics.hpp"
#include "naclip/visual_encoder.hpp"

namespace naclip {

Tensor text_forward(const TokenSequence& tokens, const TextWeights& weights, const TextConfig& cfg) {
    cfg.check();
    if (tokens.ids.size() != cfg.context_length)
        throw DimensionError("token sequence has " + std::to_string(tokens.ids.size()) + " ids, context is " +
                             std::to_string(cfg.context_length));
    if (tokens.eot_index >= tokens.ids.size()) throw DimensionError("EOT index outside the token sequence");
    if (weights.blocks.size() != cfg.layers) throw ConfigError("text weights and config disagree on depth");

    const std::size_t n = tokens.eot_index + 1;
    const std::size_t d = cfg.width;
    Tensor x({n, d});
    for (std::size_t t = 0; t < n; ++t) {
        const auto id = tokens.ids[t];
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
            throw DimensionError("token id " + std::to_string(id) + " outside the vocabulary");
        auto dst = x.row(t);
        auto emb = weights.token_embedding.row(static_cast<std::size_t>(id));
        auto pos = weights.positional_embedding.row(t);
        for (std::size_t j = 0; j < d; ++j) dst[j] = emb[j] + pos[j];
    }

    const AttentionConfig attn{.variant = AttentionVariant::vanilla, .num_heads = cfg.heads, .causal = true};
    for (const auto& block : weights.blocks) x = encoder_block(x, block, attn);

    const Tensor last = layer_norm(x.slice_rows(n - 1, n), weights.ln_final.gamma, weights.ln_final.beta);
    return matmul(last, weights.projection).reshaped({cfg.output_dim});
}

std::string fill_template(const std::string& tmpl, const std::string& name) {
    const auto pos = tmpl.find("{}");
    if (pos == std::string::npos) throw ConfigError("prompt template '" + tmpl + "' has no {} placeholder");
    return tmpl.substr(0, pos) + name + tmpl.substr(pos + 2);
}

std::vector<std::string> split_synonyms(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= line.size()) {
        const auto comma = line.find(',', start);
        std::string part = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        const auto b = part.find_first_not_of(" \t");
        const auto e = part.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(part.substr(b, e - b + 1));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

ClassEmbeddingSet embed_classes(const std::vector<std::string>& names, const std::vector<std::string>& templates,
                                const std::function<Tensor(const std::string&)>& encode_prompt) {
    if (names.empty()) throw ConfigError("no class names given");
    if (templates.empty()) throw ConfigError("no prompt templates given");
    for (const auto& t : templates)
        if (t.find("{}") == std::string::npos) throw ConfigError("prompt template '" + t + "' has no {} placeholder");

    std::vector<float> rows;
    std::size_t dim = 0;
    for (const auto& line : names) {
        const auto synonyms = split_synonyms(line);
        if (synonyms.empty()) throw ConfigError("empty class name");
        std::vector<double> acc;
        for (const auto& syn : synonyms) {
            for (const auto& t : templates) {
                const Tensor raw = encode_prompt(fill_template(t, syn));
                const Tensor unit = l2_normalize_rows(raw.reshaped({1, raw.size()}));
                if (acc.empty()) acc.assign(unit.size(), 0.0);
                if (unit.size() != acc.size()) throw DimensionError("prompt encodings disagree in dimension");
                for (std::size_t j = 0; j < unit.size(); ++j) acc[j] += unit[j];
            }
        }
        double norm = 0.0;
        for (double v : acc) norm += v * v;
        norm = std::max(std::sqrt(norm), 1e-12);
        if (dim == 0) dim = acc.size();
        if (acc.size() != dim) throw DimensionError("class embeddings disagree in dimension");
        for (double v : acc) rows.push_back(static_cast<float>(v / norm));
    }
    return {names, templates, Tensor({names.size(), dim}, std::move(rows))};
}

ClassEmbeddingSet embed_classes(const std::vector<std::string>& names, const std::vector<std::string>& templates,
                                const BpeTokenizer& tokenizer, const TextWeights& weights, const TextConfig& cfg) {
    return embed_classes(names, templates, [&](const std::string& prompt) {
        const TokenSequence seq = tokenizer.tokenize(prompt, cfg.context_length);
        if (seq.truncated) std::cerr << "warning: prompt truncated to " << cfg.context_length << " tokens: " << prompt << '\n';
        return text_forward(seq, weights, cfg);
    });
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

}  // namespace naclip
