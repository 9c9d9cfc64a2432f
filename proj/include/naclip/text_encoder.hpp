#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "naclip/bpe_tokenizer.hpp"
#include "naclip/model_config.hpp"
#include "naclip/tensor.hpp"

namespace naclip {

// Token + positional embedding, causal transformer, final LN, then the state
// at the EOT position through the text projection. Returns [D_out].
// Positions after EOT cannot influence the result and are not evaluated.
Tensor text_forward(const TokenSequence& tokens, const TextWeights& weights, const TextConfig& cfg);

// Unit-norm text embeddings, one row per class.
struct ClassEmbeddingSet {
    std::vector<std::string> names;
    std::vector<std::string> templates;
    Tensor embeddings;  // [C x D_out]

    std::size_t size() const noexcept { return names.size(); }
};

inline const std::vector<std::string> kDefaultTemplates = {"a photo of a {}."};

// "a photo of a {}." + "cat" -> "a photo of a cat."; throws ConfigError when
// the template has no "{}".
std::string fill_template(const std::string& tmpl, const std::string& name);

// A class line may list comma-separated synonyms.
std::vector<std::string> split_synonyms(const std::string& line);

// Per class: every (synonym, template) prompt is encoded and L2-normalized,
// the results are averaged and the mean is normalized again.
ClassEmbeddingSet embed_classes(const std::vector<std::string>& names, const std::vector<std::string>& templates,
                                const std::function<Tensor(const std::string&)>& encode_prompt);

ClassEmbeddingSet embed_classes(const std::vector<std::string>& names, const std::vector<std::string>& templates,
                                const BpeTokenizer& tokenizer, const TextWeights& weights, const TextConfig& cfg);

// Non-empty lines of a UTF-8 text file, trailing whitespace trimmed.
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace naclip
