#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace naclip {

using TokenId = std::int32_t;

// Fixed-length frame fed to the text encoder: SOT, content, EOT, zero padding.
struct TokenSequence {
    std::vector<TokenId> ids;
    std::size_t eot_index = 0;
    bool truncated = false;
};

// Path of the merges file shipped in configs/.
std::filesystem::path default_vocab_path();

// Lowercases ASCII, collapses runs of whitespace to one space, trims.
std::string normalize_text(std::string_view text);

// Byte-level BPE compatible with the CLIP tokenizer. The vocabulary is laid
// out as: 256 byte symbols, the same 256 with the "</w>" end-of-word marker,
// one symbol per merge rule (in rank order), then <|startoftext|> and
// <|endoftext|>.
class BpeTokenizer {
public:
    static constexpr std::size_t kClipMerges = 49152 - 256 - 2;

    // Reads the standard merges text file (optionally gzip-compressed). The
    // first line is a version header; `max_merges` rules follow.
    static BpeTokenizer from_file(const std::filesystem::path& path, std::size_t max_merges = kClipMerges);
    explicit BpeTokenizer(const std::vector<std::pair<std::string, std::string>>& merges);

    std::size_t vocab_size() const noexcept { return id_to_token_.size(); }
    TokenId sot_id() const noexcept { return sot_; }
    TokenId eot_id() const noexcept { return eot_; }

    // Content ids only, no framing.
    std::vector<TokenId> encode(std::string_view text) const;
    // Framed to `context_length`; content beyond context_length - 2 tokens is
    // dropped and `truncated` set.
    TokenSequence tokenize(std::string_view text, std::size_t context_length = 77) const;
    // Inverse of encode up to whitespace: end-of-word markers become spaces.
    std::string decode(const std::vector<TokenId>& ids) const;

private:
    std::vector<std::string> bpe(const std::string& word) const;

    std::vector<std::string> byte_symbol_;  // byte -> UTF-8 of its printable stand-in
    std::unordered_map<std::string, unsigned char> symbol_byte_;
    std::unordered_map<std::string, std::size_t> merge_rank_;
    std::unordered_map<std::string, TokenId> token_to_id_;
    std::vector<std::string> id_to_token_;
    TokenId sot_ = 0;
    TokenId eot_ = 0;
};

}  // namespace naclip
