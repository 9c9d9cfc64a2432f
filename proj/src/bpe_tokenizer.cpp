#include "naclip/bpe_tokenizer.hpp"

#include <zlib.h>

#include <algorithm>
#include <limits>

#include "naclip/error.hpp"

namespace naclip {
namespace {

constexpr std::string_view kEndOfWord = "</w>";
constexpr std::string_view kSot = "<|startoftext|>";
constexpr std::string_view kEot = "<|endoftext|>";

std::string utf8(char32_t cp) {
    std::string s;
    if (cp < 0x80) {
        s += static_cast<char>(cp);
    } else if (cp < 0x800) {
        s += static_cast<char>(0xC0 | (cp >> 6));
        s += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        s += static_cast<char>(0xE0 | (cp >> 12));
        s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        s += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        s += static_cast<char>(0xF0 | (cp >> 18));
        s += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        s += static_cast<char>(0x80 | (cp & 0x3F));
    }
    return s;
}

struct CodePoint {
    char32_t cp;
    std::size_t begin, end;  // byte span
};

// Invalid sequences decode byte-by-byte as U+FFFD.
std::vector<CodePoint> decode_utf8(std::string_view s) {
    std::vector<CodePoint> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const auto b0 = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        char32_t cp = 0xFFFD;
        if (b0 < 0x80) {
            cp = b0;
        } else if ((b0 & 0xE0) == 0xC0) {
            len = 2;
            cp = b0 & 0x1F;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3;
            cp = b0 & 0x0F;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4;
            cp = b0 & 0x07;
        } else {
            len = 0;
        }
        bool ok = len > 0 && i + len <= s.size();
        for (std::size_t k = 1; ok && k < len; ++k) {
            const auto b = static_cast<unsigned char>(s[i + k]);
            if ((b & 0xC0) != 0x80) ok = false;
            else cp = (cp << 6) | (b & 0x3F);
        }
        if (!ok) {
            out.push_back({0xFFFD, i, i + 1});
            ++i;
            continue;
        }
        out.push_back({cp, i, i + len});
        i += len;
    }
    return out;
}

bool is_space(char32_t c) {
    return c == ' ' || (c >= '\t' && c <= '\r') || c == 0x85 || c == 0xA0 || c == 0x1680 ||
           (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

bool is_number(char32_t c) {
    return (c >= '0' && c <= '9') || c == 0xB2 || c == 0xB3 || c == 0xB9 || (c >= 0xBC && c <= 0xBE);
}

// ASCII is classified exactly. Outside ASCII, code points are letters unless
// they fall in the common punctuation/symbol blocks below.
bool is_letter(char32_t c) {
    if (c < 0x80) return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
    if (is_space(c) || is_number(c)) return false;
    if (c >= 0xA1 && c <= 0xBF) return c == 0xAA || c == 0xB5 || c == 0xBA;
    if (c == 0xD7 || c == 0xF7) return false;
    if (c >= 0x2000 && c <= 0x2BFF) return false;
    if (c >= 0x3000 && c <= 0x303F) return false;
    if (c >= 0xFE00 && c <= 0xFE0F) return false;
    if (c >= 0xFF00 && c <= 0xFF0F) return false;
    if (c >= 0x1F000 && c <= 0x1FAFF) return false;
    if (c == 0xFFFD) return false;
    return true;
}

bool starts_with_at(std::string_view s, std::size_t pos, std::string_view prefix) {
    return s.substr(pos, prefix.size()) == prefix;
}

std::string pair_key(const std::string& a, const std::string& b) {
    std::string k;
    k.reserve(a.size() + b.size() + 1);
    k += a;
    k += ' ';
    k += b;
    return k;
}

}  // namespace

std::filesystem::path default_vocab_path() {
    return std::filesystem::path(NACLIP_ASSET_DIR) / "bpe_simple_vocab_16e6.txt.gz";
}

std::string normalize_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c == ' ' || (c >= '\t' && c <= '\r')) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out += ' ';
        pending_space = false;
        out += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch;
    }
    return out;
}

BpeTokenizer BpeTokenizer::from_file(const std::filesystem::path& path, std::size_t max_merges) {
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (!f) throw IoError("cannot open BPE merges file " + path.string());
    std::vector<std::pair<std::string, std::string>> merges;
    std::string line;
    char buf[4096];
    bool header = true;
    while (merges.size() < max_merges && gzgets(f, buf, sizeof buf)) {
        line = buf;
        while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
        if (header) {
            header = false;
            continue;
        }
        const auto sp = line.find(' ');
        if (sp == std::string::npos || sp == 0 || sp + 1 == line.size()) {
            gzclose(f);
            throw FormatError("malformed merge rule '" + line + "' in " + path.string());
        }
        merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    }
    gzclose(f);
    if (merges.empty()) throw FormatError("no merge rules in " + path.string());
    return BpeTokenizer(merges);
}

BpeTokenizer::BpeTokenizer(const std::vector<std::pair<std::string, std::string>>& merges) {
    // Printable bytes keep their code point; the rest are shifted to 256+.
    std::vector<int> order;
    for (int b = '!'; b <= '~'; ++b) order.push_back(b);
    for (int b = 0xA1; b <= 0xAC; ++b) order.push_back(b);
    for (int b = 0xAE; b <= 0xFF; ++b) order.push_back(b);
    std::vector<char32_t> stand_in(256, 0);
    for (int b : order) stand_in[static_cast<std::size_t>(b)] = static_cast<char32_t>(b);
    char32_t next = 256;
    for (int b = 0; b < 256; ++b) {
        if (stand_in[static_cast<std::size_t>(b)] == 0 && std::find(order.begin(), order.end(), b) == order.end()) {
            order.push_back(b);
            stand_in[static_cast<std::size_t>(b)] = next++;
        }
    }
    byte_symbol_.resize(256);
    for (int b = 0; b < 256; ++b) {
        byte_symbol_[static_cast<std::size_t>(b)] = utf8(stand_in[static_cast<std::size_t>(b)]);
        symbol_byte_[byte_symbol_[static_cast<std::size_t>(b)]] = static_cast<unsigned char>(b);
    }

    for (int b : order) id_to_token_.push_back(byte_symbol_[static_cast<std::size_t>(b)]);
    for (int b : order) id_to_token_.push_back(byte_symbol_[static_cast<std::size_t>(b)] + std::string(kEndOfWord));
    for (std::size_t r = 0; r < merges.size(); ++r) {
        merge_rank_.emplace(pair_key(merges[r].first, merges[r].second), r);
        id_to_token_.push_back(merges[r].first + merges[r].second);
    }
    id_to_token_.emplace_back(kSot);
    id_to_token_.emplace_back(kEot);
    if (id_to_token_.size() > static_cast<std::size_t>(std::numeric_limits<TokenId>::max()))
        throw FormatError("vocabulary too large");
    for (std::size_t id = 0; id < id_to_token_.size(); ++id)
        token_to_id_.emplace(id_to_token_[id], static_cast<TokenId>(id));
    sot_ = static_cast<TokenId>(id_to_token_.size() - 2);
    eot_ = static_cast<TokenId>(id_to_token_.size() - 1);
}

std::vector<std::string> BpeTokenizer::bpe(const std::string& word) const {
    std::vector<std::string> parts;
    for (const auto& cp : decode_utf8(word)) parts.push_back(word.substr(cp.begin, cp.end - cp.begin));
    if (parts.empty()) return parts;
    parts.back() += kEndOfWord;

    while (parts.size() > 1) {
        std::size_t best = std::numeric_limits<std::size_t>::max();
        std::size_t best_i = 0;
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
            auto it = merge_rank_.find(pair_key(parts[i], parts[i + 1]));
            if (it != merge_rank_.end() && it->second < best) {
                best = it->second;
                best_i = i;
            }
        }
        if (best == std::numeric_limits<std::size_t>::max()) break;
        const std::string first = parts[best_i], second = parts[best_i + 1];
        std::vector<std::string> merged;
        merged.reserve(parts.size());
        for (std::size_t i = 0; i < parts.size();) {
            if (i + 1 < parts.size() && parts[i] == first && parts[i + 1] == second) {
                merged.push_back(first + second);
                i += 2;
            } else {
                merged.push_back(parts[i]);
                ++i;
            }
        }
        parts = std::move(merged);
    }
    return parts;
}

std::vector<TokenId> BpeTokenizer::encode(std::string_view raw) const {
    const std::string text = normalize_text(raw);
    const auto cps = decode_utf8(text);
    std::vector<TokenId> ids;

    auto emit_word = [&](std::size_t begin, std::size_t end) {
        std::string mapped;
        for (std::size_t b = begin; b < end; ++b) mapped += byte_symbol_[static_cast<unsigned char>(text[b])];
        for (const auto& piece : bpe(mapped)) {
            auto it = token_to_id_.find(piece);
            if (it == token_to_id_.end()) throw FormatError("BPE produced a symbol outside the vocabulary");
            ids.push_back(it->second);
        }
    };

    std::size_t i = 0;
    while (i < cps.size()) {
        const std::size_t at = cps[i].begin;
        if (starts_with_at(text, at, kSot) || starts_with_at(text, at, kEot)) {
            const bool sot = starts_with_at(text, at, kSot);
            ids.push_back(sot ? sot_ : eot_);
            const std::size_t stop = at + (sot ? kSot : kEot).size();
            while (i < cps.size() && cps[i].begin < stop) ++i;
            continue;
        }
        if (cps[i].cp == '\'') {
            std::size_t len = 0;
            for (std::string_view c : {"'s", "'t", "'re", "'ve", "'m", "'ll", "'d"}) {
                if (starts_with_at(text, at, c)) {
                    len = c.size();
                    break;
                }
            }
            if (len) {
                emit_word(at, at + len);
                i += len;  // all ASCII
                continue;
            }
        }
        std::size_t j = i;
        if (is_letter(cps[i].cp)) {
            while (j < cps.size() && is_letter(cps[j].cp)) ++j;
        } else if (is_number(cps[i].cp)) {
            j = i + 1;
        } else if (!is_space(cps[i].cp)) {
            while (j < cps.size() && !is_space(cps[j].cp) && !is_letter(cps[j].cp) && !is_number(cps[j].cp)) ++j;
        } else {
            ++i;
            continue;
        }
        emit_word(at, cps[j - 1].end);
        i = j;
    }
    return ids;
}

TokenSequence BpeTokenizer::tokenize(std::string_view text, std::size_t context_length) const {
    if (context_length < 2) throw ConfigError("context length must hold SOT and EOT");
    std::vector<TokenId> content = encode(text);
    TokenSequence seq;
    if (content.size() > context_length - 2) {
        content.resize(context_length - 2);
        seq.truncated = true;
    }
    seq.ids.assign(context_length, 0);
    seq.ids[0] = sot_;
    std::copy(content.begin(), content.end(), seq.ids.begin() + 1);
    seq.eot_index = content.size() + 1;
    seq.ids[seq.eot_index] = eot_;
    return seq;
}

std::string BpeTokenizer::decode(const std::vector<TokenId>& ids) const {
    std::string symbols;
    for (TokenId id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
            throw FormatError("token id " + std::to_string(id) + " outside the vocabulary");
        symbols += id_to_token_[static_cast<std::size_t>(id)];
    }
    std::string bytes;
    std::size_t pos = 0;
    for (const auto& cp : decode_utf8(symbols)) {
        if (cp.begin < pos) continue;
        const std::string sym = symbols.substr(cp.begin, cp.end - cp.begin);
        auto it = symbol_byte_.find(sym);
        bytes += it != symbol_byte_.end() ? static_cast<char>(it->second) : sym[0];
        pos = cp.end;
    }
    std::string out;
    for (std::size_t k = 0; k < bytes.size();) {
        if (bytes.compare(k, kEndOfWord.size(), kEndOfWord) == 0) {
            out += ' ';
            k += kEndOfWord.size();
        } else {
            out += bytes[k++];
        }
    }
    return out;
}

}  // namespace naclip
