#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "softthink/common.hpp"

namespace softthink {

/// Byte-level vocabulary: ids 0..255 are raw bytes, followed by the
/// special tokens. Round trips are lossless for arbitrary byte strings.
namespace tokens {
inline constexpr int kByteCount = 256;
inline constexpr TokenId kBos = 256;     // beginning of sequence
inline constexpr TokenId kEot = 257;     // end of thinking / end of message
inline constexpr TokenId kPad = 258;
inline constexpr TokenId kAnswer = 259;  // answer-mode marker
inline constexpr TokenId kReserved = 260;
inline constexpr int kVocabSize = 261;
} // namespace tokens

inline std::vector<TokenId> tokenize(std::string_view text) {
    std::vector<TokenId> ids;
    ids.reserve(text.size());
    for (const char c : text)
        ids.push_back(static_cast<TokenId>(static_cast<unsigned char>(c)));
    return ids;
}

/// Bytes map back to themselves; specials and unknown ids render as
/// escape sequences rather than failing.
inline std::string detokenize(std::span<const TokenId> ids) {
    std::string out;
    out.reserve(ids.size());
    for (const TokenId id : ids) {
        if (id >= 0 && id < tokens::kByteCount) {
            out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
        } else if (id == tokens::kBos) {
            out += "<|bos|>";
        } else if (id == tokens::kEot) {
            out += "<|eot|>";
        } else if (id == tokens::kPad) {
            out += "<|pad|>";
        } else if (id == tokens::kAnswer) {
            out += "<|answer|>";
        } else if (id == tokens::kReserved) {
            out += "<|reserved|>";
        } else {
            out += "<|id:" + std::to_string(id) + "|>";
        }
    }
    return out;
}

inline std::string detokenize(const std::vector<TokenId>& ids) {
    return detokenize(std::span<const TokenId>(ids));
}

} // namespace softthink
