// SPDX-License-Identifier: Apache-2.0
//
// UTF-8 helpers. Character offsets throughout the toolkit are Unicode code
// point indices, never byte offsets.
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace aspectprobe::text {

std::u32string decode(std::string_view utf8);
std::string encode(std::u32string_view cps);

std::size_t length(std::string_view utf8);

// Code point range [begin, end) of `utf8`.
std::string substr(std::string_view utf8, std::size_t begin, std::size_t end);

// NFC + lowercase. ё and е stay distinct.
std::string normalize_lemma(std::string_view s);

std::string to_lower(std::string_view s);

bool is_space(char32_t c);
bool is_punct(char32_t c);

// Whitespace split with punctuation peeled off as separate tokens. Each token
// carries its code point offsets.
struct Piece {
    std::string surface;
    std::size_t begin = 0;
    std::size_t end = 0;
};
std::vector<Piece> split_words(std::string_view utf8);

}  // namespace aspectprobe::text
