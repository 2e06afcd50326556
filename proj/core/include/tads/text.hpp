#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace tads {

// Decodes UTF-8 into code points. Invalid bytes decode to themselves so that
// every input has a well-defined character sequence.
std::u32string utf8_codepoints(std::string_view text);

// Length of `text` in characters (code points).
std::size_t char_length(std::string_view text);

// Whitespace-separated token count.
std::size_t token_count(std::string_view text);

// Unnormalized character-level edit distance (insert, delete, substitute).
std::size_t levenshtein(std::u32string_view a, std::u32string_view b);
std::size_t levenshtein(std::string_view a, std::string_view b);

// Edit distance capped at max_distance + 1. Only the diagonal band of width
// 2*max_distance+1 is evaluated and the scan stops once every cell in a row
// exceeds the cap, so unrelated strings are rejected after a few rows.
std::size_t levenshtein_bounded(std::u32string_view a, std::u32string_view b,
                                std::size_t max_distance);

}  // namespace tads
