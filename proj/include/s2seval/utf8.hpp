#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace s2seval::utf8 {

// Splits UTF-8 text into one string per Unicode scalar value. Invalid bytes
// are passed through as single-byte tokens.
std::vector<std::string> split_scalars(std::string_view text);

std::vector<char32_t> decode(std::string_view text);
std::string encode(char32_t cp);

bool is_space(char32_t cp);

// Lowercases ASCII and the Latin-1/Latin Extended-A letters used by German
// and Swiss German orthographies; everything else is returned unchanged.
std::string to_lower(std::string_view text);

// Removes every whitespace scalar.
std::string strip_whitespace(std::string_view text);

} // namespace s2seval::utf8
