#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace clima {

// Strict UTF-8 decoding. Throws DataError on malformed sequences, naming the
// byte offset of the first bad byte.
std::vector<char32_t> decode_utf8(std::string_view text);
bool is_valid_utf8(std::string_view text) noexcept;
void append_utf8(std::string& out, char32_t cp);
std::string encode_utf8(const std::vector<char32_t>& cps);

bool is_unicode_space(char32_t cp) noexcept;
bool is_punctuation(char32_t cp) noexcept;
// Combining diacritical marks (U+0300..U+036F).
bool is_combining_mark(char32_t cp) noexcept;

// Lowercases and folds accented Latin letters to their unaccented base form,
// dropping combining marks. Covers ASCII, Latin-1 Supplement and Latin
// Extended-A; codepoints outside those ranges pass through unchanged.
void fold_latin_lower(char32_t cp, std::vector<char32_t>& out);

}  // namespace clima
