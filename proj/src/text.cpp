#include "clima/text.hpp"

#include <array>
#include <cstdint>

#include "clima/errors.hpp"

namespace clima {

namespace {

// Returns the number of continuation bytes expected after a lead byte, or -1
// for an invalid lead.
int utf8_len(unsigned char lead) noexcept {
  if (lead < 0x80) return 0;
  if ((lead & 0xE0) == 0xC0) return 1;
  if ((lead & 0xF0) == 0xE0) return 2;
  if ((lead & 0xF8) == 0xF0) return 3;
  return -1;
}

[[noreturn]] void bad_utf8(size_t offset) {
  throw DataError("malformed UTF-8 at byte offset " + std::to_string(offset));
}

}  // namespace

std::vector<char32_t> decode_utf8(std::string_view text) {
  std::vector<char32_t> out;
  out.reserve(text.size());
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    const unsigned char lead = static_cast<unsigned char>(text[i]);
    const int extra = utf8_len(lead);
    if (extra < 0) bad_utf8(i);
    if (extra > 0 && i + static_cast<size_t>(extra) >= n) bad_utf8(i);
    char32_t cp = 0;
    switch (extra) {
      case 0:
        cp = lead;
        break;
      case 1:
        cp = lead & 0x1Fu;
        break;
      case 2:
        cp = lead & 0x0Fu;
        break;
      case 3:
        cp = lead & 0x07u;
        break;
    }
    for (int k = 1; k <= extra; ++k) {
      const unsigned char c = static_cast<unsigned char>(text[i + static_cast<size_t>(k)]);
      if ((c & 0xC0) != 0x80) bad_utf8(i + static_cast<size_t>(k));
      cp = (cp << 6) | (c & 0x3Fu);
    }
    // Reject overlong encodings, surrogates and out-of-range codepoints.
    static constexpr char32_t kMin[4] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra]) bad_utf8(i);
    if (cp >= 0xD800 && cp <= 0xDFFF) bad_utf8(i);
    if (cp > 0x10FFFF) bad_utf8(i);
    out.push_back(cp);
    i += static_cast<size_t>(extra) + 1;
  }
  return out;
}

bool is_valid_utf8(std::string_view text) noexcept {
  try {
    decode_utf8(text);
    return true;
  } catch (const DataError&) {
    return false;
  }
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string encode_utf8(const std::vector<char32_t>& cps) {
  std::string out;
  out.reserve(cps.size());
  for (char32_t cp : cps) append_utf8(out, cp);
  return out;
}

bool is_unicode_space(char32_t cp) noexcept {
  switch (cp) {
    case U' ':
    case U'\t':
    case U'\n':
    case U'\r':
    case 0x0B:
    case 0x0C:
    case 0x85:
    case 0xA0:
    case 0x1680:
    case 0x2028:
    case 0x2029:
    case 0x202F:
    case 0x205F:
    case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_punctuation(char32_t cp) noexcept {
  if (cp < 0x80) {
    return (cp >= '!' && cp <= '/') || (cp >= ':' && cp <= '@') ||
           (cp >= '[' && cp <= '`') || (cp >= '{' && cp <= '~');
  }
  switch (cp) {
    case 0xA1:   // inverted exclamation
    case 0xAB:   // left guillemet
    case 0xBB:   // right guillemet
    case 0xBF:   // inverted question mark
    case 0x2022: // bullet
    case 0x2026: // ellipsis
    case 0x2030: // per mille
    case 0x20AC: // euro sign, appears token-separating in filings
      return true;
    default:
      return cp >= 0x2010 && cp <= 0x2027;
  }
}

bool is_combining_mark(char32_t cp) noexcept { return cp >= 0x300 && cp <= 0x36F; }

namespace {

// Base-letter folds for Latin-1 Supplement (U+00C0..U+00FF). Empty string
// means "no fold" (keep the codepoint as-is).
constexpr std::array<const char*, 0x40> kLatin1Fold = {
    "a",  "a",  "a",  "a",  "a",  "a",  "ae", "c",   // C0-C7
    "e",  "e",  "e",  "e",  "i",  "i",  "i",  "i",   // C8-CF
    "d",  "n",  "o",  "o",  "o",  "o",  "o",  "",    // D0-D7 (D7 = multiplication sign)
    "o",  "u",  "u",  "u",  "u",  "y",  "th", "ss",  // D8-DF
    "a",  "a",  "a",  "a",  "a",  "a",  "ae", "c",   // E0-E7
    "e",  "e",  "e",  "e",  "i",  "i",  "i",  "i",   // E8-EF
    "d",  "n",  "o",  "o",  "o",  "o",  "o",  "",    // F0-F7 (F7 = division sign)
    "o",  "u",  "u",  "u",  "u",  "y",  "th", "y",   // F8-FF
};

// Base-letter folds for Latin Extended-A (U+0100..U+017F).
constexpr std::array<const char*, 0x80> kLatinAFold = {
    "a", "a", "a", "a", "a", "a", "c", "c",  // 0100-0107
    "c", "c", "c", "c", "c", "c", "d", "d",  // 0108-010F
    "d", "d", "e", "e", "e", "e", "e", "e",  // 0110-0117
    "e", "e", "e", "e", "g", "g", "g", "g",  // 0118-011F
    "g", "g", "g", "g", "h", "h", "h", "h",  // 0120-0127
    "i", "i", "i", "i", "i", "i", "i", "i",  // 0128-012F
    "i", "i", "ij", "ij", "j", "j", "k", "k",  // 0130-0137
    "k", "l", "l", "l", "l", "l", "l", "l",  // 0138-013F
    "l", "l", "l", "n", "n", "n", "n", "n",  // 0140-0147
    "n", "n", "n", "n", "o", "o", "o", "o",  // 0148-014F
    "o", "o", "oe", "oe", "r", "r", "r", "r",  // 0150-0157
    "r", "r", "s", "s", "s", "s", "s", "s",  // 0158-015F
    "s", "s", "t", "t", "t", "t", "t", "t",  // 0160-0167
    "u", "u", "u", "u", "u", "u", "u", "u",  // 0168-016F
    "u", "u", "u", "u", "w", "w", "y", "y",  // 0170-0177
    "y", "z", "z", "z", "z", "z", "z", "s",  // 0178-017F
};

}  // namespace

void fold_latin_lower(char32_t cp, std::vector<char32_t>& out) {
  if (is_combining_mark(cp)) return;
  if (cp < 0x80) {
    if (cp >= U'A' && cp <= U'Z') cp += 0x20;
    out.push_back(cp);
    return;
  }
  const char* fold = nullptr;
  if (cp >= 0xC0 && cp <= 0xFF) {
    fold = kLatin1Fold[cp - 0xC0];
  } else if (cp >= 0x100 && cp <= 0x17F) {
    fold = kLatinAFold[cp - 0x100];
  }
  if (fold == nullptr || fold[0] == '\0') {
    out.push_back(cp);
    return;
  }
  for (const char* p = fold; *p != '\0'; ++p) out.push_back(static_cast<char32_t>(*p));
}

}  // namespace clima
