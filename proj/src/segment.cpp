#include <algorithm>
#include <cctype>
#include <fstream>

#include "clima/corpus.hpp"
#include "clima/errors.hpp"

namespace clima {

namespace {

const std::vector<std::string> kDefaultAbbreviations = {
    "approx.", "Inc.",   "No.",    "U.S.",   "U.K.",   "U.S.C.", "S.E.C.",
    "Co.",     "Corp.",  "Ltd.",   "LLC.",   "L.P.",   "N.A.",   "Mr.",
    "Mrs.",    "Ms.",    "Dr.",    "Jr.",    "Sr.",    "St.",    "vs.",
    "etc.",    "e.g.",   "i.e.",   "cf.",    "al.",    "Sec.",   "Art.",
    "Exh.",    "Jan.",   "Feb.",   "Mar.",   "Apr.",   "Jun.",   "Jul.",
    "Aug.",    "Sep.",   "Sept.",  "Oct.",   "Nov.",   "Dec.",   "Dept.",
    "Div.",    "Est.",   "Fig.",   "Reg.",   "Stat.",  "Rev.",
};

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

// Closing characters that may trail the terminal punctuation and still belong
// to the sentence: ASCII quotes/brackets plus a few UTF-8 closing quotes.
size_t consume_closers(std::string_view text, size_t i) {
  while (i < text.size()) {
    const char c = text[i];
    if (c == '"' || c == '\'' || c == ')' || c == ']' || c == '}') {
      ++i;
      continue;
    }
    // U+2019 right single quote, U+201D right double quote, U+00BB guillemet
    if (text.compare(i, 3, "\xE2\x80\x9D") == 0 || text.compare(i, 3, "\xE2\x80\x99") == 0) {
      i += 3;
      continue;
    }
    if (text.compare(i, 2, "\xC2\xBB") == 0) {
      i += 2;
      continue;
    }
    break;
  }
  return i;
}

std::string trim_ws(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && is_ascii_space(s[b])) ++b;
  while (e > b && is_ascii_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

const std::vector<std::string>& default_abbreviations() { return kDefaultAbbreviations; }

std::vector<std::string> load_abbreviations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open abbreviation file: " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string token = trim_ws(line);
    if (token.empty() || token[0] == '#') continue;
    out.push_back(token);
  }
  return out;
}

std::vector<std::string> segment_item1a(std::string_view text) {
  return segment_item1a(text, default_abbreviations());
}

std::vector<std::string> segment_item1a(std::string_view text,
                                        const std::vector<std::string>& abbreviations) {
  std::vector<std::string> guard;
  guard.reserve(abbreviations.size());
  for (const std::string& a : abbreviations) guard.push_back(lower_ascii(a));

  std::vector<std::string> sentences;
  auto flush = [&](size_t begin, size_t end) {
    std::string s = trim_ws(text.substr(begin, end - begin));
    if (!s.empty()) sentences.push_back(std::move(s));
  };

  size_t start = 0;
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    if (!is_terminal(text[i])) {
      ++i;
      continue;
    }
    // Consume the whole run of terminal punctuation ("...", "?!").
    const size_t run_begin = i;
    size_t run_end = i;
    while (run_end < n && is_terminal(text[run_end])) ++run_end;
    const size_t after = consume_closers(text, run_end);
    const bool at_boundary = after >= n || is_ascii_space(text[after]);
    if (!at_boundary) {
      i = run_end;
      continue;
    }
    // A single '.' may close an abbreviation; scan back to the previous
    // whitespace and look the token up in the guard list.
    if (run_end - run_begin == 1 && text[run_begin] == '.') {
      size_t tok_begin = run_begin;
      while (tok_begin > start && !is_ascii_space(text[tok_begin - 1])) --tok_begin;
      const std::string token = lower_ascii(text.substr(tok_begin, run_end - tok_begin));
      if (std::find(guard.begin(), guard.end(), token) != guard.end()) {
        i = run_end;
        continue;
      }
    }
    flush(start, after);
    start = after;
    i = after;
  }
  flush(start, n);
  return sentences;
}

}  // namespace clima
