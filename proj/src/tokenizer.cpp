#include "clima/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "clima/errors.hpp"
#include "clima/text.hpp"

namespace clima {

std::string to_string(NormalizationScheme s) {
  return s == NormalizationScheme::uncased_stripped ? "uncased_stripped" : "cased_raw";
}

NormalizationScheme scheme_from_string(std::string_view s) {
  if (s == "uncased_stripped") return NormalizationScheme::uncased_stripped;
  if (s == "cased_raw") return NormalizationScheme::cased_raw;
  throw ConfigError("unknown normalization scheme: " + std::string(s));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  Vocab v;
  v.id_to_token = std::move(tokens);
  v.token_to_id.reserve(v.id_to_token.size());
  for (size_t i = 0; i < v.id_to_token.size(); ++i) {
    const auto [it, inserted] = v.token_to_id.emplace(v.id_to_token[i], static_cast<int32_t>(i));
    if (!inserted) throw DataError("duplicate vocab token: " + v.id_to_token[i]);
  }
  v.pad_id = v.lookup(kPad);
  v.unk_id = v.lookup(kUnk);
  v.cls_id = v.lookup(kCls);
  v.sep_id = v.lookup(kSep);
  if (v.pad_id < 0 || v.unk_id < 0 || v.cls_id < 0 || v.sep_id < 0) {
    throw DataError("vocab is missing one of the special tokens [PAD] [UNK] [CLS] [SEP]");
  }
  return v;
}

Vocab load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocab file: " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  // A trailing blank line is an artifact of the final newline, not a token.
  if (!tokens.empty() && tokens.back().empty()) tokens.pop_back();
  for (const std::string& t : tokens) {
    if (t.empty()) throw DataError(path.string() + ": empty vocab token");
    if (!is_valid_utf8(t)) throw DataError(path.string() + ": malformed UTF-8 token");
  }
  return Vocab::from_tokens(std::move(tokens));
}

void save_vocab(const Vocab& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (const std::string& t : vocab.id_to_token) out << t << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::string normalize(std::string_view text, NormalizationScheme scheme) {
  if (scheme == NormalizationScheme::cased_raw) return std::string(text);
  const std::vector<char32_t> cps = decode_utf8(text);
  std::vector<char32_t> folded;
  folded.reserve(cps.size());
  for (char32_t cp : cps) fold_latin_lower(cp, folded);
  return encode_utf8(folded);
}

std::vector<std::string> pre_tokenize(std::string_view text) {
  const std::vector<char32_t> cps = decode_utf8(text);
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  };
  for (char32_t cp : cps) {
    if (is_unicode_space(cp)) {
      flush();
    } else if (is_punctuation(cp)) {
      flush();
      std::string p;
      append_utf8(p, cp);
      tokens.push_back(std::move(p));
    } else {
      append_utf8(current, cp);
    }
  }
  flush();
  return tokens;
}

std::vector<std::string> wordpiece(std::string_view word, const Vocab& vocab) {
  // Codepoint boundaries; greedy matching must not cut UTF-8 sequences.
  const std::vector<char32_t> cps = decode_utf8(word);
  constexpr size_t kMaxWordLen = 100;
  if (cps.empty()) return {};
  if (cps.size() > kMaxWordLen) return {Vocab::kUnk};

  std::vector<std::string> pieces;
  size_t start = 0;
  while (start < cps.size()) {
    size_t end = cps.size();
    std::string match;
    while (start < end) {
      std::string candidate;
      if (start > 0) candidate = vocab.continuation_prefix;
      for (size_t k = start; k < end; ++k) append_utf8(candidate, cps[k]);
      if (vocab.lookup(candidate) >= 0) {
        match = std::move(candidate);
        break;
      }
      --end;
    }
    if (match.empty()) return {Vocab::kUnk};
    pieces.push_back(std::move(match));
    start = end;
  }
  return pieces;
}

TokenSequence encode(std::string_view text, const Vocab& vocab, NormalizationScheme scheme,
                     int max_len) {
  if (max_len < 2) throw ConfigError("max_len must be at least 2");

  std::vector<int32_t> body;
  for (const std::string& word : pre_tokenize(normalize(text, scheme))) {
    for (const std::string& piece : wordpiece(word, vocab)) {
      body.push_back(vocab.lookup(piece));
    }
  }
  const size_t keep = std::min(body.size(), static_cast<size_t>(max_len - 2));

  TokenSequence seq;
  seq.ids.assign(static_cast<size_t>(max_len), vocab.pad_id);
  seq.mask.assign(static_cast<size_t>(max_len), 0);
  seq.ids[0] = vocab.cls_id;
  for (size_t i = 0; i < keep; ++i) seq.ids[i + 1] = body[i];
  seq.ids[keep + 1] = vocab.sep_id;
  seq.real_length = static_cast<int32_t>(keep + 2);
  for (int32_t i = 0; i < seq.real_length; ++i) seq.mask[static_cast<size_t>(i)] = 1;
  return seq;
}

Vocab build_vocab(const Corpus& corpus, NormalizationScheme scheme, size_t max_size) {
  std::map<std::string, int64_t> word_counts;
  std::map<std::string, bool> chars;  // deterministic order
  for (const LabeledSentence& rec : corpus.records) {
    for (const std::string& word : pre_tokenize(normalize(rec.text, scheme))) {
      ++word_counts[word];
      for (char32_t cp : decode_utf8(word)) {
        std::string c;
        append_utf8(c, cp);
        chars[c] = true;
      }
    }
  }

  std::vector<std::string> tokens = {Vocab::kPad, Vocab::kUnk, Vocab::kCls, Vocab::kSep};
  for (const auto& [c, _] : chars) {
    tokens.push_back(c);
    tokens.push_back("##" + c);
  }
  if (tokens.size() > max_size) {
    throw ConfigError("vocab cap too small for the corpus character set");
  }

  std::vector<std::pair<int64_t, std::string>> by_freq;
  by_freq.reserve(word_counts.size());
  for (const auto& [word, count] : word_counts) by_freq.emplace_back(-count, word);
  std::sort(by_freq.begin(), by_freq.end());

  std::unordered_map<std::string, bool> present;
  for (const std::string& t : tokens) present[t] = true;
  for (const auto& [neg_count, word] : by_freq) {
    if (tokens.size() >= max_size) break;
    if (present.contains(word)) continue;
    tokens.push_back(word);
    present[word] = true;
  }
  return Vocab::from_tokens(std::move(tokens));
}

}  // namespace clima
