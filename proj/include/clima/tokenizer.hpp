#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "clima/corpus.hpp"

namespace clima {

enum class NormalizationScheme {
  uncased_stripped,  // lowercase, accents folded away
  cased_raw,         // input passed through unchanged
};

std::string to_string(NormalizationScheme s);
NormalizationScheme scheme_from_string(std::string_view s);

// Subword inventory. Ids are dense 0..size-1; the four special tokens must be
// present. File format: one token per line, id = 0-based line number.
struct Vocab {
  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int32_t> token_to_id;
  int32_t pad_id = -1;
  int32_t unk_id = -1;
  int32_t cls_id = -1;
  int32_t sep_id = -1;
  std::string continuation_prefix = "##";

  static constexpr const char* kPad = "[PAD]";
  static constexpr const char* kUnk = "[UNK]";
  static constexpr const char* kCls = "[CLS]";
  static constexpr const char* kSep = "[SEP]";

  // Builds the id map and locates specials. Throws DataError on duplicates or
  // missing specials.
  static Vocab from_tokens(std::vector<std::string> tokens);

  int32_t size() const noexcept { return static_cast<int32_t>(id_to_token.size()); }
  int32_t lookup(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? -1 : it->second;
  }
};

Vocab load_vocab(const std::filesystem::path& path);
void save_vocab(const Vocab& vocab, const std::filesystem::path& path);

// Word-level vocabulary harvested from a corpus: all single characters seen
// (plus their "##" continuation forms) and the most frequent whole words, up
// to max_size entries. Enough to run the pipeline end to end without an
// externally trained vocabulary.
Vocab build_vocab(const Corpus& corpus, NormalizationScheme scheme, size_t max_size = 8192);

// Fixed-length encoding of one sentence.
struct TokenSequence {
  std::vector<int32_t> ids;  // length max_len, padded with pad_id
  std::vector<int8_t> mask;  // 1 for real positions, 0 for padding
  int32_t real_length = 0;   // count of non-pad positions, >= 2

  int32_t max_len() const noexcept { return static_cast<int32_t>(ids.size()); }
  bool operator==(const TokenSequence&) const = default;
};

std::string normalize(std::string_view text, NormalizationScheme scheme);

// Whitespace split followed by splitting punctuation into standalone tokens.
std::vector<std::string> pre_tokenize(std::string_view text);

// Greedy longest-prefix subword match; continuation pieces carry "##". A word
// with any unmatchable position maps to a single [UNK].
std::vector<std::string> wordpiece(std::string_view word, const Vocab& vocab);

// [CLS] + subwords + [SEP], head-truncated to max_len with [SEP] always the
// last real token, padded with pad_id. Throws ConfigError when max_len < 2.
TokenSequence encode(std::string_view text, const Vocab& vocab, NormalizationScheme scheme,
                     int max_len = 128);

// Bundles the three encode inputs that travel together.
struct Tokenizer {
  Vocab vocab;
  NormalizationScheme scheme = NormalizationScheme::uncased_stripped;
  int max_len = 128;

  TokenSequence encode(std::string_view text) const {
    return clima::encode(text, vocab, scheme, max_len);
  }
};

}  // namespace clima
