#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace clima {

enum class Source { wikipedia, tenk, claims, synthetic, unknown };

std::string to_string(Source s);
Source source_from_string(std::string_view s);

struct LabeledSentence {
  std::string text;
  int label = 0;  // 1 = climate-change related
  Source source = Source::unknown;

  bool operator==(const LabeledSentence&) const = default;
};

// An ordered set of labeled sentences. Iteration order is stable and, for a
// loaded file, equals file order. Immutable by convention after construction.
struct Corpus {
  std::string name;
  std::vector<LabeledSentence> records;

  size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
};

struct ClassStats {
  int64_t total = 0;
  int64_t positives = 0;
  int64_t negatives = 0;
  double majority_fraction = 0.0;
};

struct SplitSpec {
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  uint64_t seed = 0;
  bool stratified = true;

  // Throws ConfigError if any fraction is outside [0,1] or they do not sum
  // to 1 within 1e-9.
  void validate() const;
};

struct SplitResult {
  Corpus train;
  Corpus val;
  Corpus test;
};

// Loads a UTF-8 TSV with a mandatory header row naming "sentence" and "label"
// columns (extra columns are ignored; an optional "source" column is
// recognized). LF and CRLF line endings are both accepted. Errors carry
// 1-based line numbers.
Corpus load_climatext(const std::filesystem::path& path);

// Canonical writer: "sentence\tlabel\tsource" header, LF endings. Tabs and
// newlines inside sentences are replaced by single spaces.
void save_climatext(const Corpus& corpus, const std::filesystem::path& path);

ClassStats class_stats(const Corpus& corpus);

// Deterministic seeded split. Quotas for val/test are rounded half-up per
// class (per corpus when unstratified); the train partition takes the
// remainder. Partition records keep their original relative order.
SplitResult stratified_split(const Corpus& corpus, const SplitSpec& spec);

// Deterministic synthetic corpus: financial-register filler sentences, with
// round(n * positive_fraction) of them containing planted climate phrases.
Corpus make_synthetic_corpus(int n, double positive_fraction, uint64_t seed,
                             std::string name = "synthetic");

// --- sentence segmentation -------------------------------------------------

// Abbreviations whose trailing period must not end a sentence.
const std::vector<std::string>& default_abbreviations();
std::vector<std::string> load_abbreviations(const std::filesystem::path& path);

// Splits Item 1A style prose into sentences at terminal punctuation (. ! ?)
// followed by whitespace, unless the preceding token is a guarded
// abbreviation. Never returns an empty sentence; empty input gives an empty
// list.
std::vector<std::string> segment_item1a(std::string_view text);
std::vector<std::string> segment_item1a(std::string_view text,
                                        const std::vector<std::string>& abbreviations);

}  // namespace clima
