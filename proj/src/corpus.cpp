#include "clima/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "clima/errors.hpp"
#include "clima/tensor.hpp"
#include "clima/text.hpp"

namespace clima {

std::string to_string(Source s) {
  switch (s) {
    case Source::wikipedia: return "wikipedia";
    case Source::tenk: return "tenk";
    case Source::claims: return "claims";
    case Source::synthetic: return "synthetic";
    case Source::unknown: return "unknown";
  }
  return "unknown";
}

Source source_from_string(std::string_view s) {
  if (s == "wikipedia") return Source::wikipedia;
  if (s == "tenk") return Source::tenk;
  if (s == "claims") return Source::claims;
  if (s == "synthetic") return Source::synthetic;
  return Source::unknown;
}

namespace {

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> cols;
  size_t start = 0;
  while (true) {
    const size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      cols.emplace_back(line.substr(start));
      break;
    }
    cols.emplace_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cols;
}

}  // namespace

Corpus load_climatext(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string content = std::move(buf).str();

  // Strip a UTF-8 BOM if present, then validate the whole file.
  if (content.size() >= 3 && static_cast<unsigned char>(content[0]) == 0xEF &&
      static_cast<unsigned char>(content[1]) == 0xBB &&
      static_cast<unsigned char>(content[2]) == 0xBF) {
    content.erase(0, 3);
  }
  if (!is_valid_utf8(content)) {
    throw DataError("malformed UTF-8 in corpus file: " + path.string());
  }

  Corpus corpus;
  corpus.name = path.stem().string();

  size_t line_no = 0;
  size_t pos = 0;
  int sentence_col = -1, label_col = -1, source_col = -1;
  while (pos <= content.size()) {
    const size_t nl = content.find('\n', pos);
    std::string_view line(content.data() + pos,
                          (nl == std::string::npos ? content.size() : nl) - pos);
    pos = (nl == std::string::npos) ? content.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    const std::vector<std::string> cols = split_tabs(line);
    if (sentence_col < 0) {
      // Header row.
      for (size_t i = 0; i < cols.size(); ++i) {
        const std::string h = trim(cols[i]);
        if (h == "sentence") sentence_col = static_cast<int>(i);
        else if (h == "label") label_col = static_cast<int>(i);
        else if (h == "source") source_col = static_cast<int>(i);
      }
      if (sentence_col < 0) {
        throw DataError(path.string() + ": header is missing required column \"sentence\"");
      }
      if (label_col < 0) {
        throw DataError(path.string() + ": header is missing required column \"label\"");
      }
      continue;
    }

    const size_t needed = static_cast<size_t>(std::max(sentence_col, label_col)) + 1;
    if (cols.size() < needed) {
      throw DataError(path.string() + " line " + std::to_string(line_no) +
                      ": expected at least " + std::to_string(needed) + " columns, got " +
                      std::to_string(cols.size()));
    }

    LabeledSentence rec;
    rec.text = cols[static_cast<size_t>(sentence_col)];
    const std::string label_str = trim(cols[static_cast<size_t>(label_col)]);
    if (label_str == "0") {
      rec.label = 0;
    } else if (label_str == "1") {
      rec.label = 1;
    } else {
      throw DataError(path.string() + " line " + std::to_string(line_no) +
                      ": label must be 0 or 1, got \"" + label_str + "\"");
    }
    if (trim(rec.text).empty()) {
      throw DataError(path.string() + " line " + std::to_string(line_no) +
                      ": empty sentence");
    }
    if (source_col >= 0 && static_cast<size_t>(source_col) < cols.size()) {
      rec.source = source_from_string(trim(cols[static_cast<size_t>(source_col)]));
    }
    corpus.records.push_back(std::move(rec));
  }
  if (sentence_col < 0) {
    throw DataError(path.string() + ": missing header row");
  }
  return corpus;
}

void save_climatext(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "sentence\tlabel\tsource\n";
  for (const LabeledSentence& rec : corpus.records) {
    std::string text = rec.text;
    for (char& c : text) {
      if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    }
    out << text << '\t' << rec.label << '\t' << to_string(rec.source) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

ClassStats class_stats(const Corpus& corpus) {
  if (corpus.empty()) throw DataError("class_stats: empty corpus");
  ClassStats st;
  st.total = static_cast<int64_t>(corpus.size());
  for (const LabeledSentence& rec : corpus.records) {
    if (rec.label == 1) ++st.positives;
    else ++st.negatives;
  }
  st.majority_fraction =
      static_cast<double>(std::max(st.positives, st.negatives)) / static_cast<double>(st.total);
  return st;
}

void SplitSpec::validate() const {
  for (double f : {train_fraction, val_fraction, test_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw ConfigError("split fraction outside [0,1]: " + std::to_string(f));
    }
  }
  const double sum = train_fraction + val_fraction + test_fraction;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1, got " + std::to_string(sum));
  }
}

namespace {

int64_t round_half_up(double x) { return static_cast<int64_t>(std::floor(x + 0.5)); }

// Splits one index group into (train, val, test) index lists.
void split_group(std::vector<size_t>& indices, const SplitSpec& spec, Rng& rng,
                 std::vector<size_t>& train, std::vector<size_t>& val,
                 std::vector<size_t>& test) {
  shuffle_inplace(indices, rng);
  const int64_t n = static_cast<int64_t>(indices.size());
  int64_t n_val = std::min<int64_t>(round_half_up(spec.val_fraction * static_cast<double>(n)), n);
  int64_t n_test = std::min<int64_t>(round_half_up(spec.test_fraction * static_cast<double>(n)),
                                     n - n_val);
  int64_t i = 0;
  for (; i < n_val; ++i) val.push_back(indices[static_cast<size_t>(i)]);
  for (; i < n_val + n_test; ++i) test.push_back(indices[static_cast<size_t>(i)]);
  for (; i < n; ++i) train.push_back(indices[static_cast<size_t>(i)]);
}

Corpus gather(const Corpus& corpus, std::vector<size_t>& indices, const char* suffix) {
  std::sort(indices.begin(), indices.end());
  Corpus out;
  out.name = corpus.name + suffix;
  out.records.reserve(indices.size());
  for (size_t i : indices) out.records.push_back(corpus.records[i]);
  return out;
}

}  // namespace

SplitResult stratified_split(const Corpus& corpus, const SplitSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::vector<size_t> train_idx, val_idx, test_idx;

  if (spec.stratified) {
    std::vector<size_t> pos, neg;
    for (size_t i = 0; i < corpus.size(); ++i) {
      (corpus.records[i].label == 1 ? pos : neg).push_back(i);
    }
    if (pos.empty() || neg.empty()) {
      throw DataError("stratified split requires at least one record of each class");
    }
    split_group(pos, spec, rng, train_idx, val_idx, test_idx);
    split_group(neg, spec, rng, train_idx, val_idx, test_idx);
  } else {
    std::vector<size_t> all(corpus.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = i;
    split_group(all, spec, rng, train_idx, val_idx, test_idx);
  }

  SplitResult result;
  result.train = gather(corpus, train_idx, "/train");
  result.val = gather(corpus, val_idx, "/val");
  result.test = gather(corpus, test_idx, "/test");
  return result;
}

namespace {

const std::vector<std::string> kNegativeSubjects = {
    "the company",      "our business",        "management",
    "the board",        "consolidated revenue", "operating expense",
    "our supply chain", "the segment",         "net interest income",
    "customer demand",  "the credit facility", "inventory turnover",
    "our workforce",    "capital expenditure", "the pension plan",
};

const std::vector<std::string> kNegativeVerbs = {
    "increased",   "declined",        "may fluctuate", "remained stable",
    "was recorded", "is expected to grow", "contracted",  "improved",
    "could deteriorate", "stabilized",
};

const std::vector<std::string> kNegativeTails = {
    "in fiscal 2018",                 "across all regions",
    "due to currency effects",        "compared to the prior year",
    "under the revolving agreement",  "as disclosed in prior filings",
    "despite competitive pressure",   "following the acquisition",
    "according to internal forecasts", "during the fourth quarter",
};

const std::vector<std::string> kClimatePhrases = {
    "climate change",
    "global warming",
    "greenhouse gas emissions",
    "carbon regulation",
    "extreme weather events",
    "rising sea levels",
    "the transition to a low carbon economy",
    "severe droughts and wildfires",
    "decarbonization requirements",
    "flooding linked to climate change",
};

const std::vector<std::string> kPositiveTemplates = {
    "% poses material risks to our operations",
    "we face regulatory exposure from %",
    "% could disrupt our facilities and suppliers",
    "investors increasingly ask how % affects the portfolio",
    "% may increase our compliance costs substantially",
    "our coastal assets remain vulnerable to %",
};

std::string pick(const std::vector<std::string>& pool, Rng& rng) {
  return pool[static_cast<size_t>(rng.bounded(pool.size()))];
}

}  // namespace

Corpus make_synthetic_corpus(int n, double positive_fraction, uint64_t seed, std::string name) {
  if (n < 0) throw ConfigError("synthetic corpus size must be nonnegative");
  if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0)) {
    throw ConfigError("positive fraction outside [0,1]");
  }
  const int64_t n_pos = round_half_up(positive_fraction * n);
  Rng rng(derive_seed(seed, 0x5e17));

  std::vector<int> labels(static_cast<size_t>(n), 0);
  for (int64_t i = 0; i < n_pos; ++i) labels[static_cast<size_t>(i)] = 1;
  shuffle_inplace(labels, rng);

  Corpus corpus;
  corpus.name = std::move(name);
  corpus.records.reserve(static_cast<size_t>(n));
  for (int label : labels) {
    LabeledSentence rec;
    rec.label = label;
    rec.source = Source::synthetic;
    if (label == 1) {
      std::string tmpl = pick(kPositiveTemplates, rng);
      const std::string phrase = pick(kClimatePhrases, rng);
      const size_t at = tmpl.find('%');
      tmpl.replace(at, 1, phrase);
      rec.text = tmpl + " " + pick(kNegativeTails, rng) + ".";
    } else {
      rec.text = pick(kNegativeSubjects, rng) + " " + pick(kNegativeVerbs, rng) + " " +
                 pick(kNegativeTails, rng) + ".";
    }
    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

}  // namespace clima
