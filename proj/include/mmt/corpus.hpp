#pragma once

#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mmt/common.hpp"

namespace mmt {

using LanguageId = std::string;

inline constexpr const char* kEnglish = "en";

struct Direction {
  LanguageId source;
  LanguageId target;
  auto operator<=>(const Direction&) const = default;
};

inline std::string to_string(const Direction& d) { return d.source + "-" + d.target; }
Direction parse_direction(std::string_view s);

enum class Split { Train, Dev, Test };
inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    default: return "test";
  }
}
Split parse_split(std::string_view s);
inline const std::vector<Split>& all_splits() {
  static const std::vector<Split> v{Split::Train, Split::Dev, Split::Test};
  return v;
}

struct SentencePair {
  std::string src;
  std::string tgt;
  bool operator==(const SentencePair&) const = default;
};

struct Bitext {
  Direction direction;
  Split split = Split::Train;
  std::vector<SentencePair> pairs;
};

struct LoadDiagnostics {
  int dropped_empty = 0;
};

// Aligned line-by-line load of one parallel file pair. Lines where either
// side trims to empty are dropped and counted in `diag`.
Bitext load_bitext(const std::string& source_path, const std::string& target_path,
                   const Direction& direction, Split split, LoadDiagnostics* diag = nullptr);

struct MultilingualDataset {
  // keyed by split then direction
  std::map<Split, std::map<Direction, Bitext>> splits;
  bool english_centric = false;

  const Bitext* find(const Direction& d, Split s) const;
  std::vector<Direction> directions(Split s) const;
  std::set<LanguageId> languages() const;
  std::set<LanguageId> non_english_languages() const;
  void add(Bitext b);
  void validate() const;  // structural invariants; throws Error(Data)
};

// Mirrors X->En bitexts to-and-from English. Inputs must all have target
// "en"; the En->X side is constructed by swapping pair sides.
MultilingualDataset build_english_centric(const std::vector<Bitext>& x_en_bitexts);

struct SubsetChain {
  std::vector<int> sizes;  // non-English language counts, strictly increasing
  std::vector<MultilingualDataset> subsets;
  std::vector<std::set<LanguageId>> language_sets;
};

SubsetChain nested_subsets(const MultilingualDataset& dataset, const std::vector<int>& sizes,
                           uint64_t seed, const std::vector<LanguageId>& mandatory = {});

struct PooledExample {
  Direction direction;
  std::string src;
  std::string tgt;
};

struct PooledDev {
  std::vector<PooledExample> examples;
  bool took_all = false;  // k exceeded the pool; everything was returned
};

// Uniform sample (without replacement) from the concatenation of all dev
// sets; directions with more dev examples contribute proportionally more.
PooledDev sample_dev_union(const MultilingualDataset& dataset, size_t k, uint64_t seed);

struct CorpusStats {
  int num_pairs = 0;
  long long min = 0;
  long long max = 0;
  double mean = 0;
  double std_dev = 0;  // population
  long long total = 0;
  std::string to_table() const;
};

CorpusStats stats_from_sizes(const std::vector<long long>& sizes);
// Statistics over X->En train sizes, one count per language pair.
CorpusStats corpus_stats(const MultilingualDataset& dataset);

// ---------------------------------------------------------------------------
// Synthetic cipher corpus.
//
// "en" sentences are random token strings over a pseudo-word base vocabulary
// with a Zipf-like frequency law. Each synthetic language is a fixed
// bijective token-substitution cipher of that vocabulary; languages of odd
// index additionally reverse word order, so translation requires both
// lexical mapping and reordering.

struct SyntheticSpec {
  int num_languages = 4;  // non-English
  int vocab_size = 100;
  int min_len = 4;
  int max_len = 12;
  int train_pairs = 2000;
  int dev_pairs = 200;
  int test_pairs = 200;
  uint64_t seed = 1;
  bool multiway = false;  // same underlying English sentences across pairs
  double zipf_exponent = 1.1;
  // Optional per-language train sizes (e.g. a geometric ladder mimicking an
  // imbalanced corpus). Empty = `train_pairs` for every language.
  std::vector<int> per_language_train_sizes;

  void validate() const;
  std::string to_config() const;
  static SyntheticSpec from_config(const std::map<std::string, std::string>& kv);
};

class SyntheticCorpus {
 public:
  explicit SyntheticCorpus(const SyntheticSpec& spec);

  const SyntheticSpec& spec() const { return spec_; }
  const MultilingualDataset& dataset() const { return dataset_; }
  std::vector<LanguageId> languages() const;  // synthetic (non-English) ids

  // Word-level cipher application; `lang` may be "en" (identity).
  std::string cipher(const LanguageId& lang, const std::string& english_line) const;
  std::string decipher(const LanguageId& lang, const std::string& line) const;
  bool reverses(const LanguageId& lang) const;

  // Gold bitext for any direction, including non-English pairs (closed-form
  // cipher composition over a shared English pool for the split).
  Bitext gold_bitext(const Direction& d, Split split) const;

 private:
  SyntheticSpec spec_;
  std::vector<std::string> base_vocab_;
  std::map<std::string, int> word_index_;
  std::map<LanguageId, std::vector<int>> perm_;      // base index -> ciphered index
  std::map<LanguageId, std::vector<int>> perm_inv_;
  std::map<LanguageId, int> lang_index_;             // 1-based
  MultilingualDataset dataset_;
  std::vector<std::string> shared_pool_dev_, shared_pool_test_;

  std::string map_tokens(const LanguageId& lang, const std::string& line, bool invert) const;
};

inline MultilingualDataset synthetic_cipher_dataset(const SyntheticSpec& spec) {
  return SyntheticCorpus(spec).dataset();
}

// ---------------------------------------------------------------------------
// On-disk layout: `<src>-<tgt>.<split>.<side>` text files plus a plain-text
// manifest table (direction, split, file paths, line counts).

void write_dataset(const MultilingualDataset& dataset, const std::string& dir);
MultilingualDataset load_manifest(const std::string& manifest_path);
std::string manifest_path_for(const std::string& dir);

}  // namespace mmt
