#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmt/common.hpp"
#include "mmt/corpus.hpp"

namespace mmt {

using TokenSeq = std::vector<int>;

// Joint byte-pair-encoding model shared across all languages and both sides.
// Reserved ids (pad, bos, eos, unk, one target-language tag per language)
// precede all learned symbols; the end-of-word marker is a suffix attached to
// the final subword of each word.
struct BpeModel {
  std::string end_of_word_marker = "</w>";
  std::vector<std::pair<std::string, std::string>> merges;  // training order
  std::vector<std::string> id_to_symbol;                    // dense ids from 0
  std::unordered_map<std::string, int> symbol_to_id;
  std::unordered_map<std::string, int> merge_rank;  // "left\x01right" -> merge index
  std::vector<LanguageId> tag_languages;            // order defines tag ids
  bool target_reached = true;
  std::string diagnostic;

  void finalize();  // rebuilds the lookup maps from merges/id_to_symbol

  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kFirstTag = 4;

  int pad_id() const { return kPad; }
  int bos_id() const { return kBos; }
  int eos_id() const { return kEos; }
  int unk_id() const { return kUnk; }
  int num_reserved() const { return kFirstTag + int(tag_languages.size()); }
  int vocab_size() const { return int(id_to_symbol.size()); }
  int tag_id(const LanguageId& lang) const;  // Error(Config) if unknown
  bool is_reserved(int id) const { return id >= 0 && id < num_reserved(); }
};

// Word -> frequency, aggregated over every training stream up front so the
// result is independent of input file ordering.
using WordCounts = std::map<std::string, long long>;

WordCounts count_words(const std::vector<std::string>& lines, WordCounts counts = {});
WordCounts count_words(const MultilingualDataset& dataset);  // train split, both sides

// Greedy merge loop: repeatedly merge the most frequent adjacent symbol pair
// over word-frequency-weighted types until the vocabulary reaches
// `target_vocab` (total size, reserved tokens and characters included).
// Equal-frequency ties break lexicographically on (left, right).
BpeModel train_bpe(const WordCounts& counts, int target_vocab,
                   const std::vector<LanguageId>& tag_languages);
BpeModel train_bpe(const std::vector<std::string>& lines, int target_vocab,
                   const std::vector<LanguageId>& tag_languages);

TokenSeq bpe_encode(const BpeModel& model, const std::string& line);
std::string bpe_decode(const BpeModel& model, const TokenSeq& tokens);

void save_bpe(const BpeModel& model, const std::string& path);
BpeModel load_bpe(const std::string& path);

}  // namespace mmt
