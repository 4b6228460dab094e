#pragma once

#include <set>

#include "mmt/corpus.hpp"

namespace mmt {

// Corpus-level tokenized BLEU (4-gram, clipped counts, brevity penalty).
// No smoothing: any zero n-gram precision yields a zero score.
struct BleuScore {
  double precisions[4] = {0, 0, 0, 0};
  long long matched[4] = {0, 0, 0, 0};
  long long attempted[4] = {0, 0, 0, 0};
  double brevity_penalty = 0;
  long long hyp_len = 0;
  long long ref_len = 0;
  double score = 0;  // in [0, 100]

  std::string summary() const;
};

BleuScore bleu(const std::vector<std::string>& hypotheses,
               const std::vector<std::string>& references);

// Direction-indexed result table: one column per evaluated direction and an
// arithmetic-average column, one row per model/setup.
struct EvalCell {
  BleuScore score;
  std::string hyp_path;  // traceability: files that produced the number
  std::string ref_path;
};

struct EvalMatrix {
  std::vector<std::string> setups;
  std::vector<Direction> directions;
  std::map<std::pair<std::string, std::string>, EvalCell> cells;  // (setup, direction)

  void put(const std::string& setup, const Direction& d, EvalCell cell);
  const EvalCell* get(const std::string& setup, const Direction& d) const;
  double average(const std::string& setup) const;  // mean over present cells
  std::string to_table(bool mark_best = true) const;
  std::string to_csv() const;
};

// Merges per-setup matrices into one comparison table; all inputs must cover
// the same direction set.
EvalMatrix merge_matrices(const std::vector<EvalMatrix>& matrices);

// Guard used before zero-shot evaluation: the direction must be absent from
// the model's training directions.
void check_zero_shot(const Direction& d, const std::set<Direction>& trained);

}  // namespace mmt
