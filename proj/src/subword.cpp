#include "mmt/subword.hpp"

#include <algorithm>
#include <queue>
#include <set>

namespace mmt {

int BpeModel::tag_id(const LanguageId& lang) const {
  for (size_t i = 0; i < tag_languages.size(); ++i)
    if (tag_languages[i] == lang) return kFirstTag + int(i);
  fail_config("no target-language tag for '", lang, "' in vocabulary");
}

void BpeModel::finalize() {
  symbol_to_id.clear();
  symbol_to_id.reserve(id_to_symbol.size());
  for (size_t i = 0; i < id_to_symbol.size(); ++i)
    if (!symbol_to_id.count(id_to_symbol[i])) symbol_to_id[id_to_symbol[i]] = int(i);
  merge_rank.clear();
  merge_rank.reserve(merges.size());
  for (size_t i = 0; i < merges.size(); ++i) {
    std::string key = merges[i].first + "\x01" + merges[i].second;
    if (!merge_rank.count(key)) merge_rank[key] = int(i);
  }
}

WordCounts count_words(const std::vector<std::string>& lines, WordCounts counts) {
  for (const auto& line : lines)
    for (auto& w : split_ws(line)) ++counts[w];
  return counts;
}

WordCounts count_words(const MultilingualDataset& dataset) {
  WordCounts counts;
  auto it = dataset.splits.find(Split::Train);
  if (it == dataset.splits.end()) fail_config("count_words: dataset has no train split");
  for (const auto& [d, bt] : it->second) {
    for (const auto& p : bt.pairs) {
      for (auto& w : split_ws(p.src)) ++counts[w];
      for (auto& w : split_ws(p.tgt)) ++counts[w];
    }
  }
  return counts;
}

namespace {

using SymPair = std::pair<std::string, std::string>;

struct Word {
  std::vector<int> syms;  // indices into the symbol string table
  long long count = 0;
};

// Heap entry ordering: highest count first, then lexicographically smallest
// pair. Entries are lazily invalidated against the live count map.
struct HeapEntry {
  long long count;
  SymPair pair;
  bool operator<(const HeapEntry& o) const {
    if (count != o.count) return count < o.count;
    return pair > o.pair;  // smaller pair wins
  }
};

}  // namespace

BpeModel train_bpe(const WordCounts& counts, int target_vocab,
                   const std::vector<LanguageId>& tag_languages) {
  BpeModel model;
  model.tag_languages = tag_languages;
  {
    std::set<LanguageId> uniq(tag_languages.begin(), tag_languages.end());
    if (uniq.size() != tag_languages.size()) fail_config("duplicate tag languages");
  }
  model.id_to_symbol = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (const auto& lang : tag_languages) model.id_to_symbol.push_back("<2" + lang + ">");

  // Symbol string table; symbol ids here are training-internal.
  std::vector<std::string> sym_str;
  std::map<std::string, int> sym_index;
  auto intern = [&](const std::string& s) {
    auto it = sym_index.find(s);
    if (it != sym_index.end()) return it->second;
    int id = int(sym_str.size());
    sym_str.push_back(s);
    sym_index[s] = id;
    return id;
  };

  std::vector<Word> words;
  std::set<std::string> base_symbols;
  for (const auto& [w, c] : counts) {
    auto chars = utf8_chars(w);
    if (chars.empty()) continue;
    Word word;
    word.count = c;
    for (size_t i = 0; i + 1 < chars.size(); ++i) {
      base_symbols.insert(chars[i]);
      word.syms.push_back(intern(chars[i]));
    }
    std::string last = chars.back() + model.end_of_word_marker;
    base_symbols.insert(last);
    word.syms.push_back(intern(last));
    words.push_back(std::move(word));
  }
  if (words.empty()) fail_config("train_bpe: empty corpus");

  int reserved = model.num_reserved();
  if (target_vocab <= reserved + int(base_symbols.size()))
    fail_config("train_bpe: target_vocab ", target_vocab,
                " must exceed reserved tokens + distinct characters (",
                reserved + int(base_symbols.size()), ")");

  for (const auto& s : base_symbols) model.id_to_symbol.push_back(s);
  std::set<std::string> vocab_strings(model.id_to_symbol.begin(), model.id_to_symbol.end());

  // Pair counts plus an occurrence index (pair -> word indices, possibly stale).
  std::map<SymPair, long long> pair_counts;
  std::map<SymPair, std::set<int>> pair_words;
  auto bump = [&](const SymPair& p, long long delta, int word_idx) {
    pair_counts[p] += delta;
    if (delta > 0) pair_words[p].insert(word_idx);
  };
  for (int wi = 0; wi < int(words.size()); ++wi) {
    const auto& syms = words[wi].syms;
    for (size_t i = 0; i + 1 < syms.size(); ++i)
      bump({sym_str[syms[i]], sym_str[syms[i + 1]]}, words[wi].count, wi);
  }

  std::priority_queue<HeapEntry> heap;
  for (const auto& [p, c] : pair_counts) heap.push({c, p});

  while (int(model.id_to_symbol.size()) < target_vocab) {
    SymPair best;
    long long best_count = 0;
    while (!heap.empty()) {
      HeapEntry top = heap.top();
      auto it = pair_counts.find(top.pair);
      long long live = it == pair_counts.end() ? 0 : it->second;
      if (live != top.count) {  // stale
        heap.pop();
        if (live > 0) heap.push({live, top.pair});
        continue;
      }
      best = top.pair;
      best_count = live;
      break;
    }
    if (best_count <= 0) {
      model.target_reached = false;
      model.diagnostic = cat("target_vocab ", target_vocab, " unreachable; stopped after ",
                             model.merges.size(), " merges");
      break;
    }

    std::string merged = best.first + best.second;
    int merged_id = intern(merged);
    int left_id = sym_index.at(best.first);
    int right_id = sym_index.at(best.second);
    model.merges.push_back(best);
    // Distinct merges can produce the same string (e.g. a+bc and ab+c); the
    // vocabulary keeps one entry per string.
    if (vocab_strings.insert(merged).second) model.id_to_symbol.push_back(merged);

    auto affected = pair_words[best];  // copy; rewriting mutates the index
    for (int wi : affected) {
      auto& syms = words[wi].syms;
      long long wc = words[wi].count;
      std::vector<int> out;
      out.reserve(syms.size());
      size_t i = 0;
      bool changed = false;
      while (i < syms.size()) {
        if (i + 1 < syms.size() && syms[i] == left_id && syms[i + 1] == right_id) {
          // retire neighbour pairs around the occurrence
          if (!out.empty()) bump({sym_str[out.back()], best.first}, -wc, wi);
          if (i + 2 < syms.size()) bump({best.second, sym_str[syms[i + 2]]}, -wc, wi);
          bump(best, -wc, wi);
          if (!out.empty()) bump({sym_str[out.back()], merged}, wc, wi);
          out.push_back(merged_id);
          changed = true;
          i += 2;
          if (i < syms.size()) bump({merged, sym_str[syms[i]]}, wc, wi);
        } else {
          out.push_back(syms[i]);
          ++i;
        }
      }
      if (changed) syms = std::move(out);
    }
    pair_counts.erase(best);
    pair_words.erase(best);
    // push refreshed entries for pairs we touched
    for (auto& [p, c] : pair_counts)
      if (p.first == merged || p.second == merged) heap.push({c, p});
  }

  model.finalize();
  return model;
}

BpeModel train_bpe(const std::vector<std::string>& lines, int target_vocab,
                   const std::vector<LanguageId>& tag_languages) {
  return train_bpe(count_words(lines), target_vocab, tag_languages);
}

TokenSeq bpe_encode(const BpeModel& model, const std::string& line) {
  TokenSeq out;
  auto rank_of = [&](const std::string& a, const std::string& b) {
    auto it = model.merge_rank.find(a + "\x01" + b);
    return it == model.merge_rank.end() ? -1 : it->second;
  };

  for (const auto& word : split_ws(line)) {
    auto chars = utf8_chars(word);
    std::vector<std::string> syms;
    for (size_t i = 0; i + 1 < chars.size(); ++i) syms.push_back(chars[i]);
    syms.push_back(chars.back() + model.end_of_word_marker);

    // apply merges in training order
    while (syms.size() > 1) {
      int best_rank = -1;
      size_t best_pos = 0;
      for (size_t i = 0; i + 1 < syms.size(); ++i) {
        int r = rank_of(syms[i], syms[i + 1]);
        if (r >= 0 && (best_rank < 0 || r < best_rank)) {
          best_rank = r;
          best_pos = i;
        }
      }
      if (best_rank < 0) break;
      // merge every occurrence of that pair left to right
      const std::string left = syms[best_pos], right = syms[best_pos + 1];
      std::vector<std::string> next;
      next.reserve(syms.size());
      size_t i = 0;
      while (i < syms.size()) {
        if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
          next.push_back(left + right);
          i += 2;
        } else {
          next.push_back(syms[i]);
          ++i;
        }
      }
      syms = std::move(next);
    }
    for (const auto& s : syms) {
      auto it = model.symbol_to_id.find(s);
      out.push_back(it == model.symbol_to_id.end() ? model.unk_id() : it->second);
    }
  }
  return out;
}

std::string bpe_decode(const BpeModel& model, const TokenSeq& tokens) {
  std::string out;
  const auto& marker = model.end_of_word_marker;
  for (int id : tokens) {
    if (id < 0 || id >= model.vocab_size()) fail_usage("token id out of range: ", id);
    if (model.is_reserved(id)) continue;
    const std::string& sym = model.id_to_symbol[id];
    if (sym.size() >= marker.size() &&
        sym.compare(sym.size() - marker.size(), marker.size(), marker) == 0) {
      out += sym.substr(0, sym.size() - marker.size());
      out += ' ';
    } else {
      out += sym;
    }
  }
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

void save_bpe(const BpeModel& model, const std::string& path) {
  std::ostringstream os;
  os << "mmt-bpe v1\n";
  os << "marker " << model.end_of_word_marker << "\n";
  os << "tags " << model.tag_languages.size();
  for (const auto& l : model.tag_languages) os << " " << l;
  os << "\n";
  os << "reached " << (model.target_reached ? 1 : 0) << "\n";
  os << "merges " << model.merges.size() << "\n";
  for (const auto& [a, b] : model.merges) os << a << " " << b << "\n";
  os << "symbols " << model.id_to_symbol.size() << "\n";
  for (const auto& s : model.id_to_symbol) os << s << "\n";
  write_text(path, os.str());
}

BpeModel load_bpe(const std::string& path) {
  auto lines = read_lines(path);
  size_t i = 0;
  auto next = [&]() -> const std::string& {
    if (i >= lines.size()) fail_data("truncated BPE model file: ", path);
    return lines[i++];
  };
  if (next() != "mmt-bpe v1") fail_data("bad BPE model header: ", path);
  BpeModel model;
  {
    auto f = split_ws(next());
    if (f.size() != 2 || f[0] != "marker") fail_data("bad marker line in ", path);
    model.end_of_word_marker = f[1];
  }
  {
    auto f = split_ws(next());
    if (f.size() < 2 || f[0] != "tags") fail_data("bad tags line in ", path);
    size_t n = std::stoull(f[1]);
    if (f.size() != 2 + n) fail_data("bad tags line in ", path);
    model.tag_languages.assign(f.begin() + 2, f.end());
  }
  {
    auto f = split_ws(next());
    if (f.size() != 2 || f[0] != "reached") fail_data("bad reached line in ", path);
    model.target_reached = f[1] == "1";
  }
  {
    auto f = split_ws(next());
    if (f.size() != 2 || f[0] != "merges") fail_data("bad merges line in ", path);
    size_t n = std::stoull(f[1]);
    for (size_t k = 0; k < n; ++k) {
      auto m = split_ws(next());
      if (m.size() != 2) fail_data("bad merge rule in ", path);
      model.merges.emplace_back(m[0], m[1]);
    }
  }
  {
    auto f = split_ws(next());
    if (f.size() != 2 || f[0] != "symbols") fail_data("bad symbols line in ", path);
    size_t n = std::stoull(f[1]);
    for (size_t k = 0; k < n; ++k) model.id_to_symbol.push_back(next());
  }
  model.finalize();
  return model;
}

}  // namespace mmt
