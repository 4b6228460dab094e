#include "mmt/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <unordered_set>

namespace fs = std::filesystem;

namespace mmt {

Direction parse_direction(std::string_view s) {
  auto parts = split_on(s, '-');
  if (parts.size() != 2 || parts[0].empty() || parts[1].empty())
    fail_config("bad direction '", std::string(s), "', expected <src>-<tgt>");
  if (parts[0] == parts[1]) fail_config("direction source equals target: ", std::string(s));
  return Direction{parts[0], parts[1]};
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "dev") return Split::Dev;
  if (s == "test") return Split::Test;
  fail_config("bad split '", std::string(s), "'");
}

Bitext load_bitext(const std::string& source_path, const std::string& target_path,
                   const Direction& direction, Split split, LoadDiagnostics* diag) {
  auto src = read_lines(source_path);
  auto tgt = read_lines(target_path);
  if (src.size() != tgt.size())
    fail_data("alignment error: ", source_path, " has ", src.size(), " lines but ", target_path,
              " has ", tgt.size());
  for (const auto& l : src)
    if (!valid_utf8(l)) fail_data("encoding error: non-UTF-8 line in ", source_path);
  for (const auto& l : tgt)
    if (!valid_utf8(l)) fail_data("encoding error: non-UTF-8 line in ", target_path);

  Bitext bt;
  bt.direction = direction;
  bt.split = split;
  int dropped = 0;
  for (size_t i = 0; i < src.size(); ++i) {
    std::string s = trim(src[i]), t = trim(tgt[i]);
    if (s.empty() || t.empty()) {
      ++dropped;
      continue;
    }
    bt.pairs.push_back({std::move(s), std::move(t)});
  }
  if (diag) diag->dropped_empty += dropped;
  if (bt.pairs.empty())
    fail_data("empty bitext after filtering: ", source_path, " / ", target_path);
  return bt;
}

const Bitext* MultilingualDataset::find(const Direction& d, Split s) const {
  auto sit = splits.find(s);
  if (sit == splits.end()) return nullptr;
  auto dit = sit->second.find(d);
  return dit == sit->second.end() ? nullptr : &dit->second;
}

std::vector<Direction> MultilingualDataset::directions(Split s) const {
  std::vector<Direction> out;
  auto sit = splits.find(s);
  if (sit == splits.end()) return out;
  for (const auto& [d, _] : sit->second) out.push_back(d);
  return out;
}

std::set<LanguageId> MultilingualDataset::languages() const {
  std::set<LanguageId> out;
  for (const auto& [_, dirs] : splits)
    for (const auto& [d, __] : dirs) {
      out.insert(d.source);
      out.insert(d.target);
    }
  return out;
}

std::set<LanguageId> MultilingualDataset::non_english_languages() const {
  auto out = languages();
  out.erase(kEnglish);
  return out;
}

void MultilingualDataset::add(Bitext b) {
  if (b.direction.source == b.direction.target)
    fail_data("direction source equals target: ", to_string(b.direction));
  splits[b.split][b.direction] = std::move(b);
}

void MultilingualDataset::validate() const {
  for (const auto& [split, dirs] : splits) {
    for (const auto& [d, bt] : dirs) {
      if (bt.pairs.empty()) fail_data("empty bitext: ", to_string(d), " ", to_string(split));
      if (english_centric && d.source != kEnglish && d.target != kEnglish)
        fail_data("non-English-centric direction in english_centric dataset: ", to_string(d));
    }
  }
  if (english_centric) {
    auto tit = splits.find(Split::Train);
    if (tit != splits.end()) {
      for (const auto& [d, bt] : tit->second) {
        if (d.target != kEnglish) continue;
        const Bitext* mirror = find({kEnglish, d.source}, Split::Train);
        if (!mirror) fail_data("missing mirror for ", to_string(d));
        if (mirror->pairs.size() != bt.pairs.size())
          fail_data("mirror size mismatch for ", to_string(d));
        for (size_t i = 0; i < bt.pairs.size(); ++i)
          if (mirror->pairs[i].src != bt.pairs[i].tgt || mirror->pairs[i].tgt != bt.pairs[i].src)
            fail_data("mirror content mismatch for ", to_string(d), " at line ", i);
      }
    }
  }
}

MultilingualDataset build_english_centric(const std::vector<Bitext>& x_en_bitexts) {
  MultilingualDataset ds;
  ds.english_centric = true;
  std::set<std::pair<LanguageId, Split>> seen;
  for (const auto& bt : x_en_bitexts) {
    if (bt.direction.source == kEnglish)
      fail_data("build_english_centric rejects source \"en\" input (mirroring is done here): ",
                to_string(bt.direction));
    if (bt.direction.target != kEnglish)
      fail_data("build_english_centric expects X->En bitexts, got ", to_string(bt.direction));
    if (!seen.insert({bt.direction.source, bt.split}).second)
      fail_data("duplicate source language per split: ", bt.direction.source);
    Bitext mirror;
    mirror.direction = {kEnglish, bt.direction.source};
    mirror.split = bt.split;
    mirror.pairs.reserve(bt.pairs.size());
    for (const auto& p : bt.pairs) mirror.pairs.push_back({p.tgt, p.src});
    ds.add(bt);
    ds.add(std::move(mirror));
  }
  ds.validate();
  return ds;
}

SubsetChain nested_subsets(const MultilingualDataset& dataset, const std::vector<int>& sizes,
                           uint64_t seed, const std::vector<LanguageId>& mandatory) {
  if (sizes.empty()) fail_config("nested_subsets: empty size list");
  for (size_t i = 1; i < sizes.size(); ++i)
    if (sizes[i] <= sizes[i - 1]) fail_config("nested_subsets: sizes must be strictly increasing");
  auto non_en = dataset.non_english_languages();
  if (size_t(sizes.back()) > non_en.size())
    fail_config("nested_subsets: max size ", sizes.back(), " exceeds available languages ",
                non_en.size());
  if (mandatory.size() > size_t(sizes.front()))
    fail_config("nested_subsets: mandatory list (", mandatory.size(),
                ") larger than smallest subset (", sizes.front(), ")");
  for (const auto& m : mandatory)
    if (!non_en.count(m)) fail_config("nested_subsets: mandatory language not in dataset: ", m);

  std::vector<LanguageId> order(non_en.begin(), non_en.end());  // sorted, deterministic
  Rng rng(seed, "nested_subsets");
  rng.shuffle(order);
  std::set<LanguageId> mand(mandatory.begin(), mandatory.end());
  std::vector<LanguageId> chosen(mandatory.begin(), mandatory.end());
  for (const auto& l : order)
    if (!mand.count(l)) chosen.push_back(l);

  SubsetChain chain;
  chain.sizes = sizes;
  for (int n : sizes) {
    std::set<LanguageId> langs(chosen.begin(), chosen.begin() + n);
    MultilingualDataset sub;
    sub.english_centric = dataset.english_centric;
    for (const auto& [split, dirs] : dataset.splits) {
      for (const auto& [d, bt] : dirs) {
        LanguageId other = d.source == kEnglish ? d.target : d.source;
        if (langs.count(other)) sub.add(bt);
      }
    }
    sub.validate();
    chain.language_sets.push_back(std::move(langs));
    chain.subsets.push_back(std::move(sub));
  }
  return chain;
}

PooledDev sample_dev_union(const MultilingualDataset& dataset, size_t k, uint64_t seed) {
  std::vector<PooledExample> pool;
  auto sit = dataset.splits.find(Split::Dev);
  if (sit != dataset.splits.end()) {
    for (const auto& [d, bt] : sit->second)
      for (const auto& p : bt.pairs) pool.push_back({d, p.src, p.tgt});
  }
  if (pool.empty()) fail_config("sample_dev_union: no dev examples in any direction");

  PooledDev out;
  if (k >= pool.size()) {
    out.examples = std::move(pool);
    out.took_all = true;
    return out;
  }
  std::vector<size_t> idx(pool.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed, "dev_union");
  rng.shuffle(idx);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());  // stable grouped order
  out.examples.reserve(k);
  for (size_t i : idx) out.examples.push_back(pool[i]);
  return out;
}

CorpusStats stats_from_sizes(const std::vector<long long>& sizes) {
  if (sizes.empty()) fail_config("stats_from_sizes: empty size list");
  CorpusStats st;
  st.num_pairs = int(sizes.size());
  st.min = st.max = sizes[0];
  st.total = 0;
  for (long long s : sizes) {
    st.min = std::min(st.min, s);
    st.max = std::max(st.max, s);
    st.total += s;
  }
  st.mean = double(st.total) / double(sizes.size());
  double acc = 0;
  for (long long s : sizes) {
    double d = double(s) - st.mean;
    acc += d * d;
  }
  st.std_dev = std::sqrt(acc / double(sizes.size()));  // population
  return st;
}

CorpusStats corpus_stats(const MultilingualDataset& dataset) {
  auto tit = dataset.splits.find(Split::Train);
  if (tit == dataset.splits.end() || tit->second.empty())
    fail_config("corpus_stats: no train split");
  // One count per language pair: prefer the X->En side, fall back to En->X.
  std::map<LanguageId, long long> per_pair;
  for (const auto& [d, bt] : tit->second) {
    if (d.target == kEnglish)
      per_pair[d.source] = (long long)bt.pairs.size();
    else if (d.source == kEnglish && !per_pair.count(d.target))
      per_pair[d.target] = (long long)bt.pairs.size();
  }
  if (per_pair.empty()) {
    for (const auto& [d, bt] : tit->second) per_pair[to_string(d)] = (long long)bt.pairs.size();
  }
  std::vector<long long> sizes;
  for (const auto& [_, n] : per_pair) sizes.push_back(n);
  return stats_from_sizes(sizes);
}

std::string CorpusStats::to_table() const {
  std::ostringstream os;
  os << "# of language pairs  " << num_pairs << "\n";
  os << "examples per pair\n";
  os << "  min                " << min << "\n";
  os << "  max                " << max << "\n";
  os << "  average            " << std::fixed << std::setprecision(1) << mean << "\n";
  os << "  std. deviation     " << std::setprecision(1) << std_dev << "\n";
  os << "total # of examples  " << total << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Synthetic cipher corpus

void SyntheticSpec::validate() const {
  if (vocab_size < 10) fail_config("synthetic: vocab_size must be >= 10");
  if (num_languages < 2) fail_config("synthetic: num_languages must be >= 2");
  if (min_len < 1 || max_len < min_len) fail_config("synthetic: bad sentence-length range");
  if (train_pairs < 1 || dev_pairs < 1 || test_pairs < 1)
    fail_config("synthetic: split sizes must be positive");
  if (!per_language_train_sizes.empty() &&
      per_language_train_sizes.size() != size_t(num_languages))
    fail_config("synthetic: per_language_train_sizes must have num_languages entries");
  if (zipf_exponent <= 0) fail_config("synthetic: zipf_exponent must be positive");
}

std::string SyntheticSpec::to_config() const {
  std::ostringstream os;
  os << "languages = " << num_languages << "\n";
  os << "vocab_words = " << vocab_size << "\n";
  os << "len_min = " << min_len << "\n";
  os << "len_max = " << max_len << "\n";
  os << "train = " << train_pairs << "\n";
  os << "dev = " << dev_pairs << "\n";
  os << "test = " << test_pairs << "\n";
  os << "seed = " << seed << "\n";
  os << "multiway = " << (multiway ? "true" : "false") << "\n";
  os << "zipf = " << zipf_exponent << "\n";
  if (!per_language_train_sizes.empty()) {
    os << "train_sizes = ";
    for (size_t i = 0; i < per_language_train_sizes.size(); ++i)
      os << (i ? "," : "") << per_language_train_sizes[i];
    os << "\n";
  }
  return os.str();
}

SyntheticSpec SyntheticSpec::from_config(const std::map<std::string, std::string>& kv) {
  SyntheticSpec s;
  auto get = [&](const std::string& k) -> std::optional<std::string> {
    auto it = kv.find(k);
    if (it == kv.end()) return std::nullopt;
    return it->second;
  };
  if (auto v = get("languages")) s.num_languages = std::stoi(*v);
  if (auto v = get("vocab_words")) s.vocab_size = std::stoi(*v);
  if (auto v = get("len_min")) s.min_len = std::stoi(*v);
  if (auto v = get("len_max")) s.max_len = std::stoi(*v);
  if (auto v = get("train")) s.train_pairs = std::stoi(*v);
  if (auto v = get("dev")) s.dev_pairs = std::stoi(*v);
  if (auto v = get("test")) s.test_pairs = std::stoi(*v);
  if (auto v = get("seed")) s.seed = std::stoull(*v);
  if (auto v = get("multiway")) s.multiway = (*v == "true" || *v == "1");
  if (auto v = get("zipf")) s.zipf_exponent = std::stod(*v);
  if (auto v = get("train_sizes")) {
    s.per_language_train_sizes.clear();
    for (const auto& part : split_on(*v, ','))
      if (!trim(part).empty()) s.per_language_train_sizes.push_back(std::stoi(trim(part)));
  }
  s.validate();
  return s;
}

namespace {

std::vector<std::string> make_base_vocab(int n, Rng& rng) {
  static const char* consonants[] = {"b", "d", "f", "g", "k", "l", "m",
                                     "n", "p", "r", "s", "t", "v", "z"};
  static const char* vowels[] = {"a", "e", "i", "o", "u"};
  std::unordered_set<std::string> seen;
  std::vector<std::string> vocab;
  while (int(vocab.size()) < n) {
    int syllables = 1 + int(rng.next_below(3));
    std::string w;
    for (int s = 0; s < syllables; ++s) {
      w += consonants[rng.next_below(14)];
      w += vowels[rng.next_below(5)];
      if (rng.next_double() < 0.25) w += consonants[rng.next_below(14)];
    }
    if (seen.insert(w).second) vocab.push_back(w);
  }
  return vocab;
}

// Zipf-Mandelbrot weights over ranks.
std::vector<double> zipf_cdf(int n, double exponent) {
  std::vector<double> cdf(n);
  double acc = 0;
  for (int k = 0; k < n; ++k) {
    acc += 1.0 / std::pow(double(k) + 2.7, exponent);
    cdf[k] = acc;
  }
  for (auto& c : cdf) c /= acc;
  return cdf;
}

int sample_rank(const std::vector<double>& cdf, Rng& rng) {
  double u = rng.next_double();
  return int(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
}

}  // namespace

SyntheticCorpus::SyntheticCorpus(const SyntheticSpec& spec) : spec_(spec) {
  spec_.validate();
  Rng vocab_rng(spec_.seed, "synth_vocab");
  base_vocab_ = make_base_vocab(spec_.vocab_size, vocab_rng);
  for (size_t i = 0; i < base_vocab_.size(); ++i) word_index_[base_vocab_[i]] = int(i);

  for (int i = 1; i <= spec_.num_languages; ++i) {
    std::ostringstream name;
    name << "syn" << std::setw(2) << std::setfill('0') << i;
    LanguageId lang = name.str();
    lang_index_[lang] = i;
    std::vector<int> perm(base_vocab_.size());
    for (size_t k = 0; k < perm.size(); ++k) perm[k] = int(k);
    Rng perm_rng(spec_.seed, cat("synth_perm_", lang));
    perm_rng.shuffle(perm);
    std::vector<int> inv(perm.size());
    for (size_t k = 0; k < perm.size(); ++k) inv[perm[k]] = int(k);
    perm_inv_[lang] = std::move(inv);
    perm_[lang] = std::move(perm);
  }

  auto cdf = zipf_cdf(spec_.vocab_size, spec_.zipf_exponent);
  std::unordered_set<std::string> used;  // split disjointness by sentence identity
  auto gen_sentence = [&](Rng& rng) {
    for (;;) {
      int len = int(rng.next_range(spec_.min_len, spec_.max_len));
      std::vector<std::string> toks;
      toks.reserve(len);
      for (int t = 0; t < len; ++t) toks.push_back(base_vocab_[sample_rank(cdf, rng)]);
      std::string s = join(toks, " ");
      if (used.insert(s).second) return s;
    }
  };
  auto gen_pool = [&](const std::string& tag, int count) {
    Rng rng(spec_.seed, cat("synth_pool_", tag));
    std::vector<std::string> pool(count);
    for (auto& s : pool) s = gen_sentence(rng);
    return pool;
  };

  // Dev/test English pools are shared across pairs so evaluation (and
  // zero-shot gold construction) compares like with like.
  shared_pool_dev_ = gen_pool("dev", spec_.dev_pairs);
  shared_pool_test_ = gen_pool("test", spec_.test_pairs);

  std::vector<std::string> shared_train;
  int max_train = spec_.train_pairs;
  if (!spec_.per_language_train_sizes.empty())
    max_train = *std::max_element(spec_.per_language_train_sizes.begin(),
                                  spec_.per_language_train_sizes.end());
  if (spec_.multiway) shared_train = gen_pool("train", max_train);

  std::vector<Bitext> x_en;
  for (const auto& [lang, idx] : lang_index_) {
    int n_train = spec_.per_language_train_sizes.empty()
                      ? spec_.train_pairs
                      : spec_.per_language_train_sizes[idx - 1];
    std::vector<std::string> train_en;
    if (spec_.multiway) {
      train_en.assign(shared_train.begin(), shared_train.begin() + n_train);
    } else {
      train_en = gen_pool(cat("train_", lang), n_train);
    }
    auto make_bitext = [&](Split split, const std::vector<std::string>& en_lines) {
      Bitext bt;
      bt.direction = {lang, kEnglish};
      bt.split = split;
      for (const auto& e : en_lines) bt.pairs.push_back({cipher(lang, e), e});
      return bt;
    };
    x_en.push_back(make_bitext(Split::Train, train_en));
    x_en.push_back(make_bitext(Split::Dev, shared_pool_dev_));
    x_en.push_back(make_bitext(Split::Test, shared_pool_test_));
  }
  dataset_ = build_english_centric(x_en);
}

std::vector<LanguageId> SyntheticCorpus::languages() const {
  std::vector<LanguageId> out;
  for (const auto& [lang, _] : lang_index_) out.push_back(lang);
  return out;
}

bool SyntheticCorpus::reverses(const LanguageId& lang) const {
  auto it = lang_index_.find(lang);
  if (it == lang_index_.end()) {
    if (lang == kEnglish) return false;
    fail_config("unknown synthetic language: ", lang);
  }
  return it->second % 2 == 1;
}

std::string SyntheticCorpus::map_tokens(const LanguageId& lang, const std::string& line,
                                        bool invert) const {
  const auto& table = invert ? perm_inv_ : perm_;
  auto pit = table.find(lang);
  if (pit == table.end()) fail_config("unknown synthetic language: ", lang);
  const std::vector<int>& perm = pit->second;
  auto toks = split_ws(line);
  for (auto& t : toks) {
    auto it = word_index_.find(t);
    if (it == word_index_.end()) fail_data("token outside base vocabulary: ", t);
    t = base_vocab_[perm[it->second]];
  }
  if (reverses(lang)) std::reverse(toks.begin(), toks.end());
  return join(toks, " ");
}

std::string SyntheticCorpus::cipher(const LanguageId& lang, const std::string& english_line) const {
  if (lang == kEnglish) return english_line;
  return map_tokens(lang, english_line, /*invert=*/false);
}

std::string SyntheticCorpus::decipher(const LanguageId& lang, const std::string& line) const {
  if (lang == kEnglish) return line;
  // undo reversal first, then invert the substitution
  auto toks = split_ws(line);
  if (reverses(lang)) std::reverse(toks.begin(), toks.end());
  const auto& inv = perm_inv_.at(lang);
  for (auto& t : toks) {
    auto it = word_index_.find(t);
    if (it == word_index_.end()) fail_data("token outside base vocabulary: ", t);
    t = base_vocab_[inv[it->second]];
  }
  return join(toks, " ");
}

Bitext SyntheticCorpus::gold_bitext(const Direction& d, Split split) const {
  const std::vector<std::string>* pool = nullptr;
  switch (split) {
    case Split::Dev: pool = &shared_pool_dev_; break;
    case Split::Test: pool = &shared_pool_test_; break;
    default: fail_config("gold_bitext supports dev/test splits only");
  }
  Bitext bt;
  bt.direction = d;
  bt.split = split;
  for (const auto& e : *pool) bt.pairs.push_back({cipher(d.source, e), cipher(d.target, e)});
  return bt;
}

// ---------------------------------------------------------------------------
// Manifest I/O

std::string manifest_path_for(const std::string& dir) {
  return (fs::path(dir) / "manifest.txt").string();
}

void write_dataset(const MultilingualDataset& dataset, const std::string& dir) {
  fs::create_directories(dir);
  std::ostringstream manifest;
  manifest << "# source target split source_path target_path lines\n";
  for (const auto& [split, dirs] : dataset.splits) {
    for (const auto& [d, bt] : dirs) {
      std::string stem = cat(d.source, "-", d.target, ".", to_string(split));
      std::string src_path = stem + ".src";
      std::string tgt_path = stem + ".tgt";
      std::vector<std::string> src, tgt;
      src.reserve(bt.pairs.size());
      tgt.reserve(bt.pairs.size());
      for (const auto& p : bt.pairs) {
        src.push_back(p.src);
        tgt.push_back(p.tgt);
      }
      write_lines((fs::path(dir) / src_path).string(), src);
      write_lines((fs::path(dir) / tgt_path).string(), tgt);
      manifest << d.source << " " << d.target << " " << to_string(split) << " " << src_path << " "
               << tgt_path << " " << bt.pairs.size() << "\n";
    }
  }
  write_text(manifest_path_for(dir), manifest.str());
}

MultilingualDataset load_manifest(const std::string& manifest_path) {
  auto lines = read_lines(manifest_path);
  fs::path base = fs::path(manifest_path).parent_path();
  MultilingualDataset ds;
  for (const auto& raw : lines) {
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto f = split_ws(line);
    if (f.size() != 6) fail_data("bad manifest row: ", line);
    Direction d{f[0], f[1]};
    Split split = parse_split(f[2]);
    Bitext bt = load_bitext((base / f[3]).string(), (base / f[4]).string(), d, split);
    size_t expect = std::stoull(f[5]);
    if (bt.pairs.size() != expect)
      fail_data("manifest line count mismatch for ", to_string(d), " ", to_string(split),
                ": expected ", expect, ", got ", bt.pairs.size());
    ds.add(std::move(bt));
  }
  // english_centric iff every direction touches English and mirrors exist
  bool centric = true;
  for (const auto& [split, dirs] : ds.splits)
    for (const auto& [d, _] : dirs)
      if (d.source != kEnglish && d.target != kEnglish) centric = false;
  if (centric) {
    for (const auto& [d, _] : ds.splits[Split::Train])
      if (d.target == kEnglish && !ds.find({kEnglish, d.source}, Split::Train)) centric = false;
  }
  ds.english_centric = centric;
  ds.validate();
  return ds;
}

}  // namespace mmt
