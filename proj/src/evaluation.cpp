#include "mmt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <unordered_map>

namespace mmt {

BleuScore bleu(const std::vector<std::string>& hypotheses,
               const std::vector<std::string>& references) {
  if (hypotheses.size() != references.size())
    fail_usage("bleu: hypothesis/reference count mismatch (", hypotheses.size(), " vs ",
               references.size(), ")");
  BleuScore s;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    auto hyp = split_ws(hypotheses[i]);
    auto ref = split_ws(references[i]);
    s.hyp_len += (long long)hyp.size();
    s.ref_len += (long long)ref.size();
    for (int n = 1; n <= 4; ++n) {
      if (int(hyp.size()) < n) continue;
      std::unordered_map<std::string, long long> ref_counts;
      for (size_t k = 0; k + size_t(n) <= ref.size(); ++k) {
        std::string g = ref[k];
        for (int j = 1; j < n; ++j) g += '\x01' + ref[k + size_t(j)];
        ++ref_counts[g];
      }
      std::unordered_map<std::string, long long> hyp_counts;
      for (size_t k = 0; k + size_t(n) <= hyp.size(); ++k) {
        std::string g = hyp[k];
        for (int j = 1; j < n; ++j) g += '\x01' + hyp[k + size_t(j)];
        ++hyp_counts[g];
      }
      for (const auto& [g, c] : hyp_counts) {
        s.attempted[n - 1] += c;
        auto it = ref_counts.find(g);
        if (it != ref_counts.end()) s.matched[n - 1] += std::min(c, it->second);
      }
    }
  }
  for (int n = 0; n < 4; ++n)
    s.precisions[n] = s.attempted[n] > 0 ? double(s.matched[n]) / double(s.attempted[n]) : 0.0;
  if (s.hyp_len == 0) {
    s.brevity_penalty = 0;
    s.score = 0;
    return s;
  }
  s.brevity_penalty =
      s.hyp_len > s.ref_len ? 1.0 : std::exp(1.0 - double(s.ref_len) / double(s.hyp_len));
  bool any_zero = false;
  double log_sum = 0;
  for (int n = 0; n < 4; ++n) {
    if (s.precisions[n] <= 0) {
      any_zero = true;
      break;
    }
    log_sum += std::log(s.precisions[n]);
  }
  s.score = any_zero ? 0.0 : s.brevity_penalty * std::exp(0.25 * log_sum) * 100.0;
  return s;
}

std::string BleuScore::summary() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << score << " (BP=" << std::setprecision(4)
     << brevity_penalty << ", p=";
  for (int n = 0; n < 4; ++n) os << (n ? "/" : "") << std::setprecision(3) << precisions[n];
  os << ", hyp_len=" << hyp_len << ", ref_len=" << ref_len << ")";
  return os.str();
}

void EvalMatrix::put(const std::string& setup, const Direction& d, EvalCell cell) {
  if (std::find(setups.begin(), setups.end(), setup) == setups.end()) setups.push_back(setup);
  if (std::find(directions.begin(), directions.end(), d) == directions.end())
    directions.push_back(d);
  cells[{setup, to_string(d)}] = std::move(cell);
}

const EvalCell* EvalMatrix::get(const std::string& setup, const Direction& d) const {
  auto it = cells.find({setup, to_string(d)});
  return it == cells.end() ? nullptr : &it->second;
}

double EvalMatrix::average(const std::string& setup) const {
  double sum = 0;
  int n = 0;
  for (const auto& d : directions) {
    if (const EvalCell* c = get(setup, d)) {
      sum += c->score.score;
      ++n;
    }
  }
  return n ? sum / n : 0.0;
}

std::string EvalMatrix::to_table(bool mark_best) const {
  // column widths
  size_t name_w = 5;
  for (const auto& s : setups) name_w = std::max(name_w, s.size());
  std::vector<std::string> headers;
  for (const auto& d : directions) headers.push_back(to_string(d));
  headers.push_back("Avg.");

  // best per direction column
  std::map<std::string, double> best;
  if (mark_best) {
    for (const auto& d : directions) {
      double b = -1;
      for (const auto& s : setups)
        if (const EvalCell* c = get(s, d)) b = std::max(b, c->score.score);
      best[to_string(d)] = b;
    }
    double b = -1;
    for (const auto& s : setups) b = std::max(b, average(s));
    best["Avg."] = b;
  }

  std::ostringstream os;
  os << std::left << std::setw(int(name_w) + 2) << "";
  for (const auto& h : headers) os << std::setw(10) << h;
  os << "\n";
  for (const auto& s : setups) {
    os << std::left << std::setw(int(name_w) + 2) << s;
    for (const auto& d : directions) {
      const EvalCell* c = get(s, d);
      std::ostringstream cell;
      if (c) {
        cell << std::fixed << std::setprecision(2) << c->score.score;
        if (mark_best && c->score.score >= best[to_string(d)] - 1e-12) cell << "*";
      } else {
        cell << "-";
      }
      os << std::setw(10) << cell.str();
    }
    std::ostringstream avg;
    avg << std::fixed << std::setprecision(2) << average(s);
    if (mark_best && average(s) >= best["Avg."] - 1e-12) avg << "*";
    os << std::setw(10) << avg.str() << "\n";
  }
  return os.str();
}

std::string EvalMatrix::to_csv() const {
  std::ostringstream os;
  os << "setup";
  for (const auto& d : directions) os << "," << to_string(d);
  os << ",avg\n";
  os << std::setprecision(17);
  for (const auto& s : setups) {
    os << s;
    for (const auto& d : directions) {
      const EvalCell* c = get(s, d);
      os << ",";
      if (c) os << c->score.score;
    }
    os << "," << average(s) << "\n";
  }
  return os.str();
}

EvalMatrix merge_matrices(const std::vector<EvalMatrix>& matrices) {
  EvalMatrix out;
  if (matrices.empty()) return out;
  std::set<std::string> ref_dirs;
  for (const auto& d : matrices[0].directions) ref_dirs.insert(to_string(d));
  for (const auto& m : matrices) {
    std::set<std::string> dirs;
    for (const auto& d : m.directions) dirs.insert(to_string(d));
    if (dirs != ref_dirs) {
      std::string a = join(std::vector<std::string>(ref_dirs.begin(), ref_dirs.end()), ",");
      std::string b = join(std::vector<std::string>(dirs.begin(), dirs.end()), ",");
      fail_config("cannot merge eval matrices over different directions: {", a, "} vs {", b, "}");
    }
  }
  for (const auto& m : matrices)
    for (const auto& s : m.setups)
      for (const auto& d : m.directions)
        if (const EvalCell* c = m.get(s, d)) out.put(s, d, *c);
  return out;
}

void check_zero_shot(const Direction& d, const std::set<Direction>& trained) {
  if (trained.count(d))
    fail_config("direction ", to_string(d),
                " is present in the training directions; it is not zero-shot");
}

}  // namespace mmt
