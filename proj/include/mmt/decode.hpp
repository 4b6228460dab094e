#pragma once

#include <algorithm>

#include "mmt/pipeline.hpp"
#include "mmt/transformer.hpp"

namespace mmt {

struct DecodeConfig {
  enum class Mode { Greedy, Beam };
  Mode mode = Mode::Greedy;
  int beam = 4;
  double len_norm = 0.6;  // hypothesis score = logprob / len^alpha
  int max_len = 0;        // 0 -> 2 * source length + 10
  int batch = 32;         // sentences decoded together in greedy mode

  int max_len_for(int src_len) const { return max_len > 0 ? max_len : 2 * src_len + 10; }
};

struct DecodeDiagnostics {
  int truncated = 0;  // hypotheses cut at max length without eos
};

namespace detail {

template <typename T>
std::vector<double> last_position_log_probs(const Tensor<T>& logits, int64_t row, int64_t tgt_len,
                                            int64_t vocab) {
  const T* x = logits.data() + (row * tgt_len + (tgt_len - 1)) * vocab;
  double mx = double(x[0]);
  for (int64_t j = 1; j < vocab; ++j) mx = std::max(mx, double(x[j]));
  double sum = 0;
  for (int64_t j = 0; j < vocab; ++j) sum += std::exp(double(x[j]) - mx);
  double lse = std::log(sum) + mx;
  std::vector<double> lp(size_t(vocab));
  for (int64_t j = 0; j < vocab; ++j) lp[size_t(j)] = double(x[j]) - lse;
  return lp;
}

}  // namespace detail

// Next-token distribution given an encoded source and a bos-framed prefix;
// defined as the softmax of the final position of a teacher-forced forward.
template <typename T>
std::vector<double> decode_step(Transformer<T>& model, const Tensor<T>& memory,
                                const std::vector<int>& src_ids, const std::vector<int>& prefix,
                                int bos_id) {
  if (prefix.empty() || prefix[0] != bos_id) fail_usage("decode_step: prefix must begin with bos");
  Tape<T> tape;
  ModelInput<T> in;
  in.batch = 1;
  in.src_len = int64_t(src_ids.size());
  in.tgt_len = int64_t(prefix.size());
  in.src = src_ids;
  in.tgt_in = prefix;
  in.src_pad.assign(src_ids.size(), 0);
  in.tgt_pad.assign(prefix.size(), 0);
  auto mem = tape.constant(memory);
  auto logits = model.decode(tape, mem, in);
  auto lp = detail::last_position_log_probs(tape.val(logits), 0, in.tgt_len,
                                            model.config().vocab_size);
  std::vector<double> probs(lp.size());
  for (size_t i = 0; i < lp.size(); ++i) probs[i] = std::exp(lp[i]);
  return probs;
}

template <typename T>
Tensor<T> encode_source(Transformer<T>& model, const std::vector<int>& src_ids) {
  Tape<T> tape;
  ModelInput<T> in;
  in.batch = 1;
  in.src_len = int64_t(src_ids.size());
  in.tgt_len = 1;
  in.src = src_ids;
  in.tgt_in = {0};
  in.src_pad.assign(src_ids.size(), 0);
  in.tgt_pad = {0};
  return tape.val(model.encode(tape, in));
}

// Batched greedy decoding; ties break toward the lowest token id.
template <typename T>
std::vector<TokenSeq> greedy_decode(Transformer<T>& model, const std::vector<TokenSeq>& sources,
                                    int bos_id, int eos_id, int pad_id,
                                    const DecodeConfig& cfg = {},
                                    DecodeDiagnostics* diag = nullptr) {
  std::vector<TokenSeq> out(sources.size());
  int64_t V = model.config().vocab_size;
  for (size_t begin = 0; begin < sources.size(); begin += size_t(cfg.batch)) {
    size_t end = std::min(sources.size(), begin + size_t(cfg.batch));
    int64_t B = int64_t(end - begin);
    int64_t S = 0;
    int max_out = 0;
    std::vector<int> row_limit(size_t(B));
    for (size_t i = begin; i < end; ++i) {
      S = std::max(S, int64_t(sources[i].size()));
      int lim = std::min(cfg.max_len_for(int(sources[i].size())),
                         model.config().max_positions - 1);
      row_limit[i - begin] = lim;
      max_out = std::max(max_out, lim);
    }

    ModelInput<T> in;
    in.batch = B;
    in.src_len = S;
    in.src.assign(size_t(B * S), pad_id);
    in.src_pad.assign(size_t(B * S), 1);
    for (int64_t r = 0; r < B; ++r) {
      const auto& s = sources[begin + size_t(r)];
      for (size_t k = 0; k < s.size(); ++k) {
        in.src[size_t(r * S) + k] = s[k];
        in.src_pad[size_t(r * S) + k] = 0;
      }
    }

    std::vector<TokenSeq> prefix(size_t(B), TokenSeq{bos_id});
    std::vector<uint8_t> done(size_t(B), 0);
    // re-encode once per batch, reuse the memory tensor across steps
    Tensor<T> memory;
    {
      Tape<T> tape;
      in.tgt_len = 1;
      in.tgt_in.assign(size_t(B), bos_id);
      in.tgt_pad.assign(size_t(B), 0);
      memory = tape.val(model.encode(tape, in));
    }
    for (int step = 0; step < max_out; ++step) {
      int64_t Tq = int64_t(prefix[0].size());
      in.tgt_len = Tq;
      in.tgt_in.assign(size_t(B * Tq), pad_id);
      in.tgt_pad.assign(size_t(B * Tq), 1);
      for (int64_t r = 0; r < B; ++r)
        for (int64_t k = 0; k < Tq; ++k) {
          in.tgt_in[size_t(r * Tq + k)] = prefix[size_t(r)][size_t(k)];
          in.tgt_pad[size_t(r * Tq + k)] = 0;
        }
      Tape<T> tape;
      auto logits_id = model.decode(tape, tape.constant(memory), in);
      const Tensor<T>& logits = tape.val(logits_id);
      bool all_done = true;
      for (int64_t r = 0; r < B; ++r) {
        if (done[size_t(r)]) {
          prefix[size_t(r)].push_back(pad_id);
          continue;
        }
        const T* x = logits.data() + (r * Tq + (Tq - 1)) * V;
        int best = 0;
        for (int64_t j = 1; j < V; ++j)
          if (x[j] > x[best]) best = int(j);
        prefix[size_t(r)].push_back(best);
        if (best == eos_id || int(prefix[size_t(r)].size()) - 1 >= row_limit[size_t(r)])
          done[size_t(r)] = 1;
        else
          all_done = false;
      }
      if (all_done) break;
    }
    for (int64_t r = 0; r < B; ++r) {
      TokenSeq hyp;
      bool saw_eos = false;
      for (size_t k = 1; k < prefix[size_t(r)].size(); ++k) {  // skip bos
        int id = prefix[size_t(r)][k];
        if (id == eos_id) {
          saw_eos = true;
          break;
        }
        if (id != pad_id) hyp.push_back(id);
      }
      if (!saw_eos && diag) ++diag->truncated;
      out[begin + size_t(r)] = std::move(hyp);
    }
  }
  return out;
}

// Beam search over one sentence; beams are expanded by cumulative log
// probability and finished hypotheses ranked by logprob / len^alpha.
template <typename T>
TokenSeq beam_decode_one(Transformer<T>& model, const TokenSeq& source, int bos_id, int eos_id,
                         int pad_id, const DecodeConfig& cfg, DecodeDiagnostics* diag = nullptr) {
  const int W = std::max(1, cfg.beam);
  const int64_t V = model.config().vocab_size;
  const int max_out = std::min(cfg.max_len_for(int(source.size())),
                               model.config().max_positions - 1);
  Tensor<T> memory = encode_source(model, source);

  struct Hyp {
    TokenSeq tokens;  // starts with bos
    double logprob = 0;
  };
  auto norm_score = [&](const Hyp& h) {
    // generated length excluding bos
    double len = double(h.tokens.size() - 1);
    return h.logprob / std::pow(std::max(1.0, len), cfg.len_norm);
  };

  std::vector<Hyp> beams{{TokenSeq{bos_id}, 0.0}};
  std::vector<Hyp> finished;
  for (int step = 0; step < max_out && !beams.empty(); ++step) {
    int64_t B = int64_t(beams.size());
    int64_t Tq = int64_t(beams[0].tokens.size());
    ModelInput<T> in;
    in.batch = B;
    in.src_len = int64_t(source.size());
    in.tgt_len = Tq;
    in.src_pad.assign(source.size() * size_t(B), 0);
    in.src.clear();
    for (int64_t r = 0; r < B; ++r) in.src.insert(in.src.end(), source.begin(), source.end());
    in.tgt_in.clear();
    for (const auto& h : beams) in.tgt_in.insert(in.tgt_in.end(), h.tokens.begin(), h.tokens.end());
    in.tgt_pad.assign(size_t(B * Tq), 0);

    Tape<T> tape;
    // tile the encoded memory across beams
    Tensor<T> tiled({B, memory.dim(1), memory.dim(2)});
    for (int64_t r = 0; r < B; ++r)
      std::copy(memory.v.begin(), memory.v.end(), tiled.v.begin() + r * memory.size());
    auto logits_id = model.decode(tape, tape.constant(std::move(tiled)), in);
    const Tensor<T>& logits = tape.val(logits_id);

    struct Cand {
      double logprob;
      int beam;
      int token;
    };
    std::vector<Cand> cands;
    cands.reserve(size_t(B) * size_t(2 * W));
    for (int64_t r = 0; r < B; ++r) {
      auto lp = detail::last_position_log_probs(logits, r, Tq, V);
      // top 2W tokens per beam are enough to fill W continuations
      std::vector<int> idx(size_t(V));
      for (int64_t j = 0; j < V; ++j) idx[size_t(j)] = int(j);
      size_t keep = std::min(size_t(2 * W), idx.size());
      std::partial_sort(idx.begin(), idx.begin() + long(keep), idx.end(), [&](int a, int b) {
        if (lp[size_t(a)] != lp[size_t(b)]) return lp[size_t(a)] > lp[size_t(b)];
        return a < b;
      });
      for (size_t k = 0; k < keep; ++k)
        cands.push_back({beams[size_t(r)].logprob + lp[size_t(idx[k])], int(r), idx[k]});
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.logprob != b.logprob) return a.logprob > b.logprob;
      if (a.beam != b.beam) return a.beam < b.beam;
      return a.token < b.token;
    });

    std::vector<Hyp> next;
    for (const auto& c : cands) {
      if (int(next.size()) >= W) break;
      Hyp h = beams[size_t(c.beam)];
      h.tokens.push_back(c.token);
      h.logprob = c.logprob;
      if (c.token == eos_id) {
        finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    // once every live beam is worse than the best finished hypothesis even
    // with maximal remaining credit, stop
    beams = std::move(next);
    if (int(finished.size()) >= W) break;
  }
  if (finished.empty()) {
    if (diag) ++diag->truncated;
    if (beams.empty()) return {};
    finished.push_back(beams[0]);
  }
  auto best = std::max_element(finished.begin(), finished.end(), [&](const Hyp& a, const Hyp& b) {
    double sa = norm_score(a), sb = norm_score(b);
    if (sa != sb) return sa < sb;
    return a.tokens > b.tokens;  // deterministic tie-break
  });
  TokenSeq out;
  for (size_t k = 1; k < best->tokens.size(); ++k) {
    if (best->tokens[k] == eos_id) break;
    if (best->tokens[k] != pad_id) out.push_back(best->tokens[k]);
  }
  return out;
}

// Tags, encodes, decodes and joins back to word level.
template <typename T>
std::vector<std::string> translate_corpus(Transformer<T>& model, const BpeModel& bpe,
                                          const std::vector<std::string>& lines,
                                          const LanguageId& target_language,
                                          const DecodeConfig& cfg = {},
                                          DecodeDiagnostics* diag = nullptr) {
  int tag = bpe.tag_id(target_language);
  int cap = model.config().max_positions;
  std::vector<TokenSeq> sources;
  sources.reserve(lines.size());
  for (const auto& line : lines) {
    TokenSeq ids = bpe_encode(bpe, line);
    if (int(ids.size()) > cap - 1) ids.resize(size_t(cap - 1));
    TokenSeq src{tag};
    src.insert(src.end(), ids.begin(), ids.end());
    sources.push_back(std::move(src));
  }
  std::vector<TokenSeq> hyps;
  if (cfg.mode == DecodeConfig::Mode::Greedy || cfg.beam <= 1) {
    hyps = greedy_decode(model, sources, bpe.bos_id(), bpe.eos_id(), bpe.pad_id(), cfg, diag);
  } else {
    hyps.reserve(sources.size());
    for (const auto& s : sources)
      hyps.push_back(beam_decode_one(model, s, bpe.bos_id(), bpe.eos_id(), bpe.pad_id(), cfg, diag));
  }
  std::vector<std::string> out;
  out.reserve(hyps.size());
  for (const auto& h : hyps) out.push_back(bpe_decode(bpe, h));
  return out;
}

}  // namespace mmt
