#pragma once

#include <filesystem>
#include <functional>

#include "mmt/checkpoint.hpp"
#include "mmt/decode.hpp"
#include "mmt/evaluation.hpp"
#include "mmt/pipeline.hpp"
#include "mmt/transformer.hpp"

namespace mmt {

// Inverse square root schedule: rate = scale * d^-1/2 * min(s^-1/2, s * w^-3/2).
struct Schedule {
  double peak_scale = 3.0;
  int64_t warmup_steps = 40000;
  int d_model = 512;

  void validate() const {
    if (warmup_steps < 1) fail_config("schedule: warmup_steps must be >= 1");
    if (peak_scale <= 0) fail_config("schedule: peak_scale must be positive");
  }
};

inline double learning_rate(const Schedule& s, int64_t step) {
  s.validate();
  if (step < 1) fail_usage("learning_rate: step must be >= 1, got ", step);
  double inv_sqrt = 1.0 / std::sqrt(double(step));
  double warm = double(step) * std::pow(double(s.warmup_steps), -1.5);
  return s.peak_scale * std::pow(double(s.d_model), -0.5) * std::min(inv_sqrt, warm);
}

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
  double clip_norm = 0;  // 0 = off
};

struct TrainConfig {
  Schedule schedule;
  OptimizerConfig optimizer;
  double label_smoothing = 0.1;
  uint64_t seed = 1;
  int64_t budget = 0;        // total optimizer steps
  int64_t eval_interval = 500;
  DecodeConfig eval_decode;  // greedy by default; dev evaluation decoding
  std::string checkpoint_dir;
  int checkpoint_ring = 3;
};

struct BestRecord {
  double bleu = -1;
  int64_t step = -1;
  std::string ckpt_path;
};

template <typename T>
struct TrainState {
  int64_t step = 0;
  std::vector<Tensor<T>> m, v;  // moments aligned with model.parameters()
  std::map<std::string, BestRecord> best;  // "pooled" or "dir:<src>-<tgt>"
  std::vector<std::string> checkpoint_ring;

  static TrainState init(Transformer<T>& model) {
    TrainState s;
    for (auto* p : model.parameters()) {
      s.m.push_back(Tensor<T>::zeros(p->value.shape));
      s.v.push_back(Tensor<T>::zeros(p->value.shape));
    }
    return s;
  }
};

template <typename T>
ModelInput<T> batch_to_input(const Batch& b) {
  if (b.tgt_len < 2) fail_usage("batch target length must be >= 2 (bos + content/eos)");
  ModelInput<T> in;
  in.batch = b.rows;
  in.src_len = b.src_len;
  in.tgt_len = b.tgt_len - 1;  // teacher forcing: input drops the final position
  in.src = b.src;
  in.src_pad = b.src_pad;
  in.tgt_in.resize(size_t(b.rows * in.tgt_len));
  in.tgt_pad.resize(size_t(b.rows * in.tgt_len));
  for (int64_t r = 0; r < b.rows; ++r)
    for (int64_t k = 0; k < in.tgt_len; ++k) {
      in.tgt_in[size_t(r * in.tgt_len + k)] = b.tgt[size_t(r * b.tgt_len + k)];
      in.tgt_pad[size_t(r * in.tgt_len + k)] = b.tgt_pad[size_t(r * b.tgt_len + k)];
    }
  return in;
}

// Labels and the non-pad token mask for the shifted target.
inline void batch_labels(const Batch& b, std::vector<int>& labels, std::vector<uint8_t>& mask) {
  int64_t Tq = b.tgt_len - 1;
  labels.resize(size_t(b.rows * Tq));
  mask.resize(size_t(b.rows * Tq));
  for (int64_t r = 0; r < b.rows; ++r)
    for (int64_t k = 0; k < Tq; ++k) {
      labels[size_t(r * Tq + k)] = b.tgt[size_t(r * b.tgt_len + k + 1)];
      mask[size_t(r * Tq + k)] = b.tgt_pad[size_t(r * b.tgt_len + k + 1)] ? 0 : 1;
    }
}

// Masked label-smoothed cross entropy per non-pad target token; no update.
template <typename T>
double batch_loss(Transformer<T>& model, const Batch& b, double label_smoothing,
                  Tape<T>* out_tape = nullptr, typename Tape<T>::Id* out_loss = nullptr,
                  bool train_mode = false, uint64_t seed = 0, int64_t step = 0) {
  Tape<T> local(train_mode, seed, uint64_t(step));
  Tape<T>& tape = out_tape ? *out_tape : local;
  ModelInput<T> in = batch_to_input<T>(b);
  auto logits = model.forward(tape, in);
  std::vector<int> labels;
  std::vector<uint8_t> mask;
  batch_labels(b, labels, mask);
  auto flat = tape.reshape(logits, {b.rows * in.tgt_len, model.config().vocab_size});
  auto loss = tape.cross_entropy(flat, std::move(labels), std::move(mask), T(label_smoothing));
  if (out_loss) *out_loss = loss;
  return double(tape.val(loss).v[0]);
}

// One optimizer step: forward, backward, adaptive-moment update at lr(step).
template <typename T>
double train_step(Transformer<T>& model, const Batch& batch, TrainState<T>& state,
                  const TrainConfig& cfg) {
  int64_t step = state.step + 1;
  Tape<T> tape(/*train=*/true, cfg.seed, uint64_t(step));
  typename Tape<T>::Id loss_id{};
  double loss = batch_loss(model, batch, cfg.label_smoothing, &tape, &loss_id);
  if (!std::isfinite(loss)) {
    std::map<std::string, int> dirs;
    for (const auto& ex : batch.examples) ++dirs[to_string(ex.direction)];
    std::string mix;
    for (const auto& [d, n] : dirs) mix += cat(d, ":", n, " ");
    fail_data("non-finite loss at step ", step, " (lr=", learning_rate(cfg.schedule, step),
              ", batch mix: ", mix, ")");
  }
  model.zero_grads();
  tape.backward(loss_id);

  auto params = model.parameters();
  if (state.m.size() != params.size()) fail_usage("train state does not match model");

  if (cfg.optimizer.clip_norm > 0) {
    double sq = 0;
    for (auto* p : params)
      for (T g : p->grad.v) sq += double(g) * double(g);
    double norm = std::sqrt(sq);
    if (norm > cfg.optimizer.clip_norm) {
      T f = T(cfg.optimizer.clip_norm / norm);
      for (auto* p : params)
        for (auto& g : p->grad.v) g *= f;
    }
  }

  double lr = learning_rate(cfg.schedule, step);
  double b1 = cfg.optimizer.beta1, b2 = cfg.optimizer.beta2, eps = cfg.optimizer.epsilon;
  double bc1 = 1.0 - std::pow(b1, double(step));
  double bc2 = 1.0 - std::pow(b2, double(step));
  for (size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = *params[i];
    p.ensure_grad();
    auto& m = state.m[i].v;
    auto& v = state.v[i].v;
    for (size_t j = 0; j < p.value.v.size(); ++j) {
      double g = double(p.grad.v[j]);
      double mj = b1 * double(m[j]) + (1 - b1) * g;
      double vj = b2 * double(v[j]) + (1 - b2) * g * g;
      m[j] = T(mj);
      v[j] = T(vj);
      p.value.v[j] -= T(lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps));
    }
  }
  state.step = step;
  return loss;
}

// ---------------------------------------------------------------------------
// Evaluation hooks and the training loop

struct CurveRow {
  int64_t step;
  std::string key;    // "pooled", a direction, or "zero-shot:<dir>"
  std::string split;  // "dev" | "train-subset" | "zero-shot"
  double bleu;
  double loss;  // NaN when not computed
};

struct CurveLog {
  std::vector<CurveRow> rows;
  std::string to_csv() const {
    std::ostringstream os;
    os << "step,key,split,metric,value\n";
    os << std::setprecision(17);
    for (const auto& r : rows) {
      os << r.step << "," << r.key << "," << r.split << ",bleu," << r.bleu << "\n";
      if (std::isfinite(r.loss))
        os << r.step << "," << r.key << "," << r.split << ",loss," << r.loss << "\n";
    }
    return os.str();
  }
};

// A named evaluation set decoded every eval interval. `selection` marks hooks
// that drive best-checkpoint records.
struct EvalHook {
  std::string key;
  std::string split;  // "dev" | "train-subset" | "zero-shot"
  bool selection = false;
  std::vector<PooledExample> examples;
};

EvalHook make_pooled_hook(const PooledDev& dev);
EvalHook make_direction_hook(const Bitext& bitext, Split expected_split, bool selection);
EvalHook make_train_subset_hook(const std::string& key, std::vector<PooledExample> sample);

template <typename T>
struct LoopResult {
  CurveLog curves;
  std::map<std::string, BestRecord> best;
  std::string final_ckpt;
};

// Decodes hook examples (grouped by direction so tags are right) and scores
// word-level BLEU against the references.
template <typename T>
double evaluate_hook(Transformer<T>& model, const BpeModel& bpe, const EvalHook& hook,
                     const DecodeConfig& decode_cfg, double* out_loss = nullptr,
                     std::vector<std::string>* out_hyps = nullptr) {
  std::map<LanguageId, std::vector<size_t>> by_target;
  for (size_t i = 0; i < hook.examples.size(); ++i)
    by_target[hook.examples[i].direction.target].push_back(i);
  std::vector<std::string> hyps(hook.examples.size()), refs(hook.examples.size());
  for (const auto& [target, idx] : by_target) {
    std::vector<std::string> lines;
    lines.reserve(idx.size());
    for (size_t i : idx) lines.push_back(hook.examples[i].src);
    auto out = translate_corpus(model, bpe, lines, target, decode_cfg);
    for (size_t k = 0; k < idx.size(); ++k) {
      hyps[idx[k]] = out[k];
      refs[idx[k]] = hook.examples[idx[k]].tgt;
    }
  }
  if (out_loss) {
    // teacher-forced loss over the hook examples, dropout off
    std::vector<Example> encoded;
    encoded.reserve(hook.examples.size());
    for (const auto& e : hook.examples)
      encoded.push_back(tag_and_encode_pair(e.direction, e.src, e.tgt, bpe,
                                            model.config().max_positions));
    double total = 0, tokens = 0;
    const size_t chunk = 64;
    for (size_t b = 0; b < encoded.size(); b += chunk) {
      std::vector<Example> part(encoded.begin() + long(b),
                                encoded.begin() + long(std::min(encoded.size(), b + chunk)));
      Batch batch = pad_batch(std::move(part), bpe.pad_id());
      double n = 0;
      for (const auto& ex : batch.examples) n += double(ex.tgt_ids.size()) - 1;
      total += batch_loss(model, batch, 0.0) * n;
      tokens += n;
    }
    *out_loss = tokens > 0 ? total / tokens : 0.0;
  }
  if (out_hyps) *out_hyps = hyps;
  return bleu(hyps, refs).score;
}

// Appends paired train-subset / dev BLEU rows for the overfitting diagnostic.
template <typename T>
std::vector<CurveRow> overfit_probe(Transformer<T>& model, const BpeModel& bpe,
                                    const std::vector<PooledExample>& fixed_train_sample,
                                    const std::vector<PooledExample>& dev_pool, int64_t step,
                                    const DecodeConfig& decode_cfg = {}) {
  if (dev_pool.empty()) fail_config("overfit_probe: empty dev pool");
  if (fixed_train_sample.empty()) fail_config("overfit_probe: empty train sample");
  EvalHook train_hook{"pooled", "train-subset", false, fixed_train_sample};
  EvalHook dev_hook{"pooled", "dev", false, dev_pool};
  std::vector<CurveRow> rows;
  rows.push_back({step, "pooled", "train-subset",
                  evaluate_hook(model, bpe, train_hook, decode_cfg), NAN});
  rows.push_back({step, "pooled", "dev", evaluate_hook(model, bpe, dev_hook, decode_cfg), NAN});
  return rows;
}

// Runs `cfg.budget` steps, evaluating all hooks every `eval_interval` steps
// and at the final step; keeps a checkpoint ring plus pinned best-per-key
// checkpoints for selection hooks.
template <typename T>
LoopResult<T> train_loop(Transformer<T>& model, const BpeModel& bpe, BatchStream& stream,
                         TrainState<T>& state, const TrainConfig& cfg,
                         const std::vector<EvalHook>& hooks,
                         std::function<void(int64_t, double)> on_progress = {}) {
  namespace fs = std::filesystem;
  if (cfg.budget <= 0) fail_config("train_loop: budget must be positive");
  bool any_selection = false;
  for (const auto& h : hooks) any_selection |= h.selection;
  if (!any_selection) fail_config("train_loop: at least one selection hook (dev pool) required");
  if (!cfg.checkpoint_dir.empty()) fs::create_directories(cfg.checkpoint_dir);

  LoopResult<T> result;
  auto evaluate_all = [&](int64_t at_step) {
    for (const auto& h : hooks) {
      double loss = NAN;
      double score = evaluate_hook(model, bpe, h, cfg.eval_decode,
                                   h.split == "dev" ? &loss : nullptr);
      result.curves.rows.push_back({at_step, h.key, h.split, score, loss});
      if (h.selection) {
        auto& rec = result.best[h.key];
        if (score > rec.bleu) {
          rec.bleu = score;
          rec.step = at_step;
          if (!cfg.checkpoint_dir.empty()) {
            std::string name = h.key;
            for (auto& c : name)
              if (c == '/' || c == ':') c = '_';
            rec.ckpt_path = (fs::path(cfg.checkpoint_dir) / ("best_" + name + ".ckpt")).string();
            save_checkpoint(rec.ckpt_path, model.parameters(),
                            {{"step", std::to_string(at_step)}, {"key", h.key}});
          }
        }
      }
    }
    if (!cfg.checkpoint_dir.empty()) {
      std::string path =
          (fs::path(cfg.checkpoint_dir) / cat("step_", at_step, ".ckpt")).string();
      save_checkpoint(path, model.parameters(), {{"step", std::to_string(at_step)}});
      state.checkpoint_ring.push_back(path);
      while (int(state.checkpoint_ring.size()) > cfg.checkpoint_ring) {
        std::error_code ec;
        fs::remove(state.checkpoint_ring.front(), ec);
        state.checkpoint_ring.erase(state.checkpoint_ring.begin());
      }
    }
  };

  int64_t last_eval = -1;
  for (int64_t i = 0; i < cfg.budget; ++i) {
    Batch batch = stream.next();
    double loss = train_step(model, batch, state, cfg);
    if (on_progress) on_progress(state.step, loss);
    if (state.step % cfg.eval_interval == 0 || i + 1 == cfg.budget) {
      if (state.step != last_eval) evaluate_all(state.step);
      last_eval = state.step;
    }
  }
  state.best = result.best;
  if (!cfg.checkpoint_dir.empty() && !state.checkpoint_ring.empty())
    result.final_ckpt = state.checkpoint_ring.back();
  return result;
}

}  // namespace mmt
