#pragma once

#include "mmt/training.hpp"

namespace mmt {

// Training precision; the test suites instantiate double variants directly.
using Real = float;

enum class Setup { Bilingual, OneToMany, ManyToOne, ManyToMany };
Setup parse_setup(std::string_view s);
const char* to_string(Setup s);

// Plain-text key-value experiment description (see README for the format).
struct ExperimentSpec {
  std::string name = "experiment";
  Setup setup = Setup::ManyToMany;
  std::string data_dir;

  int bpe_vocab = 400;
  int max_len = 128;  // token cap applied by the pipeline

  // model
  std::string model_preset = "toy";  // toy | base | large | custom
  int d_model = 64;
  int d_ff = 0;  // 0 -> 4 * d_model
  int encoder_layers = 2;
  int decoder_layers = 2;
  int heads = 4;
  double dropout = 0.2;
  int max_positions = 128;
  bool learned_positions = false;

  // schedule / optimization
  double lr_scale = 1.0;
  int64_t warmup = 400;
  double label_smoothing = 0.1;
  double clip_norm = 0;
  int64_t budget = 1000;
  int64_t eval_interval = 250;
  int batch_scale = 4;  // 64/16 -> 16/4
  size_t dev_sample = 500;
  uint64_t seed = 1;

  // evaluation
  std::string selection = "pooled";  // pooled | per-direction
  std::vector<Direction> selection_directions;
  std::vector<Direction> eval_supervised;
  std::vector<Direction> eval_zero_shot;
  Direction bilingual_direction;  // required when setup == bilingual
  DecodeConfig test_decode;       // defaults: beam 4, len_norm 0.6
  int probe_train_subset = 0;     // >0 enables the overfitting probe

  static ExperimentSpec from_kv(const std::map<std::string, std::string>& kv);
  static ExperimentSpec from_file(const std::string& path);
  std::string to_config_text() const;
};

std::map<std::string, std::string> parse_kv_file(const std::string& path);
std::map<std::string, std::string> parse_kv_text(const std::string& text);

struct PerDirectionSelection {
  Direction direction;
  int64_t pooled_step = -1;
  double pooled_test_bleu = 0;
  int64_t dedicated_step = -1;
  double dedicated_test_bleu = 0;
};

struct ReportBundle {
  std::string dir;
  std::string setup_name;
  EvalMatrix supervised;
  EvalMatrix zero_shot;
  CurveLog curves;
  CorpusStats stats;
  std::map<std::string, BestRecord> best;
  std::vector<PerDirectionSelection> per_direction;
};

// Deterministic end-to-end pipeline: subword training (or cache reuse),
// tagging, batching, training with dev-BLEU checkpoint selection, final test
// evaluation from the best checkpoint, report emission.
ReportBundle run(const ExperimentSpec& spec, const std::string& out_dir);

// Expands a grid spec over `grid_setups` (bilingual entries become one run
// per supervised direction) and emits merged comparison tables.
std::vector<ReportBundle> run_grid(const ExperimentSpec& base,
                                   const std::vector<Setup>& setups, const std::string& out_dir);

// Merged comparison tables with per-column best marking.
struct Comparison {
  EvalMatrix supervised;
  EvalMatrix zero_shot;
};
Comparison compare(const std::vector<ReportBundle>& bundles);

// Reload the comparable pieces of a bundle emitted by run().
ReportBundle load_bundle(const std::string& dir);

void export_curves(const std::vector<ReportBundle>& bundles, const std::string& csv_path);

// Resolves the model config a spec describes, given the vocabulary size.
TransformerConfig resolve_model(const ExperimentSpec& spec, int vocab_size);

// Train directions implied by the setup.
std::vector<Direction> train_directions(const ExperimentSpec& spec,
                                        const MultilingualDataset& dataset);

// Shared-per-dataset BPE model (trained once, cached beside the manifest).
BpeModel prepare_bpe(const std::string& data_dir, const MultilingualDataset& dataset,
                     int target_vocab);

}  // namespace mmt
