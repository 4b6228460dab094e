#include "mmt/training.hpp"

namespace mmt {

EvalHook make_pooled_hook(const PooledDev& dev) {
  EvalHook h;
  h.key = "pooled";
  h.split = "dev";
  h.selection = true;
  h.examples = dev.examples;
  return h;
}

EvalHook make_direction_hook(const Bitext& bitext, Split expected_split, bool selection) {
  if (bitext.split != expected_split)
    fail_config("direction hook for ", to_string(bitext.direction), " expected ",
                to_string(expected_split), " split, got ", to_string(bitext.split));
  EvalHook h;
  h.key = cat("dir:", to_string(bitext.direction));
  h.split = "dev";
  h.selection = selection;
  for (const auto& p : bitext.pairs) h.examples.push_back({bitext.direction, p.src, p.tgt});
  return h;
}

EvalHook make_train_subset_hook(const std::string& key, std::vector<PooledExample> sample) {
  EvalHook h;
  h.key = key;
  h.split = "train-subset";
  h.selection = false;
  h.examples = std::move(sample);
  return h;
}

}  // namespace mmt
