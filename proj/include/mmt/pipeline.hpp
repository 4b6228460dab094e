#pragma once

#include "mmt/corpus.hpp"
#include "mmt/subword.hpp"

namespace mmt {

// A model-ready example: the source carries the target-language tag as its
// first token, the target is framed with bos/eos.
struct Example {
  Direction direction;
  TokenSeq src_ids;
  TokenSeq tgt_ids;
  int max_len() const { return int(std::max(src_ids.size(), tgt_ids.size())); }
};

// Tags + encodes a bitext; sequences longer than `max_len` tokens are
// truncated (tag and bos/eos framing preserved).
std::vector<Example> tag_and_encode(const Bitext& bitext, const BpeModel& bpe, int max_len = 128);
Example tag_and_encode_pair(const Direction& d, const std::string& src, const std::string& tgt,
                            const BpeModel& bpe, int max_len = 128);

struct BatchRules {
  int short_threshold = 69;  // sequences shorter than this go to the short bucket
  int short_batch = 64;
  int long_batch = 16;  // 4:1 ratio preserved under scaling

  static BatchRules scaled(int divisor) {
    if (divisor < 1 || 64 % divisor != 0 || divisor > 16)
      fail_config("batch scale must divide 64 and keep the long bucket >= 1, got ", divisor);
    BatchRules r;
    r.short_batch = 64 / divisor;
    r.long_batch = 16 / divisor;
    return r;
  }
};

enum class Bucket { Short, Long };

struct Batch {
  std::vector<Example> examples;
  Bucket bucket = Bucket::Short;
  int64_t rows = 0, src_len = 0, tgt_len = 0;
  std::vector<int> src, tgt;            // padded row-major matrices
  std::vector<uint8_t> src_pad, tgt_pad;  // 1 exactly at padded positions
};

Batch pad_batch(std::vector<Example> examples, int pad_id, Bucket bucket = Bucket::Short);

// Deterministic infinite stream: every slot is a uniform draw from the
// concatenation of all language pairs (reshuffled epochs over the pool);
// an example is routed to the short bucket iff max(src,tgt) length is below
// the threshold, and a batch is emitted when its bucket fills.
class BatchStream {
 public:
  BatchStream(std::vector<Example> pool, BatchRules rules, int pad_id, uint64_t seed);

  Batch next();
  const BatchRules& rules() const { return rules_; }
  int64_t epochs_completed() const { return epoch_; }

 private:
  const Example& draw();

  std::vector<Example> pool_;
  BatchRules rules_;
  int pad_id_;
  uint64_t seed_;
  int64_t epoch_ = 0;
  size_t cursor_ = 0;
  std::vector<uint32_t> order_;
  std::vector<Example> short_pending_, long_pending_;
};

}  // namespace mmt
