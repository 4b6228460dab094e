#include "mmt/pipeline.hpp"

#include <algorithm>

namespace mmt {

Example tag_and_encode_pair(const Direction& d, const std::string& src, const std::string& tgt,
                            const BpeModel& bpe, int max_len) {
  if (max_len < 4) fail_config("max_len too small: ", max_len);
  Example ex;
  ex.direction = d;
  int tag = bpe.tag_id(d.target);
  TokenSeq s = bpe_encode(bpe, src);
  if (int(s.size()) > max_len - 1) s.resize(size_t(max_len - 1));
  ex.src_ids.reserve(s.size() + 1);
  ex.src_ids.push_back(tag);
  ex.src_ids.insert(ex.src_ids.end(), s.begin(), s.end());

  TokenSeq t = bpe_encode(bpe, tgt);
  if (int(t.size()) > max_len - 2) t.resize(size_t(max_len - 2));
  ex.tgt_ids.reserve(t.size() + 2);
  ex.tgt_ids.push_back(bpe.bos_id());
  ex.tgt_ids.insert(ex.tgt_ids.end(), t.begin(), t.end());
  ex.tgt_ids.push_back(bpe.eos_id());
  return ex;
}

std::vector<Example> tag_and_encode(const Bitext& bitext, const BpeModel& bpe, int max_len) {
  std::vector<Example> out;
  out.reserve(bitext.pairs.size());
  for (const auto& p : bitext.pairs)
    out.push_back(tag_and_encode_pair(bitext.direction, p.src, p.tgt, bpe, max_len));
  return out;
}

Batch pad_batch(std::vector<Example> examples, int pad_id, Bucket bucket) {
  if (examples.empty()) fail_usage("pad_batch: empty example list");
  Batch b;
  b.bucket = bucket;
  b.rows = int64_t(examples.size());
  for (const auto& ex : examples) {
    b.src_len = std::max(b.src_len, int64_t(ex.src_ids.size()));
    b.tgt_len = std::max(b.tgt_len, int64_t(ex.tgt_ids.size()));
  }
  b.src.assign(size_t(b.rows * b.src_len), pad_id);
  b.tgt.assign(size_t(b.rows * b.tgt_len), pad_id);
  b.src_pad.assign(size_t(b.rows * b.src_len), 1);
  b.tgt_pad.assign(size_t(b.rows * b.tgt_len), 1);
  for (int64_t r = 0; r < b.rows; ++r) {
    const auto& ex = examples[size_t(r)];
    for (size_t i = 0; i < ex.src_ids.size(); ++i) {
      b.src[size_t(r * b.src_len) + i] = ex.src_ids[i];
      b.src_pad[size_t(r * b.src_len) + i] = 0;
    }
    for (size_t i = 0; i < ex.tgt_ids.size(); ++i) {
      b.tgt[size_t(r * b.tgt_len) + i] = ex.tgt_ids[i];
      b.tgt_pad[size_t(r * b.tgt_len) + i] = 0;
    }
  }
  b.examples = std::move(examples);
  return b;
}

BatchStream::BatchStream(std::vector<Example> pool, BatchRules rules, int pad_id, uint64_t seed)
    : pool_(std::move(pool)), rules_(rules), pad_id_(pad_id), seed_(seed) {
  if (pool_.empty()) fail_config("batch_stream: empty example pool");
  order_.resize(pool_.size());
}

const Example& BatchStream::draw() {
  if (cursor_ == 0) {
    for (uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
    Rng rng(seed_, cat("batch_epoch_", epoch_));
    rng.shuffle(order_);
  }
  const Example& ex = pool_[order_[cursor_]];
  if (++cursor_ == order_.size()) {
    cursor_ = 0;
    ++epoch_;
  }
  return ex;
}

Batch BatchStream::next() {
  for (;;) {
    const Example& ex = draw();
    bool is_short = ex.max_len() < rules_.short_threshold;
    auto& pending = is_short ? short_pending_ : long_pending_;
    pending.push_back(ex);
    int want = is_short ? rules_.short_batch : rules_.long_batch;
    if (int(pending.size()) == want) {
      Batch b = pad_batch(std::move(pending), pad_id_, is_short ? Bucket::Short : Bucket::Long);
      pending.clear();
      return b;
    }
  }
}

}  // namespace mmt
