#pragma once

#include <map>
#include <memory>

#include "mmt/autograd.hpp"

namespace mmt {

struct TransformerConfig {
  int encoder_layers = 6;
  int decoder_layers = 6;
  int d_model = 512;
  int d_ff = 2048;
  int heads = 8;
  double dropout = 0.1;
  int vocab_size = 0;
  int max_positions = 128;
  bool learned_positions = false;

  void validate() const {
    if (d_model <= 0 || d_ff <= 0 || encoder_layers <= 0 || decoder_layers <= 0)
      fail_config("transformer config: dimensions must be positive");
    if (heads <= 0 || d_model % heads != 0)
      fail_config("transformer config: d_model (", d_model, ") must be divisible by heads (",
                  heads, ")");
    if (dropout < 0 || dropout >= 1) fail_config("transformer config: dropout must be in [0,1)");
    if (vocab_size <= 0) fail_config("transformer config: vocab_size must be positive");
    if (max_positions <= 0) fail_config("transformer config: max_positions must be positive");
  }

  int head_dim() const { return d_model / heads; }

  // 6/6 layers, 512/2048, 8 heads, dropout 0.2
  static TransformerConfig base_preset(int vocab) {
    TransformerConfig c;
    c.vocab_size = vocab;
    c.dropout = 0.2;
    return c;
  }
  // 6/6 layers, 1024/8192, 16 heads; dropout 0.1 for multilingual models,
  // 0.3 for bilingual baselines
  static TransformerConfig large_preset(int vocab, bool multilingual = true) {
    TransformerConfig c;
    c.vocab_size = vocab;
    c.d_model = 1024;
    c.d_ff = 8192;
    c.heads = 16;
    c.dropout = multilingual ? 0.1 : 0.3;
    return c;
  }
  static TransformerConfig toy_preset(int vocab, int d = 64, int layers = 2, int heads_ = 4,
                                      double drop = 0.1) {
    TransformerConfig c;
    c.encoder_layers = c.decoder_layers = layers;
    c.d_model = d;
    c.d_ff = 4 * d;
    c.heads = heads_;
    c.dropout = drop;
    c.vocab_size = vocab;
    return c;
  }

  std::string to_config_text() const;
  static TransformerConfig from_config_text(const std::string& text);
};

// Padded token matrices ready for a teacher-forced forward pass.
template <typename T>
struct ModelInput {
  int64_t batch = 0, src_len = 0, tgt_len = 0;
  std::vector<int> src;          // [B*S]
  std::vector<int> tgt_in;       // [B*T], bos-framed decoder input
  std::vector<uint8_t> src_pad;  // 1 = padding
  std::vector<uint8_t> tgt_pad;
};

template <typename T>
class Transformer {
 public:
  using Id = typename Tape<T>::Id;

  static Transformer build(const TransformerConfig& cfg, uint64_t init_seed) {
    cfg.validate();
    Transformer m;
    m.cfg_ = cfg;
    m.init_seed_ = init_seed;
    auto add_matrix = [&](const std::string& name, int64_t rows, int64_t cols, double limit) {
      auto p = std::make_unique<Parameter<T>>(name, Tensor<T>({rows, cols}));
      Rng rng(init_seed, name);
      for (auto& x : p->value.v) x = T((rng.next_double() * 2 - 1) * limit);
      m.index_[name] = m.params_.size();
      m.params_.push_back(std::move(p));
    };
    auto add_vector = [&](const std::string& name, int64_t n, T fill) {
      auto p = std::make_unique<Parameter<T>>(name, Tensor<T>::full({n}, fill));
      m.index_[name] = m.params_.size();
      m.params_.push_back(std::move(p));
    };
    auto glorot = [](int64_t fan_in, int64_t fan_out) {
      return std::sqrt(6.0 / double(fan_in + fan_out));
    };

    int64_t V = cfg.vocab_size, d = cfg.d_model, f = cfg.d_ff;
    // Embedding rows are unit-variance and scaled by d^-1/2 at lookup.
    add_matrix("src_embed", V, d, std::sqrt(3.0));
    add_matrix("tgt_embed", V, d, std::sqrt(3.0));
    if (cfg.learned_positions) add_matrix("pos_embed", cfg.max_positions, d, std::sqrt(3.0));

    auto add_attn = [&](const std::string& prefix) {
      for (const char* w : {"wq", "wk", "wv", "wo"}) add_matrix(prefix + "." + w, d, d, glorot(d, d));
      for (const char* b : {"bq", "bk", "bv", "bo"}) add_vector(prefix + "." + b, d, T(0));
    };
    auto add_ln = [&](const std::string& prefix) {
      add_vector(prefix + ".gain", d, T(1));
      add_vector(prefix + ".bias", d, T(0));
    };
    auto add_ffn = [&](const std::string& prefix) {
      add_matrix(prefix + ".w1", d, f, glorot(d, f));
      add_vector(prefix + ".b1", f, T(0));
      add_matrix(prefix + ".w2", f, d, glorot(f, d));
      add_vector(prefix + ".b2", d, T(0));
    };
    for (int i = 0; i < cfg.encoder_layers; ++i) {
      std::string l = cat("enc.", i);
      add_attn(l + ".attn");
      add_ln(l + ".ln1");
      add_ffn(l + ".ffn");
      add_ln(l + ".ln2");
    }
    for (int i = 0; i < cfg.decoder_layers; ++i) {
      std::string l = cat("dec.", i);
      add_attn(l + ".self_attn");
      add_ln(l + ".ln1");
      add_attn(l + ".cross_attn");
      add_ln(l + ".ln2");
      add_ffn(l + ".ffn");
      add_ln(l + ".ln3");
    }
    add_matrix("out_proj.w", d, V, glorot(d, V));
    add_vector("out_proj.b", V, T(0));

    if (!cfg.learned_positions) m.sinusoidal_ = sinusoidal_table(cfg.max_positions, int(d));
    return m;
  }

  const TransformerConfig& config() const { return cfg_; }
  uint64_t init_seed() const { return init_seed_; }

  Parameter<T>& p(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) fail_usage("unknown parameter: ", name);
    return *params_[it->second];
  }
  const Parameter<T>& p(const std::string& name) const {
    return const_cast<Transformer*>(this)->p(name);
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
  }

  void zero_grads() {
    for (auto& p : params_) p->zero_grad();
  }

  // --- forward -------------------------------------------------------------

  Id encode(Tape<T>& tape, const ModelInput<T>& in) {
    check_input(in);
    int64_t B = in.batch, S = in.src_len, d = cfg_.d_model;
    Id x = embed(tape, "src_embed", in.src, B, S);
    Tensor<T> mask = key_mask(in.src_pad, B, S, S);
    for (int i = 0; i < cfg_.encoder_layers; ++i) {
      std::string l = cat("enc.", i);
      Id attn = attention(tape, x, x, mask, l + ".attn", B, S, S);
      x = residual_norm(tape, x, attn, l + ".ln1");
      Id ff = ffn(tape, x, l + ".ffn", B, S);
      x = residual_norm(tape, x, ff, l + ".ln2");
    }
    (void)d;
    return x;  // [B, S, d]
  }

  Id decode(Tape<T>& tape, Id memory, const ModelInput<T>& in) {
    int64_t B = in.batch, S = in.src_len, Tq = in.tgt_len;
    Id x = embed(tape, "tgt_embed", in.tgt_in, B, Tq);
    Tensor<T> self_mask = causal_mask(in.tgt_pad, B, Tq);
    Tensor<T> cross_mask = key_mask(in.src_pad, B, Tq, S);
    for (int i = 0; i < cfg_.decoder_layers; ++i) {
      std::string l = cat("dec.", i);
      Id self_attn = attention(tape, x, x, self_mask, l + ".self_attn", B, Tq, Tq);
      x = residual_norm(tape, x, self_attn, l + ".ln1");
      Id cross = attention(tape, x, memory, cross_mask, l + ".cross_attn", B, Tq, S);
      x = residual_norm(tape, x, cross, l + ".ln2");
      Id ff = ffn(tape, x, l + ".ffn", B, Tq);
      x = residual_norm(tape, x, ff, l + ".ln3");
    }
    Id flat = tape.reshape(x, {B * Tq, cfg_.d_model});
    Id logits = tape.add_bias(tape.matmul(flat, tape.param(p("out_proj.w"))),
                              tape.param(p("out_proj.b")));
    return tape.reshape(logits, {B, Tq, cfg_.vocab_size});
  }

  // Teacher-forced logits [B, T, V].
  Id forward(Tape<T>& tape, const ModelInput<T>& in) {
    Id memory = encode(tape, in);
    return decode(tape, memory, in);
  }

  static Tensor<T> sinusoidal_table(int max_positions, int d) {
    Tensor<T> t({max_positions, d});
    for (int p = 0; p < max_positions; ++p) {
      for (int i = 0; i < d / 2; ++i) {
        double rate = std::pow(10000.0, -2.0 * i / double(d));
        t.v[size_t(p * d + 2 * i)] = T(std::sin(p * rate));
        t.v[size_t(p * d + 2 * i + 1)] = T(std::cos(p * rate));
      }
    }
    return t;
  }

 private:
  void check_input(const ModelInput<T>& in) const {
    if (in.src_len > cfg_.max_positions || in.tgt_len > cfg_.max_positions)
      fail_usage("sequence length exceeds max_positions=", cfg_.max_positions, " (src ",
                 in.src_len, ", tgt ", in.tgt_len, ")");
    if (int64_t(in.src.size()) != in.batch * in.src_len ||
        int64_t(in.src_pad.size()) != in.batch * in.src_len)
      fail_usage("model input: src buffers disagree with batch x src_len");
    if (int64_t(in.tgt_in.size()) != in.batch * in.tgt_len ||
        int64_t(in.tgt_pad.size()) != in.batch * in.tgt_len)
      fail_usage("model input: tgt buffers disagree with batch x tgt_len");
  }

  // token embedding (scaled at lookup) + positional signal + dropout
  Id embed(Tape<T>& tape, const std::string& table, const std::vector<int>& ids, int64_t B,
           int64_t S) {
    T scale = T(std::pow(double(cfg_.d_model), -0.5));
    Id x = tape.embedding(p(table), ids, scale);
    x = tape.reshape(x, {B, S, cfg_.d_model});
    if (cfg_.learned_positions) {
      std::vector<int> pos_ids(size_t(S));
      for (int64_t i = 0; i < S; ++i) pos_ids[size_t(i)] = int(i);
      Id pos = tape.embedding(p("pos_embed"), pos_ids, T(1));
      x = tape.add_bcast0(x, pos);
    } else {
      Tensor<T> pos({S, int64_t(cfg_.d_model)});
      std::copy(sinusoidal_.v.begin(), sinusoidal_.v.begin() + S * cfg_.d_model, pos.v.begin());
      x = tape.add_bcast0(x, tape.constant(std::move(pos)));
    }
    return tape.dropout(x, T(cfg_.dropout));  // dropout site 1: embeddings + positions
  }

  // post-norm residual block: LN(x + dropout(sublayer))
  Id residual_norm(Tape<T>& tape, Id x, Id sublayer, const std::string& ln) {
    Id dropped = tape.dropout(sublayer, T(cfg_.dropout));  // dropout site 2: sub-layer output
    Id sum = tape.add(x, dropped);
    return tape.layer_norm(sum, tape.param(p(ln + ".gain")), tape.param(p(ln + ".bias")));
  }

  Id project(Tape<T>& tape, Id x2d, const std::string& prefix, const char* w, const char* b) {
    Id y = tape.matmul(x2d, tape.param(p(prefix + "." + w)));
    return tape.add_bias(y, tape.param(p(prefix + "." + b)));
  }

  // multi-head scaled dot-product attention; q_in [B,Sq,d], kv_in [B,Sk,d]
  Id attention(Tape<T>& tape, Id q_in, Id kv_in, const Tensor<T>& mask, const std::string& prefix,
               int64_t B, int64_t Sq, int64_t Sk) {
    int64_t d = cfg_.d_model, H = cfg_.heads, dh = cfg_.head_dim();
    auto heads_split = [&](Id x2d, int64_t S) {
      Id x = tape.reshape(x2d, {B, S, H, dh});
      x = tape.permute(x, {0, 2, 1, 3});
      return tape.reshape(x, {B * H, S, dh});
    };
    Id q2 = heads_split(project(tape, tape.reshape(q_in, {B * Sq, d}), prefix, "wq", "bq"), Sq);
    Id k2 = heads_split(project(tape, tape.reshape(kv_in, {B * Sk, d}), prefix, "wk", "bk"), Sk);
    Id v2 = heads_split(project(tape, tape.reshape(kv_in, {B * Sk, d}), prefix, "wv", "bv"), Sk);

    Id scores = tape.scale(tape.bmm(q2, k2, /*transpose_b=*/true), T(1.0 / std::sqrt(double(dh))));
    scores = tape.add_head_bcast(scores, mask, H);
    Id weights = tape.softmax(scores);
    weights = tape.dropout(weights, T(cfg_.dropout));  // dropout site 4: attention weights
    Id ctx = tape.bmm(weights, v2);
    ctx = tape.reshape(ctx, {B, H, Sq, dh});
    ctx = tape.permute(ctx, {0, 2, 1, 3});
    Id out = project(tape, tape.reshape(ctx, {B * Sq, d}), prefix, "wo", "bo");
    return tape.reshape(out, {B, Sq, d});
  }

  Id ffn(Tape<T>& tape, Id x, const std::string& prefix, int64_t B, int64_t S) {
    int64_t d = cfg_.d_model;
    Id flat = tape.reshape(x, {B * S, d});
    Id inner = tape.relu(project(tape, flat, prefix, "w1", "b1"));
    inner = tape.dropout(inner, T(cfg_.dropout));  // dropout site 3: FFN inner after ReLU
    Id out = project(tape, inner, prefix, "w2", "b2");
    return tape.reshape(out, {B, S, d});
  }

  // additive mask [B, Sq, Sk]: 0 where attending is allowed, -1e9 at pad keys
  Tensor<T> key_mask(const std::vector<uint8_t>& key_pad, int64_t B, int64_t Sq,
                     int64_t Sk) const {
    Tensor<T> m({B, Sq, Sk});
    for (int64_t b = 0; b < B; ++b)
      for (int64_t q = 0; q < Sq; ++q)
        for (int64_t k = 0; k < Sk; ++k)
          m.v[size_t((b * Sq + q) * Sk + k)] = key_pad[size_t(b * Sk + k)] ? T(-1e9) : T(0);
    return m;
  }

  // causal + pad-key mask for decoder self-attention
  Tensor<T> causal_mask(const std::vector<uint8_t>& tgt_pad, int64_t B, int64_t S) const {
    Tensor<T> m({B, S, S});
    for (int64_t b = 0; b < B; ++b)
      for (int64_t q = 0; q < S; ++q)
        for (int64_t k = 0; k < S; ++k) {
          bool blocked = k > q || tgt_pad[size_t(b * S + k)];
          m.v[size_t((b * S + q) * S + k)] = blocked ? T(-1e9) : T(0);
        }
    return m;
  }

  TransformerConfig cfg_;
  uint64_t init_seed_ = 0;
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::map<std::string, size_t> index_;
  Tensor<T> sinusoidal_;
};

// -- config (de)serialization as plain-text key-value ------------------------

inline std::string TransformerConfig::to_config_text() const {
  std::ostringstream os;
  os << "encoder_layers = " << encoder_layers << "\n";
  os << "decoder_layers = " << decoder_layers << "\n";
  os << "d_model = " << d_model << "\n";
  os << "d_ff = " << d_ff << "\n";
  os << "heads = " << heads << "\n";
  os << "dropout = " << dropout << "\n";
  os << "vocab_size = " << vocab_size << "\n";
  os << "max_positions = " << max_positions << "\n";
  os << "learned_positions = " << (learned_positions ? "true" : "false") << "\n";
  return os.str();
}

inline TransformerConfig TransformerConfig::from_config_text(const std::string& text) {
  TransformerConfig c;
  for (const auto& raw : split_on(text, '\n')) {
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) fail_data("bad config line: ", line);
    std::string k = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
    if (k == "encoder_layers") c.encoder_layers = std::stoi(v);
    else if (k == "decoder_layers") c.decoder_layers = std::stoi(v);
    else if (k == "d_model") c.d_model = std::stoi(v);
    else if (k == "d_ff") c.d_ff = std::stoi(v);
    else if (k == "heads") c.heads = std::stoi(v);
    else if (k == "dropout") c.dropout = std::stod(v);
    else if (k == "vocab_size") c.vocab_size = std::stoi(v);
    else if (k == "max_positions") c.max_positions = std::stoi(v);
    else if (k == "learned_positions") c.learned_positions = (v == "true" || v == "1");
    else fail_data("unknown config key: ", k);
  }
  c.validate();
  return c;
}

}  // namespace mmt
