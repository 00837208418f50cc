#include "embreg/model.hpp"

#include <stdexcept>

#include "embreg/errors.hpp"
#include "embreg/hash.hpp"

namespace embreg {

void ModelConfig::validate() const {
  if (src_vocab < 4 || tgt_vocab < 4) throw UsageError("vocabulary sizes must include the 4 special tokens");
  if (emb_dim == 0 || enc_hidden == 0 || attn_dim == 0 || enc_layers == 0 || dec_layers == 0)
    throw UsageError("model widths and layer counts must be positive");
  if (2 * enc_hidden != dec_hidden)
    throw UsageError("dec_hidden must equal twice enc_hidden (got " + std::to_string(dec_hidden) + " vs 2*" +
                     std::to_string(enc_hidden) + ")");
  if (use_rewe && rewe_dim == 0) throw UsageError("rewe_dim must be positive");
  if (use_rese && rese_dim == 0) throw UsageError("rese_dim must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw UsageError("dropout must be in [0, 1)");
  if (init_scale < 0.0) throw UsageError("init_scale must be non-negative");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"src_vocab", c.src_vocab}, {"tgt_vocab", c.tgt_vocab},   {"emb_dim", c.emb_dim},
                     {"enc_hidden", c.enc_hidden}, {"dec_hidden", c.dec_hidden}, {"attn_dim", c.attn_dim},
                     {"enc_layers", c.enc_layers}, {"dec_layers", c.dec_layers}, {"rewe_dim", c.rewe_dim},
                     {"rese_dim", c.rese_dim},     {"dropout", c.dropout},       {"init_scale", c.init_scale},
                     {"use_rewe", c.use_rewe},     {"use_rese", c.use_rese},     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const char* kKeys[] = {"src_vocab", "tgt_vocab", "emb_dim",  "enc_hidden", "dec_hidden",
                                "attn_dim",  "enc_layers", "dec_layers", "rewe_dim", "rese_dim",
                                "dropout",   "init_scale", "use_rewe", "use_rese",   "seed"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : kKeys) known = known || it.key() == k;
    if (!known) throw UsageError("unknown model config key: " + it.key());
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("src_vocab", c.src_vocab);
  get("tgt_vocab", c.tgt_vocab);
  get("emb_dim", c.emb_dim);
  get("enc_hidden", c.enc_hidden);
  get("dec_hidden", c.dec_hidden);
  get("attn_dim", c.attn_dim);
  get("enc_layers", c.enc_layers);
  get("dec_layers", c.dec_layers);
  get("rewe_dim", c.rewe_dim);
  get("rese_dim", c.rese_dim);
  get("dropout", c.dropout);
  get("init_scale", c.init_scale);
  get("use_rewe", c.use_rewe);
  get("use_rese", c.use_rese);
  get("seed", c.seed);
}

namespace {

Tensor uniform_matrix(std::size_t r, std::size_t c, double scale, Rng& rng) {
  Tensor t({r, c});
  for (double& v : t.data) v = rng.uniform(-scale, scale);
  return t;
}

Parameter weight(const std::string& name, std::size_t r, std::size_t c, double scale, Rng& rng) {
  return Parameter(name, uniform_matrix(r, c, scale, rng));
}

Parameter bias(const std::string& name, std::size_t n) { return Parameter(name, Tensor({n})); }

LstmParams make_lstm(const std::string& prefix, std::size_t in, std::size_t hidden, double scale, Rng& rng) {
  LstmParams p;
  p.hidden = hidden;
  p.w = weight(prefix + ".W", 4 * hidden, in + hidden, scale, rng);
  p.b = bias(prefix + ".b", 4 * hidden);
  return p;
}

Tensor zeros(std::size_t r, std::size_t c) { return Tensor({r, c}); }

// Mask column i of a [B, n] mask as a [B, 1] tensor; null when every row is real.
bool column_mask(const std::vector<std::size_t>& lengths, std::size_t i, Tensor& keep, Tensor& drop) {
  const std::size_t b = lengths.size();
  keep = Tensor({b, 1});
  drop = Tensor({b, 1});
  bool any_pad = false;
  for (std::size_t r = 0; r < b; ++r) {
    const bool real = i < lengths[r];
    keep.data[r] = real ? 1.0 : 0.0;
    drop.data[r] = real ? 0.0 : 1.0;
    any_pad = any_pad || !real;
  }
  return any_pad;
}

}  // namespace

Seq2SeqModel::Seq2SeqModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  const double s = config_.init_scale;
  const std::size_t he = config_.enc_hidden, hd = config_.dec_hidden, e = config_.emb_dim;
  Rng rng(config_.seed);

  src_embed_ = weight("src_embed", config_.src_vocab, e, s, rng);
  tgt_embed_ = weight("tgt_embed", config_.tgt_vocab, e, s, rng);
  for (std::size_t l = 0; l < config_.enc_layers; ++l) {
    const std::size_t in = l == 0 ? e : 2 * he;
    Layer layer;
    layer.fwd = make_lstm("enc.l" + std::to_string(l) + ".fwd", in, he, s, rng);
    layer.bwd = make_lstm("enc.l" + std::to_string(l) + ".bwd", in, he, s, rng);
    encoder_.push_back(std::move(layer));
  }
  for (std::size_t l = 0; l < config_.dec_layers; ++l) {
    const std::size_t in = l == 0 ? e + 2 * he : hd;
    decoder_.push_back(make_lstm("dec.l" + std::to_string(l), in, hd, s, rng));
  }
  attn_w_ = weight("attn.W_a", config_.attn_dim, hd, s, rng);
  attn_u_ = weight("attn.U_a", config_.attn_dim, 2 * he, s, rng);
  attn_v_ = weight("attn.v_a", 1, config_.attn_dim, s, rng);
  for (std::size_t l = 0; l < config_.dec_layers; ++l) {
    bridge_w_.push_back(weight("bridge.l" + std::to_string(l) + ".W", hd, 2 * he, s, rng));
    bridge_b_.push_back(bias("bridge.l" + std::to_string(l) + ".b", hd));
  }
  gen_w_ = weight("gen.W", config_.tgt_vocab, hd, s, rng);
  gen_b_ = bias("gen.b", config_.tgt_vocab);

  // Heads draw from their own stream so the baseline weights do not depend on them.
  Rng head_rng = Rng::derive(config_.seed, fnv1a64("heads"));
  if (config_.use_rewe) {
    rewe_w1_ = weight("rewe.W1", hd, hd, s, head_rng);
    rewe_b1_ = bias("rewe.b1", hd);
    rewe_w2_ = weight("rewe.W2", config_.rewe_dim, hd, s, head_rng);
    rewe_b2_ = bias("rewe.b2", config_.rewe_dim);
  }
  if (config_.use_rese) {
    rese_u1_ = weight("rese.U1", hd, hd, s, head_rng);
    rese_u2_ = weight("rese.U2", 1, hd, s, head_rng);
    rese_w_in_ = weight("rese.W_in", hd, hd, s, head_rng);
    rese_b_in_ = bias("rese.b_in", hd);
    rese_w_out_ = weight("rese.W_out", config_.rese_dim, hd, s, head_rng);
    rese_b_out_ = bias("rese.b_out", config_.rese_dim);
  }
}

std::vector<Parameter*> Seq2SeqModel::parameters() {
  std::vector<Parameter*> out{&src_embed_, &tgt_embed_};
  for (auto& layer : encoder_) {
    out.insert(out.end(), {&layer.fwd.w, &layer.fwd.b, &layer.bwd.w, &layer.bwd.b});
  }
  for (auto& layer : decoder_) out.insert(out.end(), {&layer.w, &layer.b});
  out.insert(out.end(), {&attn_w_, &attn_u_, &attn_v_});
  for (std::size_t l = 0; l < bridge_w_.size(); ++l) out.insert(out.end(), {&bridge_w_[l], &bridge_b_[l]});
  out.insert(out.end(), {&gen_w_, &gen_b_});
  if (config_.use_rewe) out.insert(out.end(), {&rewe_w1_, &rewe_b1_, &rewe_w2_, &rewe_b2_});
  if (config_.use_rese)
    out.insert(out.end(), {&rese_u1_, &rese_u2_, &rese_w_in_, &rese_b_in_, &rese_w_out_, &rese_b_out_});
  return out;
}

std::vector<const Parameter*> Seq2SeqModel::parameters() const {
  auto mut = const_cast<Seq2SeqModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

Parameter* Seq2SeqModel::find(const std::string& name) {
  for (Parameter* p : parameters())
    if (p->name == name) return p;
  return nullptr;
}

void Seq2SeqModel::set_source_embeddings(const Tensor& table) {
  if (table.shape != src_embed_.value.shape)
    throw DataError("source embedding table has shape " + shape_str(table.shape) + ", expected " +
                    shape_str(src_embed_.value.shape));
  src_embed_.value = table;
}

void Seq2SeqModel::set_target_embeddings(const Tensor& table) {
  if (table.shape != tgt_embed_.value.shape)
    throw DataError("target embedding table has shape " + shape_str(table.shape) + ", expected " +
                    shape_str(tgt_embed_.value.shape));
  tgt_embed_.value = table;
}

Var Seq2SeqModel::linear(Graph& g, Var x, Parameter& w, Parameter* b) {
  Var y = matmul_nt(x, g.param(w));
  return b ? add(y, g.param(*b)) : y;
}

std::pair<Var, Var> Seq2SeqModel::lstm_cell(Graph& g, LstmParams& p, Var x, Var h, Var c) {
  const std::size_t hs = p.hidden;
  const Var xh[] = {x, h};
  Var gates = linear(g, concat(xh, 1), p.w, &p.b);
  Var i = sigmoid(slice(gates, 1, 0, hs));
  Var f = sigmoid(slice(gates, 1, hs, 2 * hs));
  Var u = tanh(slice(gates, 1, 2 * hs, 3 * hs));
  Var o = sigmoid(slice(gates, 1, 3 * hs, 4 * hs));
  Var c_new = f * c + i * u;
  Var h_new = o * tanh(c_new);
  return {h_new, c_new};
}

Encoded Seq2SeqModel::encode(Graph& g, const std::vector<int>& src, std::size_t batch, std::size_t len,
                             const std::vector<std::size_t>& lengths, bool train, Rng& rng) {
  if (src.size() != batch * len || lengths.size() != batch)
    throw UsageError("encode: source ids do not match batch x length");
  Encoded enc;
  enc.batch = batch;
  enc.len = len;
  enc.mask = Tensor({batch, len});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < len && i < lengths[b]; ++i) enc.mask.data[b * len + i] = 1.0;

  std::vector<Tensor> keep(len), drop(len);
  std::vector<bool> padded(len);
  for (std::size_t i = 0; i < len; ++i) padded[i] = column_mask(lengths, i, keep[i], drop[i]);

  Var table = g.param(src_embed_);
  std::vector<Var> inputs(len);
  std::vector<int> ids(batch);
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t b = 0; b < batch; ++b) ids[b] = src[b * len + i];
    inputs[i] = embedding(table, ids);
  }

  const std::size_t he = config_.enc_hidden;
  Var last_fwd, last_bwd;
  for (std::size_t l = 0; l < encoder_.size(); ++l) {
    if (l > 0)
      for (auto& x : inputs) x = dropout(x, config_.dropout, rng, train);
    std::vector<Var> fwd(len), bwd(len);
    auto run = [&](LstmParams& p, std::vector<Var>& out, bool reverse) {
      Var h = g.constant(zeros(batch, he));
      Var c = g.constant(zeros(batch, he));
      for (std::size_t k = 0; k < len; ++k) {
        const std::size_t i = reverse ? len - 1 - k : k;
        auto [h_new, c_new] = lstm_cell(g, p, inputs[i], h, c);
        if (padded[i]) {
          Var m = g.constant(keep[i]), mm = g.constant(drop[i]);
          h_new = m * h_new + mm * h;
          c_new = m * c_new + mm * c;
        }
        h = h_new;
        c = c_new;
        out[i] = h;
      }
      return h;
    };
    last_fwd = run(encoder_[l].fwd, fwd, false);
    last_bwd = run(encoder_[l].bwd, bwd, true);
    for (std::size_t i = 0; i < len; ++i) {
      const Var both[] = {fwd[i], bwd[i]};
      inputs[i] = concat(both, 1);
    }
  }
  enc.states = concat(inputs, 0);
  enc.keys = matmul_nt(enc.states, g.param(attn_u_));
  enc.final_fwd = last_fwd;
  enc.final_bwd = last_bwd;
  return enc;
}

Attention Seq2SeqModel::attend(Graph& g, const Encoded& enc, Var s_prev) {
  if (s_prev.rows() != enc.batch) throw UsageError("attend: state rows do not match the encoded batch");
  Var q = matmul_nt(s_prev, g.param(attn_w_));
  Var e = tanh(add(enc.keys, tile_rows(q, enc.len)));
  Var scores = transpose(reshape(matmul_nt(e, g.param(attn_v_)), {enc.len, enc.batch}));
  Attention a;
  a.weights = softmax(scores, enc.mask);
  a.context = weighted_sum(a.weights, enc.states);
  return a;
}

DecoderState Seq2SeqModel::initial_state(Graph& g, const Encoded& enc) {
  const Var ends[] = {enc.final_fwd, enc.final_bwd};
  Var summary = concat(ends, 1);
  DecoderState st;
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    st.h.push_back(tanh(linear(g, summary, bridge_w_[l], &bridge_b_[l])));
    st.c.push_back(g.constant(zeros(enc.batch, config_.dec_hidden)));
  }
  return st;
}

DecoderState Seq2SeqModel::decode_step(Graph& g, Var context, const DecoderState& state, Var y_prev_emb, bool train,
                                       Rng& rng) {
  const Var parts[] = {y_prev_emb, context};
  Var x = concat(parts, 1);
  DecoderState next;
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    if (l > 0) x = dropout(x, config_.dropout, rng, train);
    auto [h, c] = lstm_cell(g, decoder_[l], x, state.h[l], state.c[l]);
    next.h.push_back(h);
    next.c.push_back(c);
    x = h;
  }
  return next;
}

Var Seq2SeqModel::embed_target(Graph& g, std::span<const int> ids) { return embedding(g.param(tgt_embed_), ids); }

Var Seq2SeqModel::generate(Graph& g, Var s) { return softmax(linear(g, s, gen_w_, &gen_b_)); }

Var Seq2SeqModel::rewe_head(Graph& g, Var s) {
  if (!config_.use_rewe) throw UsageError("ReWE head is not enabled in this model");
  ++head_calls_;
  Var hidden = relu(linear(g, s, rewe_w1_, &rewe_b1_));
  return linear(g, hidden, rewe_w2_, &rewe_b2_);
}

Var Seq2SeqModel::rese_head(Graph& g, Var stacked, const Tensor& mask) {
  if (!config_.use_rese) throw UsageError("ReSE head is not enabled in this model");
  if (mask.shape.size() != 2 || mask.shape[1] == 0 || stacked.rows() != mask.shape[0] * mask.shape[1])
    throw UsageError("rese_head: needs at least one step and a [B, T] mask matching the stacked states");
  ++head_calls_;
  const std::size_t b = mask.shape[0], t = mask.shape[1];
  Var scores = matmul_nt(tanh(matmul_nt(stacked, g.param(rese_u1_))), g.param(rese_u2_));
  Var alpha = softmax(transpose(reshape(scores, {t, b})), mask);
  Var a = weighted_sum(alpha, stacked);
  Var hidden = relu(linear(g, a, rese_w_in_, &rese_b_in_));
  return linear(g, hidden, rese_w_out_, &rese_b_out_);
}

Var Seq2SeqModel::rese_head(Graph& g, std::span<const Var> steps) {
  if (steps.empty()) throw UsageError("rese_head: a sentence needs at least one step");
  Tensor mask({1, steps.size()});
  mask.fill(1.0);
  return rese_head(g, concat(steps, 0), mask);
}

ForwardOutput Seq2SeqModel::forward_train(Graph& g, const Batch& batch, const ForwardOptions& opts, Rng& rng) {
  const std::size_t bsz = batch.size, steps = batch.decode_steps();
  Encoded enc = encode(g, batch.src, bsz, batch.src_len, batch.src_lengths, opts.train, rng);
  DecoderState state = initial_state(g, enc);

  ForwardOutput out;
  out.batch = bsz;
  out.steps = steps;
  out.targets.resize(steps * bsz);
  out.step_mask = Tensor({steps * bsz, 1});
  out.word_mask = Tensor({steps * bsz, 1});
  out.sentence_step_mask = Tensor({bsz, steps});

  std::vector<Var> s(steps);
  std::vector<int> prev(bsz);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < bsz; ++b) {
      prev[b] = batch.tgt_at(b, t);
      out.targets[t * bsz + b] = batch.tgt_at(b, t + 1);
      // Steps 1..m predict the words, step m+1 predicts </s>.
      const double word = t < batch.tgt_lengths[b] ? 1.0 : 0.0;
      out.step_mask.data[t * bsz + b] = t <= batch.tgt_lengths[b] ? 1.0 : 0.0;
      out.word_mask.data[t * bsz + b] = word;
      out.sentence_step_mask.data[b * steps + t] = word;
    }
    Attention att = attend(g, enc, state.s());
    state = decode_step(g, att.context, state, embed_target(g, prev), opts.train, rng);
    s[t] = state.s();
  }
  out.states = concat(s, 0);
  out.probs = generate(g, dropout(out.states, config_.dropout, rng, opts.train));
  if (opts.rewe) out.rewe = rewe_head(g, out.states);
  if (opts.rese) out.rese = rese_head(g, out.states, out.sentence_step_mask);
  return out;
}

}  // namespace embreg
