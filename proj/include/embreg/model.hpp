#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "embreg/autodiff.hpp"
#include "embreg/corpus.hpp"
#include "json.hpp"

namespace embreg {

/// Widths and switches of the network. Defaults are the full-size settings;
/// desk runs shrink them through the run config.
struct ModelConfig {
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  std::size_t emb_dim = 300;
  std::size_t enc_hidden = 512;  // per direction
  std::size_t dec_hidden = 1024;
  std::size_t attn_dim = 1024;
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 2;
  std::size_t rewe_dim = 300;  // width of the word vectors ReWE regresses to
  std::size_t rese_dim = 512;  // width of the sentence vectors ReSE regresses to
  double dropout = 0.2;
  double init_scale = 0.08;
  bool use_rewe = false;
  bool use_rese = false;
  std::uint64_t seed = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct LstmParams {
  Parameter w;  // [4H, in + H], gate rows ordered input, forget, cell, output
  Parameter b;  // [4H]
  std::size_t hidden = 0;
};

/// Output of the encoder for one batch.
struct Encoded {
  Var states;    // [n*B, 2*He], row i*B + b holds h_i of sentence b
  Var keys;      // U_a applied to states, [n*B, A]
  Tensor mask;   // [B, n], 1 on real tokens
  Var final_fwd; // top layer forward state at each sentence's last token, [B, He]
  Var final_bwd; // top layer backward state at the first token, [B, He]
  std::size_t batch = 0;
  std::size_t len = 0;
};

struct DecoderState {
  std::vector<Var> h;  // per layer, [B, Hd]
  std::vector<Var> c;
  Var s() const { return h.back(); }
};

struct Attention {
  Var context;  // [B, 2*He]
  Var weights;  // [B, n]
};

/// Teacher-forced pass over a batch. Rows of the stacked tensors are ordered
/// step-major: row t*B + b is decoding step t+1 of sentence b.
struct ForwardOutput {
  std::size_t batch = 0;
  std::size_t steps = 0;
  Var probs;                  // [T*B, V]
  Var states;                 // [T*B, Hd], s_j before generator dropout
  std::vector<int> targets;   // [T*B] reference ids y_j (pad on masked rows)
  Tensor step_mask;           // [T*B, 1], steps 1..m+1 (includes the </s> prediction)
  Tensor word_mask;           // [T*B, 1], steps 1..m only
  Tensor sentence_step_mask;  // [B, T], steps 1..m only
  Var rewe;                   // [T*B, rewe_dim] when ReWE is active
  Var rese;                   // [B, rese_dim] when ReSE is active
};

struct ForwardOptions {
  bool train = false;
  bool rewe = false;
  bool rese = false;
};

/// The attentional encoder-decoder with optional ReWE and ReSE heads.
class Seq2SeqModel {
 public:
  explicit Seq2SeqModel(const ModelConfig& config);
  Seq2SeqModel(const Seq2SeqModel&) = delete;
  Seq2SeqModel& operator=(const Seq2SeqModel&) = delete;

  const ModelConfig& config() const { return config_; }

  // Every parameter in a fixed order (checkpoint manifest order).
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter* find(const std::string& name);

  void set_source_embeddings(const Tensor& table);
  void set_target_embeddings(const Tensor& table);

  Encoded encode(Graph& g, const std::vector<int>& src, std::size_t batch, std::size_t len,
                 const std::vector<std::size_t>& lengths, bool train, Rng& rng);
  Attention attend(Graph& g, const Encoded& enc, Var s_prev);
  DecoderState initial_state(Graph& g, const Encoded& enc);
  DecoderState decode_step(Graph& g, Var context, const DecoderState& state, Var y_prev_emb, bool train, Rng& rng);
  Var embed_target(Graph& g, std::span<const int> ids);
  // Distribution over the target vocabulary for each row of s.
  Var generate(Graph& g, Var s);
  Var rewe_head(Graph& g, Var s);
  // stacked: [T*B, Hd] step-major, mask: [B, T].
  Var rese_head(Graph& g, Var stacked, const Tensor& mask);
  // Single sentence: one [1, Hd] row per step.
  Var rese_head(Graph& g, std::span<const Var> steps);

  ForwardOutput forward_train(Graph& g, const Batch& batch, const ForwardOptions& opts, Rng& rng);

  // Number of rewe_head/rese_head evaluations since construction.
  std::uint64_t head_invocations() const { return head_calls_.load(); }

 private:
  struct Layer {
    LstmParams fwd, bwd;
  };
  std::pair<Var, Var> lstm_cell(Graph& g, LstmParams& p, Var x, Var h, Var c);
  Var linear(Graph& g, Var x, Parameter& w, Parameter* b);

  ModelConfig config_;
  Parameter src_embed_, tgt_embed_;
  std::vector<Layer> encoder_;
  std::vector<LstmParams> decoder_;
  Parameter attn_w_, attn_u_, attn_v_;
  std::vector<Parameter> bridge_w_, bridge_b_;
  Parameter gen_w_, gen_b_;
  Parameter rewe_w1_, rewe_b1_, rewe_w2_, rewe_b2_;
  Parameter rese_u1_, rese_u2_, rese_w_in_, rese_b_in_, rese_w_out_, rese_b_out_;
  std::atomic<std::uint64_t> head_calls_{0};
};

}  // namespace embreg
