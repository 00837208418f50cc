#include "embreg/gradcheck.hpp"

#include "embreg/objective.hpp"
#include "embreg/vocab.hpp"

namespace embreg {

ModelConfig micro_model_config(std::uint64_t seed) {
  ModelConfig c;
  c.src_vocab = 10;
  c.tgt_vocab = 12;
  c.emb_dim = 3;
  c.enc_hidden = 2;
  c.dec_hidden = 4;
  c.attn_dim = 3;
  c.rewe_dim = 5;
  c.rese_dim = 6;
  c.init_scale = 0.5;
  c.use_rewe = c.use_rese = true;
  c.seed = seed;
  return c;
}

Batch micro_batch(std::uint64_t seed, const ModelConfig& cfg) {
  Rng rng = Rng::derive(seed, 0xba7c4);
  Batch b;
  b.size = 2;
  const std::size_t src_lens[2] = {3, 2 + rng.index(2)}, tgt_lens[2] = {2 + rng.index(2), 3};
  b.src_len = std::max(src_lens[0], src_lens[1]);
  b.tgt_len = std::max(tgt_lens[0], tgt_lens[1]) + 2;
  b.src.assign(b.size * b.src_len, Vocab::kPad);
  b.tgt.assign(b.size * b.tgt_len, Vocab::kPad);
  auto word = [&](std::size_t v) { return static_cast<int>(Vocab::kNumSpecials + rng.index(v - Vocab::kNumSpecials)); };
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < src_lens[i]; ++k) b.src[i * b.src_len + k] = word(cfg.src_vocab);
    b.tgt[i * b.tgt_len] = Vocab::kBos;
    for (std::size_t k = 0; k < tgt_lens[i]; ++k) b.tgt[i * b.tgt_len + k + 1] = word(cfg.tgt_vocab);
    b.tgt[i * b.tgt_len + tgt_lens[i] + 1] = Vocab::kEos;
    b.src_lengths.push_back(src_lens[i]);
    b.tgt_lengths.push_back(tgt_lens[i]);
    b.pair_index.push_back(i);
  }
  b.sent_targets = Tensor({2, cfg.rese_dim});
  for (double& v : b.sent_targets.data) v = rng.uniform(-1.0, 1.0);
  b.sent_degenerate.assign(2, false);
  return b;
}

GradCheckResult check_objective_gradients(std::uint64_t seed, double lambda, double beta) {
  const ModelConfig cfg = micro_model_config(seed);
  Seq2SeqModel model(cfg);
  // Nonzero biases keep head outputs clear of the zero-norm cosine fallback.
  Rng brng = Rng::derive(seed, 0xb1a5);
  for (Parameter* p : model.parameters())
    if (p->value.shape.size() == 1)
      for (double& v : p->value.data) v = brng.uniform(-0.3, 0.3);
  Rng trng = Rng::derive(seed, 0x7ab1e);
  Tensor table({cfg.tgt_vocab, cfg.rewe_dim});
  for (double& v : table.data) v = trng.uniform(-1.0, 1.0);
  const Batch batch = micro_batch(seed, cfg);
  const ObjectiveConfig obj{lambda, beta, &table};
  auto loss = [&](Graph& g) {
    Rng rng = Rng::derive(seed, 0xd50);
    return batch_loss(g, model, batch, obj, true, rng).loss;
  };
  auto params = model.parameters();
  return grad_check_params(loss, params);
}

}  // namespace embreg
