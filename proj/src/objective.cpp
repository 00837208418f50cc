#include "embreg/objective.hpp"

#include <cmath>

#include "embreg/errors.hpp"

namespace embreg {

Var nll_loss(Var probs, std::span<const int> targets, const Tensor& mask, std::size_t sentences) {
  if (sentences == 0) throw UsageError("nll_loss: empty batch");
  Graph& g = *probs.graph();
  Var logp = log(pick(probs, targets));
  return affine(sum(mul(logp, g.constant(mask))), -1.0 / static_cast<double>(sentences), 0.0);
}

Var rewe_loss(Var predicted, const Tensor& targets, const Tensor& mask, std::size_t sentences,
              std::size_t* zero_norm) {
  if (sentences == 0) throw UsageError("rewe_loss: empty batch");
  Graph& g = *predicted.graph();
  if (zero_norm) {
    const Tensor& e = predicted.value();
    const std::size_t cols = e.cols();
    for (std::size_t r = 0; r < e.rows(); ++r) {
      if (mask.data[r] == 0.0) continue;
      double n2 = 0.0;
      for (std::size_t c = 0; c < cols; ++c) n2 += e.data[r * cols + c] * e.data[r * cols + c];
      if (std::sqrt(n2) < 1e-8) ++*zero_norm;
    }
  }
  Var cos = cosine_similarity(predicted, g.constant(targets), ZeroNormPolicy::ZeroCosine);
  Var dist = affine(cos, -1.0, 1.0);
  return affine(sum(mul(dist, g.constant(mask))), 1.0 / static_cast<double>(sentences), 0.0);
}

Var rese_loss(Var predicted, const Tensor& targets, const std::vector<bool>& degenerate) {
  Graph& g = *predicted.graph();
  const std::size_t b = predicted.rows();
  if (degenerate.size() != b) throw UsageError("rese_loss: degenerate flags do not match the batch");
  Tensor include({b, 1});
  std::size_t kept = 0;
  for (std::size_t i = 0; i < b; ++i) {
    if (degenerate[i]) continue;
    include.data[i] = 1.0;
    ++kept;
  }
  if (kept == 0) return g.constant(Tensor::scalar(0.0));
  Var cos = cosine_similarity(predicted, g.constant(targets), ZeroNormPolicy::ZeroCosine);
  Var dist = affine(cos, -1.0, 1.0);
  return affine(sum(mul(dist, g.constant(include))), 1.0 / static_cast<double>(kept), 0.0);
}

Var combined_loss(Var nll, Var rewe, Var rese, double lambda, double beta) {
  if (lambda < 0.0 || beta < 0.0) throw UsageError("lambda and beta must be non-negative");
  Var total = nll;
  if (lambda > 0.0 && rewe.valid()) total = add(total, affine(rewe, lambda, 0.0));
  if (beta > 0.0 && rese.valid()) total = add(total, affine(rese, beta, 0.0));
  return total;
}

LossBreakdown combine(double nll, double rewe, double rese, double lambda, double beta) {
  if (lambda < 0.0 || beta < 0.0) throw UsageError("lambda and beta must be non-negative");
  LossBreakdown out;
  out.nll = nll;
  out.rewe = rewe;
  out.rese = rese;
  out.combined = nll;
  if (lambda > 0.0) out.combined += lambda * rewe;
  if (beta > 0.0) out.combined += beta * rese;
  return out;
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  const std::size_t cols = table.cols(), rows = table.rows();
  Tensor out({ids.size(), cols});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto id = static_cast<std::size_t>(ids[i]);
    if (id >= rows) throw UsageError("gather_rows: id out of range");
    std::copy_n(table.data.begin() + static_cast<std::ptrdiff_t>(id * cols), cols,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * cols));
  }
  return out;
}

LossTerms batch_loss(Graph& g, Seq2SeqModel& model, const Batch& batch, const ObjectiveConfig& cfg, bool train,
                     Rng& rng) {
  if (cfg.lambda < 0.0 || cfg.beta < 0.0) throw UsageError("lambda and beta must be non-negative");
  const ModelConfig& mc = model.config();
  ForwardOptions opts;
  opts.train = train;
  opts.rewe = mc.use_rewe && cfg.lambda > 0.0;
  opts.rese = mc.use_rese && cfg.beta > 0.0;
  if (opts.rewe && !cfg.rewe_table) throw UsageError("ReWE is enabled but no target word vectors were given");
  if (opts.rese && batch.sent_targets.data.empty())
    throw UsageError("ReSE is enabled but the batch carries no sentence targets");

  LossTerms out;
  out.forward = model.forward_train(g, batch, opts, rng);
  const ForwardOutput& f = out.forward;
  Var nll = nll_loss(f.probs, f.targets, f.step_mask, f.batch);
  Var rewe, rese;
  std::size_t zero_norm = 0;
  if (opts.rewe) {
    if (cfg.rewe_table->cols() != mc.rewe_dim) throw DataError("ReWE target vectors have the wrong width");
    rewe = rewe_loss(f.rewe, gather_rows(*cfg.rewe_table, f.targets), f.word_mask, f.batch, &zero_norm);
  }
  if (opts.rese) rese = rese_loss(f.rese, batch.sent_targets, batch.sent_degenerate);
  out.loss = combined_loss(nll, rewe, rese, cfg.lambda, cfg.beta);

  out.values.nll = nll.value().item();
  out.values.rewe = rewe.valid() ? rewe.value().item() : 0.0;
  out.values.rese = rese.valid() ? rese.value().item() : 0.0;
  out.values.combined = out.loss.value().item();
  out.values.zero_norm = zero_norm;
  for (double m : f.step_mask.data) out.values.token_count += m != 0.0;
  return out;
}

}  // namespace embreg
