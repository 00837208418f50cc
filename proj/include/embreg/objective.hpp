#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "embreg/autodiff.hpp"
#include "embreg/model.hpp"

namespace embreg {

struct LossBreakdown {
  double nll = 0.0;
  double rewe = 0.0;
  double rese = 0.0;
  double combined = 0.0;
  std::size_t token_count = 0;
  std::size_t zero_norm = 0;  // ReWE steps whose prediction had zero norm
};

/// -sum log p(y) over unmasked rows, divided by the number of sentences.
Var nll_loss(Var probs, std::span<const int> targets, const Tensor& mask, std::size_t sentences);

/// sum (1 - cos(e, y)) over unmasked rows, divided by the number of sentences.
/// A zero-norm prediction scores cos = 0 and is counted in *zero_norm.
Var rewe_loss(Var predicted, const Tensor& targets, const Tensor& mask, std::size_t sentences,
              std::size_t* zero_norm = nullptr);

/// Mean of 1 - cos(r, y) over sentences whose target is not degenerate.
/// Returns a constant 0 when every target is degenerate.
Var rese_loss(Var predicted, const Tensor& targets, const std::vector<bool>& degenerate);

/// nll + lambda * rewe + beta * rese. Terms with a zero weight or an invalid
/// Var are left out of the graph entirely.
Var combined_loss(Var nll, Var rewe, Var rese, double lambda, double beta);

// Same arithmetic on plain numbers.
LossBreakdown combine(double nll, double rewe, double rese, double lambda, double beta);

// Rows of table picked by ids: [ids.size(), table cols].
Tensor gather_rows(const Tensor& table, std::span<const int> ids);

struct ObjectiveConfig {
  double lambda = 0.0;
  double beta = 0.0;
  const Tensor* rewe_table = nullptr;  // frozen target-side word vectors, [V_tgt, rewe_dim]
};

struct LossTerms {
  Var loss;
  LossBreakdown values;
  ForwardOutput forward;
};

/// Forward pass plus the full objective for one batch. The ReWE/ReSE heads run
/// only when enabled in the model and given a positive weight.
LossTerms batch_loss(Graph& g, Seq2SeqModel& model, const Batch& batch, const ObjectiveConfig& cfg, bool train,
                     Rng& rng);

}  // namespace embreg
