#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "embreg/corpus.hpp"
#include "embreg/model.hpp"
#include "embreg/objective.hpp"
#include "json.hpp"

namespace embreg {

struct TrainConfig {
  double lr = 0.001;
  std::size_t batch_size = 40;
  double lambda = 0.0;
  double beta = 0.0;
  std::size_t eval_every = 25000;  // training sentences between validations
  std::size_t max_halvings = 5;
  std::size_t max_epochs = 50;
  std::size_t max_len = 100;
  double clip_norm = 5.0;
  double min_improvement = 1e-4;
  int precision = 64;  // 32 rounds parameters to float after every update
  std::uint64_t seed = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct AdamState {
  std::vector<Tensor> m, v;
  std::size_t t = 0;
  std::size_t skipped = 0;  // steps dropped for non-finite gradients
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of the trainable parameters. Returns false
/// (and changes nothing) when any gradient is non-finite.
bool adam_step(std::span<Parameter* const> params, AdamState& state, double lr, const AdamOptions& opt = {});

/// Scales gradients so their global L2 norm is at most max_norm. Returns the
/// norm before clipping.
double clip_gradients(std::span<Parameter* const> params, double max_norm);

/// exp(total NLL / total tokens) under teacher forcing with dropout off.
double evaluate_validation(Seq2SeqModel& model, const std::vector<Batch>& batches);

struct EvalRecord {
  std::size_t eval = 0;
  std::size_t step = 0;       // updates so far
  std::size_t sentences = 0;  // training sentences so far
  std::size_t epoch = 0;
  LossBreakdown train;        // mean over batches since the previous evaluation
  double valid_ppl = 0.0;
  double lr = 0.0;            // learning rate after this evaluation's decision
  std::size_t halvings = 0;
  bool improved = false;
  std::size_t clipped = 0;    // updates since the previous evaluation whose norm was clipped
  std::size_t skipped = 0;
  std::size_t zero_norm = 0;
};

struct TrainLog {
  std::vector<EvalRecord> records;
  std::size_t best_eval = 0;
  double best_ppl = 0.0;
  double final_lr = 0.0;
  std::string stop_reason;

  std::string to_jsonl() const;
};

struct TrainingSet {
  const ParallelCorpus* train = nullptr;
  const ParallelCorpus* valid = nullptr;
  const Vocab* src_vocab = nullptr;
  const Vocab* tgt_vocab = nullptr;
  const std::vector<SentenceEmbedding>* train_sentences = nullptr;  // aligned with train pairs, for ReSE
  const Tensor* rewe_table = nullptr;                               // frozen target word vectors, for ReWE
};

struct TrainHooks {
  // Replaces validation perplexity (the argument is the snapshot being evaluated).
  std::function<double(Seq2SeqModel& snapshot, std::size_t eval)> validation;
  std::function<void(const EvalRecord&)> on_eval;
};

struct TrainResult {
  TrainLog log;
  std::string best_checkpoint;  // serialized checkpoint bytes of the final model
};

/// Adam on the combined objective with validation-driven learning-rate halving.
/// On each non-improving evaluation the lr is halved and the trainable weights
/// are restored from the best checkpoint; training stops after max_halvings
/// halvings or max_epochs epochs. The model ends holding the best checkpoint.
TrainResult train(const TrainConfig& cfg, Seq2SeqModel& model, const TrainingSet& data, const TrainHooks& hooks = {});

}  // namespace embreg
