#include "embreg/trainer.hpp"

#include <cmath>
#include <limits>

#include "embreg/checkpoint.hpp"
#include "embreg/errors.hpp"
#include "embreg/hash.hpp"

namespace embreg {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw UsageError("lr must be positive");
  if (batch_size == 0) throw UsageError("batch_size must be positive");
  if (lambda < 0.0 || beta < 0.0) throw UsageError("lambda and beta must be non-negative");
  if (eval_every == 0) throw UsageError("eval_every must be positive");
  if (max_epochs == 0) throw UsageError("max_epochs must be positive");
  if (max_len == 0) throw UsageError("max_len must be positive");
  if (!(clip_norm > 0.0)) throw UsageError("clip_norm must be positive");
  if (min_improvement < 0.0) throw UsageError("min_improvement must be non-negative");
  if (precision != 32 && precision != 64) throw UsageError("precision must be 32 or 64");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"lr", c.lr},
                     {"batch_size", c.batch_size},
                     {"lambda", c.lambda},
                     {"beta", c.beta},
                     {"eval_every", c.eval_every},
                     {"max_halvings", c.max_halvings},
                     {"max_epochs", c.max_epochs},
                     {"max_len", c.max_len},
                     {"clip_norm", c.clip_norm},
                     {"min_improvement", c.min_improvement},
                     {"precision", c.precision},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const nlohmann::json defaults = TrainConfig{};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!defaults.contains(it.key())) throw UsageError("unknown train config key: " + it.key());
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("lr", c.lr);
  get("batch_size", c.batch_size);
  get("lambda", c.lambda);
  get("beta", c.beta);
  get("eval_every", c.eval_every);
  get("max_halvings", c.max_halvings);
  get("max_epochs", c.max_epochs);
  get("max_len", c.max_len);
  get("clip_norm", c.clip_norm);
  get("min_improvement", c.min_improvement);
  get("precision", c.precision);
  get("seed", c.seed);
}

bool adam_step(std::span<Parameter* const> params, AdamState& state, double lr, const AdamOptions& opt) {
  for (const Parameter* p : params)
    if (p->trainable && !p->grad.all_finite()) {
      ++state.skipped;
      return false;
    }
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const Parameter* p : params) {
      state.m.emplace_back(p->value.shape);
      state.v.emplace_back(p->value.shape);
    }
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!p.trainable || p.grad.data.empty()) continue;
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    for (std::size_t k = 0; k < p.value.data.size(); ++k) {
      const double g = p.grad.data[k];
      m[k] = opt.beta1 * m[k] + (1.0 - opt.beta1) * g;
      v[k] = opt.beta2 * v[k] + (1.0 - opt.beta2) * g * g;
      const double mhat = m[k] / c1, vhat = v[k] / c2;
      p.value.data[k] -= lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
  return true;
}

double clip_gradients(std::span<Parameter* const> params, double max_norm) {
  double total = 0.0;
  for (const Parameter* p : params) {
    if (!p->trainable) continue;
    for (double g : p->grad.data) total += g * g;
  }
  const double norm = std::sqrt(total);
  if (std::isfinite(norm) && norm > max_norm) {
    const double scale = max_norm / norm;
    for (Parameter* p : params)
      if (p->trainable)
        for (double& g : p->grad.data) g *= scale;
  }
  return norm;
}

double evaluate_validation(Seq2SeqModel& model, const std::vector<Batch>& batches) {
  double total = 0.0;
  std::size_t tokens = 0;
  Rng unused(0);
  for (const Batch& b : batches) {
    Graph g(false);
    ForwardOutput out = model.forward_train(g, b, ForwardOptions{}, unused);
    // nll_loss averages over sentences; undo that to get the token sum.
    total += nll_loss(out.probs, out.targets, out.step_mask, out.batch).value().item() *
             static_cast<double>(out.batch);
    for (double m : out.step_mask.data) tokens += m != 0.0;
  }
  if (tokens == 0) throw DataError("validation set is empty");
  return std::exp(total / static_cast<double>(tokens));
}

namespace {

nlohmann::json record_json(const EvalRecord& r) {
  return {{"eval", r.eval},
          {"step", r.step},
          {"sentences", r.sentences},
          {"epoch", r.epoch},
          {"train", {{"nll", r.train.nll}, {"rewe", r.train.rewe}, {"rese", r.train.rese}, {"combined", r.train.combined}}},
          {"tokens", r.train.token_count},
          {"valid_ppl", r.valid_ppl},
          {"lr", r.lr},
          {"halvings", r.halvings},
          {"improved", r.improved},
          {"clipped", r.clipped},
          {"skipped", r.skipped},
          {"zero_norm", r.zero_norm}};
}

}  // namespace

std::string TrainLog::to_jsonl() const {
  std::string out;
  for (const EvalRecord& r : records) out += record_json(r).dump() + "\n";
  out += nlohmann::json{{"best_eval", best_eval}, {"best_ppl", best_ppl}, {"final_lr", final_lr}, {"stop", stop_reason}}
             .dump() +
         "\n";
  return out;
}

TrainResult train(const TrainConfig& cfg, Seq2SeqModel& model, const TrainingSet& data, const TrainHooks& hooks) {
  cfg.validate();
  if (!data.train || !data.valid || !data.src_vocab || !data.tgt_vocab)
    throw UsageError("train needs train/valid corpora and both vocabularies");
  if (data.train->size() == 0) throw DataError("training corpus is empty");
  const ModelConfig& mc = model.config();
  const bool want_rese = mc.use_rese && cfg.beta > 0.0;
  if (want_rese && !data.train_sentences) throw UsageError("ReSE needs sentence vectors for the training set");
  if (mc.use_rewe && cfg.lambda > 0.0 && !data.rewe_table) throw UsageError("ReWE needs target word vectors");

  const std::vector<Batch> valid =
      make_batches(*data.valid, *data.src_vocab, *data.tgt_vocab, cfg.batch_size, cfg.seed, cfg.max_len).batches;
  if (valid.empty() && !hooks.validation) throw DataError("validation set is empty after filtering");

  const std::string src_hash = data.src_vocab->fingerprint(), tgt_hash = data.tgt_vocab->fingerprint();
  const ObjectiveConfig objective{cfg.lambda, cfg.beta, data.rewe_table};
  auto params = model.parameters();
  Rng dropout_rng = Rng::derive(cfg.seed, fnv1a64("dropout"));
  AdamState adam;

  TrainResult result;
  TrainLog& log = result.log;
  double lr = cfg.lr;
  double best = std::numeric_limits<double>::infinity();
  std::size_t halvings = 0, step = 0, sentences = 0, since_eval = 0;
  EvalRecord pending;
  std::size_t pending_batches = 0;

  auto evaluate = [&](std::size_t epoch) {
    const std::string bytes = serialize_checkpoint(model, src_hash, tgt_hash);
    auto snapshot = deserialize_checkpoint(bytes);
    EvalRecord rec = pending;
    rec.eval = log.records.size();
    rec.step = step;
    rec.sentences = sentences;
    rec.epoch = epoch;
    if (pending_batches > 0) {
      const double n = static_cast<double>(pending_batches);
      rec.train.nll /= n;
      rec.train.rewe /= n;
      rec.train.rese /= n;
      rec.train.combined /= n;
    }
    rec.valid_ppl = hooks.validation ? hooks.validation(*snapshot, rec.eval) : evaluate_validation(*snapshot, valid);
    if (!std::isfinite(rec.valid_ppl)) throw NumericError("validation perplexity is not finite at eval " +
                                                          std::to_string(rec.eval));
    rec.improved = rec.valid_ppl < best - cfg.min_improvement;
    if (rec.improved) {
      best = rec.valid_ppl;
      result.best_checkpoint = bytes;
      log.best_eval = rec.eval;
    } else {
      ++halvings;
      lr /= 2.0;
      load_parameters(model, result.best_checkpoint, true);
      adam = AdamState{};
    }
    rec.lr = lr;
    rec.halvings = halvings;
    log.records.push_back(rec);
    if (hooks.on_eval) hooks.on_eval(rec);
    pending = EvalRecord{};
    pending_batches = 0;
    since_eval = 0;
  };

  bool stop = false;
  std::size_t epoch = 0;
  for (; epoch < cfg.max_epochs && !stop; ++epoch) {
    const std::uint64_t epoch_seed = Rng::derive(cfg.seed, epoch).next();
    const Batches train_batches = make_batches(*data.train, *data.src_vocab, *data.tgt_vocab, cfg.batch_size,
                                               epoch_seed, cfg.max_len, want_rese ? data.train_sentences : nullptr);
    for (std::size_t bi = 0; bi < train_batches.batches.size(); ++bi) {
      const Batch& batch = train_batches.batches[bi];
      for (Parameter* p : params) p->zero_grad();
      Graph g;
      LossTerms terms = batch_loss(g, model, batch, objective, true, dropout_rng);
      if (!std::isfinite(terms.values.combined))
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(bi) + " (nll " + std::to_string(terms.values.nll) + ")");
      g.backward(terms.loss);
      const double norm = clip_gradients(params, cfg.clip_norm);
      if (std::isfinite(norm) && norm > cfg.clip_norm) ++pending.clipped;
      if (adam_step(params, adam, lr)) {
        ++step;
        if (cfg.precision == 32) round_to_float(model);
      } else {
        ++pending.skipped;
      }
      pending.train.nll += terms.values.nll;
      pending.train.rewe += terms.values.rewe;
      pending.train.rese += terms.values.rese;
      pending.train.combined += terms.values.combined;
      pending.train.token_count += terms.values.token_count;
      pending.zero_norm += terms.values.zero_norm;
      ++pending_batches;
      sentences += batch.size;
      since_eval += batch.size;
      if (since_eval >= cfg.eval_every) {
        evaluate(epoch);
        if (halvings >= cfg.max_halvings) {
          stop = true;
          log.stop_reason = "max_halvings";
          break;
        }
      }
    }
  }
  if (!stop) {
    if (since_eval > 0 || log.records.empty()) evaluate(epoch == 0 ? 0 : epoch - 1);
    log.stop_reason = halvings >= cfg.max_halvings ? "max_halvings" : "max_epochs";
  }
  load_parameters(model, result.best_checkpoint, false);
  log.best_ppl = best;
  log.final_lr = lr;
  return result;
}

}  // namespace embreg
