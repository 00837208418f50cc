#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "embreg/corpus.hpp"
#include "embreg/model.hpp"
#include "embreg/trainer.hpp"
#include "embreg/vocab.hpp"
#include "json.hpp"

namespace embreg {

inline constexpr const char* kArtifactVersion = "embreg 1.0.0";

enum class ReweTarget { Frozen, Live };
ReweTarget parse_rewe_target(const std::string& name);
std::string rewe_target_name(ReweTarget t);
std::string sent_embedder_name(SentEmbedderKind k);

struct DataPaths {
  std::string train_src, train_tgt;
  std::string valid_src, valid_tgt;
  std::string src_vec, tgt_vec;  // optional .vec files
  bool tokenize = false;         // lowercase + punctuation split on read
};

/// Everything a training run depends on. The top-level seed feeds the model,
/// trainer and embedding initialization.
struct RunConfig {
  DataPaths data;
  std::size_t vocab_max_size = 50000;
  std::size_t vocab_min_freq = 1;
  ModelConfig model;
  TrainConfig train;
  ReweTarget rewe_target = ReweTarget::Frozen;
  SentEmbedderKind sent_embedder = SentEmbedderKind::MeanOfWords;
  std::size_t sent_dim = 512;
  std::uint64_t seed = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

struct Experiment {
  ParallelCorpus train, valid;
  Vocab src_vocab, tgt_vocab;
  EmbeddingTable src_table, tgt_table;  // initial input tables
  Tensor rewe_table;                    // frozen copy of the target table
  std::vector<SentenceEmbedding> train_sentences;
  CoverageReport src_coverage, tgt_coverage;
  std::size_t degenerate_sentences = 0;
};

/// Vocabularies from the training side, embedding tables (pretrained when a
/// .vec file is given), frozen ReWE targets and ReSE sentence targets.
Experiment prepare_experiment(const RunConfig& cfg, ParallelCorpus train, ParallelCorpus valid,
                              const VecFile* src_vec = nullptr, const VecFile* tgt_vec = nullptr);
Experiment prepare_experiment(const RunConfig& cfg);

/// Model config with vocabulary sizes, head widths and head switches filled in.
ModelConfig resolve_model_config(const RunConfig& cfg, const Experiment& exp);

struct RunResult {
  std::unique_ptr<Seq2SeqModel> model;
  TrainResult train;
};

/// Seeded N(0, 0.3^2) rows for the given tokens, standing in for pretrained vectors.
VecFile random_vectors(const std::vector<std::string>& tokens, std::size_t dim, std::uint64_t seed);

RunResult run_training(const RunConfig& cfg, Experiment& exp, const TrainHooks& hooks = {});

}  // namespace embreg
