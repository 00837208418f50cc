#include "embreg/pipeline.hpp"

#include "embreg/bpe.hpp"
#include "embreg/errors.hpp"
#include "embreg/hash.hpp"

namespace embreg {

ReweTarget parse_rewe_target(const std::string& name) {
  if (name == "frozen") return ReweTarget::Frozen;
  if (name == "live") return ReweTarget::Live;
  throw UsageError("unknown rewe target '" + name + "' (expected frozen or live)");
}

std::string rewe_target_name(ReweTarget t) { return t == ReweTarget::Frozen ? "frozen" : "live"; }

std::string sent_embedder_name(SentEmbedderKind k) { return k == SentEmbedderKind::MeanOfWords ? "mean" : "hash"; }

void RunConfig::validate() const {
  train.validate();
  if (vocab_max_size == 0) throw UsageError("vocab max_size must be positive");
  if (train.beta > 0.0 && sent_dim == 0) throw UsageError("sent_dim must be positive when beta > 0");
}

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw UsageError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw UsageError("unknown " + where + " key: " + it.key());
  }
}

template <typename T>
void get(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}

}  // namespace

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{
      {"data",
       {{"train_src", c.data.train_src},
        {"train_tgt", c.data.train_tgt},
        {"valid_src", c.data.valid_src},
        {"valid_tgt", c.data.valid_tgt},
        {"src_vec", c.data.src_vec},
        {"tgt_vec", c.data.tgt_vec},
        {"tokenize", c.data.tokenize}}},
      {"vocab", {{"max_size", c.vocab_max_size}, {"min_freq", c.vocab_min_freq}}},
      {"model", c.model},
      {"train", c.train},
      {"rewe_target", rewe_target_name(c.rewe_target)},
      {"sent_embedder", sent_embedder_name(c.sent_embedder)},
      {"sent_dim", c.sent_dim},
      {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  reject_unknown(j, {"data", "vocab", "model", "train", "rewe_target", "sent_embedder", "sent_dim", "seed"}, "config");
  if (j.contains("data")) {
    const auto& d = j.at("data");
    reject_unknown(d, {"train_src", "train_tgt", "valid_src", "valid_tgt", "src_vec", "tgt_vec", "tokenize"},
                   "data");
    get(d, "train_src", c.data.train_src);
    get(d, "train_tgt", c.data.train_tgt);
    get(d, "valid_src", c.data.valid_src);
    get(d, "valid_tgt", c.data.valid_tgt);
    get(d, "src_vec", c.data.src_vec);
    get(d, "tgt_vec", c.data.tgt_vec);
    get(d, "tokenize", c.data.tokenize);
  }
  if (j.contains("vocab")) {
    const auto& v = j.at("vocab");
    reject_unknown(v, {"max_size", "min_freq"}, "vocab");
    get(v, "max_size", c.vocab_max_size);
    get(v, "min_freq", c.vocab_min_freq);
  }
  if (j.contains("model")) j.at("model").get_to(c.model);
  if (j.contains("train")) j.at("train").get_to(c.train);
  if (j.contains("rewe_target")) c.rewe_target = parse_rewe_target(j.at("rewe_target").get<std::string>());
  if (j.contains("sent_embedder")) c.sent_embedder = parse_sent_embedder(j.at("sent_embedder").get<std::string>());
  get(j, "sent_dim", c.sent_dim);
  get(j, "seed", c.seed);
}

Experiment prepare_experiment(const RunConfig& cfg, ParallelCorpus train, ParallelCorpus valid, const VecFile* src_vec,
                              const VecFile* tgt_vec) {
  if (train.size() == 0) throw DataError("training corpus is empty");
  if (valid.size() == 0) throw DataError("validation corpus is empty");
  Experiment exp;
  exp.train = std::move(train);
  exp.valid = std::move(valid);
  exp.src_vocab = Vocab::build(exp.train.sources(), cfg.vocab_max_size, cfg.vocab_min_freq);
  exp.tgt_vocab = Vocab::build(exp.train.targets(), cfg.vocab_max_size, cfg.vocab_min_freq);

  Rng rng = Rng::derive(cfg.seed, fnv1a64("embeddings"));
  const std::size_t dim = cfg.model.emb_dim;
  if (src_vec) {
    auto loaded = load_pretrained(*src_vec, exp.src_vocab, dim, rng);
    exp.src_table = std::move(loaded.table);
    exp.src_coverage = std::move(loaded.coverage);
  } else {
    exp.src_table = random_table(exp.src_vocab, dim, rng);
  }
  if (tgt_vec) {
    auto loaded = load_pretrained(*tgt_vec, exp.tgt_vocab, dim, rng);
    exp.tgt_table = std::move(loaded.table);
    exp.tgt_coverage = std::move(loaded.coverage);
  } else {
    exp.tgt_table = random_table(exp.tgt_vocab, dim, rng);
  }
  exp.rewe_table = exp.tgt_table.matrix;

  if (cfg.train.beta > 0.0) {
    // Sentence vectors come from whole words, so the embedder reads the word-level
    // .vec rows when a file is given rather than the (possibly subword) model table.
    Vocab word_vocab;
    EmbeddingTable word_table;
    if (tgt_vec) {
      word_vocab = Vocab::from_tokens(tgt_vec->tokens);
      word_table.matrix = Tensor(Shape{word_vocab.size(), tgt_vec->dim});
      word_table.from_file.assign(word_vocab.size(), false);
      for (std::size_t i = 0; i < tgt_vec->tokens.size(); ++i) {
        const auto r = static_cast<std::size_t>(word_vocab.id(tgt_vec->tokens[i]));
        if (word_table.from_file[r]) continue;
        std::copy(tgt_vec->rows[i].begin(), tgt_vec->rows[i].end(),
                  word_table.matrix.data.begin() + static_cast<std::ptrdiff_t>(r * tgt_vec->dim));
        word_table.from_file[r] = true;
      }
    } else {
      word_vocab = exp.tgt_vocab;
      word_table = exp.tgt_table;
    }
    const SentEmbedder embedder(cfg.sent_embedder, cfg.sent_dim, cfg.seed);
    exp.train_sentences.reserve(exp.train.size());
    for (const auto& p : exp.train.pairs) {
      exp.train_sentences.push_back(embedder.embed(merge_back(p.tgt), word_vocab, word_table));
      exp.degenerate_sentences += exp.train_sentences.back().degenerate;
    }
  }
  return exp;
}

Experiment prepare_experiment(const RunConfig& cfg) {
  const DataPaths& d = cfg.data;
  if (d.train_src.empty() || d.train_tgt.empty()) throw UsageError("config needs data.train_src and data.train_tgt");
  if (d.valid_src.empty() || d.valid_tgt.empty()) throw UsageError("config needs data.valid_src and data.valid_tgt");
  ParallelCorpus train = read_parallel(d.train_src, d.train_tgt, d.tokenize);
  ParallelCorpus valid = read_parallel(d.valid_src, d.valid_tgt, d.tokenize);
  VecFile sv, tv;
  if (!d.src_vec.empty()) sv = read_vec(d.src_vec);
  if (!d.tgt_vec.empty()) tv = read_vec(d.tgt_vec);
  return prepare_experiment(cfg, std::move(train), std::move(valid), d.src_vec.empty() ? nullptr : &sv,
                            d.tgt_vec.empty() ? nullptr : &tv);
}

ModelConfig resolve_model_config(const RunConfig& cfg, const Experiment& exp) {
  ModelConfig m = cfg.model;
  m.src_vocab = exp.src_vocab.size();
  m.tgt_vocab = exp.tgt_vocab.size();
  m.rewe_dim = exp.rewe_table.cols();
  m.rese_dim = cfg.sent_dim;
  m.use_rewe = cfg.train.lambda > 0.0;
  m.use_rese = cfg.train.beta > 0.0;
  m.seed = cfg.seed;
  return m;
}

VecFile random_vectors(const std::vector<std::string>& tokens, std::size_t dim, std::uint64_t seed) {
  VecFile f;
  f.dim = dim;
  f.tokens = tokens;
  for (const auto& t : tokens) {
    Rng rng = Rng::derive(seed, fnv1a64(t));
    std::vector<double> row(dim);
    for (double& v : row) v = rng.normal(0.0, 0.3);
    f.rows.push_back(std::move(row));
  }
  return f;
}

RunResult run_training(const RunConfig& cfg, Experiment& exp, const TrainHooks& hooks) {
  cfg.validate();
  RunResult out;
  out.model = std::make_unique<Seq2SeqModel>(resolve_model_config(cfg, exp));
  out.model->set_source_embeddings(exp.src_table.matrix);
  out.model->set_target_embeddings(exp.tgt_table.matrix);

  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  TrainingSet data;
  data.train = &exp.train;
  data.valid = &exp.valid;
  data.src_vocab = &exp.src_vocab;
  data.tgt_vocab = &exp.tgt_vocab;
  if (tc.beta > 0.0) data.train_sentences = &exp.train_sentences;
  if (tc.lambda > 0.0)
    data.rewe_table = cfg.rewe_target == ReweTarget::Frozen ? &exp.rewe_table : &out.model->find("tgt_embed")->value;
  out.train = train(tc, *out.model, data, hooks);
  return out;
}

}  // namespace embreg
