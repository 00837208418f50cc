#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "embreg/bpe.hpp"
#include "embreg/checkpoint.hpp"
#include "embreg/model.hpp"
#include "embreg/vocab.hpp"

namespace embreg {

struct Hypothesis {
  std::vector<int> tokens;  // starts with <s>
  double log_prob = 0.0;
  bool finished = false;    // ended with </s>

  std::size_t length() const { return tokens.size() - 1; }
};

/// Incremental next-token distribution over a set of rows, one per live
/// hypothesis. Decoding only ever reads these log-probabilities.
class StepModel {
 public:
  virtual ~StepModel() = default;
  virtual std::size_t vocab_size() const = 0;
  // Back to a single row that has consumed only <s>.
  virtual void reset() = 0;
  // Feeds each row its last token; returns log p(next) as [rows, V].
  virtual Tensor advance(std::span<const int> last_tokens) = 0;
  // New row k continues old row rows[k] (rows may repeat).
  virtual void reorder(std::span<const std::size_t> rows) = 0;
};

/// Step model over a trained Seq2SeqModel for one source sentence.
/// Only the encoder, attention, decoder and generator are evaluated.
class Seq2SeqStepper : public StepModel {
 public:
  Seq2SeqStepper(Seq2SeqModel& model, const std::vector<int>& src);

  std::size_t vocab_size() const override { return model_.config().tgt_vocab; }
  void reset() override;
  Tensor advance(std::span<const int> last_tokens) override;
  void reorder(std::span<const std::size_t> rows) override;

  // Top-layer state s_j after the last advance, [rows, Hd].
  const Tensor& last_state() const { return last_s_; }

 private:
  const Encoded& encoded_for(std::size_t rows);

  Seq2SeqModel& model_;
  std::unique_ptr<Graph> graph_;
  Encoded base_;
  std::vector<std::pair<std::size_t, Encoded>> expanded_;
  std::vector<Tensor> h_, c_;
  Tensor last_s_;
};

struct BeamOptions {
  std::size_t beam = 5;
  std::size_t max_len = 0;  // 0: 2 * source length + 10, capped at 200
  bool len_norm = false;    // rank by log_prob / length
};

std::size_t default_max_len(std::size_t src_len);

/// Argmax at every step (lowest id on ties) until </s> or max_len tokens.
Hypothesis greedy_decode(StepModel& model, std::size_t max_len);

/// Beam search with finished hypotheses kept in the beam. Ties are broken by
/// the lexicographically smaller token sequence.
Hypothesis beam_search(StepModel& model, std::size_t beam, std::size_t max_len, bool len_norm = false);

Hypothesis translate_ids(Seq2SeqModel& model, const std::vector<int>& src, const BeamOptions& opts);

/// Tokenized source sentence -> target words. BPE is applied first when
/// merges are given; @@ pieces are merged back and specials stripped.
TokenSeq translate_sentence(Seq2SeqModel& model, const Vocab& src_vocab, const Vocab& tgt_vocab, const TokenSeq& src,
                            const BeamOptions& opts, const MergeList* merges = nullptr);

std::vector<TokenSeq> translate_corpus(Seq2SeqModel& model, const Vocab& src_vocab, const Vocab& tgt_vocab,
                                       const std::vector<TokenSeq>& sources, const BeamOptions& opts,
                                       const MergeList* merges = nullptr);

// Throws DataError when the vocabularies are not the ones the checkpoint was trained with.
void check_vocab_hashes(const CheckpointMeta& meta, const Vocab& src_vocab, const Vocab& tgt_vocab);

}  // namespace embreg
