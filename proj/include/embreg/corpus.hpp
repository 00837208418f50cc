#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "embreg/tensor.hpp"
#include "embreg/vocab.hpp"

namespace embreg {

struct SentencePair {
  TokenSeq src;
  TokenSeq tgt;
};

struct ParallelCorpus {
  std::string name;
  std::vector<SentencePair> pairs;

  std::size_t size() const { return pairs.size(); }
  std::vector<TokenSeq> sources() const;
  std::vector<TokenSeq> targets() const;
};

/// Lowercase, split on whitespace, peel .,;:!?"'() off both ends of each word.
TokenSeq tokenize(std::string_view line);

// Whitespace split only, for already tokenized text.
TokenSeq split_tokens(std::string_view line);
std::string join_tokens(const TokenSeq& tokens);

std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<TokenSeq>& sentences);

/// Line i of each file forms pair i. Pairs with an empty side are dropped.
ParallelCorpus read_parallel(const std::string& src_path, const std::string& tgt_path, bool do_tokenize,
                             std::size_t* dropped = nullptr);
void write_parallel(const std::string& src_path, const std::string& tgt_path, const ParallelCorpus& corpus);

/// One padded minibatch. Targets are wrapped as <s> y_1 .. y_m </s>; the
/// decoder predicts positions 1..m+1 of that row.
struct Batch {
  std::size_t size = 0;
  std::size_t src_len = 0;  // n_max
  std::size_t tgt_len = 0;  // m_max + 2
  std::vector<int> src;     // [size, src_len], <pad> filled
  std::vector<int> tgt;     // [size, tgt_len]
  std::vector<std::size_t> src_lengths;
  std::vector<std::size_t> tgt_lengths;  // true m, excluding <s> and </s>
  std::vector<std::size_t> pair_index;   // position in the source corpus
  Tensor sent_targets;                   // [size, dim] when sentence targets are supplied
  std::vector<bool> sent_degenerate;

  int src_at(std::size_t b, std::size_t i) const { return src[b * src_len + i]; }
  int tgt_at(std::size_t b, std::size_t j) const { return tgt[b * tgt_len + j]; }
  std::size_t decode_steps() const { return tgt_len - 1; }
};

struct Batches {
  std::vector<Batch> batches;
  std::size_t filtered = 0;  // pairs over max_len on either side
};

/// Seeded shuffle, then length bucketing inside pools of 64 batches. Within a
/// pool the full batches are shuffled and a short remainder goes last.
Batches make_batches(const ParallelCorpus& corpus, const Vocab& src_vocab, const Vocab& tgt_vocab,
                     std::size_t batch_size, std::uint64_t seed, std::size_t max_len = 100,
                     const std::vector<SentenceEmbedding>* sent_targets = nullptr);

enum class SynthTask { Copy, Reverse, NumWord };
SynthTask parse_synth_task(const std::string& name);
std::string synth_task_name(SynthTask task);

struct SynthSpec {
  SynthTask task = SynthTask::Copy;
  std::size_t n = 1000;
  std::size_t vocab_size = 20;
  std::size_t min_len = 3;
  std::size_t max_len = 8;
  double noise_rate = 0.0;
  std::uint64_t seed = 1;
};

/// Target-side word for a numword symbol ("un" for 1, "tri" for 3, ...).
std::string numword_word(std::size_t symbol);
/// Symbol inventory of a task's target side.
std::vector<std::string> synth_target_symbols(SynthTask task, std::size_t vocab_size);
std::vector<std::string> synth_source_symbols(SynthTask task, std::size_t vocab_size);

/// Distinct source sentences with their clean targets, then noise_rate of the
/// target tokens replaced by random target symbols.
ParallelCorpus gen_synthetic(const SynthSpec& spec);

struct CorpusSplits {
  ParallelCorpus train, valid, test;
};

/// Clean corpus split 80/10/10 in generation order; noise touches train only.
CorpusSplits gen_synthetic_splits(const SynthSpec& spec);

void add_target_noise(ParallelCorpus& corpus, const std::vector<std::string>& symbols, double rate, Rng& rng);

}  // namespace embreg
