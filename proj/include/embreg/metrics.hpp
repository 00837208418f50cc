#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "embreg/corpus.hpp"
#include "embreg/model.hpp"
#include "embreg/vocab.hpp"
#include "json.hpp"

namespace embreg {

/// Corpus BLEU-4 in percent. Without smoothing any zero n-gram precision gives 0;
/// smooth adds 1 to the matches and totals for n >= 2.
double bleu(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references, bool smooth = false);

/// Mean silhouette over all points, Euclidean. Points in singleton clusters
/// score 0, as does a point with a = b = 0. Needs at least 2 clusters.
double silhouette(const Tensor& points, const std::vector<int>& labels);

/// Davies-Bouldin index, Euclidean. Coincident centroids make that pair's
/// ratio +inf; the count of such pairs goes to *coincident.
double davies_bouldin(const Tensor& points, const std::vector<int>& labels, std::size_t* coincident = nullptr);

enum class DumpMode { Forced, Free };
DumpMode parse_dump_mode(const std::string& name);

struct StateRow {
  std::size_t sent_id = 0;
  std::size_t step = 0;  // 1-based decoding step j
  int word = 0;          // argmax of generate(s_j)
};

struct StateDump {
  std::vector<StateRow> rows;
  Tensor states;  // [rows, Hd]
};

/// s_j for every word position of every sentence. Forced runs teacher forcing
/// on the references (steps 1..m); free decodes greedily and stops before the
/// </s> step. The ReWE/ReSE heads are never evaluated.
StateDump dump_states(Seq2SeqModel& model, const ParallelCorpus& corpus, const Vocab& src_vocab,
                      const Vocab& tgt_vocab, DumpMode mode, std::size_t max_len = 0);

/// Header sent_id,step,word,v0..v{D-1}; floats with 9 significant digits.
void write_state_csv(const std::string& path, const StateDump& dump, const Vocab& tgt_vocab);

/// Each s_j (sample 0) followed by k points drawn uniformly from the ball of
/// the given radius around it, each with its argmax prediction.
void write_perturbation_csv(const std::string& path, Seq2SeqModel& model, const StateDump& dump,
                            const Vocab& tgt_vocab, std::size_t k, double radius, std::uint64_t seed);

struct ClusterReport {
  double silhouette = 0.0;
  double davies_bouldin = 0.0;
  std::size_t clusters = 0;
  std::size_t points = 0;

  nlohmann::json to_json() const;
};

/// Groups states by predicted word, drops clusters below min_cluster_size and
/// scores what is left.
ClusterReport analyze_clusters(const StateDump& dump, std::size_t min_cluster_size = 2);

}  // namespace embreg
