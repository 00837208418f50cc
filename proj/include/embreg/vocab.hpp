#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "embreg/rng.hpp"
#include "embreg/tensor.hpp"

namespace embreg {

using TokenSeq = std::vector<std::string>;

/// Token <-> id map with four reserved ids.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr std::size_t kNumSpecials = 4;
  static const std::vector<std::string>& specials();

  Vocab();

  /// Ids assigned by (frequency desc, token asc); tokens under min_freq or
  /// beyond max_size are left out and map to <unk>.
  static Vocab build(const std::vector<TokenSeq>& corpus, std::size_t max_size, std::size_t min_freq = 1);
  /// Non-special tokens in id order (ids 4, 5, ...).
  static Vocab from_tokens(const std::vector<std::string>& tokens);

  int id(const std::string& token) const;
  bool contains(const std::string& token) const { return id_of_.count(token) != 0; }
  const std::string& token(int id) const;
  std::size_t size() const { return token_of_.size(); }
  const std::vector<std::string>& tokens() const { return token_of_; }

  std::vector<int> encode(const TokenSeq& tokens) const;
  // Drops <pad>, <s> and </s>.
  TokenSeq decode(const std::vector<int>& ids) const;

  std::string fingerprint() const;

  // One token per line, specials first.
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

 private:
  std::vector<std::string> token_of_;
  std::unordered_map<std::string, int> id_of_;
};

enum class EmbeddingSource { Pretrained, Random };

struct EmbeddingTable {
  Tensor matrix;  // [|V|, d]
  bool trainable = true;
  EmbeddingSource source = EmbeddingSource::Random;
  std::vector<bool> from_file;  // per row: true when the row came from the .vec file

  std::size_t dim() const { return matrix.cols(); }
  std::size_t rows() const { return matrix.rows(); }
};

struct CoverageReport {
  std::size_t found = 0;
  std::size_t total = 0;  // non-special vocab entries
  double fraction = 1.0;
  std::vector<std::string> missing;
};

struct LoadedEmbeddings {
  EmbeddingTable table;
  CoverageReport coverage;
};

/// Rows of a .vec file keyed by token, in file order.
struct VecFile {
  std::size_t dim = 0;
  std::vector<std::string> tokens;
  std::vector<std::vector<double>> rows;
};

VecFile read_vec(const std::string& path);
void write_vec(const std::string& path, const std::vector<std::string>& tokens, const Tensor& matrix);

/// Vocab rows found in the file are copied; the rest (specials included) are
/// drawn from N(0, 0.1^2), except <pad> which is all zero.
LoadedEmbeddings load_pretrained(const std::string& path, const Vocab& vocab, std::size_t dim, Rng& rng);
LoadedEmbeddings load_pretrained(const VecFile& file, const Vocab& vocab, std::size_t dim, Rng& rng);

/// All rows N(0, 0.1^2), <pad> zero.
EmbeddingTable random_table(const Vocab& vocab, std::size_t dim, Rng& rng);

enum class SentEmbedderKind { MeanOfWords, HashProjection };

struct SentenceEmbedding {
  std::vector<double> vec;
  bool degenerate = false;  // empty, all unknown, or cancelled to zero
};

/// Deterministic reference sentence embedder supplying ReSE targets.
class SentEmbedder {
 public:
  SentEmbedder(SentEmbedderKind kind, std::size_t dim, std::uint64_t seed = 0) : kind_(kind), dim_(dim), seed_(seed) {}

  SentEmbedderKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }

  // words must already be merged back from subwords.
  SentenceEmbedding embed(const TokenSeq& words, const Vocab& vocab, const EmbeddingTable& table) const;

 private:
  SentEmbedderKind kind_;
  std::size_t dim_;
  std::uint64_t seed_;
};

SentEmbedderKind parse_sent_embedder(const std::string& name);

}  // namespace embreg
