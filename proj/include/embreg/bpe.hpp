#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "embreg/vocab.hpp"

namespace embreg {

inline constexpr const char* kEndOfWord = "</w>";
inline constexpr const char* kContinuation = "@@";
inline constexpr std::size_t kDefaultMerges = 32000;
inline constexpr std::size_t kSmallCorpusMerges = 8000;

/// Ordered merge rules; position in the list is the merge priority.
class MergeList {
 public:
  using Pair = std::pair<std::string, std::string>;

  MergeList() = default;
  explicit MergeList(std::vector<Pair> merges);

  const std::vector<Pair>& merges() const { return merges_; }
  std::size_t size() const { return merges_.size(); }
  bool empty() const { return merges_.empty(); }
  // Priority of a pair, or npos when it is not a rule.
  std::size_t rank(const std::string& left, const std::string& right) const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::vector<Pair> merges_;
  std::unordered_map<std::string, std::size_t> rank_;  // key: left + '\0' + right
};

std::map<std::string, std::size_t> word_frequencies(const std::vector<TokenSeq>& corpus);

/// Classic pair-merging BPE over characters plus an end-of-word symbol.
/// Ties go to the lexicographically smaller (left, right); learning stops
/// early once no pair occurs at least twice.
MergeList learn_bpe(const std::map<std::string, std::size_t>& word_freqs, std::size_t num_merges);

/// Splits one word; every piece but the last carries the "@@" marker.
TokenSeq apply_bpe(const std::string& word, const MergeList& merges);
TokenSeq apply_bpe(const TokenSeq& sentence, const MergeList& merges);

/// Joins "@@"-marked pieces with their successors. A dangling marker on the
/// last token is stripped and counted in *dangling.
TokenSeq merge_back(const TokenSeq& tokens, std::size_t* dangling = nullptr);

// "#embreg-bpe v1" header, then "<left> <right>" per line.
void save_merges(const std::string& path, const MergeList& merges);
MergeList load_merges(const std::string& path);

}  // namespace embreg
