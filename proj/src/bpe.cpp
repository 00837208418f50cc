#include "embreg/bpe.hpp"

#include <fstream>

#include "embreg/errors.hpp"

namespace embreg {

namespace {

std::string pair_key(const std::string& l, const std::string& r) { return l + '\0' + r; }

// Splits on UTF-8 code point boundaries.
std::vector<std::string> characters(const std::string& word) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < word.size();) {
    const auto c = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if (c >= 0xF0)
      len = 4;
    else if (c >= 0xE0)
      len = 3;
    else if (c >= 0xC0)
      len = 2;
    len = std::min(len, word.size() - i);
    out.push_back(word.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<std::string> initial_symbols(const std::string& word) {
  auto syms = characters(word);
  syms.emplace_back(kEndOfWord);
  return syms;
}

void merge_in_place(std::vector<std::string>& syms, const std::string& l, const std::string& r) {
  std::vector<std::string> out;
  out.reserve(syms.size());
  for (std::size_t i = 0; i < syms.size(); ++i) {
    if (i + 1 < syms.size() && syms[i] == l && syms[i + 1] == r) {
      out.push_back(l + r);
      ++i;
    } else {
      out.push_back(std::move(syms[i]));
    }
  }
  syms = std::move(out);
}

}  // namespace

MergeList::MergeList(std::vector<Pair> merges) : merges_(std::move(merges)) {
  for (std::size_t i = 0; i < merges_.size(); ++i) {
    if (!rank_.emplace(pair_key(merges_[i].first, merges_[i].second), i).second)
      throw DataError("duplicate merge rule '" + merges_[i].first + " " + merges_[i].second + "'");
  }
}

std::size_t MergeList::rank(const std::string& left, const std::string& right) const {
  auto it = rank_.find(pair_key(left, right));
  return it == rank_.end() ? npos : it->second;
}

std::map<std::string, std::size_t> word_frequencies(const std::vector<TokenSeq>& corpus) {
  std::map<std::string, std::size_t> freqs;
  for (const auto& s : corpus)
    for (const auto& w : s) ++freqs[w];
  return freqs;
}

MergeList learn_bpe(const std::map<std::string, std::size_t>& word_freqs, std::size_t num_merges) {
  std::vector<std::pair<std::vector<std::string>, std::size_t>> words;
  for (const auto& [w, f] : word_freqs)
    if (!w.empty() && f > 0) words.emplace_back(initial_symbols(w), f);

  std::vector<MergeList::Pair> merges;
  while (merges.size() < num_merges) {
    std::map<MergeList::Pair, std::size_t> counts;  // ordered: ties resolve to the smallest pair
    for (const auto& [syms, f] : words)
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) counts[{syms[i], syms[i + 1]}] += f;
    const MergeList::Pair* best = nullptr;
    std::size_t best_count = 0;
    for (const auto& [pair, n] : counts)
      if (n > best_count) {
        best = &pair;
        best_count = n;
      }
    if (best == nullptr || best_count < 2) break;
    const MergeList::Pair chosen = *best;
    for (auto& [syms, f] : words) merge_in_place(syms, chosen.first, chosen.second);
    merges.push_back(chosen);
  }
  return MergeList(std::move(merges));
}

TokenSeq apply_bpe(const std::string& word, const MergeList& merges) {
  if (word.empty()) return {};
  auto syms = initial_symbols(word);
  while (syms.size() > 1) {
    std::size_t best = MergeList::npos;
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) best = std::min(best, merges.rank(syms[i], syms[i + 1]));
    if (best == MergeList::npos) break;
    const auto& rule = merges.merges()[best];
    merge_in_place(syms, rule.first, rule.second);
  }
  // Drop the end-of-word marker from the rendering.
  const std::string eow = kEndOfWord;
  std::string& last = syms.back();
  if (last == eow)
    syms.pop_back();
  else if (last.size() > eow.size() && last.compare(last.size() - eow.size(), eow.size(), eow) == 0)
    last.resize(last.size() - eow.size());
  for (std::size_t i = 0; i + 1 < syms.size(); ++i) syms[i] += kContinuation;
  return syms;
}

TokenSeq apply_bpe(const TokenSeq& sentence, const MergeList& merges) {
  TokenSeq out;
  for (const auto& w : sentence) {
    auto pieces = apply_bpe(w, merges);
    out.insert(out.end(), pieces.begin(), pieces.end());
  }
  return out;
}

TokenSeq merge_back(const TokenSeq& tokens, std::size_t* dangling) {
  const std::string marker = kContinuation;
  auto continues = [&](const std::string& t) {
    return t.size() >= marker.size() && t.compare(t.size() - marker.size(), marker.size(), marker) == 0;
  };
  TokenSeq out;
  std::string pending;
  bool open = false;
  for (const auto& t : tokens) {
    if (continues(t)) {
      pending += t.substr(0, t.size() - marker.size());
      open = true;
    } else {
      out.push_back(pending + t);
      pending.clear();
      open = false;
    }
  }
  if (open) {
    out.push_back(pending);
    if (dangling) ++*dangling;
  }
  return out;
}

void save_merges(const std::string& path, const MergeList& merges) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "#embreg-bpe v1\n";
  for (const auto& [l, r] : merges.merges()) out << l << ' ' << r << '\n';
}

MergeList load_merges(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line != "#embreg-bpe v1") throw ParseError(path, 1, "expected '#embreg-bpe v1' header");
  std::vector<MergeList::Pair> merges;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto sp = line.find(' ');
    if (sp == std::string::npos || sp == 0 || sp + 1 == line.size() || line.find(' ', sp + 1) != std::string::npos)
      throw ParseError(path, lineno, "expected '<left> <right>'");
    merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  return MergeList(std::move(merges));
}

}  // namespace embreg
