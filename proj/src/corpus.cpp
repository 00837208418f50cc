#include "embreg/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <set>

#include "embreg/errors.hpp"
#include "embreg/rng.hpp"

namespace embreg {

std::vector<TokenSeq> ParallelCorpus::sources() const {
  std::vector<TokenSeq> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.src);
  return out;
}

std::vector<TokenSeq> ParallelCorpus::targets() const {
  std::vector<TokenSeq> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.tgt);
  return out;
}

// ---- tokenization -----------------------------------------------------------

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_detachable(char c) {
  switch (c) {
    case '.': case ',': case ';': case ':': case '!': case '?': case '"': case '\'': case '(': case ')':
      return true;
    default:
      return false;
  }
}

}  // namespace

TokenSeq split_tokens(std::string_view line) {
  TokenSeq out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

TokenSeq tokenize(std::string_view line) {
  TokenSeq out;
  for (auto word : split_tokens(line)) {
    for (auto& c : word)
      if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    std::size_t b = 0, e = word.size();
    while (b < e && is_detachable(word[b])) ++b;
    while (e > b && is_detachable(word[e - 1])) --e;
    for (std::size_t k = 0; k < b; ++k) out.emplace_back(1, word[k]);
    if (e > b) out.push_back(word.substr(b, e - b));
    for (std::size_t k = e; k < word.size(); ++k) out.emplace_back(1, word[k]);
  }
  return out;
}

std::string join_tokens(const TokenSeq& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i];
  }
  return s;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

void write_lines(const std::string& path, const std::vector<TokenSeq>& sentences) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& s : sentences) out << join_tokens(s) << '\n';
}

ParallelCorpus read_parallel(const std::string& src_path, const std::string& tgt_path, bool do_tokenize,
                             std::size_t* dropped) {
  const auto src = read_lines(src_path);
  const auto tgt = read_lines(tgt_path);
  if (src.size() != tgt.size())
    throw DataError("parallel files differ in length: " + src_path + " has " + std::to_string(src.size()) +
                    " lines, " + tgt_path + " has " + std::to_string(tgt.size()));
  ParallelCorpus corpus;
  corpus.name = src_path;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    SentencePair p{do_tokenize ? tokenize(src[i]) : split_tokens(src[i]),
                   do_tokenize ? tokenize(tgt[i]) : split_tokens(tgt[i])};
    if (p.src.empty() || p.tgt.empty()) {
      ++skipped;
      continue;
    }
    corpus.pairs.push_back(std::move(p));
  }
  if (dropped) *dropped = skipped;
  return corpus;
}

void write_parallel(const std::string& src_path, const std::string& tgt_path, const ParallelCorpus& corpus) {
  write_lines(src_path, corpus.sources());
  write_lines(tgt_path, corpus.targets());
}

// ---- batching ---------------------------------------------------------------

Batches make_batches(const ParallelCorpus& corpus, const Vocab& src_vocab, const Vocab& tgt_vocab,
                     std::size_t batch_size, std::uint64_t seed, std::size_t max_len,
                     const std::vector<SentenceEmbedding>* sent_targets) {
  if (batch_size == 0) throw UsageError("batch size must be >= 1");
  if (sent_targets && sent_targets->size() != corpus.size())
    throw std::invalid_argument("make_batches: one sentence target per pair required");
  Batches out;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& p = corpus.pairs[i];
    if (p.src.size() > max_len || p.tgt.size() > max_len) {
      ++out.filtered;
      continue;
    }
    order.push_back(i);
  }
  Rng rng(seed);
  rng.shuffle(order);

  constexpr std::size_t kPoolBatches = 64;
  const std::size_t pool = batch_size * kPoolBatches;
  for (std::size_t start = 0; start < order.size(); start += pool) {
    const std::size_t end = std::min(order.size(), start + pool);
    std::vector<std::size_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
    std::stable_sort(chunk.begin(), chunk.end(), [&](std::size_t a, std::size_t b) {
      const auto& pa = corpus.pairs[a];
      const auto& pb = corpus.pairs[b];
      if (pa.src.size() != pb.src.size()) return pa.src.size() < pb.src.size();
      return pa.tgt.size() < pb.tgt.size();
    });
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t k = 0; k < chunk.size(); k += batch_size)
      groups.emplace_back(chunk.begin() + static_cast<std::ptrdiff_t>(k),
                          chunk.begin() + static_cast<std::ptrdiff_t>(std::min(chunk.size(), k + batch_size)));
    std::vector<std::size_t> full;
    for (std::size_t k = 0; k < groups.size(); ++k)
      if (groups[k].size() == batch_size) full.push_back(k);
    rng.shuffle(full);
    for (std::size_t k = 0; k < groups.size(); ++k)
      if (groups[k].size() != batch_size) full.push_back(k);

    for (std::size_t gi : full) {
      const auto& members = groups[gi];
      Batch b;
      b.size = members.size();
      for (std::size_t idx : members) {
        b.src_len = std::max(b.src_len, corpus.pairs[idx].src.size());
        b.tgt_len = std::max(b.tgt_len, corpus.pairs[idx].tgt.size() + 2);
      }
      b.src.assign(b.size * b.src_len, Vocab::kPad);
      b.tgt.assign(b.size * b.tgt_len, Vocab::kPad);
      if (sent_targets) {
        const std::size_t dim = sent_targets->at(members[0]).vec.size();
        b.sent_targets = Tensor(Shape{b.size, dim});
      }
      for (std::size_t r = 0; r < b.size; ++r) {
        const std::size_t idx = members[r];
        const auto& p = corpus.pairs[idx];
        const auto sids = src_vocab.encode(p.src);
        const auto tids = tgt_vocab.encode(p.tgt);
        std::copy(sids.begin(), sids.end(), b.src.begin() + static_cast<std::ptrdiff_t>(r * b.src_len));
        b.tgt[r * b.tgt_len] = Vocab::kBos;
        std::copy(tids.begin(), tids.end(), b.tgt.begin() + static_cast<std::ptrdiff_t>(r * b.tgt_len + 1));
        b.tgt[r * b.tgt_len + tids.size() + 1] = Vocab::kEos;
        b.src_lengths.push_back(sids.size());
        b.tgt_lengths.push_back(tids.size());
        b.pair_index.push_back(idx);
        if (sent_targets) {
          const auto& se = (*sent_targets)[idx];
          std::copy(se.vec.begin(), se.vec.end(), b.sent_targets.data.begin() + static_cast<std::ptrdiff_t>(r * se.vec.size()));
          b.sent_degenerate.push_back(se.degenerate);
        }
      }
      out.batches.push_back(std::move(b));
    }
  }
  return out;
}

// ---- synthetic tasks --------------------------------------------------------

SynthTask parse_synth_task(const std::string& name) {
  if (name == "copy") return SynthTask::Copy;
  if (name == "reverse") return SynthTask::Reverse;
  if (name == "numword") return SynthTask::NumWord;
  throw UsageError("unknown synthetic task '" + name + "' (expected copy|reverse|numword)");
}

std::string synth_task_name(SynthTask task) {
  switch (task) {
    case SynthTask::Copy: return "copy";
    case SynthTask::Reverse: return "reverse";
    case SynthTask::NumWord: return "numword";
  }
  return "?";
}

std::string numword_word(std::size_t symbol) {
  static const std::array<const char*, 10> kWords{"nul", "un", "du", "tri", "kvar", "kvin", "ses", "sep", "ok", "nau"};
  return symbol < kWords.size() ? kWords[symbol] : "vort" + std::to_string(symbol);
}

std::vector<std::string> synth_source_symbols(SynthTask task, std::size_t vocab_size) {
  std::vector<std::string> s;
  for (std::size_t k = 0; k < vocab_size; ++k)
    s.push_back(task == SynthTask::NumWord ? std::to_string(k) : "w" + std::to_string(k));
  return s;
}

std::vector<std::string> synth_target_symbols(SynthTask task, std::size_t vocab_size) {
  if (task != SynthTask::NumWord) return synth_source_symbols(task, vocab_size);
  std::vector<std::string> s;
  for (std::size_t k = 0; k < vocab_size; ++k) s.push_back(numword_word(k));
  return s;
}

namespace {

ParallelCorpus generate_clean(const SynthSpec& spec, Rng& rng) {
  if (spec.n == 0) throw UsageError("synthetic corpus size must be >= 1");
  if (spec.vocab_size == 0) throw UsageError("synthetic vocab size must be >= 1");
  if (spec.min_len == 0 || spec.min_len > spec.max_len) throw UsageError("synthetic length range must be 1 <= min <= max");
  const auto src_sym = synth_source_symbols(spec.task, spec.vocab_size);
  ParallelCorpus corpus;
  corpus.name = synth_task_name(spec.task);
  std::set<std::vector<std::size_t>> seen;
  const std::size_t max_attempts = spec.n * 100 + 1000;
  for (std::size_t attempt = 0; corpus.pairs.size() < spec.n; ++attempt) {
    if (attempt >= max_attempts)
      throw UsageError("cannot draw " + std::to_string(spec.n) + " distinct sentences from this vocab/length range");
    const std::size_t len = spec.min_len + rng.index(spec.max_len - spec.min_len + 1);
    std::vector<std::size_t> syms(len);
    for (auto& s : syms) s = rng.index(spec.vocab_size);
    if (!seen.insert(syms).second) continue;
    SentencePair p;
    for (auto s : syms) p.src.push_back(src_sym[s]);
    switch (spec.task) {
      case SynthTask::Copy:
        p.tgt = p.src;
        break;
      case SynthTask::Reverse:
        p.tgt.assign(p.src.rbegin(), p.src.rend());
        break;
      case SynthTask::NumWord:
        for (auto it = syms.rbegin(); it != syms.rend(); ++it) p.tgt.push_back(numword_word(*it));
        break;
    }
    corpus.pairs.push_back(std::move(p));
  }
  return corpus;
}

}  // namespace

void add_target_noise(ParallelCorpus& corpus, const std::vector<std::string>& symbols, double rate, Rng& rng) {
  if (rate < 0.0 || rate > 1.0) throw UsageError("noise rate must be in [0, 1]");
  if (rate == 0.0) return;
  for (auto& p : corpus.pairs)
    for (auto& t : p.tgt)
      if (rng.bernoulli(rate)) t = symbols[rng.index(symbols.size())];
}

ParallelCorpus gen_synthetic(const SynthSpec& spec) {
  Rng rng(spec.seed);
  ParallelCorpus corpus = generate_clean(spec, rng);
  Rng noise_rng = Rng::derive(spec.seed, 0x6e6f697365);
  add_target_noise(corpus, synth_target_symbols(spec.task, spec.vocab_size), spec.noise_rate, noise_rng);
  return corpus;
}

CorpusSplits gen_synthetic_splits(const SynthSpec& spec) {
  Rng rng(spec.seed);
  ParallelCorpus all = generate_clean(spec, rng);
  const std::size_t n_train = all.size() * 8 / 10;
  const std::size_t n_valid = all.size() / 10;
  CorpusSplits s;
  const std::string base = synth_task_name(spec.task);
  s.train.name = base + ".train";
  s.valid.name = base + ".valid";
  s.test.name = base + ".test";
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto& dst = i < n_train ? s.train : (i < n_train + n_valid ? s.valid : s.test);
    dst.pairs.push_back(all.pairs[i]);
  }
  Rng noise_rng = Rng::derive(spec.seed, 0x6e6f697365);
  add_target_noise(s.train, synth_target_symbols(spec.task, spec.vocab_size), spec.noise_rate, noise_rng);
  return s;
}

}  // namespace embreg
