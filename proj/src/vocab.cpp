#include "embreg/vocab.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "embreg/errors.hpp"
#include "embreg/hash.hpp"

namespace embreg {

std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return to_hex(fnv1a64(ss.str()));
}

// ---- Vocab ------------------------------------------------------------------

const std::vector<std::string>& Vocab::specials() {
  static const std::vector<std::string> s{"<pad>", "<unk>", "<s>", "</s>"};
  return s;
}

Vocab::Vocab() {
  for (const auto& s : specials()) {
    id_of_.emplace(s, static_cast<int>(token_of_.size()));
    token_of_.push_back(s);
  }
}

Vocab Vocab::build(const std::vector<TokenSeq>& corpus, std::size_t max_size, std::size_t min_freq) {
  if (corpus.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& sent : corpus)
    for (const auto& tok : sent) ++counts[tok];
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts) {
    if (n < min_freq) continue;
    if (std::find(specials().begin(), specials().end(), tok) != specials().end()) continue;
    ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > max_size) ranked.resize(max_size);
  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [tok, n] : ranked) tokens.push_back(tok);
  return from_tokens(tokens);
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  Vocab v;
  for (const auto& t : tokens) {
    if (v.id_of_.count(t)) throw DataError("duplicate vocabulary token '" + t + "'");
    v.id_of_.emplace(t, static_cast<int>(v.token_of_.size()));
    v.token_of_.push_back(t);
  }
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = id_of_.find(token);
  return it == id_of_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= token_of_.size())
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(token_of_.size()));
  return token_of_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const TokenSeq& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

TokenSeq Vocab::decode(const std::vector<int>& ids) const {
  TokenSeq out;
  for (int i : ids)
    if (i != kPad && i != kBos && i != kEos) out.push_back(token(i));
  return out;
}

std::string Vocab::fingerprint() const {
  std::uint64_t h = fnv1a64("");
  for (const auto& t : token_of_) {
    h = fnv1a64(t, h);
    h = fnv1a64("\n", h);
  }
  return to_hex(h);
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& t : token_of_) out << t << '\n';
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.size() < kNumSpecials) throw ParseError(path, lines.size() + 1, "vocabulary is missing special tokens");
  for (std::size_t i = 0; i < kNumSpecials; ++i)
    if (lines[i] != specials()[i])
      throw ParseError(path, i + 1, "expected special token " + specials()[i] + ", found '" + lines[i] + "'");
  return from_tokens(std::vector<std::string>(lines.begin() + kNumSpecials, lines.end()));
}

// ---- .vec files -------------------------------------------------------------

namespace {

std::size_t parse_size(std::string_view s, const std::string& path, std::size_t line) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError(path, line, "expected a base-10 integer, found '" + std::string(s) + "'");
  return v;
}

std::vector<std::string_view> split_spaces(std::string_view s) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t end = s.find(' ', start);
    if (end == std::string_view::npos) {
      parts.push_back(s.substr(start));
      break;
    }
    parts.push_back(s.substr(start, end - start));
    start = end + 1;
  }
  return parts;
}

}  // namespace

VecFile read_vec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path, 1, "missing '<count> <dim>' header");
  const auto header = split_spaces(line);
  if (header.size() != 2) throw ParseError(path, 1, "header must be '<count> <dim>'");
  const std::size_t count = parse_size(header[0], path, 1);
  VecFile file;
  file.dim = parse_size(header[1], path, 1);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (file.tokens.size() == count)
      throw ParseError(path, lineno, "more rows than the " + std::to_string(count) + " declared in the header");
    const auto parts = split_spaces(line);
    if (parts.size() != file.dim + 1 || parts[0].empty())
      throw ParseError(path, lineno, "expected a token and " + std::to_string(file.dim) + " values, found " +
                                         std::to_string(parts.empty() ? 0 : parts.size() - 1) + " values");
    std::vector<double> row(file.dim);
    for (std::size_t i = 0; i < file.dim; ++i) {
      const auto p = parts[i + 1];
      auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), row[i]);
      if (ec != std::errc() || ptr != p.data() + p.size() || !std::isfinite(row[i]))
        throw ParseError(path, lineno, "bad value '" + std::string(p) + "'");
    }
    file.tokens.emplace_back(parts[0]);
    file.rows.push_back(std::move(row));
  }
  if (file.tokens.size() != count)
    throw ParseError(path, lineno, "header declares " + std::to_string(count) + " rows, file has " +
                                       std::to_string(file.tokens.size()));
  return file;
}

void write_vec(const std::string& path, const std::vector<std::string>& tokens, const Tensor& matrix) {
  if (tokens.size() != matrix.rows()) throw std::invalid_argument("write_vec: token/row count mismatch");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << tokens.size() << ' ' << matrix.cols() << '\n';
  char buf[64];
  for (std::size_t r = 0; r < tokens.size(); ++r) {
    out << tokens[r];
    for (std::size_t c = 0; c < matrix.cols(); ++c) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, matrix.at(r, c));
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
    }
    out << '\n';
  }
}

EmbeddingTable random_table(const Vocab& vocab, std::size_t dim, Rng& rng) {
  EmbeddingTable t;
  t.matrix = Tensor(Shape{vocab.size(), dim});
  t.from_file.assign(vocab.size(), false);
  t.source = EmbeddingSource::Random;
  for (std::size_t r = 0; r < vocab.size(); ++r) {
    if (static_cast<int>(r) == Vocab::kPad) continue;
    for (std::size_t c = 0; c < dim; ++c) t.matrix.at(r, c) = rng.normal(0.0, 0.1);
  }
  return t;
}

LoadedEmbeddings load_pretrained(const VecFile& file, const Vocab& vocab, std::size_t dim, Rng& rng) {
  if (file.dim != dim)
    throw DataError("embedding width " + std::to_string(file.dim) + " in file, expected " + std::to_string(dim));
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < file.tokens.size(); ++i) row_of.emplace(file.tokens[i], i);  // first occurrence wins

  LoadedEmbeddings out;
  auto& t = out.table;
  t.matrix = Tensor(Shape{vocab.size(), dim});
  t.from_file.assign(vocab.size(), false);
  t.source = EmbeddingSource::Pretrained;
  for (std::size_t r = 0; r < vocab.size(); ++r) {
    const std::string& tok = vocab.tokens()[r];
    const bool special = r < Vocab::kNumSpecials;
    auto it = special ? row_of.end() : row_of.find(tok);
    if (it != row_of.end()) {
      std::copy(file.rows[it->second].begin(), file.rows[it->second].end(),
                t.matrix.data.begin() + static_cast<std::ptrdiff_t>(r * dim));
      t.from_file[r] = true;
      ++out.coverage.found;
    } else {
      if (!special) out.coverage.missing.push_back(tok);
      if (static_cast<int>(r) == Vocab::kPad) continue;
      for (std::size_t c = 0; c < dim; ++c) t.matrix.at(r, c) = rng.normal(0.0, 0.1);
    }
  }
  out.coverage.total = vocab.size() - Vocab::kNumSpecials;
  out.coverage.fraction =
      out.coverage.total == 0 ? 1.0 : static_cast<double>(out.coverage.found) / static_cast<double>(out.coverage.total);
  return out;
}

LoadedEmbeddings load_pretrained(const std::string& path, const Vocab& vocab, std::size_t dim, Rng& rng) {
  return load_pretrained(read_vec(path), vocab, dim, rng);
}

// ---- sentence embedder ------------------------------------------------------

SentEmbedderKind parse_sent_embedder(const std::string& name) {
  if (name == "mean" || name == "mean-of-words") return SentEmbedderKind::MeanOfWords;
  if (name == "hash" || name == "hash-projection") return SentEmbedderKind::HashProjection;
  throw UsageError("unknown sentence embedder '" + name + "' (expected mean|hash)");
}

SentenceEmbedding SentEmbedder::embed(const TokenSeq& words, const Vocab& vocab, const EmbeddingTable& table) const {
  SentenceEmbedding out;
  std::vector<double> acc;
  std::size_t used = 0;
  if (kind_ == SentEmbedderKind::MeanOfWords) {
    acc.assign(table.dim(), 0.0);
    for (const auto& w : words) {
      const int id = vocab.id(w);
      if (id == Vocab::kUnk || static_cast<std::size_t>(id) < Vocab::kNumSpecials) continue;
      if (!table.from_file.empty() && !table.from_file[static_cast<std::size_t>(id)]) continue;
      for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += table.matrix.at(static_cast<std::size_t>(id), c);
      ++used;
    }
    // Keep at most dim coordinates before normalizing so the output stays unit length.
    acc.resize(std::min(acc.size(), dim_));
  } else {
    acc.assign(dim_, 0.0);
    for (const auto& w : words) {
      Rng r = Rng::derive(seed_, fnv1a64(w));
      for (auto& v : acc) v += r.normal(0.0, 1.0);
      ++used;
    }
  }
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  out.vec.assign(dim_, 0.0);
  if (used == 0 || norm < 1e-12 * static_cast<double>(std::max<std::size_t>(used, 1))) {
    out.degenerate = true;
    return out;
  }
  // The mean's 1/used factor cancels under normalization.
  for (std::size_t c = 0; c < acc.size(); ++c) out.vec[c] = acc[c] / norm;
  return out;
}

}  // namespace embreg
