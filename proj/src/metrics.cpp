#include "embreg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

#include "embreg/decoder.hpp"
#include "embreg/errors.hpp"
#include "embreg/kernels.hpp"

namespace embreg {

namespace {

using NGram = std::vector<std::string>;

std::map<NGram, std::size_t> ngram_counts(const TokenSeq& s, std::size_t n) {
  std::map<NGram, std::size_t> out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[NGram(s.begin() + static_cast<std::ptrdiff_t>(i),
                                                               s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

// Labels remapped to 0..k-1 in first-seen order.
std::vector<std::size_t> dense_labels(const std::vector<int>& labels, std::size_t* k) {
  std::map<int, std::size_t> ids;
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (int l : labels) out.push_back(ids.emplace(l, ids.size()).first->second);
  *k = ids.size();
  return out;
}

void check_points(const Tensor& points, const std::vector<int>& labels) {
  if (points.shape.size() != 2 || points.rows() != labels.size())
    throw UsageError("points must be [n, d] with one label per row");
}

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Batch single_batch(const std::vector<int>& src, const std::vector<int>& tgt) {
  Batch b;
  b.size = 1;
  b.src = src;
  b.src_len = src.size();
  b.src_lengths = {src.size()};
  b.tgt.push_back(Vocab::kBos);
  b.tgt.insert(b.tgt.end(), tgt.begin(), tgt.end());
  b.tgt.push_back(Vocab::kEos);
  b.tgt_len = b.tgt.size();
  b.tgt_lengths = {tgt.size()};
  b.pair_index = {0};
  return b;
}

int argmax_row(const Tensor& t, std::size_t r) {
  const std::size_t cols = t.cols();
  std::size_t best = 0;
  for (std::size_t k = 1; k < cols; ++k)
    if (t.data[r * cols + k] > t.data[r * cols + best]) best = k;
  return static_cast<int>(best);
}

}  // namespace

double bleu(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references, bool smooth) {
  if (hypotheses.size() != references.size())
    throw UsageError("bleu: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                     std::to_string(references.size()) + " references");
  if (hypotheses.empty()) throw UsageError("bleu: no sentences");
  double matches[4] = {}, totals[4] = {};
  std::size_t c = 0, r = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    c += hypotheses[i].size();
    r += references[i].size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto hyp = ngram_counts(hypotheses[i], n);
      const auto ref = ngram_counts(references[i], n);
      for (const auto& [g, count] : hyp) {
        auto it = ref.find(g);
        matches[n - 1] += static_cast<double>(std::min(count, it == ref.end() ? 0 : it->second));
        totals[n - 1] += static_cast<double>(count);
      }
    }
  }
  if (c == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    double m = matches[n], t = totals[n];
    if (smooth && n >= 1) {
      m += 1.0;
      t += 1.0;
    }
    if (m == 0.0 || t == 0.0) return 0.0;
    log_sum += std::log(m / t);
  }
  const double bp = c < r ? std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)) : 1.0;
  return 100.0 * bp * std::exp(log_sum / 4.0);
}

double silhouette(const Tensor& points, const std::vector<int>& labels) {
  check_points(points, labels);
  std::size_t k = 0;
  const auto lab = dense_labels(labels, &k);
  if (k < 2) throw DataError("silhouette needs at least 2 clusters");
  const std::size_t n = points.rows();
  std::vector<double> dist(n * n);
  kernels::pairwise_distances(n, points.cols(), points.data.data(), dist.data());
  std::vector<std::size_t> size(k);
  for (std::size_t l : lab) ++size[l];

  double total = 0.0;
  std::vector<double> sums(k);
  for (std::size_t i = 0; i < n; ++i) {
    if (size[lab[i]] == 1) continue;
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sums[lab[j]] += dist[i * n + j];
    const double a = sums[lab[i]] / static_cast<double>(size[lab[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c)
      if (c != lab[i]) b = std::min(b, sums[c] / static_cast<double>(size[c]));
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

double davies_bouldin(const Tensor& points, const std::vector<int>& labels, std::size_t* coincident) {
  check_points(points, labels);
  std::size_t k = 0;
  const auto lab = dense_labels(labels, &k);
  if (k < 2) throw DataError("Davies-Bouldin needs at least 2 clusters");
  const std::size_t n = points.rows(), d = points.cols();
  Tensor centroids({k, d});
  std::vector<std::size_t> size(k);
  for (std::size_t i = 0; i < n; ++i) {
    ++size[lab[i]];
    for (std::size_t c = 0; c < d; ++c) centroids.data[lab[i] * d + c] += points.data[i * d + c];
  }
  for (std::size_t l = 0; l < k; ++l)
    for (std::size_t c = 0; c < d; ++c) centroids.data[l * d + c] /= static_cast<double>(size[l]);
  auto distance = [d](const double* x, const double* y) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += (x[c] - y[c]) * (x[c] - y[c]);
    return std::sqrt(s);
  };
  std::vector<double> sigma(k);
  for (std::size_t i = 0; i < n; ++i) sigma[lab[i]] += distance(&points.data[i * d], &centroids.data[lab[i] * d]);
  for (std::size_t l = 0; l < k; ++l) sigma[l] /= static_cast<double>(size[l]);

  std::size_t clashes = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == i) continue;
      const double sep = distance(&centroids.data[i * d], &centroids.data[j * d]);
      double ratio;
      if (sep == 0.0) {
        ratio = std::numeric_limits<double>::infinity();
        if (j > i) ++clashes;
      } else {
        ratio = (sigma[i] + sigma[j]) / sep;
      }
      worst = std::max(worst, ratio);
    }
    total += worst;
  }
  if (coincident) *coincident = clashes;
  return total / static_cast<double>(k);
}

DumpMode parse_dump_mode(const std::string& name) {
  if (name == "forced") return DumpMode::Forced;
  if (name == "free") return DumpMode::Free;
  throw UsageError("unknown dump mode '" + name + "' (expected forced or free)");
}

StateDump dump_states(Seq2SeqModel& model, const ParallelCorpus& corpus, const Vocab& src_vocab,
                      const Vocab& tgt_vocab, DumpMode mode, std::size_t max_len) {
  StateDump dump;
  std::vector<double> values;
  const std::size_t width = model.config().dec_hidden;
  for (std::size_t sid = 0; sid < corpus.size(); ++sid) {
    const auto src = src_vocab.encode(corpus.pairs[sid].src);
    if (src.empty()) continue;
    if (mode == DumpMode::Forced) {
      const auto tgt = tgt_vocab.encode(corpus.pairs[sid].tgt);
      Graph g(false);
      Rng unused(0);
      ForwardOutput out = model.forward_train(g, single_batch(src, tgt), {}, unused);
      const Tensor& s = out.states.value();
      const Tensor& p = out.probs.value();
      for (std::size_t j = 0; j < tgt.size(); ++j) {
        dump.rows.push_back({sid, j + 1, argmax_row(p, j)});
        values.insert(values.end(), s.data.begin() + static_cast<std::ptrdiff_t>(j * width),
                      s.data.begin() + static_cast<std::ptrdiff_t>((j + 1) * width));
      }
    } else {
      Seq2SeqStepper st(model, src);
      const std::size_t limit = max_len ? max_len : default_max_len(src.size());
      int last = Vocab::kBos;
      for (std::size_t j = 1; j <= limit; ++j) {
        const Tensor logp = st.advance(std::span<const int>(&last, 1));
        last = argmax_row(logp, 0);
        if (last == Vocab::kEos) break;
        dump.rows.push_back({sid, j, last});
        values.insert(values.end(), st.last_state().data.begin(), st.last_state().data.end());
      }
    }
  }
  dump.states = Tensor({dump.rows.size(), width}, std::move(values));
  return dump;
}

void write_state_csv(const std::string& path, const StateDump& dump, const Vocab& tgt_vocab) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  const std::size_t d = dump.states.cols();
  out << "sent_id,step,word";
  for (std::size_t c = 0; c < d; ++c) out << ",v" << c;
  out << "\n";
  for (std::size_t r = 0; r < dump.rows.size(); ++r) {
    const StateRow& row = dump.rows[r];
    out << row.sent_id << "," << row.step << "," << tgt_vocab.token(row.word);
    for (std::size_t c = 0; c < d; ++c) out << "," << fmt9(dump.states.data[r * d + c]);
    out << "\n";
  }
}

void write_perturbation_csv(const std::string& path, Seq2SeqModel& model, const StateDump& dump,
                            const Vocab& tgt_vocab, std::size_t k, double radius, std::uint64_t seed) {
  if (radius < 0.0) throw UsageError("perturbation radius must be non-negative");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  const std::size_t d = dump.states.cols();
  out << "sent_id,step,sample,word";
  for (std::size_t c = 0; c < d; ++c) out << ",v" << c;
  out << "\n";
  Rng rng(seed);
  for (std::size_t r = 0; r < dump.rows.size(); ++r) {
    Tensor samples({k + 1, d});
    std::copy_n(dump.states.data.begin() + static_cast<std::ptrdiff_t>(r * d), d, samples.data.begin());
    for (std::size_t s = 1; s <= k; ++s) {
      std::vector<double> dir(d);
      double norm = 0.0;
      for (double& v : dir) {
        v = rng.normal(0.0, 1.0);
        norm += v * v;
      }
      norm = std::sqrt(norm);
      const double scale = norm > 0.0 ? radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d)) / norm : 0.0;
      for (std::size_t c = 0; c < d; ++c) samples.data[s * d + c] = samples.data[c] + scale * dir[c];
    }
    Graph g(false);
    const Tensor probs = model.generate(g, g.constant(samples)).value();
    for (std::size_t s = 0; s <= k; ++s) {
      out << dump.rows[r].sent_id << "," << dump.rows[r].step << "," << s << ","
          << tgt_vocab.token(argmax_row(probs, s));
      for (std::size_t c = 0; c < d; ++c) out << "," << fmt9(samples.data[s * d + c]);
      out << "\n";
    }
  }
}

nlohmann::json ClusterReport::to_json() const {
  return {{"silhouette", silhouette}, {"davies_bouldin", davies_bouldin}, {"clusters", clusters}, {"points", points}};
}

ClusterReport analyze_clusters(const StateDump& dump, std::size_t min_cluster_size) {
  if (dump.rows.empty()) throw DataError("state dump is empty");
  std::map<int, std::size_t> counts;
  for (const StateRow& r : dump.rows) ++counts[r.word];
  std::vector<std::size_t> keep;
  std::vector<int> labels;
  for (std::size_t i = 0; i < dump.rows.size(); ++i)
    if (counts[dump.rows[i].word] >= min_cluster_size) {
      keep.push_back(i);
      labels.push_back(dump.rows[i].word);
    }
  std::size_t clusters = 0;
  for (const auto& [word, count] : counts) clusters += count >= min_cluster_size;
  if (clusters < 2)
    throw DataError("only " + std::to_string(clusters) + " cluster(s) have at least " +
                    std::to_string(min_cluster_size) + " points");
  const std::size_t d = dump.states.cols();
  Tensor pts({keep.size(), d});
  for (std::size_t i = 0; i < keep.size(); ++i)
    std::copy_n(dump.states.data.begin() + static_cast<std::ptrdiff_t>(keep[i] * d), d,
                pts.data.begin() + static_cast<std::ptrdiff_t>(i * d));
  ClusterReport rep;
  rep.silhouette = silhouette(pts, labels);
  rep.davies_bouldin = davies_bouldin(pts, labels);
  rep.clusters = clusters;
  rep.points = keep.size();
  return rep;
}

}  // namespace embreg
