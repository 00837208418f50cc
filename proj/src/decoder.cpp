#include "embreg/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "embreg/errors.hpp"

namespace embreg {

namespace {

Tensor gather(const Tensor& t, std::span<const std::size_t> rows) {
  const std::size_t cols = t.cols();
  Tensor out({rows.size(), cols});
  for (std::size_t k = 0; k < rows.size(); ++k)
    std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(rows[k] * cols), cols,
                out.data.begin() + static_cast<std::ptrdiff_t>(k * cols));
  return out;
}

// [n*1, d] stacked rows -> [n*R, d] with row i*R + r = row i.
Tensor tile_positions(const Tensor& t, std::size_t rows) {
  const std::size_t n = t.rows(), cols = t.cols();
  Tensor out({n * rows, cols});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(i * cols), cols,
                  out.data.begin() + static_cast<std::ptrdiff_t>((i * rows + r) * cols));
  return out;
}

double safe_log(double p) { return std::log(std::max(p, 1e-300)); }

}  // namespace

Seq2SeqStepper::Seq2SeqStepper(Seq2SeqModel& model, const std::vector<int>& src) : model_(model) {
  if (src.empty()) throw DataError("cannot decode an empty source sentence");
  graph_ = std::make_unique<Graph>(false);
  Rng unused(0);
  base_ = model_.encode(*graph_, src, 1, src.size(), {src.size()}, false, unused);
  reset();
}

void Seq2SeqStepper::reset() {
  DecoderState st = model_.initial_state(*graph_, base_);
  h_.clear();
  c_.clear();
  for (std::size_t l = 0; l < st.h.size(); ++l) {
    h_.push_back(st.h[l].value());
    c_.push_back(st.c[l].value());
  }
}

const Encoded& Seq2SeqStepper::encoded_for(std::size_t rows) {
  if (rows == 1) return base_;
  for (const auto& [r, enc] : expanded_)
    if (r == rows) return enc;
  Encoded e;
  e.batch = rows;
  e.len = base_.len;
  e.states = graph_->constant(tile_positions(base_.states.value(), rows));
  e.keys = graph_->constant(tile_positions(base_.keys.value(), rows));
  e.mask = Tensor({rows, base_.len}, 1.0);
  expanded_.emplace_back(rows, e);
  return expanded_.back().second;
}

Tensor Seq2SeqStepper::advance(std::span<const int> last_tokens) {
  const std::size_t rows = last_tokens.size();
  if (rows != h_[0].rows()) throw UsageError("advance: token count does not match the live rows");
  Graph& g = *graph_;
  const Encoded& enc = encoded_for(rows);
  DecoderState st;
  for (std::size_t l = 0; l < h_.size(); ++l) {
    st.h.push_back(g.constant(h_[l]));
    st.c.push_back(g.constant(c_[l]));
  }
  Rng unused(0);
  Attention att = model_.attend(g, enc, st.s());
  DecoderState next = model_.decode_step(g, att.context, st, model_.embed_target(g, last_tokens), false, unused);
  for (std::size_t l = 0; l < h_.size(); ++l) {
    h_[l] = next.h[l].value();
    c_[l] = next.c[l].value();
  }
  last_s_ = next.s().value();
  Tensor logp = model_.generate(g, next.s()).value();
  for (double& v : logp.data) v = safe_log(v);
  return logp;
}

void Seq2SeqStepper::reorder(std::span<const std::size_t> rows) {
  for (std::size_t l = 0; l < h_.size(); ++l) {
    h_[l] = gather(h_[l], rows);
    c_[l] = gather(c_[l], rows);
  }
  if (!last_s_.data.empty()) last_s_ = gather(last_s_, rows);
}

std::size_t default_max_len(std::size_t src_len) { return std::min<std::size_t>(2 * src_len + 10, 200); }

Hypothesis greedy_decode(StepModel& model, std::size_t max_len) {
  if (max_len == 0) throw UsageError("max_len must be at least 1");
  model.reset();
  Hypothesis h;
  h.tokens = {Vocab::kBos};
  const std::size_t v = model.vocab_size();
  while (h.length() < max_len) {
    const int last = h.tokens.back();
    Tensor logp = model.advance(std::span<const int>(&last, 1));
    std::size_t best = 0;
    for (std::size_t k = 1; k < v; ++k)
      if (logp.data[k] > logp.data[best]) best = k;
    h.tokens.push_back(static_cast<int>(best));
    h.log_prob += logp.data[best];
    if (static_cast<int>(best) == Vocab::kEos) {
      h.finished = true;
      break;
    }
  }
  return h;
}

Hypothesis beam_search(StepModel& model, std::size_t beam, std::size_t max_len, bool len_norm) {
  if (beam == 0) throw UsageError("beam must be at least 1");
  if (max_len == 0) throw UsageError("max_len must be at least 1");
  model.reset();
  const std::size_t v = model.vocab_size();
  std::vector<Hypothesis> hyps(1);
  hyps[0].tokens = {Vocab::kBos};
  std::vector<std::size_t> live_rows{0};  // model row of each live hypothesis, in hyps order

  auto score = [len_norm](const Hypothesis& h) {
    return len_norm && h.length() > 0 ? h.log_prob / static_cast<double>(h.length()) : h.log_prob;
  };

  for (std::size_t step = 0; step < max_len; ++step) {
    std::vector<std::size_t> live;
    std::vector<int> last;
    for (std::size_t i = 0; i < hyps.size(); ++i)
      if (!hyps[i].finished) {
        live.push_back(i);
        last.push_back(hyps[i].tokens.back());
      }
    if (live.empty()) break;
    const Tensor logp = model.advance(last);

    struct Cand {
      std::size_t hyp;
      int token;  // -1: carry a finished hypothesis unchanged
      double log_prob;
      double score;
    };
    std::vector<Cand> cands;
    cands.reserve(hyps.size() + live.size() * v);
    for (std::size_t i = 0; i < hyps.size(); ++i)
      if (hyps[i].finished) cands.push_back({i, -1, hyps[i].log_prob, score(hyps[i])});
    for (std::size_t r = 0; r < live.size(); ++r) {
      const Hypothesis& h = hyps[live[r]];
      const double len = static_cast<double>(h.length() + 1);
      for (std::size_t k = 0; k < v; ++k) {
        const double lp = h.log_prob + logp.data[r * v + k];
        cands.push_back({live[r], static_cast<int>(k), lp, len_norm ? lp / len : lp});
      }
    }
    auto token_at = [&](const Cand& c, std::size_t pos) {
      const auto& t = hyps[c.hyp].tokens;
      return pos < t.size() ? t[pos] : c.token;
    };
    auto cand_len = [&](const Cand& c) { return hyps[c.hyp].tokens.size() + (c.token >= 0 ? 1 : 0); };
    auto better = [&](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      const std::size_t la = cand_len(a), lb = cand_len(b);
      for (std::size_t p = 0; p < std::min(la, lb); ++p) {
        const int ta = token_at(a, p), tb = token_at(b, p);
        if (ta != tb) return ta < tb;
      }
      return la < lb;
    };
    const std::size_t keep = std::min(beam, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), better);

    std::vector<Hypothesis> next;
    std::vector<std::size_t> rows;
    for (std::size_t k = 0; k < keep; ++k) {
      const Cand& c = cands[k];
      Hypothesis h = hyps[c.hyp];
      if (c.token >= 0) {
        h.tokens.push_back(c.token);
        h.log_prob = c.log_prob;
        h.finished = c.token == Vocab::kEos;
        if (!h.finished) {
          const auto r = static_cast<std::size_t>(std::find(live.begin(), live.end(), c.hyp) - live.begin());
          rows.push_back(r);
        }
      }
      next.push_back(std::move(h));
    }
    if (!rows.empty()) model.reorder(rows);
    hyps = std::move(next);
  }

  const Hypothesis* best = nullptr;
  for (const bool want_finished : {true, false}) {
    for (const Hypothesis& h : hyps)
      if (h.finished == want_finished && (!best || score(h) > score(*best))) best = &h;
    if (best) break;
  }
  return *best;
}

Hypothesis translate_ids(Seq2SeqModel& model, const std::vector<int>& src, const BeamOptions& opts) {
  Seq2SeqStepper stepper(model, src);
  const std::size_t max_len = opts.max_len ? opts.max_len : default_max_len(src.size());
  return opts.beam == 1 && !opts.len_norm ? greedy_decode(stepper, max_len)
                                          : beam_search(stepper, opts.beam, max_len, opts.len_norm);
}

TokenSeq translate_sentence(Seq2SeqModel& model, const Vocab& src_vocab, const Vocab& tgt_vocab, const TokenSeq& src,
                            const BeamOptions& opts, const MergeList* merges) {
  const TokenSeq pieces = merges ? apply_bpe(src, *merges) : src;
  const Hypothesis h = translate_ids(model, src_vocab.encode(pieces), opts);
  TokenSeq out;
  for (int id : h.tokens)
    if (static_cast<std::size_t>(id) >= Vocab::kNumSpecials) out.push_back(tgt_vocab.token(id));
  return merge_back(out);
}

std::vector<TokenSeq> translate_corpus(Seq2SeqModel& model, const Vocab& src_vocab, const Vocab& tgt_vocab,
                                       const std::vector<TokenSeq>& sources, const BeamOptions& opts,
                                       const MergeList* merges) {
  std::vector<TokenSeq> out;
  out.reserve(sources.size());
  for (const TokenSeq& s : sources) out.push_back(translate_sentence(model, src_vocab, tgt_vocab, s, opts, merges));
  return out;
}

void check_vocab_hashes(const CheckpointMeta& meta, const Vocab& src_vocab, const Vocab& tgt_vocab) {
  if (meta.src_vocab_hash != src_vocab.fingerprint())
    throw DataError("source vocabulary does not match the checkpoint (hash " + src_vocab.fingerprint() + " vs " +
                    meta.src_vocab_hash + ")");
  if (meta.tgt_vocab_hash != tgt_vocab.fingerprint())
    throw DataError("target vocabulary does not match the checkpoint (hash " + tgt_vocab.fingerprint() + " vs " +
                    meta.tgt_vocab_hash + ")");
}

}  // namespace embreg
