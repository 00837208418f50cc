#include <gtest/gtest.h>

#include <cmath>

#include "embreg/errors.hpp"
#include "embreg/model.hpp"
#include "embreg/objective.hpp"
#include "micro.hpp"

using namespace embreg;
using embreg::testing::make_batch;
using embreg::testing::micro_config;
using embreg::testing::random_tensor;

namespace {

// Width-2 model whose small parameters can be set by hand.
ModelConfig hand_config(bool rewe = false, bool rese = false) {
  ModelConfig c;
  c.src_vocab = 6;
  c.tgt_vocab = 6;
  c.emb_dim = 2;
  c.enc_hidden = 1;
  c.dec_hidden = 2;
  c.attn_dim = 2;
  c.rewe_dim = 2;
  c.rese_dim = 2;
  c.use_rewe = rewe;
  c.use_rese = rese;
  c.dropout = 0.0;
  return c;
}

void set(Seq2SeqModel& m, const std::string& name, Tensor t) {
  Parameter* p = m.find(name);
  ASSERT_NE(p, nullptr) << name;
  ASSERT_EQ(p->value.shape, t.shape) << name;
  p->value = std::move(t);
}

Encoded manual_encoded(Graph& g, Seq2SeqModel& m, const Tensor& stacked, std::size_t batch, std::size_t len,
                       const std::vector<std::size_t>& lengths) {
  Encoded enc;
  enc.batch = batch;
  enc.len = len;
  enc.states = g.constant(stacked);
  enc.keys = matmul_nt(enc.states, g.param(*m.find("attn.U_a")));
  enc.mask = Tensor({batch, len});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < lengths[b]; ++i) enc.mask.data[b * len + i] = 1.0;
  return enc;
}

}  // namespace

TEST(ModelConfig, RejectsMismatchedWidths) {
  ModelConfig c = micro_config(1);
  c.dec_hidden = 5;
  EXPECT_THROW(Seq2SeqModel{c}, UsageError);
}

TEST(ModelConfig, JsonRoundTripAndUnknownKeys) {
  ModelConfig c = micro_config(9, true, false);
  nlohmann::json j = c;
  ModelConfig back = j.get<ModelConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  j["bogus"] = 1;
  EXPECT_THROW(j.get<ModelConfig>(), UsageError);
}

TEST(ModelConfig, FullSizeShapes) {
  ModelConfig c;
  c.src_vocab = 8;
  c.tgt_vocab = 9;
  c.use_rewe = c.use_rese = true;
  Seq2SeqModel m(c);
  EXPECT_EQ(m.find("attn.W_a")->value.shape, (Shape{1024, 1024}));
  EXPECT_EQ(m.find("attn.U_a")->value.shape, (Shape{1024, 1024}));
  EXPECT_EQ(m.find("gen.W")->value.shape, (Shape{9, 1024}));
  EXPECT_EQ(m.find("rewe.W1")->value.shape, (Shape{1024, 1024}));
  EXPECT_EQ(m.find("rewe.W2")->value.shape, (Shape{300, 1024}));
  EXPECT_EQ(m.find("rese.U2")->value.shape, (Shape{1, 1024}));
  EXPECT_EQ(m.find("rese.W_out")->value.shape, (Shape{512, 1024}));
  EXPECT_EQ(m.find("enc.l1.bwd.W")->value.shape, (Shape{4 * 512, 1024 + 512}));
}

TEST(ModelInit, UniformWeightsZeroBiases) {
  Seq2SeqModel m(micro_config(3));
  for (const Parameter* p : std::as_const(m).parameters()) {
    const bool is_bias = p->name.back() == 'b' || p->name.find(".b_") != std::string::npos;
    for (double v : p->value.data) {
      if (is_bias) {
        EXPECT_EQ(v, 0.0) << p->name;
      } else {
        EXPECT_LE(std::abs(v), 0.5) << p->name;
      }
    }
  }
}

TEST(ModelInit, HeadsDoNotChangeBaselineWeights) {
  Seq2SeqModel base(micro_config(5));
  Seq2SeqModel full(micro_config(5, true, true));
  auto bp = base.parameters();
  for (Parameter* p : bp) {
    Parameter* q = full.find(p->name);
    ASSERT_NE(q, nullptr);
    EXPECT_EQ(p->value.data, q->value.data) << p->name;
  }
  EXPECT_EQ(full.parameters().size(), bp.size() + 10);
}

TEST(Encode, SingleTokenShapeAndFinite) {
  ModelConfig c = micro_config(2);
  Seq2SeqModel m(c);
  Graph g(false);
  Rng rng(1);
  Encoded enc = m.encode(g, {5, 7}, 2, 1, {1, 1}, false, rng);
  EXPECT_EQ(enc.states.shape(), (Shape{2, 4}));
  EXPECT_TRUE(enc.states.value().all_finite());
  // With one step the forward and backward outputs are the final states.
  for (std::size_t b = 0; b < 2; ++b) {
    EXPECT_EQ(enc.states.value().at(b, 0), enc.final_fwd.value().at(b, 0));
    EXPECT_EQ(enc.states.value().at(b, 3), enc.final_bwd.value().at(b, 1));
  }
}

TEST(Encode, AllPadRowHasEmptyMaskAndCannotAttend) {
  Seq2SeqModel m(micro_config(2));
  Graph g(false);
  Rng rng(1);
  Encoded enc = m.encode(g, {5, 6, 0, 0}, 2, 2, {2, 0}, false, rng);
  EXPECT_EQ(enc.mask.data, (std::vector<double>{1, 1, 0, 0}));
  Var s = g.constant(Tensor({2, 4}));
  EXPECT_THROW(m.attend(g, enc, s), NumericError);
}

TEST(Encode, PaddingDoesNotLeakIntoRealPositions) {
  Seq2SeqModel m(micro_config(4));
  Rng rng(1);
  Graph g1(false), g2(false);
  Encoded alone = m.encode(g1, {5, 6}, 1, 2, {2}, false, rng);
  Encoded padded = m.encode(g2, {5, 6, 0, 0, 7, 8, 9, 4}, 2, 4, {2, 4}, false, rng);
  // Sentence 0 of the padded batch: rows i*2 + 0 for its two real positions.
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(alone.states.value().at(i, k), padded.states.value().at(i * 2, k));
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(alone.final_fwd.value().at(0, k), padded.final_fwd.value().at(0, k));
    EXPECT_EQ(alone.final_bwd.value().at(0, k), padded.final_bwd.value().at(0, k));
  }
}

TEST(Encode, EvalModeIsDeterministic) {
  Seq2SeqModel m(micro_config(6));
  Graph g1(false), g2(false);
  Rng r1(1), r2(99);
  auto a = m.encode(g1, {5, 6, 7}, 1, 3, {3}, false, r1);
  auto b = m.encode(g2, {5, 6, 7}, 1, 3, {3}, false, r2);
  EXPECT_EQ(a.states.value().data, b.states.value().data);
}

TEST(Attend, SingletonGivesIdentity) {
  Seq2SeqModel m(hand_config());
  Graph g(false);
  Encoded enc = manual_encoded(g, m, Tensor::matrix(1, 2, {0.3, -0.8}), 1, 1, {1});
  Rng rng(3);
  for (int t = 0; t < 5; ++t) {
    Attention a = m.attend(g, enc, g.constant(random_tensor({1, 2}, rng, 3.0)));
    EXPECT_EQ(a.weights.value().data, (std::vector<double>{1.0}));
    EXPECT_EQ(a.context.value().data, (std::vector<double>{0.3, -0.8}));
  }
}

TEST(Attend, IdenticalStatesSplitEvenly) {
  Seq2SeqModel m(hand_config());
  Graph g(false);
  Encoded enc = manual_encoded(g, m, Tensor::matrix(2, 2, {0.4, 0.1, 0.4, 0.1}), 1, 2, {2});
  Attention a = m.attend(g, enc, g.constant(Tensor::matrix(1, 2, {0.7, -0.2})));
  EXPECT_DOUBLE_EQ(a.weights.value().data[0], 0.5);
  EXPECT_DOUBLE_EQ(a.weights.value().data[1], 0.5);
}

TEST(Attend, MatchesHandEvaluation) {
  Seq2SeqModel m(hand_config());
  set(m, "attn.W_a", Tensor::matrix(2, 2, {0.1, 0.2, 0.3, -0.4}));
  set(m, "attn.U_a", Tensor::matrix(2, 2, {0.5, -0.6, 0.7, 0.8}));
  set(m, "attn.v_a", Tensor::matrix(1, 2, {1.5, -2.0}));
  Graph g(false);
  Encoded enc = manual_encoded(g, m, Tensor::matrix(2, 2, {0.5, -1.0, 0.25, 0.75}), 1, 2, {2});
  Attention a = m.attend(g, enc, g.constant(Tensor::matrix(1, 2, {1.0, -0.5})));

  // W_a s = (0.1 - 0.1, 0.3 + 0.2) = (0, 0.5)
  // U_a h1 = (0.25 + 0.6, 0.35 - 0.8) = (0.85, -0.45)
  // U_a h2 = (0.125 - 0.45, 0.175 + 0.6) = (-0.325, 0.775)
  const double l1 = 1.5 * std::tanh(0.85) - 2.0 * std::tanh(0.05);
  const double l2 = 1.5 * std::tanh(-0.325) - 2.0 * std::tanh(1.275);
  const double a1 = 1.0 / (1.0 + std::exp(l2 - l1));
  const double a2 = 1.0 - a1;
  EXPECT_NEAR(a.weights.value().data[0], a1, 1e-12);
  EXPECT_NEAR(a.weights.value().data[1], a2, 1e-12);
  EXPECT_NEAR(a.context.value().data[0], a1 * 0.5 + a2 * 0.25, 1e-9);
  EXPECT_NEAR(a.context.value().data[1], a1 * -1.0 + a2 * 0.75, 1e-9);
}

TEST(Attend, WeightsSumToOneAndIgnorePads) {
  Seq2SeqModel m(micro_config(8));
  Graph g(false);
  Rng rng(8);
  Encoded enc = m.encode(g, {5, 6, 7, 8, 9, 0, 4, 0, 0}, 3, 3, {3, 2, 1}, false, rng);
  for (int t = 0; t < 10; ++t) {
    Attention a = m.attend(g, enc, g.constant(random_tensor({3, 4}, rng, 2.0)));
    const Tensor& w = a.weights.value();
    for (std::size_t b = 0; b < 3; ++b) {
      double total = 0.0;
      for (std::size_t i = 0; i < 3; ++i) total += w.at(b, i);
      EXPECT_NEAR(total, 1.0, 1e-9);
    }
    EXPECT_EQ(w.at(1, 2), 0.0);
    EXPECT_EQ(w.at(2, 1), 0.0);
    EXPECT_EQ(w.at(2, 2), 0.0);
  }
}

TEST(DecodeStep, ZeroEverythingIsFiniteAndRepeatable) {
  Seq2SeqModel m(hand_config());
  for (Parameter* p : m.parameters()) p->value.fill(0.0);
  Graph g(false);
  Rng rng(1);
  DecoderState st;
  for (int l = 0; l < 2; ++l) {
    st.h.push_back(g.constant(Tensor({1, 2})));
    st.c.push_back(g.constant(Tensor({1, 2})));
  }
  Var c = g.constant(Tensor({1, 2})), y = g.constant(Tensor({1, 2}));
  DecoderState a = m.decode_step(g, c, st, y, false, rng);
  DecoderState b = m.decode_step(g, c, st, y, false, rng);
  EXPECT_TRUE(a.s().value().all_finite());
  EXPECT_EQ(a.s().value().data, b.s().value().data);
  EXPECT_EQ(a.s().value().data, (std::vector<double>{0.0, 0.0}));
}

TEST(DecodeStep, TrainModeReproducibleWithSeed) {
  Seq2SeqModel m(micro_config(10));
  auto run = [&](std::uint64_t seed) {
    Graph g(false);
    Rng rng(seed), data(4);
    DecoderState st;
    for (int l = 0; l < 2; ++l) {
      st.h.push_back(g.constant(random_tensor({2, 4}, data)));
      st.c.push_back(g.constant(random_tensor({2, 4}, data)));
    }
    return m.decode_step(g, g.constant(random_tensor({2, 4}, data)), st, g.constant(random_tensor({2, 3}, data)),
                         true, rng)
        .s()
        .value()
        .data;
  };
  EXPECT_EQ(run(7), run(7));
  EXPECT_NE(run(7), run(8));
}

TEST(DecodeStep, GradientMatchesFiniteDifferences) {
  Seq2SeqModel m(micro_config(11));
  Rng data(11);
  const Tensor c0 = random_tensor({2, 4}, data), y0 = random_tensor({2, 3}, data);
  const Tensor h0 = random_tensor({2, 4}, data), s0 = random_tensor({2, 4}, data);
  const Tensor probe = random_tensor({2, 4}, data);
  std::vector<Parameter*> params{m.find("dec.l0.W"), m.find("dec.l0.b"), m.find("dec.l1.W"), m.find("dec.l1.b")};
  auto loss = [&](Graph& g) {
    Rng rng(5);
    DecoderState st;
    st.h = {g.constant(h0), g.constant(s0)};
    st.c = {g.constant(s0), g.constant(h0)};
    DecoderState next = m.decode_step(g, g.constant(c0), st, g.constant(y0), true, rng);
    return sum(mul(next.s(), g.constant(probe)));
  };
  GradCheckResult r = grad_check_params(loss, params);
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_GT(r.checked, 300u);
}

TEST(Generate, ZeroWeightsGiveUniform) {
  Seq2SeqModel m(micro_config(1));
  m.find("gen.W")->value.fill(0.0);
  Graph g(false);
  Rng rng(1);
  Var p = m.generate(g, g.constant(random_tensor({3, 4}, rng)));
  for (double v : p.value().data) EXPECT_DOUBLE_EQ(v, 1.0 / 12.0);
}

TEST(Generate, HugeBiasDominates) {
  Seq2SeqModel m(micro_config(1));
  m.find("gen.b")->value.data[7] = 60.0;
  Graph g(false);
  Rng rng(1);
  Var p = m.generate(g, g.constant(random_tensor({2, 4}, rng)));
  EXPECT_GT(p.value().at(0, 7), 1.0 - 1e-12);
  EXPECT_GT(p.value().at(1, 7), 1.0 - 1e-12);
}

TEST(Generate, MatchesDirectEvaluation) {
  Seq2SeqModel m(micro_config(12));
  Rng rng(12);
  m.find("gen.b")->value = random_tensor({12}, rng);
  const Tensor s = random_tensor({1, 4}, rng);
  Graph g(false);
  Var p = m.generate(g, g.constant(s));
  const Tensor& w = m.find("gen.W")->value;
  const Tensor& b = m.find("gen.b")->value;
  std::vector<double> logits(12);
  double z = 0.0;
  for (std::size_t v = 0; v < 12; ++v) {
    logits[v] = b.data[v];
    for (std::size_t k = 0; k < 4; ++k) logits[v] += w.at(v, k) * s.data[k];
    z += std::exp(logits[v]);
  }
  double total = 0.0;
  for (std::size_t v = 0; v < 12; ++v) {
    EXPECT_NEAR(p.value().data[v], std::exp(logits[v]) / z, 1e-12);
    total += p.value().data[v];
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(ReweHead, ZeroParamsGiveZero) {
  Seq2SeqModel m(hand_config(true));
  for (Parameter* p : m.parameters()) p->value.fill(0.0);
  Graph g(false);
  Var e = m.rewe_head(g, g.constant(Tensor::matrix(1, 2, {0.4, -2.0})));
  EXPECT_EQ(e.value().data, (std::vector<double>{0.0, 0.0}));
}

TEST(ReweHead, NegativePreActivationsGiveBias) {
  Seq2SeqModel m(hand_config(true));
  set(m, "rewe.W1", Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0}));
  set(m, "rewe.b1", Tensor::vector({-5.0, -5.0}));
  set(m, "rewe.b2", Tensor::vector({0.3, -0.7}));
  Graph g(false);
  Var e = m.rewe_head(g, g.constant(Tensor::matrix(1, 2, {1.0, 2.0})));
  EXPECT_EQ(e.value().data, (std::vector<double>{0.3, -0.7}));
}

TEST(ReweHead, MatchesHandEvaluation) {
  Seq2SeqModel m(hand_config(true));
  set(m, "rewe.W1", Tensor::matrix(2, 2, {0.5, -1.0, 2.0, 0.25}));
  set(m, "rewe.b1", Tensor::vector({0.1, -0.2}));
  set(m, "rewe.W2", Tensor::matrix(2, 2, {1.0, 3.0, -2.0, 0.5}));
  set(m, "rewe.b2", Tensor::vector({0.05, 0.4}));
  Graph g(false);
  Var e = m.rewe_head(g, g.constant(Tensor::matrix(1, 2, {0.6, 0.2})));
  // W1 s + b1 = (0.3 - 0.2 + 0.1, 1.2 + 0.05 - 0.2) = (0.2, 1.05), both kept by ReLU
  // W2 h + b2 = (0.2 + 3.15 + 0.05, -0.4 + 0.525 + 0.4) = (3.4, 0.525)
  EXPECT_NEAR(e.value().data[0], 3.4, 1e-12);
  EXPECT_NEAR(e.value().data[1], 0.525, 1e-12);
}

TEST(ReseHead, SingleStepIsIdentityAttention) {
  Seq2SeqModel m(micro_config(13, false, true));
  Rng rng(13);
  const Tensor s1 = random_tensor({1, 4}, rng);
  Graph g(false);
  const Var steps[] = {g.constant(s1)};
  Var r = m.rese_head(g, steps);
  // Output layers applied directly to s_1.
  Var h = relu(add(matmul_nt(g.constant(s1), g.param(*m.find("rese.W_in"))), g.param(*m.find("rese.b_in"))));
  Var direct = add(matmul_nt(h, g.param(*m.find("rese.W_out"))), g.param(*m.find("rese.b_out")));
  EXPECT_EQ(r.value().data, direct.value().data);
}

TEST(ReseHead, IdenticalStepsAverageToThatStep) {
  Seq2SeqModel m(micro_config(14, false, true));
  Rng rng(14);
  const Tensor s1 = random_tensor({1, 4}, rng);
  Graph g(false);
  const Var one[] = {g.constant(s1)};
  const Var three[] = {g.constant(s1), g.constant(s1), g.constant(s1)};
  Var a = m.rese_head(g, one), b = m.rese_head(g, three);
  for (std::size_t k = 0; k < a.value().data.size(); ++k) EXPECT_NEAR(a.value().data[k], b.value().data[k], 1e-12);
}

TEST(ReseHead, EmptyAndWrongMaskAreErrors) {
  Seq2SeqModel m(micro_config(14, false, true));
  Graph g(false);
  EXPECT_THROW(m.rese_head(g, std::span<const Var>{}), UsageError);
}

TEST(ReseHead, MatchesHandEvaluation) {
  Seq2SeqModel m(hand_config(false, true));
  set(m, "rese.U1", Tensor::matrix(2, 2, {0.5, 1.0, -1.0, 0.5}));
  set(m, "rese.U2", Tensor::matrix(1, 2, {2.0, -1.0}));
  set(m, "rese.W_in", Tensor::matrix(2, 2, {1.0, -0.5, 0.5, 2.0}));
  set(m, "rese.b_in", Tensor::vector({0.1, -0.1}));
  set(m, "rese.W_out", Tensor::matrix(2, 2, {1.5, 0.5, -1.0, 1.0}));
  set(m, "rese.b_out", Tensor::vector({0.2, 0.3}));
  Graph g(false);
  const Var steps[] = {g.constant(Tensor::matrix(1, 2, {0.4, 0.2})), g.constant(Tensor::matrix(1, 2, {-0.6, 0.8}))};
  Var r = m.rese_head(g, steps);

  // U1 s1 = (0.2 + 0.2, -0.4 + 0.1) = (0.4, -0.3); U1 s2 = (-0.3 + 0.8, 0.6 + 0.4) = (0.5, 1.0)
  const double l1 = 2.0 * std::tanh(0.4) + std::tanh(0.3);
  const double l2 = 2.0 * std::tanh(0.5) - std::tanh(1.0);
  const double a1 = 1.0 / (1.0 + std::exp(l2 - l1)), a2 = 1.0 - a1;
  const double x0 = a1 * 0.4 + a2 * -0.6, x1 = a1 * 0.2 + a2 * 0.8;
  const double h0 = std::max(0.0, x0 - 0.5 * x1 + 0.1);
  const double h1 = std::max(0.0, 0.5 * x0 + 2.0 * x1 - 0.1);
  EXPECT_NEAR(r.value().data[0], 1.5 * h0 + 0.5 * h1 + 0.2, 1e-9);
  EXPECT_NEAR(r.value().data[1], -1.0 * h0 + 1.0 * h1 + 0.3, 1e-9);
}

TEST(ForwardTrain, BaselineHasOnlyProbabilities) {
  Seq2SeqModel m(micro_config(15, true, true));
  Batch b = make_batch({{5, 6, 7}, {8, 9}}, {{4, 5}, {6, 7, 8}});
  Graph g;
  Rng rng(1);
  ForwardOutput out = m.forward_train(g, b, ForwardOptions{}, rng);
  EXPECT_TRUE(out.probs.valid());
  EXPECT_FALSE(out.rewe.valid());
  EXPECT_FALSE(out.rese.valid());
  EXPECT_EQ(m.head_invocations(), 0u);
  EXPECT_EQ(out.probs.shape(), (Shape{4 * 2, 12}));
  // Sentence 0 has m=2: steps 1..3 count for NLL, 1..2 are words.
  EXPECT_EQ(out.step_mask.data, (std::vector<double>{1, 1, 1, 1, 1, 1, 0, 1}));
  EXPECT_EQ(out.word_mask.data, (std::vector<double>{1, 1, 1, 1, 0, 1, 0, 0}));
  EXPECT_EQ(out.targets[0], 4);
  EXPECT_EQ(out.targets[4], Vocab::kEos);
}

TEST(ForwardTrain, TeacherForcingUsesReferencePrefix) {
  // Changing a later reference word cannot affect earlier predictions.
  Seq2SeqModel m(micro_config(16));
  Rng rng(1);
  Graph g1(false), g2(false);
  auto a = m.forward_train(g1, make_batch({{5, 6}}, {{4, 5, 6}}), ForwardOptions{}, rng);
  auto b = m.forward_train(g2, make_batch({{5, 6}}, {{4, 5, 9}}), ForwardOptions{}, rng);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t v = 0; v < 12; ++v) EXPECT_EQ(a.probs.value().at(t, v), b.probs.value().at(t, v));
  EXPECT_NE(a.probs.value().at(3, 0), b.probs.value().at(3, 0));
}

TEST(ForwardTrain, PrefixSentenceExcludesPadStepsFromRese) {
  Seq2SeqModel m(micro_config(17, false, true));
  Batch b = make_batch({{5, 6, 7}, {5, 6, 7}}, {{4, 5, 6, 7}, {4, 5}});
  Graph g(false);
  Rng rng(1);
  ForwardOptions opts;
  opts.rese = true;
  ForwardOutput out = m.forward_train(g, b, opts, rng);
  // Sentence 1's own steps s_1, s_2, fed alone.
  std::vector<Var> own;
  for (std::size_t t = 0; t < 2; ++t) own.push_back(slice(out.states, 0, t * 2 + 1, t * 2 + 2));
  Var alone = m.rese_head(g, own);
  for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(out.rese.value().at(1, k), alone.value().data[k], 1e-12);
}

TEST(ForwardTrain, HeadsDoNotPerturbBaselinePass) {
  Batch b = make_batch({{5, 6, 7}, {8, 9}}, {{4, 5}, {6, 7, 8}}, 6);
  Seq2SeqModel base(micro_config(18)), full(micro_config(18, true, true));
  Graph g1, g2;
  Rng r1(4), r2(4);
  ForwardOptions opts;
  opts.train = true;
  auto a = base.forward_train(g1, b, opts, r1);
  opts.rewe = opts.rese = true;
  auto c = full.forward_train(g2, b, opts, r2);
  EXPECT_EQ(a.probs.value().data, c.probs.value().data);
  EXPECT_EQ(full.head_invocations(), 2u);
}

TEST(ForwardTrain, FullGradientCheck) {
  const double weights[][2] = {{0.0, 0.0}, {2.0, 0.0}, {2.0, 5.0}};
  for (const auto& w : weights) {
    for (std::uint64_t seed = 1; seed <= 2; ++seed) {
      Seq2SeqModel m(micro_config(seed, true, true));
      embreg::testing::randomize_biases(m, seed);
      Rng data(seed);
      const Tensor table = random_tensor({12, 5}, data);
      Batch b = make_batch({{5, 6, 7}, {8, 9}}, {{4, 5}, {6, 7, 8}}, 6, seed);
      ObjectiveConfig cfg{w[0], w[1], &table};
      auto loss = [&](Graph& g) {
        Rng rng(seed * 31);
        return batch_loss(g, m, b, cfg, true, rng).loss;
      };
      auto params = m.parameters();
      GradCheckResult r = grad_check_params(loss, params);
      EXPECT_LT(r.max_rel_error, 1e-4) << "lambda " << w[0] << " beta " << w[1] << " seed " << seed;
    }
  }
}
