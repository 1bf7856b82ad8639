// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "deft/error.hpp"
#include "deft/nn/checkpoint.hpp"
#include "deft/nn/lstm.hpp"
#include "deft/nn/ops.hpp"
#include "deft/nn/optim.hpp"
#include "deft/nn/transformer.hpp"
#include "test_support.hpp"

namespace deft::nn {
namespace {

using Mat = std::vector<std::vector<double>>;

// Straight-line evaluation of the transformer equations on nested vectors,
// sharing nothing with the tape implementation except the parameter values.
struct PlainTransformer {
  const TinyTransformer& model;

  Mat param(const std::string& name) const {
    const Tensor& t = model.params().get(name).value;
    Mat m(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t r = 0; r < t.rows(); ++r)
      for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
    return m;
  }
  std::vector<double> vec(const std::string& name) const { return param(name)[0]; }

  static Mat mm(const Mat& a, const Mat& b) {
    Mat out(a.size(), std::vector<double>(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b[0].size(); ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < b.size(); ++k) s += a[i][k] * b[k][j];
        out[i][j] = s;
      }
    return out;
  }
  static Mat ln(const Mat& x, const std::vector<double>& g, const std::vector<double>& o) {
    Mat out = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double n = static_cast<double>(x[i].size());
      double mean = 0.0;
      for (double v : x[i]) mean += v;
      mean /= n;
      double var = 0.0;
      for (double v : x[i]) var += (v - mean) * (v - mean);
      var /= n;
      for (std::size_t j = 0; j < x[i].size(); ++j)
        out[i][j] = (x[i][j] - mean) / std::sqrt(var + 1e-5) * g[j] + o[j];
    }
    return out;
  }

  Mat logits(const std::vector<int>& tokens) const {
    const auto& cfg = model.config();
    const Mat embed = param("embed");
    Mat x;
    for (int t : tokens) x.push_back(embed[static_cast<std::size_t>(t)]);
    const std::size_t n = x.size(), d = cfg.d_model, dh = d / cfg.n_heads;
    for (std::size_t b = 0; b < cfg.n_blocks; ++b) {
      auto name = [&](const char* r) { return TinyTransformer::block_param(b, r); };
      Mat h = ln(x, vec(name("ln1.gain")), vec(name("ln1.offset")));
      Mat q = mm(h, param(name("attn.wq"))), k = mm(h, param(name("attn.wk"))),
          v = mm(h, param(name("attn.wv")));
      Mat att(n, std::vector<double>(d, 0.0));
      for (std::size_t head = 0; head < cfg.n_heads; ++head) {
        for (std::size_t i = 0; i < n; ++i) {
          std::vector<double> s(n);
          double mx = -1e300;
          for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t c = 0; c < dh; ++c) acc += q[i][head * dh + c] * k[j][head * dh + c];
            s[j] = acc / std::sqrt(static_cast<double>(dh));
            mx = std::max(mx, s[j]);
          }
          double z = 0.0;
          for (double& e : s) z += (e = std::exp(e - mx));
          for (std::size_t j = 0; j < n; ++j)
            for (std::size_t c = 0; c < dh; ++c) att[i][head * dh + c] += s[j] / z * v[j][head * dh + c];
        }
      }
      Mat o = mm(att, param(name("attn.wo")));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) x[i][j] += o[i][j];
      Mat h2 = ln(x, vec(name("ln2.gain")), vec(name("ln2.offset")));
      Mat f = mm(h2, param(name("ffn.w1")));
      const auto b1 = vec(name("ffn.b1"));
      for (auto& row : f)
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = std::max(0.0, row[j] + b1[j]);
      Mat f2 = mm(f, param(name("ffn.w2")));
      const auto b2 = vec(name("ffn.b2"));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) x[i][j] += f2[i][j] + b2[j];
    }
    Mat out = mm(ln(x, vec("final_ln.gain"), vec("final_ln.offset")), param("head.w"));
    const auto hb = vec("head.b");
    for (auto& row : out)
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += hb[j];
    return out;
  }
};

TransformerConfig small_config() { return {2, 8, 2, 16, 32, 16}; }

TEST(Tensor, ShapeMustMatchValues) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(shape_string(t.shape()), "[2, 3]");
}

TEST(Tensor, BitIdenticalSeesSignedZero) {
  Tensor a = Tensor::full({2}, 0.0), b = Tensor::full({2}, -0.0);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(bit_identical(a, b));
}

TEST(Rng, NamedStreamsAreReproducibleAndDistinct) {
  Rng a = Rng::stream(7, "x"), b = Rng::stream(7, "x"), c = Rng::stream(7, "y");
  const double va = a.normal();
  EXPECT_EQ(va, b.normal());
  EXPECT_NE(va, c.normal());
}

TEST(Tape, SumGradientIsAllOnes) {
  ParameterStore store;
  store.add_normal("w", {3, 4}, 1, 1.0);
  Tape tape;
  GradMap g = tape.backward(sum(store.bind(tape, "w")));
  ASSERT_EQ(g.count("w"), 1u);
  for (double v : g["w"].values()) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Tape, NonScalarLossIsUsageError) {
  Tape tape;
  Var w = tape.leaf("w", Tensor::full({2, 2}, 1.0));
  EXPECT_THROW(tape.backward(w), UsageError);
}

TEST(Tape, FrozenParameterGetsNoGradient) {
  TinyTransformer model(small_config(), 3);
  model.params().get("block0.attn.wq").trainable = false;
  Tape tape;
  const std::vector<int> tokens{1, 2, 3};
  GradMap g = tape.backward(cross_entropy(model.forward(tape, tokens), tokens));
  EXPECT_EQ(g.count("block0.attn.wq"), 0u);
  EXPECT_EQ(g.count("block0.attn.wk"), 1u);
}

TEST(CrossEntropy, UniformLogitsGiveLogVocab) {
  Tape tape;
  Var logits = tape.constant(Tensor({1, 32}));
  const std::vector<int> t{5};
  EXPECT_NEAR(cross_entropy(logits, t).value().item(), std::log(32.0), 1e-15);
}

TEST(CrossEntropy, ConfidentCorrectLogitsApproachZero) {
  double previous = 1e9;
  for (double c : {1.0, 10.0, 100.0}) {
    Tape tape;
    Tensor l({1, 4});
    l.at(0, 2) = c;
    const std::vector<int> t{2};
    const double loss = cross_entropy(tape.constant(l), t).value().item();
    EXPECT_GE(loss, 0.0);
    EXPECT_LT(loss, previous);
    previous = loss;
  }
  EXPECT_LT(previous, 1e-40);
}

TEST(CrossEntropy, MatchesDirectLogSumExp) {
  Rng rng(11);
  Tensor l = rng.normal_tensor({5, 7}, 3.0);
  const std::vector<int> targets{0, 6, 3, 3, 1};
  double expected = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < 7; ++j) z += std::exp(l.at(i, j));
    expected += std::log(z) - l.at(i, static_cast<std::size_t>(targets[i]));
  }
  expected /= 5.0;
  Tape tape;
  const double got = cross_entropy(tape.constant(l), targets).value().item();
  EXPECT_LT(std::abs(got - expected) / std::abs(expected), 1e-12);
}

TEST(CrossEntropy, LengthMismatchIsInputError) {
  Tape tape;
  const std::vector<int> t{1};
  EXPECT_THROW(cross_entropy(tape.constant(Tensor({2, 4})), t), InputError);
}

TEST(Transformer, MatchesStraightLineImplementation) {
  TinyTransformer model(small_config(), 7);
  const std::vector<int> tokens{1, 2, 3};
  Tape tape;
  const Tensor got = model.forward(tape, tokens).value();
  const Mat expected = PlainTransformer{model}.logits(tokens);
  ASSERT_EQ(got.rows(), 3u);
  ASSERT_EQ(got.cols(), 32u);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 32; ++j) {
      const double e = expected[i][j];
      EXPECT_LT(std::abs(got.at(i, j) - e), 1e-12 * std::max(std::abs(e), 1e-300)) << i << "," << j;
    }
}

TEST(Transformer, SameSeedSameBits) {
  const std::vector<int> tokens{4, 9, 1, 0};
  TinyTransformer a(small_config(), 5), b(small_config(), 5);
  Tape ta, tb;
  EXPECT_TRUE(bit_identical(a.forward(ta, tokens).value(), b.forward(tb, tokens).value()));
}

TEST(Transformer, IdentityBlockCollapsesToHeadOfNormedEmbedding) {
  TransformerConfig cfg{1, 8, 2, 16, 32, 16};
  TinyTransformer model(cfg, 2);
  auto& p = model.params();
  // Unit-scale embeddings keep the layer-norm epsilon negligible.
  p.get("embed").value = Rng(4).normal_tensor({32, 8}, 1.0);
  for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
    p.get(TinyTransformer::block_param(0, w)).value = Tensor::identity(8);
  p.get("block0.ffn.w1").value = Tensor({8, 16});
  p.get("block0.ffn.w2").value = Tensor({16, 8});
  const std::vector<int> token{6};
  Tape tape;
  const Tensor got = model.forward(tape, token).value();
  Var e = tape.constant(Tensor({1, 8}, std::vector<double>(p.get("embed").value.data().begin() + 48,
                                                           p.get("embed").value.data().begin() + 56)));
  const Tensor expected = model.head(tape, model.final_norm(tape, e)).value();
  for (std::size_t j = 0; j < 32; ++j) EXPECT_NEAR(got[j], expected[j], 1e-4 * std::abs(expected[j]) + 1e-9);
}

TEST(Transformer, OutOfVocabularyIsInputError) {
  TinyTransformer model(small_config(), 1);
  Tape tape;
  const std::vector<int> tokens{1, 32};
  EXPECT_THROW(model.forward(tape, tokens), InputError);
}

TEST(Transformer, OverlongSequenceIsCapacityError) {
  TinyTransformer model(small_config(), 1);
  Tape tape;
  const std::vector<int> tokens(17, 1);
  EXPECT_THROW(model.forward(tape, tokens), CapacityError);
}

TEST(Transformer, AcceptsEveryLengthUpToMaxSeq) {
  TinyTransformer model(small_config(), 1);
  for (std::size_t n = 1; n <= 16; ++n) {
    Tape tape;
    const std::vector<int> tokens(n, 3);
    const Tensor l = model.forward(tape, tokens).value();
    EXPECT_EQ(l.shape(), (Shape{n, 32}));
    EXPECT_TRUE(l.all_finite());
  }
}

TEST(Transformer, SelectLogitsMatchesFullForward) {
  TinyTransformer model(small_config(), 9);
  TokenBatch batch{{1, 2, 3, 4, 5, 6}, 3};
  const std::vector<std::size_t> rows{2, 0};
  Tape tape;
  const Tensor sel = model.select_logits(tape, batch, rows).value();
  for (std::size_t s = 0; s < 2; ++s) {
    Tape t;
    const std::vector<int> seq(batch.tokens.begin() + 3 * s, batch.tokens.begin() + 3 * s + 3);
    const Tensor full = model.forward(t, seq).value();
    for (std::size_t j = 0; j < 32; ++j) EXPECT_EQ(sel.at(s, j), full.at(rows[s], j));
  }
}

TEST(Transformer, EveryGradientMatchesFiniteDifferences) {
  TinyTransformer model(small_config(), 13);
  // Non-trivial norms and biases so every gradient path is exercised.
  Rng rng(3);
  for (auto& p : model.params().items()) {
    if (p.kind == ParamKind::Bias) p.value = rng.normal_tensor(p.value.shape(), 0.1);
    if (p.kind == ParamKind::Gain) p.value += rng.normal_tensor(p.value.shape(), 0.1);
    if (p.kind != ParamKind::Bias && p.kind != ParamKind::Gain) p.value *= 20.0;
  }
  const std::vector<int> tokens{1, 5, 2, 7};
  const std::vector<int> targets{3, 0, 9, 4};
  std::size_t checked = 0;
  auto bad = testing::check_gradients(
      {&model.params()}, [&](Tape& t) { return cross_entropy(model.forward(t, tokens), targets); },
      1e-5, 1e-4, &checked);
  EXPECT_EQ(checked, model.params().scalar_count());
  for (const auto& m : bad) ADD_FAILURE() << m.name << "[" << m.index << "] " << m.analytic << " vs " << m.numeric;
}

TEST(Transformer, WithAllBlocksIsIdentical) {
  TinyTransformer model(small_config(), 4);
  const std::vector<std::size_t> keep{0, 1};
  TinyTransformer copy = model.with_blocks(keep);
  const std::vector<int> tokens{3, 1};
  Tape a, b;
  EXPECT_TRUE(bit_identical(model.forward(a, tokens).value(), copy.forward(b, tokens).value()));
}

TEST(BiLstm, ParameterCountMatchesClosedForm) {
  ParameterStore store;
  BiLstmEncoder enc("enc", 8);
  enc.init(store, 1);
  EXPECT_EQ(store.scalar_count(), BiLstmEncoder::parameter_count(8));
  EXPECT_EQ(BiLstmEncoder::parameter_count(8), 2u * 4 * 8 * 17 + 136 + 72);
}

TEST(BiLstm, LastInputRowReachesFirstOutputRow) {
  ParameterStore store;
  BiLstmEncoder enc("enc", 6);
  enc.init(store, 2);
  Tensor x = Rng(1).normal_tensor({4, 6}, 1.0);
  Tape t1;
  const Tensor a = enc.encode(t1, store, t1.constant(x)).value();
  x.at(3, 0) += 1.0;
  Tape t2;
  const Tensor b = enc.encode(t2, store, t2.constant(x)).value();
  EXPECT_EQ(a.shape(), (Shape{4, 6}));
  double diff = 0.0;
  for (std::size_t j = 0; j < 6; ++j) diff += std::abs(a.at(0, j) - b.at(0, j));
  EXPECT_GT(diff, 0.0);
}

TEST(BiLstm, ZeroInputGivesMlpOfZeroState) {
  ParameterStore store;
  BiLstmEncoder enc("enc", 4);
  enc.init(store, 3);
  store.get("enc.mlp1.b").value = Rng(5).normal_tensor({4}, 1.0);
  store.get("enc.mlp2.b").value = Rng(6).normal_tensor({4}, 1.0);
  Tape tape;
  const Tensor out = enc.encode(tape, store, tape.constant(Tensor({3, 4}))).value();
  // Zero input and state: c stays 0, so h = 0 and the MLPs see zeros.
  const Tensor& b1 = store.get("enc.mlp1.b").value;
  const Tensor& w2 = store.get("enc.mlp2.w").value;
  const Tensor& b2 = store.get("enc.mlp2.b").value;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t j = 0; j < 4; ++j) {
      double e = b2[j];
      for (std::size_t k = 0; k < 4; ++k) e += std::max(0.0, b1[k]) * w2.at(k, j);
      EXPECT_NEAR(out.at(r, j), e, 1e-15);
    }
}

TEST(BiLstm, WidthMismatchIsShapeError) {
  ParameterStore store;
  BiLstmEncoder enc("enc", 4);
  enc.init(store, 3);
  Tape tape;
  EXPECT_THROW(enc.encode(tape, store, tape.constant(Tensor({2, 5}))), ShapeError);
}

TEST(BiLstm, GradientsMatchFiniteDifferences) {
  ParameterStore store;
  BiLstmEncoder enc("enc", 4);
  enc.init(store, 8);
  Rng rng(2);
  for (auto& p : store.items()) p.value = rng.normal_tensor(p.value.shape(), 0.5);
  const Tensor x = Rng(9).normal_tensor({3, 4}, 1.0);
  const Tensor w = Rng(10).normal_tensor({3, 4}, 1.0);
  auto bad = testing::check_gradients({&store}, [&](Tape& t) {
    return sum(mul(enc.encode(t, store, t.constant(x)), t.constant(w)));
  });
  for (const auto& m : bad) ADD_FAILURE() << m.name << "[" << m.index << "] " << m.analytic << " vs " << m.numeric;
}

TEST(Sgd, ZeroLearningRateKeepsParameters) {
  ParameterStore store;
  store.add_normal("w", {3}, 1, 1.0);
  const Tensor before = store.get("w").value;
  sgd_step(store, {{"w", Tensor::full({3}, 2.0)}}, 0.0);
  EXPECT_TRUE(bit_identical(before, store.get("w").value));
}

TEST(Sgd, Arithmetic) {
  ParameterStore store;
  store.add_constant("p", {1}, 1.0);
  sgd_step(store, {{"p", Tensor::full({1}, 0.5)}}, 0.1);
  EXPECT_EQ(store.get("p").value[0], 0.95);
}

TEST(Sgd, ShapeMismatchIsUsageError) {
  ParameterStore store;
  store.add_constant("p", {2}, 1.0);
  EXPECT_THROW(sgd_step(store, {{"p", Tensor::full({3}, 0.5)}}, 0.1), UsageError);
}

TEST(Sgd, FrozenParametersAreNotUpdated) {
  ParameterStore store;
  store.add_constant("p", {1}, 1.0).trainable = false;
  EXPECT_THROW(sgd_step(store, {{"p", Tensor::full({1}, 0.5)}}, 0.1), UsageError);
  EXPECT_EQ(store.get("p").value[0], 1.0);
}

TEST(Sgd, OneStepReducesQuadraticLoss) {
  ParameterStore store;
  store.add_constant("x", {1}, 3.0);
  auto loss = [&](Tape& t) {
    Var x = store.bind(t, "x");
    Var d = sub(x, t.constant(Tensor::full({1}, 1.0)));
    return sum(mul(d, d));
  };
  Tape t0;
  const double before = loss(t0).value().item();
  Tape t1;
  sgd_step(store, t1.backward(loss(t1)), 0.1);
  Tape t2;
  EXPECT_LT(loss(t2).value().item(), before);
}

TEST(Checkpoint, RoundTripsBitExactly) {
  TinyTransformer model(small_config(), 21);
  std::stringstream buf;
  NamedTensors tensors;
  for (const auto& p : model.params().items()) tensors.emplace_back(p.name, p.value);
  write_checkpoint(buf, tensors);
  EXPECT_EQ(buf.str().substr(0, 4), "DEFT");
  const NamedTensors back = read_checkpoint(buf);
  ASSERT_EQ(back.size(), tensors.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].first, tensors[i].first);
    EXPECT_TRUE(bit_identical(back[i].second, tensors[i].second));
  }
  TinyTransformer other(small_config(), 22);
  other.load_values(back);
  const std::vector<int> tok{1, 2};
  Tape a, b;
  EXPECT_TRUE(bit_identical(model.forward(a, tok).value(), other.forward(b, tok).value()));
}

TEST(Checkpoint, RejectsForeignBytes) {
  std::stringstream buf("NOPE....");
  EXPECT_THROW(read_checkpoint(buf), InputError);
}

}  // namespace
}  // namespace deft::nn
