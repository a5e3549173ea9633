#include <gtest/gtest.h>

#include <random>

#include "csd/model.hpp"
#include "csd/training.hpp"
#include "csd/vocab.hpp"
#include "test_support.hpp"

using namespace csd;
using ag::Matrix;

namespace {

Vocabulary small_vocab(int text_tokens) {
  Vocabulary v;
  for (int i = 0; i < text_tokens; ++i) v.add("t" + std::to_string(i));
  return v;
}

std::vector<int> random_ids(const Vocabulary& v, int n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(v.first_text_id(), v.size() - 1);
  std::vector<int> ids{Vocabulary::kCls};
  for (int i = 0; i < n; ++i) ids.push_back(d(rng));
  return ids;
}

}  // namespace

TEST(ModelConfig, Validation) {
  ModelConfig c = fixtures::tiny_config(40);
  EXPECT_NO_THROW(c.validate());
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), ModelError);
  c = fixtures::tiny_config(0);
  EXPECT_THROW(c.validate(), ModelError);
}

TEST(Encoder, ShapeAndLayerNormRows) {
  const Vocabulary v = small_vocab(20);
  PretrainModel m(fixtures::tiny_config(v.size()), 3);
  std::mt19937_64 rng(1);
  const auto ids = random_ids(v, 7, rng);
  const std::vector<int> segs(ids.size(), 0);
  ag::Tape t(false);
  const auto out = m.forward(t, ids, segs);
  const Matrix& h = out.states.hidden.value();
  EXPECT_EQ(h.rows(), 8);
  EXPECT_EQ(h.cols(), 16);
  EXPECT_EQ(out.token_logits.cols(), v.size());
  EXPECT_EQ(out.nsp_logits.cols(), 2);
  // The last sublayer is a LayerNorm with unit gain and zero bias at init.
  for (Eigen::Index r = 0; r < h.rows(); ++r) {
    const double mean = h.row(r).mean();
    const double var = (h.row(r).array() - mean).square().mean();
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(var, 1.0, 1e-3);
  }
}

TEST(Encoder, PadTailDoesNotLeak) {
  const Vocabulary v = small_vocab(20);
  PretrainModel m(fixtures::tiny_config(v.size()), 3);
  std::mt19937_64 rng(2);
  auto ids = random_ids(v, 6, rng);
  std::vector<int> segs(ids.size(), 0);
  ag::Tape t1(false);
  const Matrix base = m.forward(t1, ids, segs).states.hidden.value();
  for (int extra : {1, 4}) {
    auto padded = ids;
    auto psegs = segs;
    for (int i = 0; i < extra; ++i) {
      padded.push_back(Vocabulary::kPad);
      psegs.push_back(i % 2);
    }
    ag::Tape t2(false);
    const auto st = m.forward(t2, padded, psegs).states;
    EXPECT_LT((st.hidden.value().topRows(base.rows()) - base).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_FALSE(st.attention_mask.back());
  }
}

TEST(Encoder, LengthErrors) {
  const Vocabulary v = small_vocab(5);
  PretrainModel m(fixtures::tiny_config(v.size()), 3);
  ag::Tape t(false);
  EXPECT_THROW(m.forward(t, std::vector<int>{}, std::vector<int>{}), ModelError);
  const std::vector<int> ids(200, Vocabulary::kCls);
  EXPECT_THROW(m.forward(t, ids, std::vector<int>(200, 0)), ModelError);
}

TEST(Classifier, CodomainAndTies) {
  const Vocabulary v = small_vocab(10);
  ClassifierModel m(fixtures::tiny_config(v.size()), Taxonomy::CS, 5);
  const std::vector<int> ids{Vocabulary::kCls, 30};  // shorter than the widest kernel
  ag::Tape t(false);
  EXPECT_EQ(m.forward(t, ids, std::vector<int>(2, 0)).logits.cols(), 7);
  Matrix row(1, 4);
  row << 0.5, 2.0, 2.0, 1.0;
  EXPECT_EQ(argmax_lowest(row), 1);
  row << 3.0, 3.0, 3.0, 3.0;
  EXPECT_EQ(argmax_lowest(row), 0);
}

TEST(Classifier, OverfitsOneExample) {
  const Vocabulary v = small_vocab(10);
  ClassifierModel m(fixtures::tiny_config(v.size()), Taxonomy::Emotion, 5);
  std::mt19937_64 rng(3);
  const auto ids = random_ids(v, 5, rng);
  const std::vector<int> segs(ids.size(), 0);
  const std::vector<int> gold{6};
  OptimizerConfig oc;
  oc.warmup_steps = 10;
  oc.lr = 5e-3;
  AdamW opt(oc);
  for (int s = 0; s < 200; ++s) {
    ag::Tape t;
    t.backward(ag::cross_entropy(m.forward(t, ids, segs).logits, gold));
    opt.step(m.params);
  }
  EXPECT_EQ(m.predict(ids, segs), 6);
  EXPECT_EQ(m.cls_state(ids, segs).cols(), 16);
}

TEST(Decoder, CausalityAndCrossAttentionRows) {
  const Vocabulary v = small_vocab(20);
  GeneratorModel g(fixtures::tiny_config(v.size()), true, 9);
  std::mt19937_64 rng(4);
  const auto ids = random_ids(v, 9, rng);
  const std::vector<int> segs(ids.size(), 0);
  ag::Tape t(false);
  const EncoderStates extra = g.extra_encode(t, ids, segs);
  const SplicedStates mem = splice_hidden_states(extra, {}, Matrix());
  const auto out = g.decode(t, ids, &mem);
  auto changed = ids;
  changed[6] = changed[6] == v.first_text_id() ? v.first_text_id() + 1 : v.first_text_id();
  const auto out2 = g.decode(t, changed, &mem);
  const Matrix& a = out.logits.value();
  const Matrix& b = out2.logits.value();
  EXPECT_EQ((a.topRows(6) - b.topRows(6)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT((a.bottomRows(4) - b.bottomRows(4)).cwiseAbs().maxCoeff(), 0.0);

  const AttentionRecord& rec = out.attention;
  EXPECT_TRUE(rec.cross);
  EXPECT_EQ(rec.heads, 2);
  const Matrix& p = rec.probs.value();
  EXPECT_EQ(p.rows(), rec.heads * rec.queries);
  for (Eigen::Index r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-6);
}

TEST(Decoder, WithoutCrossAttentionRecordsSelfAttention) {
  const Vocabulary v = small_vocab(20);
  GeneratorModel g(fixtures::tiny_config(v.size()), false, 9);
  std::mt19937_64 rng(5);
  const auto ids = random_ids(v, 5, rng);
  ag::Tape t(false);
  const auto out = g.decode(t, ids, nullptr);
  EXPECT_FALSE(out.attention.cross);
  EXPECT_EQ(out.attention.keys, 6);
  EXPECT_EQ(g.params.find("xenc.embed.word"), -1);
  EXPECT_EQ(g.params.find("dec.layer0.cross.q.weight"), -1);
  GeneratorModel with_cross(fixtures::tiny_config(v.size()), true, 9);
  EXPECT_GE(with_cross.params.find("xenc.embed.word"), 0);
  EXPECT_GE(with_cross.params.find("dec.layer0.cross.q.weight"), 0);
}

TEST(Splice, ReplacedRowsBitEqualOthersUnchanged) {
  const Vocabulary v = small_vocab(20);
  GeneratorModel g(fixtures::tiny_config(v.size()), true, 2);
  std::mt19937_64 rng(6);
  const auto ids = random_ids(v, 10, rng);
  ag::Tape t(false);
  const EncoderStates extra = g.extra_encode(t, ids, std::vector<int>(ids.size(), 0));
  const std::vector<SplicePoint> pts{{2, Taxonomy::Emotion}, {3, Taxonomy::CS}, {7, Taxonomy::Strategy}};
  Matrix states(3, 16);
  std::normal_distribution<double> n;
  for (Eigen::Index i = 0; i < states.size(); ++i) states.data()[i] = n(rng);
  const SplicedStates sp = splice_hidden_states(extra, pts, states);
  const Matrix& h = sp.hidden.value();
  const Matrix& e = extra.hidden.value();
  for (int r = 0; r < h.rows(); ++r) {
    const auto it = std::find_if(pts.begin(), pts.end(), [&](const SplicePoint& p) { return p.position == r; });
    if (it != pts.end()) {
      EXPECT_TRUE(h.row(r) == states.row(it - pts.begin()));
    } else {
      EXPECT_TRUE(h.row(r) == e.row(r));
    }
  }
  EXPECT_EQ(sp.replaced_positions, pts);
  const SplicedStates id = splice_hidden_states(extra, {}, Matrix());
  EXPECT_TRUE(id.hidden.value() == e);
}

TEST(Splice, LocateLabelPositions) {
  Vocabulary v = small_vocab(5);
  const int w = v.first_text_id();
  const std::vector<int> ids{Vocabulary::kCls,
                             w,
                             v.label_token(Taxonomy::Emotion, 2),
                             v.label_token(Taxonomy::CS, 1),
                             v.label_token(Taxonomy::Strategy, 3),
                             Vocabulary::kSep,
                             w + 1,
                             v.label_token(Taxonomy::Emotion, 0),
                             v.label_token(Taxonomy::CS, 0),
                             v.label_token(Taxonomy::Strategy, 0),
                             Vocabulary::kSep};
  const auto pts = locate_label_positions(ids, v);
  ASSERT_EQ(pts.size(), 6u);
  EXPECT_EQ(pts[0], (SplicePoint{2, Taxonomy::Emotion}));
  EXPECT_EQ(pts[1], (SplicePoint{3, Taxonomy::CS}));
  EXPECT_EQ(pts[2], (SplicePoint{4, Taxonomy::Strategy}));
  EXPECT_EQ(pts[5], (SplicePoint{9, Taxonomy::Strategy}));
  const std::vector<int> broken{Vocabulary::kCls, w, Vocabulary::kSep};
  EXPECT_THROW(locate_label_positions(broken, v), ModelError);
}

TEST(AttentionPerToken, UniformSumAndBruteForce) {
  Matrix uniform = Matrix::Constant(2 * 3, 8, 1.0 / 8.0);
  const std::vector<int> rows{0, 2};
  const auto a = attention_per_token(uniform, 2, rows, 2, 6);
  ASSERT_EQ(a.size(), 4u);
  for (double x : a) EXPECT_NEAR(x, 0.25, 1e-12);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  Matrix p(2 * 3, 8);
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) p(r, c) = u(rng);
    p.row(r) /= p.row(r).sum();
  }
  const auto b = attention_per_token(p, 2, rows, 1, 5);
  double total = 0.0;
  std::vector<double> brute(4, 0.0);
  for (int h = 0; h < 2; ++h) {
    for (int q : rows) {
      for (int j = 1; j < 5; ++j) brute[static_cast<std::size_t>(j - 1)] += p(h * 3 + q, j);
    }
  }
  double bs = 0.0;
  for (double x : brute) bs += x;
  for (std::size_t j = 0; j < b.size(); ++j) {
    EXPECT_NEAR(b[j], brute[j] / bs, 1e-12);
    total += b[j];
  }
  EXPECT_NEAR(total, 1.0, 1e-6);

  ag::Tape t(false);
  AttentionRecord rec{t.constant(p), 2, 3, 8, true};
  const ag::Var av = attention_per_token(rec, rows, 1, 5);
  for (std::size_t j = 0; j < b.size(); ++j) EXPECT_NEAR(av.value()(0, static_cast<Eigen::Index>(j)), b[j], 1e-15);
}
