#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "csd/pipeline.hpp"
#include "csd/text.hpp"
#include "csd/training.hpp"
#include "test_support.hpp"

using namespace csd;
using ag::Matrix;

namespace {

double mean_of(const std::vector<double>& v, std::size_t from, std::size_t count) {
  return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(from),
                         v.begin() + static_cast<std::ptrdiff_t>(from + count), 0.0) /
         static_cast<double>(count);
}

}  // namespace

TEST(Losses, GenerationAnalyticCases) {
  Matrix certain = Matrix::Constant(1, 4, -1e4);
  certain(0, 2) = 0.0;
  const std::vector<int> t1{2};
  EXPECT_NEAR(loss_generation(certain, t1), 0.0, 1e-12);
  const Matrix uniform = Matrix::Zero(5, 9);
  const std::vector<int> t5{0, 1, 2, 3, 8};
  EXPECT_NEAR(loss_generation(uniform, t5), 5.0 * std::log(9.0), 1e-12);
}

TEST(Losses, GenerationMatchesBruteForce) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  Matrix l(6, 11);
  for (Eigen::Index i = 0; i < l.size(); ++i) l.data()[i] = 3.0 * n(rng);
  const std::vector<int> t{4, -1, 0, 10, -1, 7};
  double brute = 0.0;
  for (Eigen::Index r = 0; r < l.rows(); ++r) {
    if (t[static_cast<std::size_t>(r)] < 0) continue;
    double z = 0.0;
    for (Eigen::Index c = 0; c < l.cols(); ++c) z += std::exp(l(r, c));
    brute -= l(r, t[static_cast<std::size_t>(r)]) - std::log(z);
  }
  EXPECT_NEAR(loss_generation(l, t), brute, 1e-9);
  ag::Tape tape;
  EXPECT_NEAR(loss_generation(tape.constant(l), t).scalar(), brute, 1e-9);
}

TEST(Losses, AttentionLosses) {
  const std::vector<double> eta{0.2, 0.5, 0.3};
  EXPECT_DOUBLE_EQ(loss_emotion(eta, eta), 0.0);
  EXPECT_DOUBLE_EQ(loss_emotion(std::vector<double>{0, 0}, std::vector<double>{1, 0}), 0.5);
  EXPECT_DOUBLE_EQ(loss_keyword(std::vector<double>{0, 0}, std::vector<double>{1, 0}), 0.5);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u;
  std::vector<double> a(7), e(7);
  double hand = 0.0;
  for (int i = 0; i < 7; ++i) {
    a[i] = u(rng);
    e[i] = u(rng);
    hand += (e[i] - a[i]) * (e[i] - a[i]);
  }
  hand /= 7.0;
  EXPECT_NEAR(loss_emotion(a, e), hand, 1e-9);
  EXPECT_NEAR(loss_keyword(a, e), hand, 1e-9);
  Matrix am(1, 7);
  for (int i = 0; i < 7; ++i) am(0, i) = a[i];
  ag::Tape t;
  EXPECT_NEAR(loss_emotion(t.constant(am), e).scalar(), hand, 1e-12);
  try {
    loss_emotion(std::vector<double>{1}, std::vector<double>{1, 2});
    FAIL();
  } catch (const TrainingError& err) {
    EXPECT_EQ(err.kind(), TrainingError::Kind::LengthMismatch);
  }
  EXPECT_THROW(loss_keyword(std::vector<double>{}, std::vector<double>{}), TrainingError);
}

TEST(Losses, JointLossArithmetic) {
  EXPECT_DOUBLE_EQ(joint_loss(2, 4, 6, LossWeights{}), 7.0);
  EXPECT_DOUBLE_EQ(joint_loss(2, 4, 6, LossWeights{1, 0, 0}), 2.0);
  const LossWeights w{0.7, 0.2, 1.3};
  EXPECT_NEAR(joint_loss(2 * 3.0, 4, 6, w) - joint_loss(3.0, 4, 6, w), 0.7 * 3.0, 1e-12);
  EXPECT_NEAR(joint_loss(1, 2 * 5.0, 6, w) - joint_loss(1, 5.0, 6, w), 0.2 * 5.0, 1e-12);
  ag::Tape t;
  const auto s = [&](double x) { return t.constant(Matrix::Constant(1, 1, x)); };
  EXPECT_DOUBLE_EQ(joint_loss(s(2), s(4), s(6), LossWeights{}).scalar(), 7.0);
}

TEST(Optimizer, ScheduleAndAblationNames) {
  OptimizerConfig c;
  c.lr = 1e-3;
  c.warmup_steps = 10;
  EXPECT_DOUBLE_EQ(learning_rate(c, 5), 5e-4);
  EXPECT_DOUBLE_EQ(learning_rate(c, 10), 1e-3);
  EXPECT_NEAR(learning_rate(c, 40), 5e-4, 1e-15);
  for (const char* n : {"full", "nm", "il", "ca", "al"}) EXPECT_EQ(AblationConfig::from_name(n).name(), n);
  EXPECT_FALSE(AblationConfig::from_name("nm").use_progressive_mask);
  EXPECT_FALSE(AblationConfig::from_name("ca").use_cross_attention_splice);
  EXPECT_THROW(AblationConfig::from_name("xx"), std::invalid_argument);
}

TEST(Optimizer, AdamWDecaysOnlyMatricesAndDetectsDivergence) {
  ag::ParameterSet ps;
  const int w = ps.add("w", Matrix::Constant(2, 2, 1.0));
  const int b = ps.add("b", Matrix::Constant(1, 2, 1.0));
  ps.zero_grad();
  OptimizerConfig c;
  c.warmup_steps = 1;
  c.lr = 0.1;
  c.weight_decay = 0.5;
  AdamW opt(c);
  opt.step(ps);  // zero gradients: only decay moves weights
  EXPECT_NEAR(ps.at(w).value(0, 0), 1.0 - 0.1 * 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(ps.at(b).value(0, 0), 1.0);
  ps.at(w).grad(0, 0) = std::nan("");
  try {
    opt.step(ps);
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.kind(), TrainingError::Kind::Divergence);
    EXPECT_EQ(e.step(), 2);
  }
}

TEST(DecoderInput, SingleUtteranceLayoutAndLabelRoundTrip) {
  Conversation conv;
  conv.utterances = {{Role::Speaker, "你好吗"}};
  Vocabulary v;
  for (const auto& t : text::tokenize("你好吗")) v.add(t);
  const std::vector<LabelTriple> labels{{CSLabel::None, EmotionLabel::None, StrategyLabel::Question}};
  const DecoderInput in = build_decoder_input(conv, 1, labels, v, 64);
  ASSERT_EQ(in.ids.size(), 1u + 3 + 3 + 1);
  EXPECT_EQ(in.ids.front(), Vocabulary::kCls);
  EXPECT_EQ(in.ids.back(), Vocabulary::kSep);
  EXPECT_EQ(in.ids[4], v.label_token(Taxonomy::Emotion, 0));
  EXPECT_EQ(in.ids[5], v.label_token(Taxonomy::CS, 0));
  EXPECT_EQ(in.ids[6], v.label_token(Taxonomy::Strategy, static_cast<int>(StrategyLabel::Question)));
  EXPECT_EQ(decode_label_tokens(in.ids, v), labels);
  const DecoderInput plain = build_decoder_input(conv, 1, labels, v, 64, 0, false);
  EXPECT_EQ(plain.ids.size(), 1u + 3 + 1);
}

TEST(DecoderInput, TruncationKeepsRecentUtterances) {
  const Corpus c = fixtures::synthetic(2, 20, 8, 10);
  const Conversation& conv = c.conversations.front();
  const Vocabulary v = Vocabulary::build(c);
  std::vector<LabelTriple> labels;
  for (const auto& u : conv.utterances) labels.push_back(u.labels());
  const DecoderInput full = build_decoder_input(conv, conv.utterances.size(), labels, v, 1000);
  const int budget = static_cast<int>(full.ids.size()) - 10;
  const DecoderInput cut = build_decoder_input(conv, conv.utterances.size(), labels, v, budget);
  EXPECT_LE(static_cast<int>(cut.ids.size()), budget);
  EXPECT_GT(cut.first_utterance, 0u);
  ASSERT_FALSE(cut.spans.empty());
  EXPECT_EQ(cut.spans.back().utterance, conv.utterances.size() - 1);
  // The kept suffix is token-identical to the tail of the full sequence.
  EXPECT_TRUE(std::equal(cut.ids.begin() + 1, cut.ids.end(), full.ids.end() - (cut.ids.size() - 1)));
  EXPECT_EQ(decode_label_tokens(cut.ids, v),
            std::vector<LabelTriple>(labels.begin() + static_cast<std::ptrdiff_t>(cut.first_utterance), labels.end()));
  try {
    build_decoder_input(conv, conv.utterances.size(), labels, v, 3);
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.kind(), TrainingError::Kind::LengthError);
  }
}

TEST(Pretrain, LossDecreasesAndIsDeterministic) {
  const Corpus c = fixtures::synthetic(21, 20);
  const Vocabulary v = Vocabulary::build(c);
  const KnowledgeResources res = KnowledgeResources::builtin();
  const auto ex = res.extractor(c);
  const auto d = knowledge::build_dictionaries(c, {}, *ex);
  PretrainOptions o;
  o.steps = 50;
  o.batch_size = 4;
  o.optimizer.lr = 3e-3;
  o.optimizer.warmup_steps = 5;
  const ModelConfig cfg = fixtures::tiny_config(v.size());
  PretrainReport r1, r2;
  pretrain_encoder(c, v, d.keyword, masking::keyword_schedule(), cfg, o, 4, &r1);
  pretrain_encoder(c, v, d.keyword, masking::keyword_schedule(), cfg, o, 4, &r2);
  ASSERT_EQ(r1.mlm_loss.size(), 50u);
  EXPECT_LT(mean_of(r1.mlm_loss, 45, 5), mean_of(r1.mlm_loss, 0, 5));
  EXPECT_EQ(r1.mlm_loss, r2.mlm_loss);
  EXPECT_EQ(r1.nsp_loss, r2.nsp_loss);

  masking::MaskSchedule classic = effective_schedule(masking::keyword_schedule(), AblationConfig::from_name("nm"));
  EXPECT_FALSE(classic.progressive);
  PretrainReport r3;
  o.steps = 5;
  pretrain_encoder(c, v, d.keyword, classic, cfg, o, 4, &r3);
  EXPECT_EQ(r3.mlm_loss.size(), 5u);
}

TEST(Classifiers, DegenerateSingleClassCorpus) {
  Corpus c = fixtures::synthetic(6, 12);
  for (auto& conv : c.conversations) {
    for (auto& u : conv.utterances) u.set_labels({CSLabel::Comfort, EmotionLabel::Fear, StrategyLabel::Others});
  }
  const Vocabulary v = Vocabulary::build(c);
  const ModelConfig cfg = fixtures::tiny_config(v.size());
  const PretrainModel enc(cfg, 1);
  ClassifierOptions o;
  o.epochs = 2;
  o.batch_size = 8;
  o.optimizer.lr = 3e-3;
  o.optimizer.warmup_steps = 5;
  ClassifierReport rep;
  ClassifierSet set = train_classifiers(c, nullptr, v, enc, enc, o, 2, &rep);
  for (Taxonomy t : kTaxonomies) {
    EXPECT_DOUBLE_EQ(rep.train_accuracy.at(t), 1.0);
    const auto& l = rep.losses.at(t);
    ASSERT_FALSE(l.empty());
    EXPECT_LT(l.back(), 0.1);
    EXPECT_LT(l.back(), l.front());
  }
  const auto acc = classifier_accuracy(set, c, v);
  for (Taxonomy t : kTaxonomies) EXPECT_DOUBLE_EQ(acc.at(t), 1.0);
  const Matrix st = set.states(c.conversations[0], 1, v);
  EXPECT_EQ(st.rows(), 3);
  EXPECT_EQ(st.cols(), cfg.d_model);
}

TEST(Classifiers, InputLayout) {
  const Corpus c = fixtures::synthetic(6, 3, 4, 4);
  const Vocabulary v = Vocabulary::build(c);
  const Conversation& conv = c.conversations[0];
  const ClassifierInput in = make_classifier_input(conv, 2, v, 1, 128);
  const auto prev = text::tokenize(conv.utterances[1].text);
  const auto target = text::tokenize(conv.utterances[2].text);
  ASSERT_EQ(in.ids.size(), 1 + prev.size() + 1 + target.size() + 1);
  EXPECT_EQ(in.ids[0], Vocabulary::kCls);
  EXPECT_EQ(in.ids[1 + prev.size()], Vocabulary::kSep);
  EXPECT_EQ(in.segment_ids[1], 0);
  EXPECT_EQ(in.segment_ids.back(), 1);
  const ClassifierInput first = make_classifier_input(conv, 0, v, 1, 128);
  EXPECT_EQ(first.ids.size(), 1 + 1 + text::tokenize(conv.utterances[0].text).size() + 1);
}

namespace {

struct DecoderFixture {
  Corpus corpus = fixtures::synthetic(31, 12, 2, 4);
  Vocabulary vocab = Vocabulary::build(corpus);
  ModelConfig cfg = fixtures::tiny_config(vocab.size());
  KnowledgeResources res = KnowledgeResources::builtin();
  std::unique_ptr<knowledge::DefaultExtractor> ex = res.extractor(corpus);
  ClassifierSet cls;

  DecoderFixture() {
    const PretrainModel enc(cfg, 1);
    ClassifierOptions o;
    o.max_steps = 2;
    cls = train_classifiers(corpus, nullptr, vocab, enc, enc, o, 3);
  }
  KnowledgeSources ks() const { return {&res.lexicon, ex.get()}; }
};

}  // namespace

TEST(DecoderExamples, ShapesTargetsAndSplicing) {
  DecoderFixture f;
  DecoderOptions o;
  const auto exs = make_decoder_examples(f.corpus, f.vocab, f.cfg, o, AblationConfig{}, &f.cls, f.ks());
  ASSERT_FALSE(exs.empty());
  for (const auto& ex : exs) {
    EXPECT_EQ(ex.ids.size(), ex.targets.size());
    int response_rows = 0;
    for (int t : ex.targets) response_rows += t >= 0;
    EXPECT_EQ(response_rows, ex.response_tokens + 1);  // + [SEP]
    EXPECT_EQ(ex.query_rows.size(), static_cast<std::size_t>(ex.response_tokens + 1));
    EXPECT_EQ(ex.ids.back(), Vocabulary::kSep);
    EXPECT_EQ(ex.splice_points.size(), 3 * ex.context.spans.size());
    EXPECT_EQ(ex.classifier_states.rows(), static_cast<Eigen::Index>(ex.splice_points.size()));
    EXPECT_EQ(ex.eta_emo.size(), static_cast<std::size_t>(ex.span_end - ex.span_begin));
    EXPECT_EQ(ex.eta_kw.size(), ex.eta_emo.size());
    for (double e : ex.eta_emo) {
      EXPECT_GE(e, 0.0);
      EXPECT_LE(e, 1.0);
    }
    if (!ex.eta_kw.empty()) {
      const double s = std::accumulate(ex.eta_kw.begin(), ex.eta_kw.end(), 0.0);
      EXPECT_TRUE(std::abs(s - 1.0) < 1e-6 || s == 0.0);
    }
  }
  const auto il = make_decoder_examples(f.corpus, f.vocab, f.cfg, o, AblationConfig::from_name("il"), &f.cls, f.ks());
  for (const auto& ex : il) {
    EXPECT_TRUE(ex.splice_points.empty());
    for (int id : ex.ids) EXPECT_FALSE(f.vocab.is_label(id));
  }
  const auto ca = make_decoder_examples(f.corpus, f.vocab, f.cfg, o, AblationConfig::from_name("ca"), nullptr, f.ks());
  EXPECT_TRUE(ca.front().splice_points.empty());
  try {
    make_decoder_examples(f.corpus, f.vocab, f.cfg, o, AblationConfig{}, nullptr, f.ks());
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.kind(), TrainingError::Kind::MissingArtifact);
  }
}

TEST(TrainDecoder, LoggedTotalsMatchRecomputation) {
  DecoderFixture f;
  DecoderOptions o;
  o.steps = 20;
  o.batch_size = 4;
  o.weights = {1.0, 0.3, 0.7};
  TrainReport rep;
  const auto exs = make_decoder_examples(f.corpus, f.vocab, f.cfg, o, AblationConfig{}, &f.cls, f.ks());
  train_decoder(exs, f.cfg, o, AblationConfig{}, 5, &rep);
  ASSERT_EQ(rep.steps.size(), 20u);
  for (const auto& s : rep.steps) {
    EXPECT_NEAR(s.total, joint_loss(s.gen, s.emo, s.kw, o.weights), 1e-9 * std::max(1.0, std::abs(s.total)));
    EXPECT_TRUE(std::isfinite(s.grad_norm));
  }
  std::ostringstream os;
  rep.write_jsonl(os);
  const std::string log = os.str();
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 21);  // per-step lines plus a summary
}

TEST(TrainDecoder, AttentionLossOffMatchesZeroWeights) {
  DecoderFixture f;
  DecoderOptions o;
  o.steps = 8;
  o.batch_size = 4;
  o.weights = {1.0, 0.0, 0.0};
  const auto exs = make_decoder_examples(f.corpus, f.vocab, f.cfg, o, AblationConfig{}, &f.cls, f.ks());
  const GeneratorModel a = train_decoder(exs, f.cfg, o, AblationConfig{}, 7);
  const GeneratorModel b = train_decoder(exs, f.cfg, o, AblationConfig::from_name("al"), 7);
  ASSERT_EQ(a.params.size(), b.params.size());
  for (int i = 0; i < a.params.size(); ++i) EXPECT_TRUE(a.params.at(i).value == b.params.at(i).value);
}
