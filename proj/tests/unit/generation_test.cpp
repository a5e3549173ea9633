#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "bundle_fixture.hpp"
#include "csd/generation.hpp"

using namespace csd;

namespace {

GenerationParams params(double t, int k, double p) {
  GenerationParams g;
  g.temperature = t;
  g.top_k = k;
  g.top_p = p;
  return g;
}

Conversation context_of(const char* text) {
  Conversation c;
  c.utterances = {{Role::Speaker, text}};
  return c;
}

}  // namespace

TEST(FilterLogits, TopKOneIsOneHotAtArgmax) {
  const std::vector<double> l{0.3, 2.5, -1.0, 2.4, 0.0};
  const auto p = filter_logits(l, params(1.3, 1, 1.0));
  EXPECT_EQ(p, (std::vector<double>{0, 1, 0, 0, 0}));
}

TEST(FilterLogits, NoCutsIsPlainSoftmax) {
  const std::vector<double> l{0.3, 2.5, -1.0, 2.4, 0.0};
  const auto p = filter_logits(l, params(1.0, 0, 1.0));
  double z = 0.0;
  for (double v : l) z += std::exp(v);
  for (std::size_t i = 0; i < l.size(); ++i) EXPECT_NEAR(p[i], std::exp(l[i]) / z, 1e-12);
}

// Oracle: numpy softmax of (2, 1, 0, -1) / 0.7.
TEST(FilterLogits, HandFixture) {
  const std::vector<double> l{2, 1, 0, -1};
  const auto full = filter_logits(l, params(0.7, 0, 1.0));
  const double expected[] = {0.7628652790722502, 0.18282145479510928, 0.0438133511254412, 0.010499915007199427};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(full[i], expected[i], 1e-12);
  EXPECT_EQ(filter_logits(l, params(0.7, 0, 0.5)), (std::vector<double>{1, 0, 0, 0}));
  const auto p9 = filter_logits(l, params(0.7, 0, 0.9));
  EXPECT_NEAR(p9[0], 0.8066786301976914, 1e-12);
  EXPECT_NEAR(p9[1], 0.19332136980230868, 1e-12);
  EXPECT_EQ(p9[2], 0.0);
  EXPECT_EQ(p9[3], 0.0);
}

TEST(FilterLogits, TiesInfinitiesAndValidation) {
  const double ninf = -std::numeric_limits<double>::infinity();
  EXPECT_EQ(filter_logits(std::vector<double>{1, 3, 3}, params(1, 1, 1)), (std::vector<double>{0, 1, 0}));
  const auto p = filter_logits(std::vector<double>{ninf, 0.0, ninf}, params(1, 0, 1));
  EXPECT_EQ(p, (std::vector<double>{0, 1, 0}));
  EXPECT_EQ(filter_logits(std::vector<double>{ninf, ninf}, params(1, 0, 1)), (std::vector<double>{0, 0}));
  EXPECT_THROW(filter_logits(std::vector<double>{1}, params(0.0, 0, 1)), std::invalid_argument);
  EXPECT_THROW(filter_logits(std::vector<double>{1}, params(1, -1, 1)), std::invalid_argument);
  EXPECT_THROW(filter_logits(std::vector<double>{1}, params(1, 0, 0.0)), std::invalid_argument);
  EXPECT_THROW(filter_logits(std::vector<double>{1}, params(1, 0, 1.5)), std::invalid_argument);
  GenerationParams g = params(0.0, 0, 1.0);
  g.greedy = true;
  EXPECT_EQ(filter_logits(std::vector<double>{0.5, 0.1, 0.9}, g), (std::vector<double>{0, 0, 1}));
}

TEST(Sampling, DeterministicForSeedAndAuditConsistent) {
  auto bundle = fixtures::shared_tiny_bundle();
  const Conversation ctx = context_of("我最近睡不好，心里很烦。");
  GenerationParams g = params(1.0, 8, 0.9);
  g.seed = 42;
  g.max_new_tokens = 10;
  const GeneratedResponse a = sample_response(ctx, *bundle, g);
  const GeneratedResponse b = sample_response(ctx, *bundle, g);
  EXPECT_EQ(a.ids, b.ids);
  EXPECT_EQ(a.text, b.text);
  EXPECT_LE(a.ids.size(), 10u);
  ASSERT_EQ(a.context_labels.size(), 1u);
  EXPECT_EQ(a.labels, a.context_labels[0]);
  ASSERT_GE(a.audit.size(), a.ids.size());
  for (std::size_t i = 0; i < a.audit.size(); ++i) {
    const auto& s = a.audit[i];
    EXPECT_LE(s.support.size(), 8u);
    EXPECT_NE(std::find(s.support.begin(), s.support.end(), s.chosen), s.support.end());
    if (i < a.ids.size()) {
      EXPECT_EQ(s.chosen, a.ids[i]);
      EXPECT_FALSE(bundle->vocab.is_special(a.ids[i]));
      EXPECT_FALSE(bundle->vocab.is_label(a.ids[i]));
    }
  }
  EXPECT_FALSE(a.ids.empty());
}

TEST(Sampling, SuppliedLabelsAreUsedAndGreedyIgnoresSeed) {
  auto bundle = fixtures::shared_tiny_bundle();
  const Conversation ctx = context_of("工作压力太大了");
  const std::vector<LabelTriple> labels{{CSLabel::Comfort, EmotionLabel::Sadness, StrategyLabel::ReflectionOfFeelings}};
  GenerationParams g;
  g.greedy = true;
  g.seed = 1;
  const auto a = sample_response(ctx, *bundle, g, labels);
  g.seed = 999;
  const auto b = sample_response(ctx, *bundle, g, labels);
  EXPECT_EQ(a.ids, b.ids);
  EXPECT_EQ(a.context_labels, labels);
  EXPECT_EQ(a.labels, labels[0]);
  for (const auto& s : a.audit) EXPECT_EQ(s.support.size(), 1u);
}

TEST(Sampling, ClassifierLabelsForWholeContext) {
  auto bundle = fixtures::shared_tiny_bundle();
  Conversation ctx;
  ctx.utterances = {{Role::Speaker, "我很难过"}, {Role::Listener, "怎么了？"}, {Role::Speaker, "考试没考好"}};
  const auto labels = predict_context_labels(ctx, *bundle);
  ASSERT_EQ(labels.size(), 3u);
  const auto r = sample_response(ctx, *bundle, GenerationParams{});
  EXPECT_EQ(r.context_labels, labels);
  EXPECT_EQ(r.labels, labels[2]);
}
