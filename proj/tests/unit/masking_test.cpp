#include <gtest/gtest.h>

#include <random>

#include "csd/masking.hpp"
#include "csd/text.hpp"
#include "csd/vocab.hpp"
#include "test_support.hpp"

using namespace csd;
using namespace csd::masking;

namespace {

struct HairFixture {
  Vocabulary vocab;
  knowledge::KnowledgeDict dict;
  PretrainSequence seq;
};

HairFixture hair_setup() {
  HairFixture s;
  const auto a = text::tokenize("你在哪里剪的头发");
  const auto b = text::tokenize("楼下");
  for (const auto& t : a) s.vocab.add(t);
  for (const auto& t : b) s.vocab.add(t);
  const auto hair = text::tokenize("头发");
  s.dict.add_entity(hair);
  s.seq = make_pretrain_sequence(a, b, s.vocab);
  return s;
}

}  // namespace

TEST(Masking, CurrentStage) {
  const MaskSchedule s = keyword_schedule();
  EXPECT_EQ(current_stage(0, 100, s), 1);
  EXPECT_EQ(current_stage(50, 100, s), 3);
  EXPECT_EQ(current_stage(99, 100, s), 5);
  EXPECT_EQ(current_stage(1000, 100, s), 5);
}

TEST(Masking, PresetsValidate) {
  EXPECT_NO_THROW(validate(keyword_schedule()));
  EXPECT_NO_THROW(validate(emotion_schedule()));
  MaskSchedule bad = keyword_schedule();
  bad.lambdas[0] = 1.5;
  EXPECT_THROW(validate(bad), std::invalid_argument);
  bad = keyword_schedule();
  bad.stage_boundaries = {0.5, 0.4, 0.6, 0.8, 1.0};
  EXPECT_THROW(validate(bad), std::invalid_argument);
}

TEST(Masking, SequenceLayout) {
  const HairFixture s = hair_setup();
  EXPECT_EQ(s.seq.ids.front(), Vocabulary::kCls);
  EXPECT_EQ(s.seq.ids.size(), 1u + 8 + 1 + 2 + 1);
  EXPECT_EQ(s.seq.segment_ids.back(), 1);
  EXPECT_EQ(s.seq.segment_ids[1], 0);
}

TEST(Masking, ZeroRatesLeaveInputUntouched) {
  const HairFixture s = hair_setup();
  MaskSchedule sched = keyword_schedule();
  sched.lambdas.fill(0.0);
  sched.base_mask_rate = 0.0;
  std::mt19937_64 rng(1);
  const MaskedExample ex = mask_example(s.seq, s.dict, 2, sched, s.vocab, rng);
  EXPECT_EQ(ex.input_ids, s.seq.ids);
  EXPECT_TRUE(ex.mlm_targets.empty());
  EXPECT_EQ(ex.eligible[1], 1);
  EXPECT_EQ(ex.masked[1], 0);
}

TEST(Masking, CertainLambdaMasksWholeEntity) {
  const HairFixture s = hair_setup();
  MaskSchedule sched = keyword_schedule();
  sched.lambdas[1] = 1.0;
  sched.base_mask_rate = 0.0;
  std::mt19937_64 rng(1);
  const MaskedExample ex = mask_example(s.seq, s.dict, 2, sched, s.vocab, rng);
  // "头发" sits at text positions 6 and 7, i.e. ids 7 and 8 after [CLS].
  ASSERT_EQ(ex.mlm_targets.size(), 2u);
  EXPECT_EQ(ex.mlm_targets.at(7), s.vocab.id("头"));
  EXPECT_EQ(ex.mlm_targets.at(8), s.vocab.id("发"));
  EXPECT_EQ(ex.input_ids[7], Vocabulary::kMask);
  EXPECT_EQ(ex.input_ids[8], Vocabulary::kMask);
}

TEST(Masking, MonteCarloStageOneFrequency) {
  HairFixture s = hair_setup();
  s.dict.add_entity(text::tokenize("剪"));
  MaskSchedule sched = keyword_schedule();
  sched.base_mask_rate = 0.0;
  std::mt19937_64 rng(2024);
  long eligible = 0, masked = 0;
  for (int i = 0; i < 10000; ++i) {
    const MaskedExample ex = mask_example(s.seq, s.dict, 1, sched, s.vocab, rng);
    eligible += ex.eligible[0];
    masked += ex.masked[0];
  }
  EXPECT_EQ(eligible, 10000);
  const double f = static_cast<double>(masked) / static_cast<double>(eligible);
  EXPECT_GE(f, 0.88);
  EXPECT_LE(f, 0.92);
}

TEST(Masking, ClassicModeOnlyUsesTokens) {
  const HairFixture s = hair_setup();
  MaskSchedule sched = keyword_schedule();
  sched.progressive = false;
  std::mt19937_64 rng(5);
  long spans = 0, masks = 0, randoms = 0, keeps = 0;
  for (int i = 0; i < 4000; ++i) {
    const MaskedExample ex = mask_example(s.seq, s.dict, 2, sched, s.vocab, rng);
    for (const auto& sp : ex.spans) {
      EXPECT_EQ(sp.kind, MaskKind::Token);
      EXPECT_EQ(sp.length, 1u);
      ++spans;
      const int in = ex.input_ids[sp.begin];
      if (in == Vocabulary::kMask) {
        ++masks;
      } else if (in == s.seq.ids[sp.begin]) {
        ++keeps;
      } else {
        ++randoms;
      }
    }
    EXPECT_EQ(ex.eligible[1], 0);
  }
  // 10 text tokens at 15 % each.
  EXPECT_NEAR(static_cast<double>(spans) / 4000.0, 1.5, 0.1);
  EXPECT_NEAR(static_cast<double>(masks) / static_cast<double>(spans), 0.8, 0.03);
  // A random replacement may land on the original token, so keeps >= 10 %.
  EXPECT_GT(randoms, 0);
  EXPECT_GT(keeps, 0);
}

TEST(Masking, NspForcedPair) {
  Corpus c;
  Conversation conv;
  conv.utterances = {{Role::Speaker, "a"}, {Role::Listener, "b"}};
  c.conversations.push_back(conv);
  std::mt19937_64 rng(1);
  const NspPair p = make_nsp_pair(c, rng, true);
  EXPECT_TRUE(p.is_next);
  EXPECT_EQ(p.conv_a, 0u);
  EXPECT_EQ(p.utt_a, 0u);
  EXPECT_EQ(p.conv_b, 0u);
  EXPECT_EQ(p.utt_b, 1u);
}

TEST(Masking, NspRateAndNegativeSource) {
  const Corpus c = fixtures::synthetic(3, 20);
  std::mt19937_64 rng(77);
  int pos = 0;
  for (int i = 0; i < 10000; ++i) {
    const NspPair p = make_nsp_pair(c, rng);
    if (p.is_next) {
      ++pos;
      EXPECT_EQ(p.conv_a, p.conv_b);
      EXPECT_EQ(p.utt_b, p.utt_a + 1);
    } else {
      EXPECT_NE(p.conv_a, p.conv_b);
    }
  }
  EXPECT_GE(pos / 10000.0, 0.48);
  EXPECT_LE(pos / 10000.0, 0.52);
}

TEST(Masking, MeasureMaskRate) {
  HairFixture s = hair_setup();
  MaskSchedule sched = keyword_schedule();
  sched.base_mask_rate = 0.0;
  std::mt19937_64 rng(3);
  std::vector<MaskedExample> exs;
  for (int i = 0; i < 2000; ++i) exs.push_back(mask_example(s.seq, s.dict, 2, sched, s.vocab, rng));
  const MaskRates r = measure_mask_rate(exs);
  EXPECT_EQ(r.eligible[1], 2000);
  EXPECT_NEAR(r.ratio[1], 0.9, 0.03);
}

TEST(Vocab, LayoutAndRoundTrip) {
  const Corpus c = fixtures::synthetic(1, 10);
  const Vocabulary v = Vocabulary::build(c);
  EXPECT_EQ(v.token(Vocabulary::kPad), "[PAD]");
  EXPECT_EQ(v.first_text_id(), 27);
  for (Taxonomy t : kTaxonomies) {
    for (int l = 0; l < label_count(t); ++l) {
      const int id = v.label_token(t, l);
      EXPECT_TRUE(v.is_label(id));
      const auto back = v.label_of(id);
      ASSERT_TRUE(back.has_value());
      EXPECT_EQ(back->first, t);
      EXPECT_EQ(back->second, l);
    }
  }
  EXPECT_EQ(Vocabulary::parse(v.serialize()), v);
  EXPECT_EQ(v.id("never-seen-token"), Vocabulary::kUnk);
}
