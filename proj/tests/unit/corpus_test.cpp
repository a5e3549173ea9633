#include <gtest/gtest.h>

#include <set>

#include "csd/corpus.hpp"
#include "csd/text.hpp"
#include "test_support.hpp"

using namespace csd;

TEST(Text, TokenizeMixedScripts) {
  const auto t = text::tokenize("你好, world! it's ok");
  const std::vector<std::string> want{"你", "好", ",", "world", "!", "it's", "ok"};
  EXPECT_EQ(t, want);
  EXPECT_EQ(text::detokenize(std::vector<std::string>{"it's", "ok"}), "it's ok");
  EXPECT_EQ(text::detokenize(std::vector<std::string>{"你", "好"}), "你好");
}

TEST(Text, InvalidUtf8DecodesToReplacement) {
  const auto cps = text::decode_utf8(std::string("a\xff", 2));
  ASSERT_EQ(cps.size(), 2u);
  EXPECT_EQ(cps[1], U'�');
}

TEST(Corpus, ParsesPaperExample) {
  const Corpus c = parse_corpus(
      "你在哪里剪的头发？<CS>Inquiry<EMO>None<strategy>Question\n"
      "在楼下的理发店。<CS>None<EMO>None<strategy>None\n");
  ASSERT_EQ(c.conversations.size(), 1u);
  const Utterance& u = c.conversations[0].utterances[0];
  EXPECT_EQ(u.role, Role::Speaker);
  EXPECT_EQ(u.text, "你在哪里剪的头发？");
  EXPECT_EQ(u.cs, CSLabel::Inquiry);
  EXPECT_EQ(u.emo, EmotionLabel::None);
  EXPECT_EQ(u.strategy, StrategyLabel::Question);
  EXPECT_EQ(c.conversations[0].utterances[1].role, Role::Listener);
}

TEST(Corpus, EmptyDocumentIsAnError) {
  EXPECT_THROW(parse_corpus(""), CorpusError);
  EXPECT_THROW(parse_corpus("\n\n"), CorpusError);
}

TEST(Corpus, SingleUtteranceConversationRejected) {
  try {
    parse_corpus("hi<CS>None<EMO>None<strategy>None\n");
    FAIL();
  } catch (const CorpusError& e) {
    EXPECT_EQ(e.kind(), CorpusError::Kind::AlternationError);
  }
}

TEST(Corpus, MalformedLineReportsLine) {
  try {
    parse_corpus("a<CS>None<EMO>None<strategy>None\nbroken line\n");
    FAIL();
  } catch (const CorpusError& e) {
    EXPECT_EQ(e.kind(), CorpusError::Kind::MalformedLine);
    EXPECT_EQ(e.line(), 2);
  }
}

TEST(Corpus, UnknownLabelRejected) {
  EXPECT_THROW(parse_corpus("a<CS>Bogus<EMO>None<strategy>None\nb<CS>None<EMO>None<strategy>None\n"), CorpusError);
}

TEST(Corpus, SerializeOnePairIsTwoLinesAndBlank) {
  Corpus c;
  Conversation conv;
  Utterance a{Role::Speaker, "你好", CSLabel::Inquiry, EmotionLabel::Happiness, StrategyLabel::Question};
  Utterance b{Role::Listener, "好的", CSLabel::None, EmotionLabel::None, StrategyLabel::ReflectionOfFeelings};
  conv.utterances = {a, b};
  c.conversations.push_back(conv);
  const std::string s = serialize_corpus(c);
  EXPECT_EQ(s,
            "你好<CS>Inquiry<EMO>Happiness<strategy>Question\n"
            "好的<CS>None<EMO>None<strategy>Reflection of feelings\n\n");
  EXPECT_EQ(parse_corpus(s), c);
}

TEST(Corpus, CanonicalLabelSpellingOnSerialize) {
  const Corpus c = parse_corpus(
      "a<CS>inquiry<EMO>HAPPINESS<strategy>reflectionoffeelings\nb<CS>None<EMO>None<strategy>self-disclosure\n");
  EXPECT_EQ(serialize_corpus(c),
            "a<CS>Inquiry<EMO>Happiness<strategy>Reflection of feelings\n"
            "b<CS>None<EMO>None<strategy>Self-disclosure\n\n");
}

TEST(Corpus, RolePrefixMustAgree) {
  const std::string ok =
      "SPEAKER: a<CS>None<EMO>None<strategy>None\nLISTENER: b<CS>None<EMO>None<strategy>None\n";
  EXPECT_EQ(parse_corpus(ok).conversations[0].utterances[0].text, "a");
  const std::string bad =
      "LISTENER: a<CS>None<EMO>None<strategy>None\nSPEAKER: b<CS>None<EMO>None<strategy>None\n";
  EXPECT_THROW(parse_corpus(bad), CorpusError);
}

TEST(Corpus, RoundTripSynthetic50) {
  const Corpus c = fixtures::synthetic(11, 50);
  const std::string doc = serialize_corpus(c);
  EXPECT_EQ(serialize_corpus(parse_corpus(doc)), doc);
  EXPECT_EQ(parse_corpus(doc), c);
}

TEST(Corpus, StatsTrivialCase) {
  Corpus c;
  Conversation conv;
  conv.utterances = {{Role::Speaker, "a b c"}, {Role::Listener, "d e f"}};
  c.conversations.push_back(conv);
  const StatsReport r = corpus_stats(c);
  EXPECT_EQ(r.conversation_count, 1u);
  EXPECT_EQ(r.utterance_count, 2u);
  EXPECT_DOUBLE_EQ(r.avg_utterances_per_conversation, 2.0);
  EXPECT_DOUBLE_EQ(r.avg_tokens_per_utterance, 3.0);
  EXPECT_DOUBLE_EQ(r.avg_tokens_per_conversation, 6.0);
  EXPECT_EQ(r.label_histograms.at(Taxonomy::CS)[0].count, 2u);
  EXPECT_DOUBLE_EQ(r.label_histograms.at(Taxonomy::CS)[0].proportion, 100.0);
}

TEST(Corpus, FormatStatsIsAligned) {
  const std::string s = format_stats(corpus_stats(fixtures::synthetic(3, 10)));
  EXPECT_NE(s.find("Conversations"), std::string::npos);
  EXPECT_NE(s.find("Average token per utterance"), std::string::npos);
}

TEST(Corpus, SplitSizesAndDisjointness) {
  const Corpus c = fixtures::synthetic(5, 100);
  const CorpusSplit s = split_corpus(c, {0.8, 0.1, 0.1}, 42);
  EXPECT_EQ(s.train.conversations.size(), 80u);
  EXPECT_EQ(s.dev.conversations.size(), 10u);
  EXPECT_EQ(s.test.conversations.size(), 10u);
  std::multiset<std::string> all, parts;
  for (const auto& conv : c.conversations) all.insert(serialize_corpus(Corpus{{conv}}));
  for (const Corpus* p : {&s.train, &s.dev, &s.test}) {
    for (const auto& conv : p->conversations) parts.insert(serialize_corpus(Corpus{{conv}}));
  }
  EXPECT_EQ(all, parts);
}

TEST(Corpus, SplitAllTrainIsIdentity) {
  const Corpus c = fixtures::synthetic(5, 30);
  const CorpusSplit s = split_corpus(c, {1.0, 0.0, 0.0}, 1);
  EXPECT_EQ(s.train, c);
  EXPECT_TRUE(s.dev.conversations.empty());
  EXPECT_TRUE(s.test.conversations.empty());
}

TEST(Corpus, SplitBadRatios) {
  const Corpus c = fixtures::synthetic(5, 10);
  EXPECT_THROW(split_corpus(c, {0.5, 0.1, 0.1}, 1), CorpusError);
  EXPECT_THROW(split_corpus(c, {1.2, -0.1, -0.1}, 1), CorpusError);
}

TEST(Synth, DeterministicAndValid) {
  const Corpus a = fixtures::synthetic(7, 100);
  const Corpus b = fixtures::synthetic(7, 100);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, fixtures::synthetic(8, 100));
  for (const auto& conv : a.conversations) EXPECT_NO_THROW(validate_conversation(conv));
  EXPECT_NO_THROW(parse_corpus(serialize_corpus(a)));
}

TEST(Synth, InquiryProportionInBand) {
  const StatsReport r = corpus_stats(fixtures::synthetic(7, 400));
  const double inquiry = r.label_histograms.at(Taxonomy::CS)[static_cast<int>(CSLabel::Inquiry)].proportion;
  EXPECT_GE(inquiry, 14.7);
  EXPECT_LE(inquiry, 34.7);
}
