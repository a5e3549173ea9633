#include <gtest/gtest.h>

#include <cmath>

#include "csd/lexicon.hpp"
#include "csd/text.hpp"
#include "test_support.hpp"

using namespace csd;
using namespace csd::knowledge;

namespace {

std::vector<std::string> toks(const std::string& s) { return text::tokenize(s); }

}  // namespace

TEST(Lexicon, ParsesFixtureRow) {
  const VALexicon lex = parse_va_lexicon("#r_min=1\tr_max=9\n开心\t7.1\t6.3\n");
  ASSERT_NE(lex.find("开心"), nullptr);
  EXPECT_DOUBLE_EQ(lex.find("开心")->valence, 7.1);
  EXPECT_DOUBLE_EQ(lex.find("开心")->arousal, 6.3);
  EXPECT_EQ(lex.find("难过"), nullptr);
}

TEST(Lexicon, HeaderOnlyIsEmpty) {
  const VALexicon lex = parse_va_lexicon("#r_min=1\tr_max=9\n");
  EXPECT_EQ(lex.size(), 0u);
}

TEST(Lexicon, OutOfRangeValence) {
  try {
    parse_va_lexicon("#r_min=1\tr_max=9\nword\t12\t5\n");
    FAIL();
  } catch (const LexiconError& e) {
    EXPECT_EQ(e.kind(), LexiconError::Kind::RangeError);
  }
  EXPECT_THROW(parse_va_lexicon("word\tx\t5\n"), LexiconError);
}

TEST(Lexicon, EmotionIntensityHandValues) {
  VALexicon lex(1.0, 9.0);
  lex.insert("w", {6.0, 7.0});
  lex.insert("low", {1.0, 1.0});
  EXPECT_DOUBLE_EQ(emotion_intensity("w", lex), 1.375);
  EXPECT_DOUBLE_EQ(emotion_intensity("low", lex), 0.0);
  EXPECT_DOUBLE_EQ(emotion_intensity("absent", lex), 0.0);
}

TEST(Lexicon, SentimentExtremesAndAverage) {
  VALexicon lex(1.0, 9.0);
  lex.insert("great", {9.0, 5.0});
  lex.insert("bad", {2.0, 5.0});
  DefaultExtractor ex(lex, {});
  EXPECT_DOUBLE_EQ(sentiment_score("nothing here", ex), 0.0);
  EXPECT_DOUBLE_EQ(sentiment_score("great", ex), 1.0);
  // ((9 - 5) / 4 + (2 - 5) / 4) / 2
  EXPECT_NEAR(sentiment_score("great and bad", ex), 0.125, 1e-9);
}

TEST(Lexicon, SegmenterForwardMaximumMatching) {
  Segmenter seg({"头发", "理发店"});
  const auto t = toks("去理发店剪头发");
  const auto spans = seg.segment(t);
  std::vector<std::string> words;
  for (const auto& s : spans) words.push_back(s.text);
  EXPECT_EQ(words, (std::vector<std::string>{"去", "理发店", "剪", "头发"}));
}

TEST(Lexicon, KeywordsHandTfIdf) {
  DefaultExtractor ex(VALexicon{}, {});
  ex.fit_idf(std::vector<std::vector<std::string>>{toks("apple banana apple"), toks("banana cherry"), toks("banana date")});
  const auto kw = extract_keywords("apple apple banana", 5, ex);
  ASSERT_EQ(kw.size(), 2u);
  EXPECT_EQ(kw[0].word, "apple");
  EXPECT_NEAR(kw[0].score, 2.0 / 3.0 * (std::log(4.0 / 2.0) + 1.0), 1e-12);
  EXPECT_EQ(kw[1].word, "banana");
  EXPECT_NEAR(kw[1].score, 1.0 / 3.0 * (std::log(4.0 / 4.0) + 1.0), 1e-12);
  EXPECT_TRUE(extract_keywords("", 3, ex).empty());
  EXPECT_EQ(extract_keywords("cherry date", 10, ex).size(), 2u);
}

TEST(Lexicon, KeywordIntensitySingleton) {
  DefaultExtractor ex(VALexicon{}, {});
  const auto t = toks("the apple");
  const auto eta = keyword_intensity(t, ex, 3);
  ASSERT_EQ(eta.size(), 2u);
  EXPECT_DOUBLE_EQ(eta[0], 0.0);  // stopword
  EXPECT_DOUBLE_EQ(eta[1], 1.0);
}

TEST(Lexicon, KeywordIntensityEqualScoresSplitEvenly) {
  DefaultExtractor ex(VALexicon{}, {});
  const auto eta = keyword_intensity(toks("apple pear"), ex, 3);
  EXPECT_NEAR(eta[0], 0.5, 1e-12);
  EXPECT_NEAR(eta[1], 0.5, 1e-12);
}

namespace {

/// Extractor with scripted keyword scores.
class ScriptedExtractor : public KnowledgeExtractor {
 public:
  std::vector<ScoredWord> scores;
  std::vector<WordSpan> segment(std::span<const std::string> tokens) const override {
    std::vector<WordSpan> out;
    for (std::size_t i = 0; i < tokens.size(); ++i) out.push_back({i, 1, tokens[i]});
    return out;
  }
  double sentiment(std::span<const std::string>) const override { return 0.0; }
  std::vector<ScoredWord> keywords(std::span<const std::string>, int k) const override {
    auto s = scores;
    if (s.size() > static_cast<std::size_t>(k)) s.resize(static_cast<std::size_t>(k));
    return s;
  }
};

}  // namespace

TEST(Lexicon, KeywordIntensitySoftmaxOfScores) {
  ScriptedExtractor ex;
  ex.scores = {{"a", 2.0}, {"b", 1.0}};
  const auto eta = keyword_intensity(toks("a x b"), ex, 3);
  EXPECT_NEAR(eta[0], 0.7311, 1e-4);
  EXPECT_NEAR(eta[1], 0.0, 1e-15);
  EXPECT_NEAR(eta[2], 0.2689, 1e-4);
}

TEST(Lexicon, EmotionPerTokenLongestMatch) {
  VALexicon lex(1.0, 9.0);
  lex.insert("开心", {9.0, 9.0});
  lex.insert("开", {1.0, 1.0});
  const auto eta = emotion_intensity_per_token(toks("很开心"), lex);
  EXPECT_EQ(eta, (std::vector<double>{0.0, 2.0, 2.0}));
}

TEST(Dictionaries, UnreachableThresholdGivesEmptyEmotionDict) {
  const auto res_bank = TemplateBank::standard();
  DefaultExtractor ex(parse_va_lexicon(res_bank.lexicon_tsv()), res_bank.word_list());
  const Corpus c = fixtures::synthetic(3, 30);
  ex.fit_idf(c);
  ExtractorConfig cfg;
  cfg.lambda_emo = 1.0;
  const Dictionaries d = build_dictionaries(c, cfg, ex);
  EXPECT_TRUE(d.emotion.empty());
  EXPECT_GT(d.keyword.entity_count(), 0u);
}

TEST(Dictionaries, ScriptedEmotionSentence) {
  VALexicon lex(1.0, 9.0);
  lex.insert("joy", {8.6, 5.0});  // sentiment 0.9
  lex.insert("meh", {5.4, 5.0});  // sentiment 0.1
  DefaultExtractor ex(lex, {});
  Corpus c;
  Conversation conv;
  conv.utterances = {{Role::Speaker, "joy"}, {Role::Listener, "meh"}};
  c.conversations.push_back(conv);
  const Dictionaries d = build_dictionaries(c, ExtractorConfig{}, ex);
  EXPECT_TRUE(d.emotion.contains_sentence(toks("joy")));
  EXPECT_FALSE(d.emotion.contains_sentence(toks("meh")));
  EXPECT_EQ(d.emotion.sentence_count(), 1u);
}

TEST(Dictionaries, KeywordEntitiesComeFromCorpus) {
  const auto bank = TemplateBank::standard();
  DefaultExtractor ex(parse_va_lexicon(bank.lexicon_tsv()), bank.word_list());
  const Corpus c = fixtures::synthetic(9, 40);
  ex.fit_idf(c);
  const Dictionaries d = build_dictionaries(c, ExtractorConfig{}, ex);
  std::string all;
  for (const auto& conv : c.conversations) {
    for (const auto& u : conv.utterances) all += u.text + "\n";
  }
  for (int len = 1; len <= kMaxEntityTokens; ++len) {
    for (const auto& e : d.keyword.entities(len)) EXPECT_NE(all.find(e), std::string::npos) << e;
  }
}

TEST(Dictionaries, SerializeRoundTrip) {
  const auto bank = TemplateBank::standard();
  DefaultExtractor ex(parse_va_lexicon(bank.lexicon_tsv()), bank.word_list());
  const Corpus c = fixtures::synthetic(4, 20);
  ex.fit_idf(c);
  const Dictionaries d = build_dictionaries(c, ExtractorConfig{}, ex);
  const Dictionaries back = parse_dictionaries(serialize_dictionaries(d));
  EXPECT_EQ(serialize_dictionaries(back), serialize_dictionaries(d));
  EXPECT_EQ(back.keyword.entity_count(), d.keyword.entity_count());
}
