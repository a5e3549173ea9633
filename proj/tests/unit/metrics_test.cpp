#include <gtest/gtest.h>

#include <cmath>

#include "bundle_fixture.hpp"
#include "csd/metrics.hpp"

using namespace csd;

namespace {

// Oracle values were produced with nltk.translate.bleu_score.corpus_bleu.
struct BleuFixture {
  std::vector<std::vector<TokenSeq>> refs{{{"the", "cat", "sat", "on", "the", "mat"}},
                                          {{"a", "dog", "ran", "in", "the", "park", "today"}},
                                          {{"我", "喜", "欢", "吃", "苹", "果"}}};
  std::vector<TokenSeq> cands{{"the", "cat", "sat", "on", "a", "mat"},
                              {"a", "dog", "ran", "to", "the", "park"},
                              {"我", "喜", "欢", "苹", "果"}};
};

}  // namespace

TEST(Bleu, MatchesNltkOracle) {
  const BleuFixture f;
  EXPECT_NEAR(corpus_bleu(f.refs, f.cands, 2, 0), 0.6695529645064843, 1e-12);
  EXPECT_NEAR(corpus_bleu(f.refs, f.cands, 4, 0), 0.35623785259079777, 1e-12);
  EXPECT_NEAR(corpus_bleu(f.refs, f.cands, 2, 7), 0.7295582618787716, 1e-12);
  EXPECT_NEAR(corpus_bleu(f.refs, f.cands, 4, 7), 0.43440237492354006, 1e-12);
}

TEST(Bleu, ZeroFourGramCase) {
  const std::vector<std::vector<TokenSeq>> refs{{{"x", "y", "z", "w"}}};
  const std::vector<TokenSeq> cands{{"x", "y", "z", "q"}};
  EXPECT_NEAR(corpus_bleu(refs, cands, 4, 0) / 8.636168555094496e-78, 1.0, 1e-9);
  EXPECT_NEAR(corpus_bleu(refs, cands, 4, 7), 0.5174850954454262, 1e-12);
}

TEST(Bleu, IdentityDisjointAndRange) {
  const std::vector<TokenSeq> s{{"a", "b", "c", "d", "e"}, {"f", "g", "h", "i"}};
  EXPECT_NEAR(bleu_n(s, s, 4, 0), 1.0, 1e-12);
  EXPECT_NEAR(bleu_n(s, s, 2, 0), 1.0, 1e-12);
  const std::vector<TokenSeq> other{{"p", "q", "r", "s", "t"}, {"u", "v", "w", "x"}};
  EXPECT_EQ(bleu_n(other, s, 2, 0), 0.0);
  EXPECT_EQ(bleu_n(other, s, 4, 7), 0.0);
  const BleuFixture f;
  for (int n : {2, 4}) {
    const double b = corpus_bleu(f.refs, f.cands, n, 0);
    EXPECT_GE(b, 0.0);
    EXPECT_LE(b, 1.0);
  }
  EXPECT_THROW(bleu_n({}, {}, 2, 0), MetricError);
  EXPECT_THROW(bleu_n(s, other, 2, 3), MetricError);
  try {
    bleu_n(s, {{"a"}}, 2, 0);
    FAIL();
  } catch (const MetricError& e) {
    EXPECT_EQ(e.kind(), MetricError::Kind::LengthMismatch);
  }
}

TEST(Distinct, HandCases) {
  EXPECT_DOUBLE_EQ(distinct_n({{"a", "b"}, {"b", "c"}}, 1), 0.75);
  EXPECT_DOUBLE_EQ(distinct_n({{"a", "b"}, {"b", "c"}}, 2), 1.0);
  EXPECT_DOUBLE_EQ(distinct_n({{"x"}}, 1), 1.0);
  EXPECT_DOUBLE_EQ(distinct_n({{"x"}}, 2), 0.0);
  // k identical responses of n distinct tokens: n / (k n) unigrams, (n-1) / (k (n-1)) bigrams.
  const TokenSeq r{"a", "b", "c", "d"};
  const std::vector<TokenSeq> same(5, r);
  EXPECT_DOUBLE_EQ(distinct_n(same, 1), 1.0 / 5.0);
  EXPECT_DOUBLE_EQ(distinct_n(same, 2), 1.0 / 5.0);
}

TEST(Accuracy, CountsMatches) {
  EXPECT_DOUBLE_EQ(classification_accuracy(std::vector<int>{1, 2, 3, 4}, std::vector<int>{1, 0, 3, 0}), 0.5);
  EXPECT_THROW(classification_accuracy(std::vector<int>{}, std::vector<int>{}), MetricError);
  EXPECT_THROW(classification_accuracy(std::vector<int>{1}, std::vector<int>{1, 2}), MetricError);
}

TEST(Eval, ReportIsCompleteAndTranscriptAligned) {
  auto bundle = fixtures::shared_tiny_bundle();
  const Corpus test = fixtures::synthetic(77, 4, 2, 4);
  GenerationParams g;
  g.max_new_tokens = 8;
  std::vector<TranscriptEntry> tr;
  const EvalReport r = run_eval(test, *bundle, g, &tr);
  EXPECT_TRUE(r.complete());
  int listener = 0;
  for (const auto& c : test.conversations) {
    for (std::size_t i = 1; i < c.utterances.size(); ++i) listener += c.utterances[i].role == Role::Listener;
  }
  EXPECT_EQ(r.n_examples, listener);
  EXPECT_EQ(tr.size(), static_cast<std::size_t>(listener));
  EXPECT_LE(r.bleu2_raw, 1.0);
  EXPECT_LE(r.bleu4_raw, r.bleu2_raw + 1e-12);
  const auto j = r.to_json();
  for (const char* k : {"bleu2", "bleu4", "distinct1", "distinct2", "accuracy"}) EXPECT_TRUE(j.contains(k)) << k;
  const EvalReport again = run_eval(test, *bundle, g);
  EXPECT_EQ(again.to_json(), j);
}
