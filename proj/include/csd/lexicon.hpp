#ifndef CSD_LEXICON_HPP
#define CSD_LEXICON_HPP

#include <array>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "csd/corpus.hpp"

namespace csd::knowledge {

class LexiconError : public std::runtime_error {
 public:
  enum class Kind { ParseError, RangeError };
  LexiconError(Kind kind, int row, const std::string& what) : std::runtime_error(what), kind_(kind), row_(row) {}
  Kind kind() const { return kind_; }
  int row() const { return row_; }

 private:
  Kind kind_;
  int row_;
};

struct VAEntry {
  double valence = 0.0;
  double arousal = 0.0;
};

/// Word-level valence/arousal means on a [r_min, r_max] rating scale.
class VALexicon {
 public:
  explicit VALexicon(double r_min = 1.0, double r_max = 9.0);

  /// Last insert wins. Throws RangeError when a mean falls outside the scale.
  void insert(const std::string& word, VAEntry e, int row = 0);
  const VAEntry* find(std::string_view word) const;

  double r_min() const { return r_min_; }
  double r_max() const { return r_max_; }
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, VAEntry, std::less<>>& entries() const { return entries_; }

 private:
  double r_min_;
  double r_max_;
  std::map<std::string, VAEntry, std::less<>> entries_;
};

/// TSV: optional header "#r_min=<v>\tr_max=<v>", then "word\tvalence\tarousal".
VALexicon parse_va_lexicon(std::string_view tsv);
VALexicon load_va_lexicon(const std::string& path);

/// (V + A - 2 R_min) / (R_max - R_min) for lexicon words, 0 otherwise.
double emotion_intensity(std::string_view word, const VALexicon& lex);

struct WordSpan {
  std::size_t begin = 0;
  std::size_t length = 0;  // in tokens
  std::string text;
};

struct ScoredWord {
  std::string word;
  double score = 0.0;
};

/// Sentiment and keyword source. The bundled DefaultExtractor is deterministic;
/// other implementations can be dropped in.
class KnowledgeExtractor {
 public:
  virtual ~KnowledgeExtractor() = default;
  /// Groups tokens into words; spans cover every token exactly once.
  virtual std::vector<WordSpan> segment(std::span<const std::string> tokens) const = 0;
  /// Polarity in [-1, 1].
  virtual double sentiment(std::span<const std::string> tokens) const = 0;
  /// At most k content words, highest score first.
  virtual std::vector<ScoredWord> keywords(std::span<const std::string> tokens, int k) const = 0;
};

/// Forward maximum matching against a word list, falling back to single tokens.
class Segmenter {
 public:
  explicit Segmenter(const std::vector<std::string>& words = {}, int max_word_tokens = 4);
  void add_word(const std::string& word);
  std::vector<WordSpan> segment(std::span<const std::string> tokens) const;

 private:
  std::unordered_set<std::string> keys_;
  int max_tokens_;
};

std::set<std::string> default_stopwords();

class DefaultExtractor : public KnowledgeExtractor {
 public:
  DefaultExtractor(VALexicon lexicon, const std::vector<std::string>& word_list,
                   std::set<std::string> stopwords = default_stopwords());

  /// Document frequencies over utterances; before fitting every idf is 1.
  void fit_idf(const Corpus& corpus);
  void fit_idf(const std::vector<std::vector<std::string>>& documents);

  std::vector<WordSpan> segment(std::span<const std::string> tokens) const override;
  /// Mean of (V - mid) / half-range over lexicon words in the text.
  double sentiment(std::span<const std::string> tokens) const override;
  /// TF-IDF with smoothed idf = ln((1 + N) / (1 + df)) + 1.
  std::vector<ScoredWord> keywords(std::span<const std::string> tokens, int k) const override;

  const VALexicon& lexicon() const { return lexicon_; }
  double idf(const std::string& word) const;
  bool is_stopword(const std::string& word) const;

 private:
  VALexicon lexicon_;
  Segmenter segmenter_;
  std::set<std::string> stopwords_;
  std::unordered_map<std::string, std::size_t> df_;
  std::size_t n_docs_ = 0;
};

double sentiment_score(std::string_view text, const KnowledgeExtractor& ex);
std::vector<ScoredWord> extract_keywords(std::string_view text, int k, const KnowledgeExtractor& ex);

/// Per-token keyword target: softmax over extracted keyword occurrences, each
/// occurrence's mass split evenly over its tokens; other tokens get 0.
std::vector<double> keyword_intensity(std::span<const std::string> tokens, const KnowledgeExtractor& ex, int k);

/// Per-token emotion target via longest-match lexicon lookup.
std::vector<double> emotion_intensity_per_token(std::span<const std::string> tokens, const VALexicon& lex,
                                                int max_word_tokens = 4);

struct ExtractorConfig {
  double lambda_emo = 0.5;
  int keywords_per_utterance = 3;
  /// Share of an utterance's tokens covered by its keywords for the utterance
  /// to count as a keyword sentence.
  double keyword_sentence_density = 0.3;
};

inline constexpr int kMaxEntityTokens = 4;

/// Entities (1-4 tokens, bucketed by length) and whole sentences.
class KnowledgeDict {
 public:
  void add_entity(std::span<const std::string> tokens);
  void add_sentence(std::span<const std::string> tokens);
  bool contains_entity(std::span<const std::string> tokens) const;
  bool contains_sentence(std::span<const std::string> tokens) const;

  /// Detokenized entity strings with the given token length (1..4).
  std::vector<std::string> entities(int length) const;
  std::vector<std::string> sentences() const;
  std::size_t entity_count() const;
  std::size_t sentence_count() const { return sentences_.size(); }
  bool empty() const { return entity_count() == 0 && sentences_.empty(); }

 private:
  std::array<std::map<std::string, std::string>, kMaxEntityTokens> entities_;  // key -> display
  std::map<std::string, std::string> sentences_;
};

struct Dictionaries {
  KnowledgeDict emotion;
  KnowledgeDict keyword;
};

Dictionaries build_dictionaries(const Corpus& corpus, const ExtractorConfig& cfg, const KnowledgeExtractor& ex);

/// One entry per line: "E|K<TAB>wordcount<TAB>text"; wordcount 0 marks a sentence.
std::string serialize_dictionaries(const Dictionaries& d);
Dictionaries parse_dictionaries(std::string_view text);
void save_dictionaries(const Dictionaries& d, const std::string& path);
Dictionaries load_dictionaries(const std::string& path);

}  // namespace csd::knowledge

#endif  // CSD_LEXICON_HPP
