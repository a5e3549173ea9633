#ifndef CSD_METRICS_HPP
#define CSD_METRICS_HPP

#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "csd/corpus.hpp"
#include "csd/generation.hpp"
#include "csd/labels.hpp"

namespace csd {

class MetricError : public std::runtime_error {
 public:
  enum class Kind { EmptyInput, LengthMismatch, BadArgument };
  MetricError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

using TokenSeq = std::vector<std::string>;

/// Corpus-level BLEU with uniform weights over 1..n-gram precisions, computed
/// the way NLTK's corpus_bleu does (clipped counts, closest reference length,
/// brevity penalty). smoothing 0 substitutes the smallest positive double for
/// zero precisions; smoothing 7 applies Chen and Cherry's method 4 followed by
/// method 5.
double corpus_bleu(const std::vector<std::vector<TokenSeq>>& references, const std::vector<TokenSeq>& candidates,
                   int n, int smoothing);
/// Single-reference convenience form.
double bleu_n(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references, int n, int smoothing);

/// Unique n-grams over total n-grams across all candidates; 0 when no
/// candidate is long enough to hold an n-gram.
double distinct_n(const std::vector<TokenSeq>& candidates, int n);

template <typename T>
double classification_accuracy(const std::vector<T>& predictions, const std::vector<T>& golds) {
  if (predictions.size() != golds.size()) {
    throw MetricError(MetricError::Kind::LengthMismatch, "predictions and golds differ in length");
  }
  if (predictions.empty()) throw MetricError(MetricError::Kind::EmptyInput, "no predictions");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hit += predictions[i] == golds[i];
  return static_cast<double>(hit) / static_cast<double>(predictions.size());
}

struct EvalReport {
  /// Smoothed with method 7, as reported in the literature.
  double bleu2 = 0.0;
  double bleu4 = 0.0;
  /// Unsmoothed values; always within [0, 1].
  double bleu2_raw = 0.0;
  double bleu4_raw = 0.0;
  double distinct1 = 0.0;
  double distinct2 = 0.0;
  std::map<Taxonomy, double> accuracy;
  int n_examples = 0;

  nlohmann::json to_json() const;
  /// True when every field is populated and finite.
  bool complete() const;
};

struct TranscriptEntry {
  std::size_t conversation = 0;
  std::size_t turn = 0;
  std::string context;
  std::string reference;
  std::string generated;
  LabelTriple labels;
};

/// One generated response per LISTENER turn (given the preceding turns) plus
/// label accuracy over every utterance. Example i samples with seed
/// params.seed + i.
EvalReport run_eval(const Corpus& test, ModelBundle& bundle, const GenerationParams& params,
                    std::vector<TranscriptEntry>* transcript = nullptr);

void write_eval_report(const EvalReport& r, const std::string& path);
/// One JSON object per line.
void write_transcript(const std::vector<TranscriptEntry>& t, const std::string& path);

}  // namespace csd

#endif  // CSD_METRICS_HPP
