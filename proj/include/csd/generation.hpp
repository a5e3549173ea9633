#ifndef CSD_GENERATION_HPP
#define CSD_GENERATION_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "csd/bundle.hpp"
#include "csd/corpus.hpp"
#include "csd/labels.hpp"

namespace csd {

struct GenerationParams {
  double temperature = 0.7;
  /// 0 disables the top-k cut.
  int top_k = 8;
  double top_p = 0.5;
  int max_new_tokens = 32;
  /// [SEP] is suppressed until this many tokens were produced.
  int min_new_tokens = 1;
  std::uint64_t seed = 0;
  /// Argmax decoding (the zero-temperature limit); sampling knobs are ignored.
  bool greedy = false;

  /// Throws std::invalid_argument when a knob is out of range.
  void validate() const;
};

/// Temperature scaling, then the top_k largest logits, then the smallest
/// prefix of the remaining tokens (by descending probability) whose
/// cumulative mass reaches top_p. The boundary token is kept. Returns a
/// distribution with zeros outside the support. Ties keep the lower index.
/// Logits of -infinity are never selected.
std::vector<double> filter_logits(std::span<const double> logits, const GenerationParams& params);

struct StepAudit {
  std::vector<int> support;  // token ids with non-zero filtered probability
  int chosen = -1;
};

struct GeneratedResponse {
  std::string text;
  std::vector<std::string> tokens;
  std::vector<int> ids;
  /// Labels of the most recent SPEAKER utterance that conditioned this turn.
  LabelTriple labels;
  /// Labels used for every context utterance.
  std::vector<LabelTriple> context_labels;
  std::vector<StepAudit> audit;
};

/// Predicts the label triple of every utterance in `context`.
std::vector<LabelTriple> predict_context_labels(const Conversation& context, ModelBundle& bundle);

/// Classify (unless labels are supplied), build the decoder input, splice,
/// then decode token by token until [SEP] or max_new_tokens. Deterministic for
/// a fixed seed.
GeneratedResponse sample_response(const Conversation& context, ModelBundle& bundle, const GenerationParams& params,
                                  std::span<const LabelTriple> labels = {});

}  // namespace csd

#endif  // CSD_GENERATION_HPP
