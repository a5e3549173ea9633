#ifndef CSD_SYNTH_HPP
#define CSD_SYNTH_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "csd/corpus.hpp"

namespace csd {

struct LexiconSeed {
  std::string word;
  double valence;
  double arousal;
};

/// Surface-cue templates for the synthetic corpus. Each label of each taxonomy
/// owns a pool of cue phrases that appear only for that label, so the gold
/// labels are recoverable from the text.
struct TemplateBank {
  std::array<std::vector<std::string>, 7> cs_cues;
  std::array<std::vector<std::string>, 8> emotion_cues;
  std::array<std::vector<std::string>, 7> strategy_cues;
  std::vector<std::string> topics;
  std::vector<std::string> frames;  // contain "{}" where the topic goes

  std::array<double, 7> cs_weights{};
  std::array<double, 8> emotion_weights{};
  std::array<double, 7> strategy_weights{};

  std::vector<LexiconSeed> lexicon;

  /// Built-in Chinese bank; label weights follow the published label counts.
  static TemplateBank standard();

  /// Every multi-character word the bank can emit (topics, cues, lexicon).
  std::vector<std::string> word_list() const;
  /// Lexicon rows in the VA TSV format, r_min=1, r_max=9.
  std::string lexicon_tsv() const;
};

struct SynthOptions {
  int min_utterances = 2;
  int max_utterances = 10;
};

Corpus synthesize_corpus(std::uint64_t seed, int n_conversations, const TemplateBank& bank,
                         const SynthOptions& opts = {});

}  // namespace csd

#endif  // CSD_SYNTH_HPP
