#ifndef CSD_CORPUS_HPP
#define CSD_CORPUS_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "csd/labels.hpp"

namespace csd {

enum class Role : std::uint8_t { Speaker, Listener };

std::string_view to_string(Role r);

struct Utterance {
  Role role = Role::Speaker;
  std::string text;
  CSLabel cs = CSLabel::None;
  EmotionLabel emo = EmotionLabel::None;
  StrategyLabel strategy = StrategyLabel::None;

  LabelTriple labels() const { return {cs, emo, strategy}; }
  void set_labels(const LabelTriple& l) {
    cs = l.cs;
    emo = l.emo;
    strategy = l.strategy;
  }
  friend bool operator==(const Utterance&, const Utterance&) = default;
};

struct Conversation {
  std::vector<Utterance> utterances;
  friend bool operator==(const Conversation&, const Conversation&) = default;
};

struct Corpus {
  std::vector<Conversation> conversations;

  std::size_t utterance_count() const;
  friend bool operator==(const Corpus&, const Corpus&) = default;
};

class CorpusError : public std::runtime_error {
 public:
  enum class Kind { MalformedLine, AlternationError, EmptyCorpus, BadRatios };

  CorpusError(Kind kind, int line, const std::string& what)
      : std::runtime_error(what), kind_(kind), line_(line) {}

  Kind kind() const { return kind_; }
  /// 1-based line number, or 0 when the error is not tied to a line.
  int line() const { return line_; }

 private:
  Kind kind_;
  int line_;
};

inline constexpr std::string_view kCSSeparator = "<CS>";
inline constexpr std::string_view kEmoSeparator = "<EMO>";
inline constexpr std::string_view kStrategySeparator = "<strategy>";

struct ParseOptions {
  /// Accept a leading "SPEAKER:" / "LISTENER:" on a line. The prefix must agree
  /// with the alternation-derived role.
  bool allow_role_prefix = true;
};

Corpus parse_corpus(std::string_view document, const ParseOptions& opts = {});
Corpus load_corpus(const std::string& path, const ParseOptions& opts = {});

/// Canonical form: one line per utterance, a blank line after every
/// conversation, canonical separator and label spellings.
std::string serialize_corpus(const Corpus& c);
std::string serialize_utterance(const Utterance& u);
void save_corpus(const Corpus& c, const std::string& path);

/// Throws CorpusError if an utterance or conversation breaks an invariant.
void validate_utterance(const Utterance& u, int line = 0);
void validate_conversation(const Conversation& c, int line = 0);

using Tokenizer = std::function<std::vector<std::string>(std::string_view)>;
Tokenizer default_tokenizer();

struct LabelCount {
  std::size_t count = 0;
  double proportion = 0.0;  // percent
  friend bool operator==(const LabelCount&, const LabelCount&) = default;
};

struct StatsReport {
  std::size_t conversation_count = 0;
  std::size_t utterance_count = 0;
  std::size_t speaker_utterances = 0;
  std::size_t listener_utterances = 0;
  std::size_t token_count = 0;
  double avg_tokens_per_conversation = 0.0;
  double avg_utterances_per_conversation = 0.0;
  double avg_tokens_per_utterance = 0.0;
  std::map<Taxonomy, std::vector<LabelCount>> label_histograms;
};

StatsReport corpus_stats(const Corpus& c, const Tokenizer& tokenizer = default_tokenizer());
std::string format_stats(const StatsReport& r);

struct SplitRatios {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
};

struct CorpusSplit {
  Corpus train;
  Corpus dev;
  Corpus test;
};

/// Partitions by whole conversations. Sizes are rounded for train and dev;
/// test takes the remainder.
CorpusSplit split_corpus(const Corpus& c, const SplitRatios& ratios, std::uint64_t seed);

}  // namespace csd

#endif  // CSD_CORPUS_HPP
