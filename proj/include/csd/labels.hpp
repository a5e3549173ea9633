#ifndef CSD_LABELS_HPP
#define CSD_LABELS_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace csd {

// Cognitive-stimulation principle of an utterance.
enum class CSLabel : std::uint8_t { None, Inquiry, Respect, Reminiscence, Expression, Enjoyment, Comfort };

enum class EmotionLabel : std::uint8_t { None, Disgust, Sadness, Fear, Surprise, Like, Happiness, Anger };

// Emotional-support strategy.
enum class StrategyLabel : std::uint8_t {
  None,
  Question,
  ReflectionOfFeelings,
  SelfDisclosure,
  ProvidingSuggestions,
  Information,
  Others
};

enum class Taxonomy : std::uint8_t { CS, Emotion, Strategy };

inline constexpr std::array<Taxonomy, 3> kTaxonomies{Taxonomy::CS, Taxonomy::Emotion, Taxonomy::Strategy};

inline constexpr std::array<std::string_view, 7> kCSNames{
    "None", "Inquiry", "Respect", "Reminiscence", "Expression", "Enjoyment", "Comfort"};
inline constexpr std::array<std::string_view, 8> kEmotionNames{
    "None", "Disgust", "Sadness", "Fear", "Surprise", "Like", "Happiness", "Anger"};
inline constexpr std::array<std::string_view, 7> kStrategyNames{
    "None",         "Question",    "Reflection of feelings", "Self-disclosure", "Providing suggestions",
    "Information", "Others"};

/// One-line explanations shown in label legends.
inline constexpr std::array<std::string_view, 7> kCSExplanations{
    "Neutral",
    "Ask questions for information or open-domain questions",
    "Be respectful or use a set pattern when talking to older people",
    "Remember things elders did when elders were a child, as well as things elders did before and personal "
    "information",
    "Improve elders language skills and expression",
    "To have fun in conversation or to enjoy something",
    "Comfort the elderly to some extent"};

constexpr int label_count(Taxonomy t) {
  switch (t) {
    case Taxonomy::CS: return static_cast<int>(kCSNames.size());
    case Taxonomy::Emotion: return static_cast<int>(kEmotionNames.size());
    case Taxonomy::Strategy: return static_cast<int>(kStrategyNames.size());
  }
  return 0;
}

std::string_view label_name(Taxonomy t, int index);
std::string_view taxonomy_name(Taxonomy t);

/// Case-insensitive lookup that also ignores spaces, hyphens and underscores,
/// so "ReflectionOfFeelings" and "reflection of feelings" both resolve.
std::optional<int> label_index(Taxonomy t, std::string_view name);

std::string_view to_string(CSLabel l);
std::string_view to_string(EmotionLabel l);
std::string_view to_string(StrategyLabel l);

struct LabelTriple {
  CSLabel cs = CSLabel::None;
  EmotionLabel emo = EmotionLabel::None;
  StrategyLabel strategy = StrategyLabel::None;

  int index(Taxonomy t) const;
  void set(Taxonomy t, int index);
  friend bool operator==(const LabelTriple&, const LabelTriple&) = default;
};

}  // namespace csd

#endif  // CSD_LABELS_HPP
