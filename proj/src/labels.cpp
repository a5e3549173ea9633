#include "csd/labels.hpp"

#include <cctype>
#include <stdexcept>

namespace csd {

namespace {

std::string squash(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == ' ' || c == '-' || c == '_') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

template <std::size_t N>
std::optional<int> find_in(const std::array<std::string_view, N>& names, std::string_view name) {
  const std::string key = squash(name);
  for (std::size_t i = 0; i < N; ++i) {
    if (squash(names[i]) == key) return static_cast<int>(i);
  }
  return std::nullopt;
}

}  // namespace

std::string_view label_name(Taxonomy t, int index) {
  if (index < 0 || index >= label_count(t)) throw std::out_of_range("label index out of range");
  switch (t) {
    case Taxonomy::CS: return kCSNames[static_cast<std::size_t>(index)];
    case Taxonomy::Emotion: return kEmotionNames[static_cast<std::size_t>(index)];
    case Taxonomy::Strategy: return kStrategyNames[static_cast<std::size_t>(index)];
  }
  return {};
}

std::string_view taxonomy_name(Taxonomy t) {
  switch (t) {
    case Taxonomy::CS: return "cs";
    case Taxonomy::Emotion: return "emotion";
    case Taxonomy::Strategy: return "strategy";
  }
  return {};
}

std::optional<int> label_index(Taxonomy t, std::string_view name) {
  switch (t) {
    case Taxonomy::CS: return find_in(kCSNames, name);
    case Taxonomy::Emotion: return find_in(kEmotionNames, name);
    case Taxonomy::Strategy: return find_in(kStrategyNames, name);
  }
  return std::nullopt;
}

std::string_view to_string(CSLabel l) { return kCSNames[static_cast<std::size_t>(l)]; }
std::string_view to_string(EmotionLabel l) { return kEmotionNames[static_cast<std::size_t>(l)]; }
std::string_view to_string(StrategyLabel l) { return kStrategyNames[static_cast<std::size_t>(l)]; }

int LabelTriple::index(Taxonomy t) const {
  switch (t) {
    case Taxonomy::CS: return static_cast<int>(cs);
    case Taxonomy::Emotion: return static_cast<int>(emo);
    case Taxonomy::Strategy: return static_cast<int>(strategy);
  }
  return 0;
}

void LabelTriple::set(Taxonomy t, int index) {
  if (index < 0 || index >= label_count(t)) throw std::out_of_range("label index out of range");
  switch (t) {
    case Taxonomy::CS: cs = static_cast<CSLabel>(index); break;
    case Taxonomy::Emotion: emo = static_cast<EmotionLabel>(index); break;
    case Taxonomy::Strategy: strategy = static_cast<StrategyLabel>(index); break;
  }
}

}  // namespace csd
