#include "csd/vocab.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace csd {

namespace {

constexpr std::string_view kSpecials[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

std::string_view prefix_of(Taxonomy t) {
  switch (t) {
    case Taxonomy::CS: return "cs";
    case Taxonomy::Emotion: return "emo";
    case Taxonomy::Strategy: return "str";
  }
  return {};
}

std::string camel(std::string_view name) {
  std::string out;
  bool upper = true;
  for (char c : name) {
    if (c == ' ' || c == '-' || c == '_') {
      upper = true;
      continue;
    }
    out.push_back(upper ? static_cast<char>(std::toupper(static_cast<unsigned char>(c))) : c);
    upper = false;
  }
  return out;
}

int label_offset(Taxonomy t) {
  switch (t) {
    case Taxonomy::CS: return 0;
    case Taxonomy::Emotion: return label_count(Taxonomy::CS);
    case Taxonomy::Strategy: return label_count(Taxonomy::CS) + label_count(Taxonomy::Emotion);
  }
  return 0;
}

}  // namespace

Vocabulary::Vocabulary() {
  for (auto s : kSpecials) add(std::string(s));
  for (Taxonomy t : kTaxonomies) {
    for (int i = 0; i < label_count(t); ++i) add(label_token_text(t, i));
  }
}

std::string Vocabulary::label_token_text(Taxonomy t, int label) {
  return "<" + std::string(prefix_of(t)) + ":" + camel(label_name(t, label)) + ">";
}

Vocabulary Vocabulary::build(const Corpus& corpus, const Tokenizer& tokenizer) {
  Vocabulary v;
  for (const auto& c : corpus.conversations) {
    for (const auto& u : c.utterances) {
      for (const auto& tok : tokenizer(u.text)) v.add(tok);
    }
  }
  return v;
}

int Vocabulary::add(const std::string& token) {
  const auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

int Vocabulary::id(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocabulary::label_token(Taxonomy t, int label) const {
  if (label < 0 || label >= label_count(t)) throw std::out_of_range("label out of range");
  return kSpecialCount + label_offset(t) + label;
}

std::optional<std::pair<Taxonomy, int>> Vocabulary::label_of(int id) const {
  if (!is_label(id)) return std::nullopt;
  int k = id - kSpecialCount;
  for (Taxonomy t : kTaxonomies) {
    if (k < label_count(t)) return std::make_pair(t, k);
    k -= label_count(t);
  }
  return std::nullopt;
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out.push_back('\n');
  }
  return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
  Vocabulary v;
  std::istringstream in{std::string(text)};
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (row < v.size()) {
      if (line != v.tokens_[static_cast<std::size_t>(row)]) {
        throw std::runtime_error("vocabulary line " + std::to_string(row + 1) + " does not match reserved token " +
                                 v.tokens_[static_cast<std::size_t>(row)]);
      }
    } else {
      if (v.contains(line)) throw std::runtime_error("duplicate vocabulary token on line " + std::to_string(row + 1));
      v.add(line);
    }
    ++row;
  }
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary: " + path);
  out << serialize();
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocabulary: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace csd
