#ifndef CSD_VOCAB_HPP
#define CSD_VOCAB_HPP

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "csd/corpus.hpp"
#include "csd/labels.hpp"

namespace csd {

/// Token <-> id map. Ids 0..4 are the specials, followed by one atomic token
/// per label of each taxonomy, followed by text tokens.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static constexpr int kSpecialCount = 5;
  static constexpr int kLabelTokenCount = 7 + 8 + 7;

  Vocabulary();

  /// Specials, label tokens, then every text token of the corpus in order of
  /// first appearance.
  static Vocabulary build(const Corpus& corpus, const Tokenizer& tokenizer = default_tokenizer());

  int add(const std::string& token);
  /// kUnk when absent.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  int first_text_id() const { return kSpecialCount + kLabelTokenCount; }
  bool is_special(int id) const { return id >= 0 && id < kSpecialCount; }
  bool is_label(int id) const { return id >= kSpecialCount && id < first_text_id(); }
  bool is_text(int id) const { return id >= first_text_id() && id < size(); }

  int label_token(Taxonomy t, int label) const;
  std::optional<std::pair<Taxonomy, int>> label_of(int id) const;
  static std::string label_token_text(Taxonomy t, int label);

  std::vector<int> encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const int> ids) const;

  /// One token per line; id is the line number.
  std::string serialize() const;
  static Vocabulary parse(std::string_view text);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace csd

#endif  // CSD_VOCAB_HPP
