#include "csd/lexicon.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "csd/text.hpp"

namespace csd::knowledge {

VALexicon::VALexicon(double r_min, double r_max) : r_min_(r_min), r_max_(r_max) {
  if (!(r_min < r_max)) throw LexiconError(LexiconError::Kind::RangeError, 0, "lexicon requires r_min < r_max");
}

void VALexicon::insert(const std::string& word, VAEntry e, int row) {
  auto in_range = [this](double v) { return v >= r_min_ && v <= r_max_; };
  if (!in_range(e.valence) || !in_range(e.arousal)) {
    throw LexiconError(LexiconError::Kind::RangeError, row,
                       "row " + std::to_string(row) + ": mean outside [" + std::to_string(r_min_) + ", " +
                           std::to_string(r_max_) + "] for '" + word + "'");
  }
  entries_[word] = e;
}

const VAEntry* VALexicon::find(std::string_view word) const {
  const auto it = entries_.find(word);
  return it == entries_.end() ? nullptr : &it->second;
}

namespace {

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t tab = line.find('\t', pos);
    out.emplace_back(line.substr(pos, tab == std::string_view::npos ? std::string_view::npos : tab - pos));
    if (tab == std::string_view::npos) break;
    pos = tab + 1;
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = text::trim(s);
  if (t.empty()) return false;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size() && std::isfinite(out);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

VALexicon parse_va_lexicon(std::string_view tsv) {
  double r_min = 1.0;
  double r_max = 9.0;
  std::vector<std::pair<int, std::string>> rows;
  std::istringstream in{std::string(tsv)};
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    if (line.front() == '#') {
      if (row == 1) {
        for (const auto& field : split_tabs(line.substr(1))) {
          const auto eq = field.find('=');
          if (eq == std::string::npos) continue;
          const std::string key = text::trim(field.substr(0, eq));
          double v = 0;
          if (!parse_double(field.substr(eq + 1), v)) {
            throw LexiconError(LexiconError::Kind::ParseError, row, "row 1: bad header value for " + key);
          }
          if (key == "r_min") r_min = v;
          if (key == "r_max") r_max = v;
        }
      }
      continue;
    }
    rows.emplace_back(row, line);
  }

  VALexicon lex(r_min, r_max);
  for (const auto& [r, l] : rows) {
    const auto fields = split_tabs(l);
    VAEntry e;
    if (fields.size() != 3 || text::trim(fields[0]).empty() || !parse_double(fields[1], e.valence) ||
        !parse_double(fields[2], e.arousal)) {
      throw LexiconError(LexiconError::Kind::ParseError, r,
                         "row " + std::to_string(r) + ": expected word<TAB>valence<TAB>arousal");
    }
    lex.insert(text::trim(fields[0]), e, r);
  }
  return lex;
}

VALexicon load_va_lexicon(const std::string& path) { return parse_va_lexicon(read_file(path)); }

double emotion_intensity(std::string_view word, const VALexicon& lex) {
  const VAEntry* e = lex.find(word);
  if (e == nullptr) return 0.0;
  return (e->valence + e->arousal - 2.0 * lex.r_min()) / (lex.r_max() - lex.r_min());
}

Segmenter::Segmenter(const std::vector<std::string>& words, int max_word_tokens) : max_tokens_(max_word_tokens) {
  for (const auto& w : words) add_word(w);
}

void Segmenter::add_word(const std::string& word) {
  const auto toks = text::tokenize(word);
  if (toks.empty() || static_cast<int>(toks.size()) > max_tokens_) return;
  keys_.insert(text::join_key(toks));
}

std::vector<WordSpan> Segmenter::segment(std::span<const std::string> tokens) const {
  std::vector<WordSpan> out;
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t len = 1;
    const std::size_t longest = std::min<std::size_t>(static_cast<std::size_t>(max_tokens_), tokens.size() - i);
    for (std::size_t l = longest; l >= 2; --l) {
      if (keys_.count(text::join_key(tokens.subspan(i, l))) > 0) {
        len = l;
        break;
      }
    }
    out.push_back({i, len, text::detokenize(tokens.subspan(i, len))});
    i += len;
  }
  return out;
}

std::set<std::string> default_stopwords() {
  return {"的", "了", "是", "我", "你", "他", "她", "它", "们", "吗", "呢", "啊", "吧", "很", "都",
          "在", "也", "和", "就", "有", "这", "那", "个", "去", "说", "一", "不", "人", "会", "着",
          "还", "真", "好", "太", "点", "自己", "the", "a", "an", "is", "are", "was", "were", "be",
          "to", "of", "and", "in", "on", "at", "it", "i", "you", "he", "she", "we", "they", "for",
          "with", "that", "this", "do", "did"};
}

DefaultExtractor::DefaultExtractor(VALexicon lexicon, const std::vector<std::string>& word_list,
                                   std::set<std::string> stopwords)
    : lexicon_(std::move(lexicon)), segmenter_(word_list), stopwords_(std::move(stopwords)) {
  for (const auto& [w, e] : lexicon_.entries()) segmenter_.add_word(w);
}

void DefaultExtractor::fit_idf(const Corpus& corpus) {
  std::vector<std::vector<std::string>> docs;
  for (const auto& c : corpus.conversations) {
    for (const auto& u : c.utterances) docs.push_back(text::tokenize(u.text));
  }
  fit_idf(docs);
}

void DefaultExtractor::fit_idf(const std::vector<std::vector<std::string>>& documents) {
  df_.clear();
  n_docs_ = documents.size();
  for (const auto& doc : documents) {
    std::set<std::string> seen;
    for (const auto& w : segmenter_.segment(doc)) seen.insert(w.text);
    for (const auto& w : seen) ++df_[w];
  }
}

double DefaultExtractor::idf(const std::string& word) const {
  if (n_docs_ == 0) return 1.0;
  const auto it = df_.find(word);
  const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
  return std::log((1.0 + static_cast<double>(n_docs_)) / (1.0 + df)) + 1.0;
}

bool DefaultExtractor::is_stopword(const std::string& word) const {
  std::string lower = word;
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return stopwords_.count(lower) > 0;
}

std::vector<WordSpan> DefaultExtractor::segment(std::span<const std::string> tokens) const {
  return segmenter_.segment(tokens);
}

double DefaultExtractor::sentiment(std::span<const std::string> tokens) const {
  const double mid = 0.5 * (lexicon_.r_min() + lexicon_.r_max());
  const double half = 0.5 * (lexicon_.r_max() - lexicon_.r_min());
  double sum = 0.0;
  int n = 0;
  for (const auto& w : segmenter_.segment(tokens)) {
    if (const VAEntry* e = lexicon_.find(w.text)) {
      sum += (e->valence - mid) / half;
      ++n;
    }
  }
  if (n == 0) return 0.0;
  return std::clamp(sum / n, -1.0, 1.0);
}

std::vector<ScoredWord> DefaultExtractor::keywords(std::span<const std::string> tokens, int k) const {
  if (k < 1) return {};
  std::map<std::string, int> counts;
  int total = 0;
  for (const auto& w : segmenter_.segment(tokens)) {
    if (text::is_punct_token(w.text)) continue;
    ++total;
    if (is_stopword(w.text)) continue;
    ++counts[w.text];
  }
  std::vector<ScoredWord> out;
  for (const auto& [w, c] : counts) {
    out.push_back({w, static_cast<double>(c) / static_cast<double>(total) * idf(w)});
  }
  std::stable_sort(out.begin(), out.end(), [](const ScoredWord& a, const ScoredWord& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.word < b.word;
  });
  if (out.size() > static_cast<std::size_t>(k)) out.resize(static_cast<std::size_t>(k));
  return out;
}

double sentiment_score(std::string_view text, const KnowledgeExtractor& ex) {
  const auto toks = text::tokenize(text);
  return ex.sentiment(toks);
}

std::vector<ScoredWord> extract_keywords(std::string_view text, int k, const KnowledgeExtractor& ex) {
  const auto toks = text::tokenize(text);
  return ex.keywords(toks, k);
}

std::vector<double> keyword_intensity(std::span<const std::string> tokens, const KnowledgeExtractor& ex, int k) {
  std::vector<double> out(tokens.size(), 0.0);
  const auto kws = ex.keywords(tokens, k);
  if (kws.empty()) return out;
  std::map<std::string, double> score;
  for (const auto& kw : kws) score[kw.word] = kw.score;

  std::vector<std::pair<WordSpan, double>> occ;
  for (auto& w : ex.segment(tokens)) {
    const auto it = score.find(w.text);
    if (it != score.end()) occ.emplace_back(std::move(w), it->second);
  }
  if (occ.empty()) return out;
  double mx = occ.front().second;
  for (const auto& o : occ) mx = std::max(mx, o.second);
  double z = 0.0;
  for (const auto& o : occ) z += std::exp(o.second - mx);
  for (const auto& [span, s] : occ) {
    const double p = std::exp(s - mx) / z;
    for (std::size_t t = span.begin; t < span.begin + span.length; ++t) {
      out[t] += p / static_cast<double>(span.length);
    }
  }
  return out;
}

std::vector<double> emotion_intensity_per_token(std::span<const std::string> tokens, const VALexicon& lex,
                                                int max_word_tokens) {
  std::vector<double> out(tokens.size(), 0.0);
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t matched = 0;
    const std::size_t longest =
        std::min<std::size_t>(static_cast<std::size_t>(max_word_tokens), tokens.size() - i);
    for (std::size_t l = longest; l >= 1; --l) {
      const std::string w = text::detokenize(tokens.subspan(i, l));
      if (lex.find(w) != nullptr) {
        const double eta = emotion_intensity(w, lex);
        for (std::size_t t = i; t < i + l; ++t) out[t] = eta;
        matched = l;
        break;
      }
    }
    i += matched == 0 ? 1 : matched;
  }
  return out;
}

void KnowledgeDict::add_entity(std::span<const std::string> tokens) {
  if (tokens.empty() || tokens.size() > static_cast<std::size_t>(kMaxEntityTokens)) return;
  entities_[tokens.size() - 1].emplace(text::join_key(tokens), text::detokenize(tokens));
}

void KnowledgeDict::add_sentence(std::span<const std::string> tokens) {
  if (tokens.empty()) return;
  sentences_.emplace(text::join_key(tokens), text::detokenize(tokens));
}

bool KnowledgeDict::contains_entity(std::span<const std::string> tokens) const {
  if (tokens.empty() || tokens.size() > static_cast<std::size_t>(kMaxEntityTokens)) return false;
  return entities_[tokens.size() - 1].count(text::join_key(tokens)) > 0;
}

bool KnowledgeDict::contains_sentence(std::span<const std::string> tokens) const {
  return !tokens.empty() && sentences_.count(text::join_key(tokens)) > 0;
}

std::vector<std::string> KnowledgeDict::entities(int length) const {
  std::vector<std::string> out;
  if (length < 1 || length > kMaxEntityTokens) return out;
  for (const auto& [k, v] : entities_[static_cast<std::size_t>(length - 1)]) out.push_back(v);
  return out;
}

std::vector<std::string> KnowledgeDict::sentences() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : sentences_) out.push_back(v);
  return out;
}

std::size_t KnowledgeDict::entity_count() const {
  std::size_t n = 0;
  for (const auto& m : entities_) n += m.size();
  return n;
}

Dictionaries build_dictionaries(const Corpus& corpus, const ExtractorConfig& cfg, const KnowledgeExtractor& ex) {
  Dictionaries d;
  for (const auto& conv : corpus.conversations) {
    for (const auto& u : conv.utterances) {
      const auto toks = text::tokenize(u.text);
      if (toks.empty()) continue;
      const std::span<const std::string> all(toks);

      if (std::abs(ex.sentiment(all)) > cfg.lambda_emo) d.emotion.add_sentence(all);
      for (const auto& w : ex.segment(all)) {
        if (w.length > static_cast<std::size_t>(kMaxEntityTokens) || text::is_punct_token(w.text)) continue;
        const auto word = all.subspan(w.begin, w.length);
        if (std::abs(ex.sentiment(word)) > cfg.lambda_emo) d.emotion.add_entity(word);
      }

      const auto kws = ex.keywords(all, cfg.keywords_per_utterance);
      std::set<std::string> kw_set;
      for (const auto& kw : kws) kw_set.insert(kw.word);
      std::size_t covered = 0;
      for (const auto& w : ex.segment(all)) {
        if (kw_set.count(w.text) == 0) continue;
        covered += w.length;
        if (w.length <= static_cast<std::size_t>(kMaxEntityTokens)) d.keyword.add_entity(all.subspan(w.begin, w.length));
      }
      if (!kws.empty() &&
          static_cast<double>(covered) / static_cast<double>(toks.size()) >= cfg.keyword_sentence_density) {
        d.keyword.add_sentence(all);
      }
    }
  }
  return d;
}

std::string serialize_dictionaries(const Dictionaries& d) {
  std::ostringstream os;
  auto emit = [&os](char tag, const KnowledgeDict& dict) {
    for (int len = 1; len <= kMaxEntityTokens; ++len) {
      for (const auto& e : dict.entities(len)) os << tag << '\t' << len << '\t' << e << '\n';
    }
    for (const auto& s : dict.sentences()) os << tag << '\t' << 0 << '\t' << s << '\n';
  };
  emit('E', d.emotion);
  emit('K', d.keyword);
  return os.str();
}

Dictionaries parse_dictionaries(std::string_view content) {
  Dictionaries d;
  std::istringstream in{std::string(content)};
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    double count = 0;
    if (fields.size() != 3 || (fields[0] != "E" && fields[0] != "K") || !parse_double(fields[1], count)) {
      throw LexiconError(LexiconError::Kind::ParseError, row, "row " + std::to_string(row) + ": bad dictionary entry");
    }
    KnowledgeDict& dict = fields[0] == "E" ? d.emotion : d.keyword;
    const auto toks = text::tokenize(fields[2]);
    if (count == 0) {
      dict.add_sentence(toks);
    } else {
      if (static_cast<double>(toks.size()) != count) {
        throw LexiconError(LexiconError::Kind::ParseError, row,
                           "row " + std::to_string(row) + ": word count does not match entity text");
      }
      dict.add_entity(toks);
    }
  }
  return d;
}

void save_dictionaries(const Dictionaries& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dictionary file: " + path);
  out << serialize_dictionaries(d);
}

Dictionaries load_dictionaries(const std::string& path) { return parse_dictionaries(read_file(path)); }

}  // namespace csd::knowledge
