#include "csd/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "csd/text.hpp"

namespace csd {

std::string_view to_string(Role r) { return r == Role::Speaker ? "SPEAKER" : "LISTENER"; }

std::size_t Corpus::utterance_count() const {
  std::size_t n = 0;
  for (const auto& c : conversations) n += c.utterances.size();
  return n;
}

namespace {

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::size_t find_ci(std::string_view hay, std::string_view needle, std::size_t from = 0) {
  const std::string h = lower_ascii(hay);
  const std::string n = lower_ascii(needle);
  return h.find(n, from);
}

bool contains_separator(std::string_view s) {
  return find_ci(s, kCSSeparator) != std::string::npos || find_ci(s, kEmoSeparator) != std::string::npos ||
         find_ci(s, kStrategySeparator) != std::string::npos;
}

bool is_blank(std::string_view line) { return text::trim(line).empty(); }

[[noreturn]] void malformed(int line, const std::string& why) {
  throw CorpusError(CorpusError::Kind::MalformedLine, line,
                    "line " + std::to_string(line) + ": " + why);
}

int parse_label_field(Taxonomy t, std::string_view field, int line) {
  const std::string name = text::trim(field);
  const auto idx = label_index(t, name);
  if (!idx) malformed(line, "unknown " + std::string(taxonomy_name(t)) + " label '" + name + "'");
  return *idx;
}

Utterance parse_line(std::string_view raw, Role expected, int line, const ParseOptions& opts) {
  std::string_view rest = raw;
  Utterance u;
  u.role = expected;

  if (opts.allow_role_prefix) {
    for (Role r : {Role::Speaker, Role::Listener}) {
      const std::string prefix = std::string(to_string(r)) + ":";
      if (rest.size() >= prefix.size() && lower_ascii(rest.substr(0, prefix.size())) == lower_ascii(prefix)) {
        if (r != expected) {
          throw CorpusError(CorpusError::Kind::AlternationError, line,
                            "line " + std::to_string(line) + ": role prefix " + prefix +
                                " breaks SPEAKER/LISTENER alternation");
        }
        rest.remove_prefix(prefix.size());
        break;
      }
    }
  }

  const std::size_t cs_pos = find_ci(rest, kCSSeparator);
  if (cs_pos == std::string::npos) malformed(line, "missing <CS> separator");
  const std::size_t emo_pos = find_ci(rest, kEmoSeparator, cs_pos + kCSSeparator.size());
  if (emo_pos == std::string::npos) malformed(line, "missing <EMO> separator");
  const std::size_t str_pos = find_ci(rest, kStrategySeparator, emo_pos + kEmoSeparator.size());
  if (str_pos == std::string::npos) malformed(line, "missing <strategy> separator");

  const std::string_view text_part = rest.substr(0, cs_pos);
  const std::string_view cs_part =
      rest.substr(cs_pos + kCSSeparator.size(), emo_pos - cs_pos - kCSSeparator.size());
  const std::string_view emo_part =
      rest.substr(emo_pos + kEmoSeparator.size(), str_pos - emo_pos - kEmoSeparator.size());
  const std::string_view str_part = rest.substr(str_pos + kStrategySeparator.size());

  if (contains_separator(str_part)) malformed(line, "repeated separator");
  u.text = text::trim(text_part);
  if (u.text.empty()) malformed(line, "empty utterance text");
  u.cs = static_cast<CSLabel>(parse_label_field(Taxonomy::CS, cs_part, line));
  u.emo = static_cast<EmotionLabel>(parse_label_field(Taxonomy::Emotion, emo_part, line));
  u.strategy = static_cast<StrategyLabel>(parse_label_field(Taxonomy::Strategy, str_part, line));
  return u;
}

}  // namespace

void validate_utterance(const Utterance& u, int line) {
  const std::string t = text::trim(u.text);
  if (t.empty()) malformed(line, "empty utterance text");
  if (u.text.find('\n') != std::string::npos || u.text.find('\r') != std::string::npos) {
    malformed(line, "utterance text contains a newline");
  }
  if (contains_separator(u.text)) malformed(line, "utterance text contains a label separator");
}

void validate_conversation(const Conversation& c, int line) {
  if (c.utterances.size() < 2) {
    throw CorpusError(CorpusError::Kind::AlternationError, line,
                      "line " + std::to_string(line) + ": conversation needs at least 2 utterances");
  }
  for (std::size_t i = 0; i < c.utterances.size(); ++i) {
    const Role want = i % 2 == 0 ? Role::Speaker : Role::Listener;
    if (c.utterances[i].role != want) {
      throw CorpusError(CorpusError::Kind::AlternationError, line,
                        "line " + std::to_string(line) + ": roles must alternate starting at SPEAKER");
    }
    validate_utterance(c.utterances[i], line);
  }
}

Corpus parse_corpus(std::string_view document, const ParseOptions& opts) {
  Corpus corpus;
  Conversation current;
  int current_start = 0;
  int line_no = 0;

  auto close = [&] {
    if (current.utterances.empty()) return;
    if (current.utterances.size() < 2) {
      throw CorpusError(CorpusError::Kind::AlternationError, current_start,
                        "line " + std::to_string(current_start) +
                            ": conversation needs at least 2 utterances");
    }
    corpus.conversations.push_back(std::move(current));
    current = Conversation{};
  };

  std::size_t pos = 0;
  while (pos <= document.size()) {
    std::size_t nl = document.find('\n', pos);
    if (nl == std::string_view::npos) nl = document.size();
    std::string_view line = document.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (is_blank(line)) {
      close();
    } else {
      if (current.utterances.empty()) current_start = line_no;
      const Role expected = current.utterances.size() % 2 == 0 ? Role::Speaker : Role::Listener;
      current.utterances.push_back(parse_line(line, expected, line_no, opts));
    }
    if (nl == document.size()) break;
    pos = nl + 1;
  }
  close();

  if (corpus.conversations.empty()) {
    throw CorpusError(CorpusError::Kind::EmptyCorpus, 0, "corpus contains no conversations");
  }
  return corpus;
}

Corpus load_corpus(const std::string& path, const ParseOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_corpus(ss.str(), opts);
}

std::string serialize_utterance(const Utterance& u) {
  std::string out = u.text;
  out += kCSSeparator;
  out += to_string(u.cs);
  out += kEmoSeparator;
  out += to_string(u.emo);
  out += kStrategySeparator;
  out += to_string(u.strategy);
  return out;
}

std::string serialize_corpus(const Corpus& c) {
  std::string out;
  for (const auto& conv : c.conversations) {
    for (const auto& u : conv.utterances) {
      out += serialize_utterance(u);
      out.push_back('\n');
    }
    out.push_back('\n');
  }
  return out;
}

void save_corpus(const Corpus& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  out << serialize_corpus(c);
}

Tokenizer default_tokenizer() {
  return [](std::string_view s) { return text::tokenize(s); };
}

StatsReport corpus_stats(const Corpus& c, const Tokenizer& tokenizer) {
  StatsReport r;
  for (Taxonomy t : kTaxonomies) {
    r.label_histograms[t].assign(static_cast<std::size_t>(label_count(t)), LabelCount{});
  }
  r.conversation_count = c.conversations.size();
  for (const auto& conv : c.conversations) {
    for (const auto& u : conv.utterances) {
      ++r.utterance_count;
      if (u.role == Role::Speaker) {
        ++r.speaker_utterances;
      } else {
        ++r.listener_utterances;
      }
      r.token_count += tokenizer(u.text).size();
      const LabelTriple l = u.labels();
      for (Taxonomy t : kTaxonomies) ++r.label_histograms[t][static_cast<std::size_t>(l.index(t))].count;
    }
  }
  if (r.conversation_count > 0) {
    r.avg_tokens_per_conversation =
        static_cast<double>(r.token_count) / static_cast<double>(r.conversation_count);
    r.avg_utterances_per_conversation =
        static_cast<double>(r.utterance_count) / static_cast<double>(r.conversation_count);
  }
  if (r.utterance_count > 0) {
    r.avg_tokens_per_utterance = static_cast<double>(r.token_count) / static_cast<double>(r.utterance_count);
    for (auto& [t, hist] : r.label_histograms) {
      for (auto& lc : hist) {
        lc.proportion = 100.0 * static_cast<double>(lc.count) / static_cast<double>(r.utterance_count);
      }
    }
  }
  return r;
}

std::string format_stats(const StatsReport& r) {
  std::ostringstream os;
  auto row = [&os](std::string_view name, const std::string& value) {
    os << std::left << std::setw(34) << name << std::right << std::setw(12) << value << '\n';
  };
  auto fixed2 = [](double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << v;
    return s.str();
  };
  row("Conversations", std::to_string(r.conversation_count));
  row("Utterances", std::to_string(r.utterance_count));
  row("SPEAKER Utterances", std::to_string(r.speaker_utterances));
  row("LISTENER Utterances", std::to_string(r.listener_utterances));
  row("Average token per conversation", fixed2(r.avg_tokens_per_conversation));
  row("Average utterance per conversation", fixed2(r.avg_utterances_per_conversation));
  row("Average token per utterance", fixed2(r.avg_tokens_per_utterance));
  for (Taxonomy t : kTaxonomies) {
    os << '\n' << std::left << std::setw(34) << (std::string(taxonomy_name(t)) + " label") << std::right
       << std::setw(12) << "Number" << std::setw(12) << "Proportion" << '\n';
    const auto& hist = r.label_histograms.at(t);
    for (std::size_t i = 0; i < hist.size(); ++i) {
      os << std::left << std::setw(34) << label_name(t, static_cast<int>(i)) << std::right << std::setw(12)
         << hist[i].count << std::setw(12) << fixed2(hist[i].proportion) << '\n';
    }
  }
  return os.str();
}

CorpusSplit split_corpus(const Corpus& c, const SplitRatios& ratios, std::uint64_t seed) {
  if (ratios.train < 0 || ratios.dev < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.dev + ratios.test - 1.0) > 1e-9) {
    throw CorpusError(CorpusError::Kind::BadRatios, 0, "split ratios must be non-negative and sum to 1");
  }
  const std::size_t n = c.conversations.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(n))));
  const auto n_dev =
      std::min(n - n_train, static_cast<std::size_t>(std::llround(ratios.dev * static_cast<double>(n))));

  // Each part keeps the input's conversation order.
  auto take = [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
    std::sort(idx.begin(), idx.end());
    Corpus part;
    for (std::size_t i : idx) part.conversations.push_back(c.conversations[i]);
    return part;
  };
  return CorpusSplit{take(0, n_train), take(n_train, n_train + n_dev), take(n_train + n_dev, n)};
}

}  // namespace csd
