#include "csd/config.hpp"

#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "csd/bundle.hpp"
#include "csd/text.hpp"

namespace csd {

namespace {

using nlohmann::json;

class TomlLine {
 public:
  TomlLine(std::string_view s, int line) : s_(s), line_(line) {}

  json value() {
    skip_ws();
    if (eof()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"' || c == '\'') return json(string_value());
    if (c == '[') return array_value();
    return scalar_value();
  }

  void expect_end() {
    skip_ws();
    if (!eof() && s_[pos_] != '#') fail("unexpected trailing characters");
  }

 private:
  [[noreturn]] void fail(const std::string& m) const {
    throw ConfigError(line_, "TOML line " + std::to_string(line_) + ": " + m);
  }
  bool eof() const { return pos_ >= s_.size(); }
  void skip_ws() {
    while (!eof() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  std::string string_value() {
    const char quote = s_[pos_++];
    std::string out;
    while (!eof() && s_[pos_] != quote) {
      char c = s_[pos_++];
      if (quote == '"' && c == '\\') {
        if (eof()) fail("unterminated escape");
        const char e = s_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      }
      out.push_back(c);
    }
    if (eof()) fail("unterminated string");
    ++pos_;
    return out;
  }

  json array_value() {
    ++pos_;
    json arr = json::array();
    skip_ws();
    if (!eof() && s_[pos_] == ']') {
      ++pos_;
      return arr;
    }
    while (true) {
      arr.push_back(value());
      skip_ws();
      if (eof()) fail("unterminated array");
      if (s_[pos_] == ',') {
        ++pos_;
        skip_ws();
        if (!eof() && s_[pos_] == ']') {
          ++pos_;
          return arr;
        }
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return arr;
      }
      fail("expected ',' or ']' in array");
    }
  }

  json scalar_value() {
    const std::size_t start = pos_;
    while (!eof() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != ' ' && s_[pos_] != '\t' && s_[pos_] != '#') {
      ++pos_;
    }
    std::string tok(s_.substr(start, pos_ - start));
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::string digits;
    for (char c : tok) {
      if (c != '_') digits.push_back(c);
    }
    if (digits.empty()) fail("missing value");
    const bool is_float = digits.find_first_of(".eE") != std::string::npos || digits == "inf" || digits == "nan";
    try {
      std::size_t used = 0;
      if (is_float) {
        const double d = std::stod(digits, &used);
        if (used == digits.size()) return d;
      } else {
        const long long v = std::stoll(digits, &used, 10);
        if (used == digits.size()) return v;
      }
    } catch (const std::exception&) {
    }
    fail("cannot parse value '" + tok + "'");
  }

  std::string_view s_;
  int line_;
  std::size_t pos_ = 0;
};

bool bare_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

std::string strip_comment(const std::string& line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote != 0) {
      if (c == '\\' && quote == '"') {
        ++i;
      } else if (c == quote) {
        quote = 0;
      }
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

}  // namespace

json parse_toml(std::string_view text) {
  json root = json::object();
  json* section = &root;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = text::trim(strip_comment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3 || s[1] == '[') {
        throw ConfigError(line, "TOML line " + std::to_string(line) + ": malformed section header");
      }
      const std::string name = text::trim(std::string_view(s).substr(1, s.size() - 2));
      if (!bare_key(name)) throw ConfigError(line, "TOML line " + std::to_string(line) + ": bad section name");
      if (root.contains(name)) throw ConfigError(line, "TOML line " + std::to_string(line) + ": duplicate section");
      root[name] = json::object();
      section = &root[name];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(line, "TOML line " + std::to_string(line) + ": expected key = value");
    const std::string key = text::trim(std::string_view(s).substr(0, eq));
    if (!bare_key(key)) throw ConfigError(line, "TOML line " + std::to_string(line) + ": bad key");
    if (section->contains(key)) throw ConfigError(line, "TOML line " + std::to_string(line) + ": duplicate key " + key);
    TomlLine tl(std::string_view(s).substr(eq + 1), line);
    (*section)[key] = tl.value();
    tl.expect_end();
  }
  return root;
}

namespace {

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(0, "config section '" + where + "' must be a table");
  for (const auto& [k, v] : obj.items()) {
    if (allowed.count(k) == 0) throw ConfigError(0, "unknown config key '" + where + "." + k + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

void read_lambdas(const json& obj, const char* key, std::array<double, masking::kStages>& out) {
  if (!obj.contains(key)) return;
  const auto v = obj.at(key).get<std::vector<double>>();
  if (v.size() != out.size()) throw ConfigError(0, std::string(key) + " needs exactly 5 values");
  std::copy(v.begin(), v.end(), out.begin());
}

void read_optimizer(const json& obj, OptimizerConfig& o) {
  read(obj, "lr", o.lr);
  read(obj, "warmup_steps", o.warmup_steps);
  read(obj, "weight_decay", o.weight_decay);
  read(obj, "clip_norm", o.clip_norm);
  read(obj, "beta1", o.beta1);
  read(obj, "beta2", o.beta2);
}

const std::set<std::string> kOptimizerKeys{"lr", "warmup_steps", "weight_decay", "clip_norm", "beta1", "beta2"};

std::set<std::string> with_optimizer(std::set<std::string> keys) {
  keys.insert(kOptimizerKeys.begin(), kOptimizerKeys.end());
  return keys;
}

json optimizer_json(const OptimizerConfig& o) {
  return {{"lr", o.lr},
          {"warmup_steps", o.warmup_steps},
          {"weight_decay", o.weight_decay},
          {"clip_norm", o.clip_norm},
          {"beta1", o.beta1},
          {"beta2", o.beta2}};
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    check_keys(j, "<root>",
               {"seed", "paths", "model", "masking", "knowledge", "pretrain", "classifier", "decoder", "generation",
                "ablation"});
    read(j, "seed", c.seed);
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      check_keys(p, "paths",
                 {"corpus", "dev_corpus", "test_corpus", "lexicon", "word_list", "dicts", "model_dir", "transcripts"});
      read(p, "corpus", c.paths.corpus);
      read(p, "dev_corpus", c.paths.dev_corpus);
      read(p, "test_corpus", c.paths.test_corpus);
      read(p, "lexicon", c.paths.lexicon);
      read(p, "word_list", c.paths.word_list);
      read(p, "dicts", c.paths.dicts);
      read(p, "model_dir", c.paths.model_dir);
      read(p, "transcripts", c.paths.transcripts);
    }
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
    if (j.contains("masking")) {
      const auto& m = j.at("masking");
      check_keys(m, "masking",
                 {"keyword_lambdas", "emotion_lambdas", "stage_boundaries", "base_mask_rate", "classic_token_rate"});
      read_lambdas(m, "keyword_lambdas", c.keyword_mask.lambdas);
      read_lambdas(m, "emotion_lambdas", c.emotion_mask.lambdas);
      for (auto* s : {&c.keyword_mask, &c.emotion_mask}) {
        read_lambdas(m, "stage_boundaries", s->stage_boundaries);
        read(m, "base_mask_rate", s->base_mask_rate);
        read(m, "classic_token_rate", s->classic_token_rate);
      }
      masking::validate(c.keyword_mask);
      masking::validate(c.emotion_mask);
    }
    if (j.contains("knowledge")) {
      const auto& k = j.at("knowledge");
      check_keys(k, "knowledge", {"lambda_emo", "keywords_per_utterance", "keyword_sentence_density"});
      read(k, "lambda_emo", c.knowledge.lambda_emo);
      read(k, "keywords_per_utterance", c.knowledge.keywords_per_utterance);
      read(k, "keyword_sentence_density", c.knowledge.keyword_sentence_density);
    }
    if (j.contains("pretrain")) {
      const auto& p = j.at("pretrain");
      check_keys(p, "pretrain", with_optimizer({"steps", "batch_size"}));
      read(p, "steps", c.pretrain.steps);
      read(p, "batch_size", c.pretrain.batch_size);
      read_optimizer(p, c.pretrain.optimizer);
    }
    if (j.contains("classifier")) {
      const auto& p = j.at("classifier");
      check_keys(p, "classifier", with_optimizer({"epochs", "max_steps", "batch_size", "context_turns"}));
      read(p, "epochs", c.classifier.epochs);
      read(p, "max_steps", c.classifier.max_steps);
      read(p, "batch_size", c.classifier.batch_size);
      read(p, "context_turns", c.classifier.context_turns);
      read_optimizer(p, c.classifier.optimizer);
    }
    if (j.contains("decoder")) {
      const auto& p = j.at("decoder");
      check_keys(p, "decoder",
                 with_optimizer({"steps", "batch_size", "gamma1", "gamma2", "gamma3", "rescale_eta",
                                 "max_response_tokens", "keywords_per_utterance"}));
      read(p, "steps", c.decoder.steps);
      read(p, "batch_size", c.decoder.batch_size);
      read(p, "gamma1", c.decoder.weights.gamma1);
      read(p, "gamma2", c.decoder.weights.gamma2);
      read(p, "gamma3", c.decoder.weights.gamma3);
      read(p, "rescale_eta", c.decoder.rescale_eta);
      read(p, "max_response_tokens", c.decoder.max_response_tokens);
      read(p, "keywords_per_utterance", c.decoder.keywords_per_utterance);
      read_optimizer(p, c.decoder.optimizer);
      for (double g : {c.decoder.weights.gamma1, c.decoder.weights.gamma2, c.decoder.weights.gamma3}) {
        if (g < 0.0) throw ConfigError(0, "loss weights must be non-negative");
      }
    }
    if (j.contains("generation")) {
      const auto& g = j.at("generation");
      check_keys(g, "generation", {"temperature", "top_k", "top_p", "max_new_tokens", "min_new_tokens", "seed", "greedy"});
      read(g, "temperature", c.generation.temperature);
      read(g, "top_k", c.generation.top_k);
      read(g, "top_p", c.generation.top_p);
      read(g, "max_new_tokens", c.generation.max_new_tokens);
      read(g, "min_new_tokens", c.generation.min_new_tokens);
      read(g, "seed", c.generation.seed);
      read(g, "greedy", c.generation.greedy);
      c.generation.validate();
    }
    if (j.contains("ablation")) {
      const auto& a = j.at("ablation");
      if (a.is_string()) {
        c.ablation = AblationConfig::from_name(a.get<std::string>());
      } else {
        check_keys(a, "ablation", {"name", "progressive_mask", "input_labels", "cross_attention", "attention_loss"});
        if (a.contains("name")) c.ablation = AblationConfig::from_name(a.at("name").get<std::string>());
        read(a, "progressive_mask", c.ablation.use_progressive_mask);
        read(a, "input_labels", c.ablation.use_input_labels);
        read(a, "cross_attention", c.ablation.use_cross_attention_splice);
        read(a, "attention_loss", c.ablation.use_attention_loss);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(0, std::string("bad config value: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(0, e.what());
  } catch (const ModelError& e) {
    throw ConfigError(0, e.what());
  }
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json model = model_config_to_json(c.model);
  json pre = optimizer_json(c.pretrain.optimizer);
  pre["steps"] = c.pretrain.steps;
  pre["batch_size"] = c.pretrain.batch_size;
  json cls = optimizer_json(c.classifier.optimizer);
  cls["epochs"] = c.classifier.epochs;
  cls["max_steps"] = c.classifier.max_steps;
  cls["batch_size"] = c.classifier.batch_size;
  cls["context_turns"] = c.classifier.context_turns;
  json dec = optimizer_json(c.decoder.optimizer);
  dec["steps"] = c.decoder.steps;
  dec["batch_size"] = c.decoder.batch_size;
  dec["gamma1"] = c.decoder.weights.gamma1;
  dec["gamma2"] = c.decoder.weights.gamma2;
  dec["gamma3"] = c.decoder.weights.gamma3;
  dec["rescale_eta"] = c.decoder.rescale_eta;
  dec["max_response_tokens"] = c.decoder.max_response_tokens;
  dec["keywords_per_utterance"] = c.decoder.keywords_per_utterance;
  return {{"seed", c.seed},
          {"paths",
           {{"corpus", c.paths.corpus},
            {"dev_corpus", c.paths.dev_corpus},
            {"test_corpus", c.paths.test_corpus},
            {"lexicon", c.paths.lexicon},
            {"word_list", c.paths.word_list},
            {"dicts", c.paths.dicts},
            {"model_dir", c.paths.model_dir},
            {"transcripts", c.paths.transcripts}}},
          {"model", model},
          {"masking",
           {{"keyword_lambdas", c.keyword_mask.lambdas},
            {"emotion_lambdas", c.emotion_mask.lambdas},
            {"stage_boundaries", c.keyword_mask.stage_boundaries},
            {"base_mask_rate", c.keyword_mask.base_mask_rate},
            {"classic_token_rate", c.keyword_mask.classic_token_rate}}},
          {"knowledge",
           {{"lambda_emo", c.knowledge.lambda_emo},
            {"keywords_per_utterance", c.knowledge.keywords_per_utterance},
            {"keyword_sentence_density", c.knowledge.keyword_sentence_density}}},
          {"pretrain", pre},
          {"classifier", cls},
          {"decoder", dec},
          {"generation",
           {{"temperature", c.generation.temperature},
            {"top_k", c.generation.top_k},
            {"top_p", c.generation.top_p},
            {"max_new_tokens", c.generation.max_new_tokens},
            {"min_new_tokens", c.generation.min_new_tokens},
            {"seed", c.generation.seed},
            {"greedy", c.generation.greedy}}},
          {"ablation",
           {{"progressive_mask", c.ablation.use_progressive_mask},
            {"input_labels", c.ablation.use_input_labels},
            {"cross_attention", c.ablation.use_cross_attention_splice},
            {"attention_loss", c.ablation.use_attention_loss}}}};
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(0, "cannot open config: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::filesystem::path p(path);
  json j;
  if (p.extension() == ".json") {
    try {
      j = json::parse(ss.str());
    } catch (const json::exception& e) {
      throw ConfigError(0, std::string("invalid JSON config: ") + e.what());
    }
  } else {
    j = parse_toml(ss.str());
  }
  ExperimentConfig c = config_from_json(j);
  const auto base = p.parent_path();
  for (std::string* s : {&c.paths.corpus, &c.paths.dev_corpus, &c.paths.test_corpus, &c.paths.lexicon,
                         &c.paths.word_list, &c.paths.dicts, &c.paths.model_dir, &c.paths.transcripts}) {
    if (!s->empty() && std::filesystem::path(*s).is_relative()) *s = (base / *s).lexically_normal().string();
  }
  return c;
}

}  // namespace csd
