#ifndef CSD_CONFIG_HPP
#define CSD_CONFIG_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "json.hpp"

#include "csd/generation.hpp"
#include "csd/lexicon.hpp"
#include "csd/masking.hpp"
#include "csd/model.hpp"
#include "csd/training.hpp"

namespace csd {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, const std::string& what) : std::runtime_error(what), line_(line) {}
  /// 1-based line of a TOML syntax error, 0 otherwise.
  int line() const { return line_; }

 private:
  int line_;
};

struct PathsConfig {
  std::string corpus;       // training conversations
  std::string dev_corpus;   // optional
  std::string test_corpus;  // optional
  std::string lexicon;      // valence/arousal TSV
  std::string word_list;    // optional, one word per line
  std::string dicts;        // knowledge dictionaries
  std::string model_dir = "model";
  std::string transcripts;  // optional transcript log for the service
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  PathsConfig paths;
  ModelConfig model;  // vocab_size is filled in from the vocabulary
  masking::MaskSchedule keyword_mask = masking::keyword_schedule();
  masking::MaskSchedule emotion_mask = masking::emotion_schedule();
  knowledge::ExtractorConfig knowledge;
  PretrainOptions pretrain;
  ClassifierOptions classifier;
  DecoderOptions decoder;
  GenerationParams generation;
  AblationConfig ablation;
};

/// Parses a TOML subset: [section] headers, key = value pairs, strings,
/// integers, floats, booleans, flat arrays and # comments.
nlohmann::json parse_toml(std::string_view text);

/// Unknown sections or keys are rejected so typos surface early.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);
/// Chooses JSON or TOML by extension (.json, otherwise TOML). Relative paths
/// inside the file resolve against the file's directory.
ExperimentConfig load_config(const std::string& path);

}  // namespace csd

#endif  // CSD_CONFIG_HPP
