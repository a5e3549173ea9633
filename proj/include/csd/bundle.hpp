#ifndef CSD_BUNDLE_HPP
#define CSD_BUNDLE_HPP

#include <string>

#include "json.hpp"

#include "csd/model.hpp"
#include "csd/training.hpp"
#include "csd/vocab.hpp"

namespace csd {

nlohmann::json model_config_to_json(const ModelConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Everything inference needs, stored as one directory:
///   vocab.txt, bundle.json, classifier_{emotion,cs,strategy}.ckpt, generator.ckpt
struct ModelBundle {
  Vocabulary vocab;
  ModelConfig config;
  AblationConfig ablation;
  ClassifierSet classifiers;
  GeneratorModel generator;
  int max_response_tokens = 48;

  void save(const std::string& dir) const;
  /// Throws ModelError(ModelMissing) for a missing file and CheckpointError
  /// for a corrupt one.
  static ModelBundle load(const std::string& dir);
  /// Hash of the generator and classifier weights.
  std::string version() const;
};

void save_pretrained(const std::string& path, const PretrainModel& m, const std::string& dict_kind);
PretrainModel load_pretrained(const std::string& path);

void save_classifiers(const std::string& dir, const ClassifierSet& cls);
ClassifierSet load_classifiers(const std::string& dir, const ModelConfig& cfg);

}  // namespace csd

#endif  // CSD_BUNDLE_HPP
