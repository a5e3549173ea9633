#ifndef CSD_BUNDLE_FIXTURE_HPP
#define CSD_BUNDLE_FIXTURE_HPP

#include <memory>
#include <string>

#include "csd/config.hpp"
#include "csd/pipeline.hpp"
#include "test_support.hpp"

namespace csd::fixtures {

/// Small, quick configuration exercising every training phase.
inline ExperimentConfig tiny_experiment(const std::string& ablation = "full") {
  ExperimentConfig c;
  c.seed = 11;
  c.model = tiny_config(0);
  c.pretrain.steps = 10;
  c.pretrain.batch_size = 4;
  c.classifier.epochs = 1;
  c.classifier.max_steps = 20;
  c.classifier.batch_size = 8;
  c.decoder.steps = 30;
  c.decoder.batch_size = 4;
  c.decoder.max_response_tokens = 24;
  c.generation.max_new_tokens = 12;
  c.ablation = AblationConfig::from_name(ablation);
  return c;
}

inline ModelBundle tiny_bundle(const std::string& ablation = "full", std::uint64_t corpus_seed = 5) {
  const Corpus train = synthetic(corpus_seed, 24, 2, 6);
  return train_bundle(train, nullptr, tiny_experiment(ablation), KnowledgeResources::builtin());
}

/// Process-wide bundle for tests that only run inference.
inline std::shared_ptr<ModelBundle> shared_tiny_bundle() {
  static const std::shared_ptr<ModelBundle> b = std::make_shared<ModelBundle>(tiny_bundle());
  return b;
}

}  // namespace csd::fixtures

#endif  // CSD_BUNDLE_FIXTURE_HPP
