#ifndef CSD_PIPELINE_HPP
#define CSD_PIPELINE_HPP

#include <memory>
#include <string>
#include <vector>

#include "csd/bundle.hpp"
#include "csd/config.hpp"
#include "csd/corpus.hpp"
#include "csd/lexicon.hpp"
#include "csd/training.hpp"

namespace csd {

/// Lexicon and segmentation word list. Empty config paths fall back to the
/// resources of the built-in synthetic template bank.
struct KnowledgeResources {
  knowledge::VALexicon lexicon;
  std::vector<std::string> word_list;

  static KnowledgeResources from_paths(const PathsConfig& paths);
  static KnowledgeResources builtin();
  /// Extractor with idf fitted on `corpus`.
  std::unique_ptr<knowledge::DefaultExtractor> extractor(const Corpus& corpus) const;
};

/// The schedule actually used for pretraining: the ablation without
/// progressive masking switches to classic token masking.
masking::MaskSchedule effective_schedule(const masking::MaskSchedule& s, const AblationConfig& abl);

struct PipelineReport {
  PretrainReport keyword_pretrain;
  PretrainReport emotion_pretrain;
  ClassifierReport classifier;
  TrainReport decoder;
};

/// Runs every training phase in order: dictionaries, both encoder
/// pretrainings, the three classifiers and the decoder.
ModelBundle train_bundle(const Corpus& train, const Corpus* dev, const ExperimentConfig& cfg,
                         const KnowledgeResources& res, PipelineReport* report = nullptr);

/// Bundle assembled from already-trained parts.
ModelBundle make_bundle(Vocabulary vocab, const ModelConfig& cfg, const ExperimentConfig& exp, ClassifierSet classifiers,
                        GeneratorModel generator);

}  // namespace csd

#endif  // CSD_PIPELINE_HPP
