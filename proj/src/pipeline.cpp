#include "csd/pipeline.hpp"

#include <fstream>
#include <sstream>

#include "csd/synth.hpp"
#include "csd/text.hpp"

namespace csd {

KnowledgeResources KnowledgeResources::builtin() {
  const TemplateBank bank = TemplateBank::standard();
  return {knowledge::parse_va_lexicon(bank.lexicon_tsv()), bank.word_list()};
}

KnowledgeResources KnowledgeResources::from_paths(const PathsConfig& paths) {
  KnowledgeResources r = builtin();
  if (!paths.lexicon.empty()) r.lexicon = knowledge::load_va_lexicon(paths.lexicon);
  if (!paths.word_list.empty()) {
    std::ifstream in(paths.word_list);
    if (!in) throw std::runtime_error("cannot open word list: " + paths.word_list);
    r.word_list.clear();
    std::string line;
    while (std::getline(in, line)) {
      const std::string w = text::trim(line);
      if (!w.empty() && w.front() != '#') r.word_list.push_back(w);
    }
  }
  return r;
}

std::unique_ptr<knowledge::DefaultExtractor> KnowledgeResources::extractor(const Corpus& corpus) const {
  auto ex = std::make_unique<knowledge::DefaultExtractor>(lexicon, word_list);
  ex->fit_idf(corpus);
  return ex;
}

masking::MaskSchedule effective_schedule(const masking::MaskSchedule& s, const AblationConfig& abl) {
  masking::MaskSchedule out = s;
  if (!abl.use_progressive_mask) out.progressive = false;
  return out;
}

ModelBundle make_bundle(Vocabulary vocab, const ModelConfig& cfg, const ExperimentConfig& exp, ClassifierSet classifiers,
                        GeneratorModel generator) {
  ModelBundle b;
  b.vocab = std::move(vocab);
  b.config = cfg;
  b.ablation = exp.ablation;
  b.classifiers = std::move(classifiers);
  b.generator = std::move(generator);
  b.max_response_tokens = exp.decoder.max_response_tokens;
  return b;
}

ModelBundle train_bundle(const Corpus& train, const Corpus* dev, const ExperimentConfig& cfg,
                         const KnowledgeResources& res, PipelineReport* report) {
  Vocabulary vocab = Vocabulary::build(train);
  ModelConfig mcfg = cfg.model;
  mcfg.vocab_size = vocab.size();
  mcfg.validate();

  const auto ex = res.extractor(train);
  const knowledge::Dictionaries dicts = knowledge::build_dictionaries(train, cfg.knowledge, *ex);

  PipelineReport local;
  PipelineReport& r = report != nullptr ? *report : local;
  const PretrainModel kw_enc =
      pretrain_encoder(train, vocab, dicts.keyword, effective_schedule(cfg.keyword_mask, cfg.ablation), mcfg,
                       cfg.pretrain, cfg.seed, &r.keyword_pretrain);
  const PretrainModel emo_enc =
      pretrain_encoder(train, vocab, dicts.emotion, effective_schedule(cfg.emotion_mask, cfg.ablation), mcfg,
                       cfg.pretrain, cfg.seed + 100, &r.emotion_pretrain);

  ClassifierSet cls =
      train_classifiers(train, dev, vocab, emo_enc, kw_enc, cfg.classifier, cfg.seed + 200, &r.classifier);

  const KnowledgeSources ks{&res.lexicon, ex.get()};
  const auto examples = make_decoder_examples(train, vocab, mcfg, cfg.decoder, cfg.ablation, &cls, ks);
  GeneratorModel gen = train_decoder(examples, mcfg, cfg.decoder, cfg.ablation, cfg.seed + 300, &r.decoder);
  return make_bundle(std::move(vocab), mcfg, cfg, std::move(cls), std::move(gen));
}

}  // namespace csd
