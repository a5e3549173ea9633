#include "csd/bundle.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "csd/checkpoint.hpp"

namespace csd {

namespace fs = std::filesystem;

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},
          {"d_model", c.d_model},
          {"n_heads", c.n_heads},
          {"n_layers_encoder", c.n_layers_encoder},
          {"n_layers_decoder", c.n_layers_decoder},
          {"ffn_dim", c.ffn_dim},
          {"max_len", c.max_len},
          {"cnn_kernel_sizes", c.cnn_kernel_sizes},
          {"cnn_channels", c.cnn_channels},
          {"segment_count", c.segment_count},
          {"embedding_init", c.embedding_init}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ModelError(ModelError::Kind::ConfigError, "model config must be an object");
  static const std::set<std::string> known{"vocab_size",  "d_model",          "n_heads",      "n_layers_encoder",
                                           "n_layers_decoder", "ffn_dim",     "max_len",      "cnn_kernel_sizes",
                                           "cnn_channels", "segment_count",   "embedding_init"};
  for (const auto& [k, v] : j.items()) {
    if (known.count(k) == 0) throw ModelError(ModelError::Kind::ConfigError, "unknown model key: " + k);
  }
  ModelConfig c;
  try {
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.d_model = j.value("d_model", c.d_model);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.n_layers_encoder = j.value("n_layers_encoder", c.n_layers_encoder);
    c.n_layers_decoder = j.value("n_layers_decoder", c.n_layers_decoder);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.max_len = j.value("max_len", c.max_len);
    c.cnn_kernel_sizes = j.value("cnn_kernel_sizes", c.cnn_kernel_sizes);
    c.cnn_channels = j.value("cnn_channels", c.cnn_channels);
    c.segment_count = j.value("segment_count", c.segment_count);
    c.embedding_init = j.value("embedding_init", c.embedding_init);
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(ModelError::Kind::ConfigError, std::string("bad model config: ") + e.what());
  }
  return c;
}

namespace {

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw ModelError(ModelError::Kind::ModelMissing, "missing model file: " + p.string());
}

ClassifierModel load_classifier(const fs::path& p, const ModelConfig& cfg, Taxonomy t) {
  require_file(p);
  ClassifierModel m(cfg, t, 0);
  load_parameters(read_checkpoint(p.string()), m.params);
  return m;
}

const char* classifier_file(Taxonomy t) {
  switch (t) {
    case Taxonomy::CS: return "classifier_cs.ckpt";
    case Taxonomy::Emotion: return "classifier_emotion.ckpt";
    case Taxonomy::Strategy: return "classifier_strategy.ckpt";
  }
  return "";
}

}  // namespace

void save_classifiers(const std::string& dir, const ClassifierSet& cls) {
  fs::create_directories(dir);
  for (Taxonomy t : kTaxonomies) {
    const nlohmann::json meta{{"kind", "classifier"},
                              {"taxonomy", std::string(taxonomy_name(t))},
                              {"context_turns", cls.context_turns},
                              {"model", model_config_to_json(cls.get(t).config())}};
    save_checkpoint((fs::path(dir) / classifier_file(t)).string(), meta, cls.get(t).params);
  }
}

ClassifierSet load_classifiers(const std::string& dir, const ModelConfig& cfg) {
  ClassifierSet set;
  set.emotion = load_classifier(fs::path(dir) / classifier_file(Taxonomy::Emotion), cfg, Taxonomy::Emotion);
  set.cs = load_classifier(fs::path(dir) / classifier_file(Taxonomy::CS), cfg, Taxonomy::CS);
  set.strategy = load_classifier(fs::path(dir) / classifier_file(Taxonomy::Strategy), cfg, Taxonomy::Strategy);
  const auto meta = read_checkpoint((fs::path(dir) / classifier_file(Taxonomy::Emotion)).string()).meta;
  set.context_turns = meta.value("context_turns", 1);
  return set;
}

void save_pretrained(const std::string& path, const PretrainModel& m, const std::string& dict_kind) {
  const nlohmann::json meta{{"kind", "pretrained_encoder"}, {"dict", dict_kind}, {"model", model_config_to_json(m.config())}};
  save_checkpoint(path, meta, m.params);
}

PretrainModel load_pretrained(const std::string& path) {
  require_file(path);
  const CheckpointData data = read_checkpoint(path);
  PretrainModel m(model_config_from_json(data.meta.at("model")), 0);
  load_parameters(data, m.params);
  return m;
}

void ModelBundle::save(const std::string& dir) const {
  fs::create_directories(dir);
  vocab.save((fs::path(dir) / "vocab.txt").string());
  const nlohmann::json meta{{"model", model_config_to_json(config)},
                            {"ablation", ablation.name()},
                            {"ablation_flags",
                             {{"progressive_mask", ablation.use_progressive_mask},
                              {"input_labels", ablation.use_input_labels},
                              {"cross_attention", ablation.use_cross_attention_splice},
                              {"attention_loss", ablation.use_attention_loss}}},
                            {"context_turns", classifiers.context_turns},
                            {"max_response_tokens", max_response_tokens},
                            {"cross_attention", generator.cross_attention()}};
  std::ofstream((fs::path(dir) / "bundle.json").string()) << meta.dump(2) << '\n';
  save_classifiers(dir, classifiers);
  save_checkpoint((fs::path(dir) / "generator.ckpt").string(), {{"kind", "generator"}}, generator.params);
}

ModelBundle ModelBundle::load(const std::string& dir) {
  const fs::path root(dir);
  for (const char* f : {"vocab.txt", "bundle.json", "generator.ckpt"}) require_file(root / f);
  ModelBundle b;
  b.vocab = Vocabulary::load((root / "vocab.txt").string());
  nlohmann::json meta;
  try {
    std::ifstream in((root / "bundle.json").string());
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt bundle.json: ") + e.what());
  }
  b.config = model_config_from_json(meta.at("model"));
  if (b.config.vocab_size != b.vocab.size()) throw CheckpointError("vocabulary size does not match the model config");
  const auto& fl = meta.at("ablation_flags");
  b.ablation.use_progressive_mask = fl.value("progressive_mask", true);
  b.ablation.use_input_labels = fl.value("input_labels", true);
  b.ablation.use_cross_attention_splice = fl.value("cross_attention", true);
  b.ablation.use_attention_loss = fl.value("attention_loss", true);
  b.max_response_tokens = meta.value("max_response_tokens", 48);
  b.classifiers = load_classifiers(dir, b.config);
  b.generator = GeneratorModel(b.config, meta.value("cross_attention", true), 0);
  load_parameters(read_checkpoint((root / "generator.ckpt").string()), b.generator.params);
  return b;
}

std::string ModelBundle::version() const {
  std::string v = parameter_hash(generator.params);
  for (Taxonomy t : kTaxonomies) v += "-" + parameter_hash(classifiers.get(t).params).substr(0, 4);
  return v;
}

}  // namespace csd
