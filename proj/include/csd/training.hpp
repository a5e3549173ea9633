#ifndef CSD_TRAINING_HPP
#define CSD_TRAINING_HPP

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "csd/autograd.hpp"
#include "csd/corpus.hpp"
#include "csd/lexicon.hpp"
#include "csd/masking.hpp"
#include "csd/model.hpp"
#include "csd/vocab.hpp"

namespace csd {

class TrainingError : public std::runtime_error {
 public:
  enum class Kind { Divergence, LengthMismatch, LengthError, MissingArtifact };
  TrainingError(Kind kind, const std::string& what, long step = -1)
      : std::runtime_error(what), kind_(kind), step_(step) {}
  Kind kind() const { return kind_; }
  /// Optimizer step at which the error surfaced, -1 when not applicable.
  long step() const { return step_; }

 private:
  Kind kind_;
  long step_;
};

struct LossWeights {
  double gamma1 = 1.0;
  double gamma2 = 0.5;
  double gamma3 = 0.5;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct AblationConfig {
  bool use_progressive_mask = true;        // off: "nm"
  bool use_input_labels = true;            // off: "il"
  bool use_cross_attention_splice = true;  // off: "ca"
  bool use_attention_loss = true;          // off: "al"

  /// "full", "nm", "il", "ca" or "al"; throws std::invalid_argument otherwise.
  static AblationConfig from_name(std::string_view name);
  std::string name() const;
  friend bool operator==(const AblationConfig&, const AblationConfig&) = default;
};

struct OptimizerConfig {
  double lr = 1e-3;
  long warmup_steps = 50;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  /// Global gradient-norm clip; <= 0 disables clipping.
  double clip_norm = 1.0;
};

/// Linear warmup to `lr`, then decay proportional to 1/sqrt(step). Steps are 1-based.
double learning_rate(const OptimizerConfig& cfg, long step);

/// Adam with decoupled weight decay, applied to matrix-shaped parameters only.
class AdamW {
 public:
  explicit AdamW(OptimizerConfig cfg = {}) : cfg_(cfg) {}
  /// Clips, updates every parameter from its gradient and zeroes gradients.
  void step(ag::ParameterSet& params);
  long steps() const { return t_; }
  double last_grad_norm() const { return last_norm_; }
  double last_lr() const { return last_lr_; }

 private:
  OptimizerConfig cfg_;
  std::vector<ag::Matrix> m_, v_;
  long t_ = 0;
  double last_norm_ = 0.0;
  double last_lr_ = 0.0;
};

/// Tokenized view of a corpus, computed once.
struct TokenizedCorpus {
  std::vector<std::vector<std::vector<std::string>>> tokens;  // [conversation][utterance][token]
  static TokenizedCorpus from(const Corpus& c, const Tokenizer& tok = default_tokenizer());
};

// --- Phase 1: knowledge-masked encoder pretraining -------------------------

struct PretrainOptions {
  long steps = 200;
  int batch_size = 8;
  OptimizerConfig optimizer{};
};

struct PretrainReport {
  std::vector<double> mlm_loss;  // per step, mean over the batch
  std::vector<double> nsp_loss;
  double seconds = 0.0;
  std::uint64_t seed = 0;
};

PretrainModel pretrain_encoder(const Corpus& corpus, const Vocabulary& vocab, const knowledge::KnowledgeDict& dict,
                               const masking::MaskSchedule& sched, const ModelConfig& cfg,
                               const PretrainOptions& opts, std::uint64_t seed, PretrainReport* report = nullptr);

// --- Phase 2: classifiers ---------------------------------------------------

/// "[CLS] previous turns [SEP] target [SEP]"; the previous turns carry segment
/// 0 and the target segment 1. Oldest context tokens are dropped first when
/// the sequence exceeds max_len.
struct ClassifierInput {
  std::vector<int> ids;
  std::vector<int> segment_ids;
};
ClassifierInput make_classifier_input(const Conversation& conv, std::size_t target, const Vocabulary& vocab,
                                      int context_turns, int max_len, const Tokenizer& tok = default_tokenizer());

class ClassifierSet {
 public:
  ClassifierModel emotion;
  ClassifierModel cs;
  ClassifierModel strategy;
  int context_turns = 1;

  ClassifierModel& get(Taxonomy t);
  const ClassifierModel& get(Taxonomy t) const;
  /// Labels of utterance `target` given its preceding turns.
  LabelTriple predict(const Conversation& conv, std::size_t target, const Vocabulary& vocab);
  /// Summary states for splicing, rows in emotion, CS, strategy order (3 x d).
  ag::Matrix states(const Conversation& conv, std::size_t target, const Vocabulary& vocab);
};

struct ClassifierOptions {
  int epochs = 2;
  /// Stops early once this many optimizer steps ran per classifier; 0 = no cap.
  long max_steps = 0;
  int batch_size = 8;
  int context_turns = 1;
  OptimizerConfig optimizer{};
};

struct ClassifierReport {
  std::map<Taxonomy, double> train_accuracy;
  std::map<Taxonomy, double> dev_accuracy;
  std::map<Taxonomy, std::vector<double>> losses;
  double seconds = 0.0;
};

ClassifierSet train_classifiers(const Corpus& train, const Corpus* dev, const Vocabulary& vocab,
                                const PretrainModel& emotion_encoder, const PretrainModel& keyword_encoder,
                                const ClassifierOptions& opts, std::uint64_t seed,
                                ClassifierReport* report = nullptr);

/// Per-taxonomy accuracy over every utterance of the corpus.
std::map<Taxonomy, double> classifier_accuracy(ClassifierSet& cls, const Corpus& corpus, const Vocabulary& vocab);

// --- Phase 3: decoder --------------------------------------------------------

/// Flattened decoder input: "[CLS] u1 <emo> <cs> <str> [SEP] u2 ...".
struct DecoderInput {
  struct Span {
    int begin = 0;  // first text token
    int end = 0;    // one past the last text token
    Role role = Role::Speaker;
    std::size_t utterance = 0;  // index in the source conversation
  };
  std::vector<int> ids;
  std::vector<int> segment_ids;  // 0 for SPEAKER turns, 1 for LISTENER turns
  std::vector<Span> spans;
  /// Index of the oldest utterance kept after truncation.
  std::size_t first_utterance = 0;
};

/// Builds the input over utterances [0, count) of `conv` with one label triple
/// per utterance. When `with_labels` is false the label tokens are omitted.
/// Whole utterances are dropped from the oldest end until the sequence plus
/// `reserve` tokens fits max_len; throws TrainingError(LengthError) if even the
/// most recent utterance alone does not fit.
DecoderInput build_decoder_input(const Conversation& conv, std::size_t count, std::span<const LabelTriple> labels,
                                 const Vocabulary& vocab, int max_len, int reserve = 0, bool with_labels = true,
                                 const Tokenizer& tok = default_tokenizer());

/// Recovers the label triple of every "... <emo> <cs> <str> [SEP]" group.
std::vector<LabelTriple> decode_label_tokens(std::span<const int> ids, const Vocabulary& vocab);

/// Sum of -log p(target) over rows with target >= 0.
ag::Var loss_generation(ag::Var logits, std::span<const int> targets);
double loss_generation(const ag::Matrix& logits, std::span<const int> targets);
/// (1/e) sum_j (eta_j - a_j)^2; throws TrainingError(LengthMismatch).
ag::Var loss_emotion(ag::Var a, std::span<const double> eta_emo);
double loss_emotion(std::span<const double> a, std::span<const double> eta_emo);
ag::Var loss_keyword(ag::Var a, std::span<const double> eta_kw);
double loss_keyword(std::span<const double> a, std::span<const double> eta_kw);
double joint_loss(double gen, double emo, double kw, const LossWeights& w);
ag::Var joint_loss(ag::Var gen, ag::Var emo, ag::Var kw, const LossWeights& w);

struct DecoderOptions {
  long steps = 300;
  int batch_size = 8;
  OptimizerConfig optimizer{};
  LossWeights weights{};
  /// Halve emotion intensities so both attention targets live in [0, 1].
  bool rescale_eta = true;
  int max_response_tokens = 48;
  int keywords_per_utterance = 3;
};

/// One teacher-forced training example.
struct DecoderExample {
  DecoderInput context;
  std::vector<int> ids;      // context followed by response tokens and [SEP]
  std::vector<int> targets;  // per row of ids: next token on response rows, -1 elsewhere
  std::vector<int> query_rows;
  std::vector<SplicePoint> splice_points;
  ag::Matrix classifier_states;  // one row per splice point
  int span_begin = 0, span_end = 0;  // most recent SPEAKER utterance, 0/0 if none
  std::vector<double> eta_emo;
  std::vector<double> eta_kw;
  int response_tokens = 0;
};

struct KnowledgeSources {
  const knowledge::VALexicon* lexicon = nullptr;
  const knowledge::KnowledgeExtractor* extractor = nullptr;
};

/// Context = utterances [0, response) with `labels`; response = utterance
/// `response`. Classifier states are taken from `classifiers` when splicing is
/// active (both input labels and cross-attention enabled).
DecoderExample make_decoder_example(const Conversation& conv, std::size_t response,
                                    std::span<const LabelTriple> labels, const Vocabulary& vocab,
                                    const ModelConfig& cfg, const DecoderOptions& opts, const AblationConfig& abl,
                                    ClassifierSet* classifiers, const KnowledgeSources& knowledge,
                                    const Tokenizer& tok = default_tokenizer());

/// Every LISTENER turn with at least one preceding utterance, gold labels.
std::vector<DecoderExample> make_decoder_examples(const Corpus& corpus, const Vocabulary& vocab,
                                                  const ModelConfig& cfg, const DecoderOptions& opts,
                                                  const AblationConfig& abl, ClassifierSet* classifiers,
                                                  const KnowledgeSources& knowledge);

struct ExampleLoss {
  ag::Var gen;    // mean per response token
  ag::Var emo;    // 0 when attention losses are off
  ag::Var kw;
  ag::Var total;
  ag::Var attention;  // 1 x e, invalid when there is no SPEAKER span
};

ExampleLoss example_loss(ag::Tape& tape, GeneratorModel& model, const DecoderExample& ex, const LossWeights& w,
                         const AblationConfig& abl);

struct StepRecord {
  long step = 0;
  double gen = 0.0, emo = 0.0, kw = 0.0, total = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
};

struct TrainReport {
  std::vector<StepRecord> steps;
  std::vector<nlohmann::json> evals;  // optional per-epoch metric records
  double seconds = 0.0;
  std::uint64_t seed = 0;
  LossWeights weights{};
  /// One JSON object per line.
  void write_jsonl(std::ostream& out) const;
};

GeneratorModel train_decoder(const std::vector<DecoderExample>& examples, const ModelConfig& cfg,
                             const DecoderOptions& opts, const AblationConfig& abl, std::uint64_t seed,
                             TrainReport* report = nullptr);

}  // namespace csd

#endif  // CSD_TRAINING_HPP
