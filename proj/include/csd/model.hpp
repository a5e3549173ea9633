#ifndef CSD_MODEL_HPP
#define CSD_MODEL_HPP

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "csd/autograd.hpp"
#include "csd/labels.hpp"
#include "csd/vocab.hpp"

namespace csd {

class ModelError : public std::runtime_error {
 public:
  enum class Kind { LengthError, PositionError, ConfigError, ModelMissing };
  ModelError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 128;
  int n_heads = 4;
  int n_layers_encoder = 2;
  int n_layers_decoder = 2;
  /// 0 selects 4 * d_model.
  int ffn_dim = 0;
  int max_len = 256;
  std::vector<int> cnn_kernel_sizes{2, 3, 4};
  int cnn_channels = 64;
  int segment_count = 2;
  /// Standard deviation of the normal embedding initializer.
  double embedding_init = 0.1;

  int ffn() const { return ffn_dim > 0 ? ffn_dim : 4 * d_model; }
  /// Throws ModelError(ConfigError).
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct EncoderStates {
  ag::Var hidden;
  std::vector<bool> attention_mask;
};

/// Identifies which classifier produced a spliced row.
struct SplicePoint {
  int position = 0;
  Taxonomy source = Taxonomy::Emotion;
  friend bool operator==(const SplicePoint&, const SplicePoint&) = default;
};

struct SplicedStates {
  ag::Var hidden;
  std::vector<SplicePoint> replaced_positions;
  std::vector<bool> attention_mask;
};

/// Final-layer attention of one decoder pass, heads stacked row-wise:
/// row h * queries + q holds head h's distribution for query q.
struct AttentionRecord {
  ag::Var probs;
  int heads = 0;
  int queries = 0;
  int keys = 0;
  bool cross = false;
};

namespace detail {

struct AttentionIds {
  int wq, bq, wk, bk, wv, bv, wo, bo;
};
struct FfnIds {
  int w1, b1, w2, b2;
};
struct NormIds {
  int gamma, beta;
};
struct EncoderLayerIds {
  AttentionIds attn;
  NormIds ln1;
  FfnIds ffn;
  NormIds ln2;
};
struct DecoderLayerIds {
  NormIds ln_self;
  AttentionIds self_attn;
  std::optional<NormIds> ln_cross;
  std::optional<AttentionIds> cross_attn;
  NormIds ln_ffn;
  FfnIds ffn;
};

}  // namespace detail

/// Post-LN transformer encoder with word, position and segment embeddings.
/// Holds parameter ids only; the weights live in the caller's ParameterSet.
class EncoderBody {
 public:
  EncoderBody() = default;
  static EncoderBody create(ag::ParameterSet& ps, const std::string& prefix, const ModelConfig& cfg,
                            std::mt19937_64& rng);

  /// PAD tokens are masked out as attention keys.
  EncoderStates encode(ag::Tape& tape, ag::ParameterSet& ps, std::span<const int> ids,
                       std::span<const int> segment_ids) const;
  /// Word embedding of [PAD], 1 x d.
  ag::Var pad_embedding(ag::Tape& tape, ag::ParameterSet& ps) const;

 private:
  ModelConfig cfg_;
  int word_ = -1, pos_ = -1, seg_ = -1;
  detail::NormIds ln_emb_{};
  std::vector<detail::EncoderLayerIds> layers_;
};

/// TextCNN over encoder states: one convolution per kernel size, ReLU,
/// max-pool over time, concatenation, linear projection.
class TextCnnHead {
 public:
  TextCnnHead() = default;
  static TextCnnHead create(ag::ParameterSet& ps, const std::string& prefix, const ModelConfig& cfg, int n_labels,
                            std::mt19937_64& rng);
  /// Sequences shorter than the widest kernel are padded with `pad_row`.
  ag::Var logits(ag::Tape& tape, ag::ParameterSet& ps, ag::Var states, ag::Var pad_row) const;
  int n_labels() const { return n_labels_; }

 private:
  std::vector<int> kernels_;
  std::vector<std::pair<int, int>> conv_;  // (weight, bias) per kernel
  int out_w_ = -1, out_b_ = -1;
  int n_labels_ = 0;
};

/// Index of the largest entry of a row vector; ties go to the lowest index.
int argmax_lowest(const ag::Matrix& row);

/// Encoder plus masked-token and next-sentence heads.
class PretrainModel {
 public:
  PretrainModel() = default;
  PretrainModel(const ModelConfig& cfg, std::uint64_t seed);

  struct Output {
    EncoderStates states;
    ag::Var token_logits;  // len x vocab
    ag::Var nsp_logits;    // 1 x 2
  };
  Output forward(ag::Tape& tape, std::span<const int> ids, std::span<const int> segment_ids);

  const ModelConfig& config() const { return cfg_; }
  ag::ParameterSet params;

 private:
  ModelConfig cfg_;
  EncoderBody enc_;
  int mlm_w_ = -1, mlm_b_ = -1, mlm_out_w_ = -1, mlm_out_b_ = -1, nsp_w_ = -1, nsp_b_ = -1;
  detail::NormIds mlm_ln_{};
};

/// Encoder fine-tuned with a TextCNN head for one taxonomy.
class ClassifierModel {
 public:
  ClassifierModel() = default;
  ClassifierModel(const ModelConfig& cfg, Taxonomy taxonomy, std::uint64_t seed);

  struct Output {
    EncoderStates states;
    ag::Var logits;     // 1 x |taxonomy|
    ag::Var cls_state;  // 1 x d
  };
  Output forward(ag::Tape& tape, std::span<const int> ids, std::span<const int> segment_ids);
  /// Inference helpers; they record nothing and leave gradients untouched.
  int predict(std::span<const int> ids, std::span<const int> segment_ids);
  ag::Matrix cls_state(std::span<const int> ids, std::span<const int> segment_ids);

  /// Copies the encoder weights of a pretrained model.
  void load_encoder(const PretrainModel& pretrained);

  Taxonomy taxonomy() const { return taxonomy_; }
  const ModelConfig& config() const { return cfg_; }
  ag::ParameterSet params;

 private:
  ModelConfig cfg_;
  Taxonomy taxonomy_ = Taxonomy::Emotion;
  EncoderBody enc_;
  TextCnnHead head_;
};

/// Extra encoder over the flattened dialogue plus a pre-LN causal decoder that
/// attends to the (spliced) extra-encoder states.
class GeneratorModel {
 public:
  GeneratorModel() = default;
  GeneratorModel(const ModelConfig& cfg, bool cross_attention, std::uint64_t seed);

  EncoderStates extra_encode(ag::Tape& tape, std::span<const int> ids, std::span<const int> segment_ids);

  struct DecoderOutput {
    ag::Var logits;  // len x vocab, row t predicts token t + 1
    AttentionRecord attention;
  };
  /// `memory` is ignored (and may be null) when cross-attention is disabled.
  DecoderOutput decode(ag::Tape& tape, std::span<const int> ids, const SplicedStates* memory);

  bool cross_attention() const { return cross_; }
  const ModelConfig& config() const { return cfg_; }
  ag::ParameterSet params;

 private:
  ModelConfig cfg_;
  bool cross_ = true;
  EncoderBody xenc_;
  int tok_ = -1, pos_ = -1;
  std::vector<detail::DecoderLayerIds> layers_;
  detail::NormIds ln_final_{};
  int out_w_ = -1, out_b_ = -1;
};

/// Replaces rows of the extra-encoder states with classifier summary states.
/// Row i of `classifier_states` goes to points[i].position.
SplicedStates splice_hidden_states(const EncoderStates& extra, std::span<const SplicePoint> points,
                                   const ag::Matrix& classifier_states);

/// Label-token positions of every utterance in a flattened sequence, in
/// emotion, CS, strategy order. Throws PositionError when an utterance lacks
/// its three label tokens.
std::vector<SplicePoint> locate_label_positions(std::span<const int> ids, const Vocabulary& vocab);

/// Mean attention over heads and the given query rows, restricted to keys
/// [span_begin, span_end) and renormalized over the span.
ag::Var attention_per_token(const AttentionRecord& rec, std::span<const int> query_rows, int span_begin,
                            int span_end);
/// Plain-value variant over a stacked probability matrix.
std::vector<double> attention_per_token(const ag::Matrix& probs, int heads, std::span<const int> query_rows,
                                        int span_begin, int span_end);

}  // namespace csd

#endif  // CSD_MODEL_HPP
