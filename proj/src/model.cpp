#include "csd/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace csd {

using ag::Matrix;
using ag::Var;

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ModelError(ModelError::Kind::ConfigError, m); };
  if (vocab_size <= 0) fail("vocab_size must be positive");
  if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0) fail("d_model must be a positive multiple of n_heads");
  if (n_layers_encoder < 0 || n_layers_decoder < 0) fail("layer counts must be non-negative");
  if (ffn() <= 0) fail("ffn_dim must be positive");
  if (max_len <= 1) fail("max_len must exceed 1");
  if (cnn_kernel_sizes.empty()) fail("at least one CNN kernel size is required");
  for (int k : cnn_kernel_sizes) {
    if (k < 1 || k > max_len) fail("CNN kernel sizes must lie in [1, max_len]");
  }
  if (cnn_channels <= 0) fail("cnn_channels must be positive");
  if (segment_count <= 0) fail("segment_count must be positive");
}

namespace {

Matrix xavier(int rows, int cols, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-a, a);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

Matrix normal(int rows, int cols, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

detail::NormIds make_norm(ag::ParameterSet& ps, const std::string& name, int d) {
  return {ps.add(name + ".gamma", Matrix::Ones(1, d)), ps.add(name + ".beta", Matrix::Zero(1, d))};
}

std::pair<int, int> make_linear(ag::ParameterSet& ps, const std::string& name, int in, int out,
                                std::mt19937_64& rng) {
  return {ps.add(name + ".weight", xavier(in, out, rng)), ps.add(name + ".bias", Matrix::Zero(1, out))};
}

detail::AttentionIds make_attention(ag::ParameterSet& ps, const std::string& name, int d, std::mt19937_64& rng) {
  detail::AttentionIds a{};
  std::tie(a.wq, a.bq) = make_linear(ps, name + ".q", d, d, rng);
  std::tie(a.wk, a.bk) = make_linear(ps, name + ".k", d, d, rng);
  std::tie(a.wv, a.bv) = make_linear(ps, name + ".v", d, d, rng);
  std::tie(a.wo, a.bo) = make_linear(ps, name + ".o", d, d, rng);
  return a;
}

detail::FfnIds make_ffn(ag::ParameterSet& ps, const std::string& name, int d, int hidden, std::mt19937_64& rng) {
  detail::FfnIds f{};
  std::tie(f.w1, f.b1) = make_linear(ps, name + ".in", d, hidden, rng);
  std::tie(f.w2, f.b2) = make_linear(ps, name + ".out", hidden, d, rng);
  return f;
}

Var P(ag::Tape& t, ag::ParameterSet& ps, int id) { return t.param(ps.at(id)); }

Var lin(ag::Tape& t, ag::ParameterSet& ps, Var x, int w, int b) { return ag::linear(x, P(t, ps, w), P(t, ps, b)); }

Var norm(ag::Tape& t, ag::ParameterSet& ps, Var x, const detail::NormIds& n) {
  return ag::layer_norm(x, P(t, ps, n.gamma), P(t, ps, n.beta));
}

Var ffn(ag::Tape& t, ag::ParameterSet& ps, Var x, const detail::FfnIds& f) {
  return lin(t, ps, ag::relu(lin(t, ps, x, f.w1, f.b1)), f.w2, f.b2);
}

struct AttentionResult {
  Var out;
  Var probs;
};

AttentionResult attend(ag::Tape& t, ag::ParameterSet& ps, Var xq, Var xkv, const detail::AttentionIds& a, int heads,
                       const ag::AttentionMask& mask) {
  const Var q = lin(t, ps, xq, a.wq, a.bq);
  const Var k = lin(t, ps, xkv, a.wk, a.bk);
  const Var v = lin(t, ps, xkv, a.wv, a.bv);
  const Var probs = ag::attention_probs(q, k, heads, mask);
  return {lin(t, ps, ag::attention_apply(probs, v, heads), a.wo, a.bo), probs};
}

std::vector<int> iota_ids(std::size_t n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

void check_length(std::size_t n, const ModelConfig& cfg) {
  if (n == 0) throw ModelError(ModelError::Kind::LengthError, "empty input sequence");
  if (n > static_cast<std::size_t>(cfg.max_len)) {
    throw ModelError(ModelError::Kind::LengthError, "sequence of " + std::to_string(n) +
                                                        " tokens exceeds max_len " + std::to_string(cfg.max_len));
  }
}

}  // namespace

EncoderBody EncoderBody::create(ag::ParameterSet& ps, const std::string& prefix, const ModelConfig& cfg,
                                std::mt19937_64& rng) {
  cfg.validate();
  EncoderBody e;
  e.cfg_ = cfg;
  const int d = cfg.d_model;
  e.word_ = ps.add(prefix + ".embed.word", normal(cfg.vocab_size, d, cfg.embedding_init, rng));
  e.pos_ = ps.add(prefix + ".embed.position", normal(cfg.max_len, d, cfg.embedding_init, rng));
  e.seg_ = ps.add(prefix + ".embed.segment", normal(cfg.segment_count, d, cfg.embedding_init, rng));
  e.ln_emb_ = make_norm(ps, prefix + ".embed.norm", d);
  for (int l = 0; l < cfg.n_layers_encoder; ++l) {
    const std::string n = prefix + ".layer" + std::to_string(l);
    detail::EncoderLayerIds L{};
    L.attn = make_attention(ps, n + ".attn", d, rng);
    L.ln1 = make_norm(ps, n + ".norm1", d);
    L.ffn = make_ffn(ps, n + ".ffn", d, cfg.ffn(), rng);
    L.ln2 = make_norm(ps, n + ".norm2", d);
    e.layers_.push_back(L);
  }
  return e;
}

EncoderStates EncoderBody::encode(ag::Tape& t, ag::ParameterSet& ps, std::span<const int> ids,
                                  std::span<const int> segment_ids) const {
  check_length(ids.size(), cfg_);
  if (segment_ids.size() != ids.size()) throw std::invalid_argument("segment ids must align with token ids");
  for (int s : segment_ids) {
    if (s < 0 || s >= cfg_.segment_count) throw std::invalid_argument("segment id out of range");
  }
  const std::vector<int> positions = iota_ids(ids.size());
  Var x = ag::add(ag::add(ag::gather_rows(P(t, ps, word_), ids), ag::gather_rows(P(t, ps, pos_), positions)),
                  ag::gather_rows(P(t, ps, seg_), segment_ids));
  x = norm(t, ps, x, ln_emb_);

  EncoderStates st;
  st.attention_mask.resize(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) st.attention_mask[i] = ids[i] != Vocabulary::kPad;
  ag::AttentionMask mask;
  mask.key_valid = st.attention_mask;
  for (const auto& L : layers_) {
    const Var h = norm(t, ps, ag::add(x, attend(t, ps, x, x, L.attn, cfg_.n_heads, mask).out), L.ln1);
    x = norm(t, ps, ag::add(h, ffn(t, ps, h, L.ffn)), L.ln2);
  }
  st.hidden = x;
  return st;
}

Var EncoderBody::pad_embedding(ag::Tape& t, ag::ParameterSet& ps) const {
  const int pad = Vocabulary::kPad;
  return ag::gather_rows(P(t, ps, word_), std::span<const int>(&pad, 1));
}

TextCnnHead TextCnnHead::create(ag::ParameterSet& ps, const std::string& prefix, const ModelConfig& cfg,
                                int n_labels, std::mt19937_64& rng) {
  TextCnnHead h;
  h.kernels_ = cfg.cnn_kernel_sizes;
  h.n_labels_ = n_labels;
  for (int k : h.kernels_) {
    h.conv_.push_back(make_linear(ps, prefix + ".conv" + std::to_string(k), k * cfg.d_model, cfg.cnn_channels, rng));
  }
  std::tie(h.out_w_, h.out_b_) =
      make_linear(ps, prefix + ".out", static_cast<int>(h.kernels_.size()) * cfg.cnn_channels, n_labels, rng);
  return h;
}

Var TextCnnHead::logits(ag::Tape& t, ag::ParameterSet& ps, Var states, Var pad_row) const {
  const int widest = *std::max_element(kernels_.begin(), kernels_.end());
  Var x = states;
  if (x.rows() < widest) {
    std::vector<Var> rows{x};
    for (Eigen::Index r = x.rows(); r < widest; ++r) rows.push_back(pad_row);
    x = ag::concat_rows(rows);
  }
  std::vector<Var> pooled;
  for (std::size_t i = 0; i < kernels_.size(); ++i) {
    const Var conv = lin(t, ps, ag::unfold(x, kernels_[i]), conv_[i].first, conv_[i].second);
    pooled.push_back(ag::col_max(ag::relu(conv)));
  }
  return lin(t, ps, ag::concat_cols(pooled), out_w_, out_b_);
}

int argmax_lowest(const Matrix& row) {
  int best = 0;
  for (Eigen::Index i = 1; i < row.size(); ++i) {
    if (row.data()[i] > row.data()[best]) best = static_cast<int>(i);
  }
  return best;
}

PretrainModel::PretrainModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  std::mt19937_64 rng(seed);
  enc_ = EncoderBody::create(params, "enc", cfg, rng);
  std::tie(mlm_w_, mlm_b_) = make_linear(params, "mlm.transform", cfg.d_model, cfg.d_model, rng);
  mlm_ln_ = make_norm(params, "mlm.norm", cfg.d_model);
  std::tie(mlm_out_w_, mlm_out_b_) = make_linear(params, "mlm.out", cfg.d_model, cfg.vocab_size, rng);
  std::tie(nsp_w_, nsp_b_) = make_linear(params, "nsp.out", cfg.d_model, 2, rng);
}

PretrainModel::Output PretrainModel::forward(ag::Tape& t, std::span<const int> ids, std::span<const int> segs) {
  Output o;
  o.states = enc_.encode(t, params, ids, segs);
  const Var h = norm(t, params, ag::relu(lin(t, params, o.states.hidden, mlm_w_, mlm_b_)), mlm_ln_);
  o.token_logits = lin(t, params, h, mlm_out_w_, mlm_out_b_);
  o.nsp_logits = lin(t, params, ag::slice_rows(o.states.hidden, 0, 1), nsp_w_, nsp_b_);
  return o;
}

ClassifierModel::ClassifierModel(const ModelConfig& cfg, Taxonomy taxonomy, std::uint64_t seed)
    : cfg_(cfg), taxonomy_(taxonomy) {
  std::mt19937_64 rng(seed);
  enc_ = EncoderBody::create(params, "enc", cfg, rng);
  head_ = TextCnnHead::create(params, "cnn", cfg, label_count(taxonomy), rng);
}

ClassifierModel::Output ClassifierModel::forward(ag::Tape& t, std::span<const int> ids, std::span<const int> segs) {
  Output o;
  o.states = enc_.encode(t, params, ids, segs);
  o.logits = head_.logits(t, params, o.states.hidden, enc_.pad_embedding(t, params));
  o.cls_state = ag::slice_rows(o.states.hidden, 0, 1);
  return o;
}

int ClassifierModel::predict(std::span<const int> ids, std::span<const int> segs) {
  ag::Tape t(false);
  return argmax_lowest(forward(t, ids, segs).logits.value());
}

Matrix ClassifierModel::cls_state(std::span<const int> ids, std::span<const int> segs) {
  ag::Tape t(false);
  return enc_.encode(t, params, ids, segs).hidden.value().topRows(1);
}

void ClassifierModel::load_encoder(const PretrainModel& pretrained) {
  if (!(pretrained.config() == cfg_)) throw ModelError(ModelError::Kind::ConfigError, "encoder config mismatch");
  params.copy_matching(pretrained.params, "enc.", "enc.");
}

GeneratorModel::GeneratorModel(const ModelConfig& cfg, bool cross_attention, std::uint64_t seed)
    : cfg_(cfg), cross_(cross_attention) {
  std::mt19937_64 rng(seed);
  const int d = cfg.d_model;
  if (cross_) xenc_ = EncoderBody::create(params, "xenc", cfg, rng);
  tok_ = params.add("dec.embed.token", normal(cfg.vocab_size, d, cfg.embedding_init, rng));
  pos_ = params.add("dec.embed.position", normal(cfg.max_len, d, cfg.embedding_init, rng));
  for (int l = 0; l < cfg.n_layers_decoder; ++l) {
    const std::string n = "dec.layer" + std::to_string(l);
    detail::DecoderLayerIds L{};
    L.ln_self = make_norm(params, n + ".norm_self", d);
    L.self_attn = make_attention(params, n + ".self", d, rng);
    if (cross_) {
      L.ln_cross = make_norm(params, n + ".norm_cross", d);
      L.cross_attn = make_attention(params, n + ".cross", d, rng);
    }
    L.ln_ffn = make_norm(params, n + ".norm_ffn", d);
    L.ffn = make_ffn(params, n + ".ffn", d, cfg.ffn(), rng);
    layers_.push_back(L);
  }
  ln_final_ = make_norm(params, "dec.norm_final", d);
  std::tie(out_w_, out_b_) = make_linear(params, "dec.lm_head", d, cfg.vocab_size, rng);
}

EncoderStates GeneratorModel::extra_encode(ag::Tape& t, std::span<const int> ids, std::span<const int> segs) {
  if (!cross_) throw ModelError(ModelError::Kind::ModelMissing, "this generator has no extra encoder");
  return xenc_.encode(t, params, ids, segs);
}

GeneratorModel::DecoderOutput GeneratorModel::decode(ag::Tape& t, std::span<const int> ids,
                                                     const SplicedStates* memory) {
  check_length(ids.size(), cfg_);
  if (cross_ && memory == nullptr) throw ModelError(ModelError::Kind::ModelMissing, "decoder needs encoder memory");
  const std::vector<int> positions = iota_ids(ids.size());
  Var x = ag::add(ag::gather_rows(P(t, params, tok_), ids), ag::gather_rows(P(t, params, pos_), positions));
  ag::AttentionMask causal;
  causal.causal = true;
  ag::AttentionMask cross_mask;
  if (memory != nullptr) cross_mask.key_valid = memory->attention_mask;

  DecoderOutput out;
  out.attention.heads = cfg_.n_heads;
  out.attention.queries = static_cast<int>(ids.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    const bool last = l + 1 == layers_.size();
    const Var hs = norm(t, params, x, L.ln_self);
    const AttentionResult self = attend(t, params, hs, hs, L.self_attn, cfg_.n_heads, causal);
    x = ag::add(x, self.out);
    if (last && !cross_) {
      out.attention.probs = self.probs;
      out.attention.keys = static_cast<int>(ids.size());
      out.attention.cross = false;
    }
    if (cross_) {
      const Var hc = norm(t, params, x, *L.ln_cross);
      const AttentionResult cr = attend(t, params, hc, memory->hidden, *L.cross_attn, cfg_.n_heads, cross_mask);
      x = ag::add(x, cr.out);
      if (last) {
        out.attention.probs = cr.probs;
        out.attention.keys = static_cast<int>(memory->hidden.rows());
        out.attention.cross = true;
      }
    }
    x = ag::add(x, ffn(t, params, norm(t, params, x, L.ln_ffn), L.ffn));
  }
  out.logits = lin(t, params, norm(t, params, x, ln_final_), out_w_, out_b_);
  return out;
}

SplicedStates splice_hidden_states(const EncoderStates& extra, std::span<const SplicePoint> points,
                                   const Matrix& classifier_states) {
  SplicedStates s;
  s.attention_mask = extra.attention_mask;
  s.replaced_positions.assign(points.begin(), points.end());
  if (points.empty()) {
    s.hidden = extra.hidden;
    return s;
  }
  if (classifier_states.rows() != static_cast<Eigen::Index>(points.size()) ||
      classifier_states.cols() != extra.hidden.cols()) {
    throw ModelError(ModelError::Kind::PositionError, "classifier states do not match the splice points");
  }
  std::vector<int> pos;
  pos.reserve(points.size());
  for (const auto& p : points) {
    if (p.position < 0 || p.position >= extra.hidden.rows()) {
      throw ModelError(ModelError::Kind::PositionError, "splice position out of range");
    }
    pos.push_back(p.position);
  }
  ag::Tape& t = *extra.hidden.tape;
  s.hidden = ag::replace_rows(extra.hidden, pos, t.constant(classifier_states));
  return s;
}

std::vector<SplicePoint> locate_label_positions(std::span<const int> ids, const Vocabulary& vocab) {
  static constexpr Taxonomy kOrder[] = {Taxonomy::Emotion, Taxonomy::CS, Taxonomy::Strategy};
  std::vector<SplicePoint> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] != Vocabulary::kSep) continue;
    if (i < 3) throw ModelError(ModelError::Kind::PositionError, "utterance without label tokens");
    for (int j = 0; j < 3; ++j) {
      const std::size_t p = i - 3 + static_cast<std::size_t>(j);
      const auto lab = vocab.label_of(ids[p]);
      if (!lab || lab->first != kOrder[j]) {
        throw ModelError(ModelError::Kind::PositionError,
                         "missing " + std::string(taxonomy_name(kOrder[j])) + " label token before position " +
                             std::to_string(i));
      }
      out.push_back({static_cast<int>(p), kOrder[j]});
    }
  }
  return out;
}

namespace {

std::vector<int> stacked_rows(int heads, int queries, std::span<const int> query_rows) {
  std::vector<int> rows;
  rows.reserve(static_cast<std::size_t>(heads) * query_rows.size());
  for (int h = 0; h < heads; ++h) {
    for (int q : query_rows) {
      if (q < 0 || q >= queries) throw std::out_of_range("attention query row out of range");
      rows.push_back(h * queries + q);
    }
  }
  return rows;
}

}  // namespace

Var attention_per_token(const AttentionRecord& rec, std::span<const int> query_rows, int span_begin, int span_end) {
  if (span_begin < 0 || span_end > rec.keys || span_begin >= span_end) {
    throw std::out_of_range("attention span out of range");
  }
  const std::vector<int> rows = stacked_rows(rec.heads, rec.queries, query_rows);
  const Var mean = ag::mean_rows(rec.probs, rows);
  return ag::normalize_sum(ag::slice_cols(mean, span_begin, span_end - span_begin));
}

std::vector<double> attention_per_token(const Matrix& probs, int heads, std::span<const int> query_rows,
                                        int span_begin, int span_end) {
  if (heads <= 0 || probs.rows() % heads != 0) throw std::invalid_argument("stacked attention shape");
  if (span_begin < 0 || span_end > probs.cols() || span_begin >= span_end) {
    throw std::out_of_range("attention span out of range");
  }
  const int queries = static_cast<int>(probs.rows() / heads);
  const std::vector<int> rows = stacked_rows(heads, queries, query_rows);
  std::vector<double> a(static_cast<std::size_t>(span_end - span_begin), 0.0);
  for (int r : rows) {
    for (int j = span_begin; j < span_end; ++j) a[static_cast<std::size_t>(j - span_begin)] += probs(r, j);
  }
  const double total = std::accumulate(a.begin(), a.end(), 0.0);
  if (total <= 0.0) throw std::invalid_argument("attention span carries no mass");
  for (double& v : a) v /= total;
  return a;
}

}  // namespace csd
