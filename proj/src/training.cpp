#include "csd/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

namespace csd {

using ag::Matrix;
using ag::Var;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void check_finite(double v, const char* what, long step) {
  if (!std::isfinite(v)) {
    throw TrainingError(TrainingError::Kind::Divergence,
                        std::string(what) + " became non-finite at step " + std::to_string(step), step);
  }
}

Matrix scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return m;
}

}  // namespace

AblationConfig AblationConfig::from_name(std::string_view name) {
  AblationConfig a;
  if (name == "full") return a;
  if (name == "nm") {
    a.use_progressive_mask = false;
  } else if (name == "il") {
    a.use_input_labels = false;
  } else if (name == "ca") {
    a.use_cross_attention_splice = false;
  } else if (name == "al") {
    a.use_attention_loss = false;
  } else {
    throw std::invalid_argument("unknown ablation '" + std::string(name) + "' (expected full, nm, il, ca or al)");
  }
  return a;
}

std::string AblationConfig::name() const {
  const int off = !use_progressive_mask + !use_input_labels + !use_cross_attention_splice + !use_attention_loss;
  if (off == 0) return "full";
  if (off > 1) return "custom";
  if (!use_progressive_mask) return "nm";
  if (!use_input_labels) return "il";
  if (!use_cross_attention_splice) return "ca";
  return "al";
}

double learning_rate(const OptimizerConfig& cfg, long step) {
  const double s = static_cast<double>(std::max(step, 1L));
  if (cfg.warmup_steps <= 0) return cfg.lr;
  const double w = static_cast<double>(cfg.warmup_steps);
  return cfg.lr * std::min(s / w, std::sqrt(w / s));
}

void AdamW::step(ag::ParameterSet& params) {
  if (m_.size() != static_cast<std::size_t>(params.size())) {
    m_.clear();
    v_.clear();
    for (const auto& p : params) {
      m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }
  double sq = 0.0;
  for (auto& p : params) {
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
    sq += p.grad.squaredNorm();
  }
  last_norm_ = std::sqrt(sq);
  ++t_;
  check_finite(last_norm_, "gradient norm", t_);
  const double clip = (cfg_.clip_norm > 0.0 && last_norm_ > cfg_.clip_norm) ? cfg_.clip_norm / last_norm_ : 1.0;
  last_lr_ = learning_rate(cfg_, t_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  std::size_t i = 0;
  for (auto& p : params) {
    Matrix& m = m_[i];
    Matrix& v = v_[i];
    ++i;
    const Matrix g = p.grad * clip;
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    if (cfg_.weight_decay > 0.0 && p.value.rows() > 1 && p.value.cols() > 1) {
      p.value *= (1.0 - last_lr_ * cfg_.weight_decay);
    }
    p.value.array() -= last_lr_ * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg_.eps);
    p.grad.setZero();
  }
}

TokenizedCorpus TokenizedCorpus::from(const Corpus& c, const Tokenizer& tok) {
  TokenizedCorpus t;
  t.tokens.reserve(c.conversations.size());
  for (const auto& conv : c.conversations) {
    std::vector<std::vector<std::string>> utts;
    utts.reserve(conv.utterances.size());
    for (const auto& u : conv.utterances) utts.push_back(tok(u.text));
    t.tokens.push_back(std::move(utts));
  }
  return t;
}

// --- pretraining -------------------------------------------------------------

PretrainModel pretrain_encoder(const Corpus& corpus, const Vocabulary& vocab, const knowledge::KnowledgeDict& dict,
                               const masking::MaskSchedule& sched, const ModelConfig& cfg,
                               const PretrainOptions& opts, std::uint64_t seed, PretrainReport* report) {
  masking::validate(sched);
  const auto t0 = std::chrono::steady_clock::now();
  const TokenizedCorpus tc = TokenizedCorpus::from(corpus);
  PretrainModel model(cfg, seed);
  AdamW opt(opts.optimizer);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t budget = static_cast<std::size_t>(std::max(cfg.max_len - 3, 2));
  const int batch = std::max(opts.batch_size, 1);
  if (report != nullptr) {
    *report = {};
    report->seed = seed;
  }

  for (long step = 0; step < opts.steps; ++step) {
    const int stage = masking::current_stage(step, opts.steps, sched);
    double mlm_sum = 0.0, nsp_sum = 0.0;
    for (int b = 0; b < batch; ++b) {
      const masking::NspPair pair = masking::make_nsp_pair(corpus, rng);
      std::vector<std::string> a = tc.tokens[pair.conv_a][pair.utt_a];
      std::vector<std::string> bt = tc.tokens[pair.conv_b][pair.utt_b];
      while (a.size() + bt.size() > budget) {
        if (a.size() >= bt.size()) {
          a.pop_back();
        } else {
          bt.pop_back();
        }
      }
      masking::PretrainSequence seq = masking::make_pretrain_sequence(a, bt, vocab);
      seq.nsp_label = pair.is_next;
      const masking::MaskedExample ex = masking::mask_example(seq, dict, stage, sched, vocab, rng);

      ag::Tape tape;
      const auto out = model.forward(tape, ex.input_ids, ex.segment_ids);
      std::vector<int> targets(ex.input_ids.size(), -1);
      for (const auto& [pos, id] : ex.mlm_targets) targets[static_cast<std::size_t>(pos)] = id;
      const int nsp_target = ex.nsp_label ? 1 : 0;
      const Var nsp = ag::cross_entropy(out.nsp_logits, std::span<const int>(&nsp_target, 1));
      Var loss = nsp;
      if (!ex.mlm_targets.empty()) {
        const Var mlm = ag::scale(ag::cross_entropy(out.token_logits, targets),
                                  1.0 / static_cast<double>(ex.mlm_targets.size()));
        mlm_sum += mlm.scalar();
        loss = ag::add(mlm, nsp);
      }
      nsp_sum += nsp.scalar();
      check_finite(loss.scalar(), "pretraining loss", step + 1);
      tape.backward(loss, 1.0 / batch);
    }
    opt.step(model.params);
    if (report != nullptr) {
      report->mlm_loss.push_back(mlm_sum / batch);
      report->nsp_loss.push_back(nsp_sum / batch);
    }
  }
  if (report != nullptr) report->seconds = seconds_since(t0);
  return model;
}

// --- classifiers -------------------------------------------------------------

ClassifierInput make_classifier_input(const Conversation& conv, std::size_t target, const Vocabulary& vocab,
                                      int context_turns, int max_len, const Tokenizer& tok) {
  if (target >= conv.utterances.size()) throw std::out_of_range("classifier target out of range");
  const std::size_t budget = static_cast<std::size_t>(std::max(max_len - 3, 1));
  std::vector<std::string> tgt = tok(conv.utterances[target].text);
  if (tgt.size() > budget) tgt.resize(budget);
  std::vector<std::string> ctx;
  const std::size_t first = target >= static_cast<std::size_t>(std::max(context_turns, 0))
                                ? target - static_cast<std::size_t>(std::max(context_turns, 0))
                                : 0;
  for (std::size_t i = first; i < target; ++i) {
    for (auto& t : tok(conv.utterances[i].text)) ctx.push_back(std::move(t));
  }
  const std::size_t room = budget - tgt.size();
  if (ctx.size() > room) ctx.erase(ctx.begin(), ctx.begin() + static_cast<std::ptrdiff_t>(ctx.size() - room));

  ClassifierInput in;
  in.ids.push_back(Vocabulary::kCls);
  in.segment_ids.push_back(0);
  for (const auto& t : ctx) {
    in.ids.push_back(vocab.id(t));
    in.segment_ids.push_back(0);
  }
  in.ids.push_back(Vocabulary::kSep);
  in.segment_ids.push_back(0);
  for (const auto& t : tgt) {
    in.ids.push_back(vocab.id(t));
    in.segment_ids.push_back(1);
  }
  in.ids.push_back(Vocabulary::kSep);
  in.segment_ids.push_back(1);
  return in;
}

ClassifierModel& ClassifierSet::get(Taxonomy t) {
  switch (t) {
    case Taxonomy::CS: return cs;
    case Taxonomy::Emotion: return emotion;
    case Taxonomy::Strategy: return strategy;
  }
  return emotion;
}

const ClassifierModel& ClassifierSet::get(Taxonomy t) const { return const_cast<ClassifierSet*>(this)->get(t); }

LabelTriple ClassifierSet::predict(const Conversation& conv, std::size_t target, const Vocabulary& vocab) {
  const auto in = make_classifier_input(conv, target, vocab, context_turns, emotion.config().max_len);
  LabelTriple l;
  for (Taxonomy t : kTaxonomies) l.set(t, get(t).predict(in.ids, in.segment_ids));
  return l;
}

Matrix ClassifierSet::states(const Conversation& conv, std::size_t target, const Vocabulary& vocab) {
  const auto in = make_classifier_input(conv, target, vocab, context_turns, emotion.config().max_len);
  Matrix s(3, emotion.config().d_model);
  s.row(0) = emotion.cls_state(in.ids, in.segment_ids);
  s.row(1) = cs.cls_state(in.ids, in.segment_ids);
  s.row(2) = strategy.cls_state(in.ids, in.segment_ids);
  return s;
}

namespace {

struct LabeledInput {
  ClassifierInput input;
  LabelTriple gold;
};

std::vector<LabeledInput> classifier_examples(const Corpus& c, const Vocabulary& vocab, int context_turns,
                                              int max_len) {
  std::vector<LabeledInput> out;
  for (const auto& conv : c.conversations) {
    for (std::size_t i = 0; i < conv.utterances.size(); ++i) {
      out.push_back({make_classifier_input(conv, i, vocab, context_turns, max_len), conv.utterances[i].labels()});
    }
  }
  return out;
}

double accuracy_on(ClassifierModel& m, const std::vector<LabeledInput>& data) {
  if (data.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& d : data) hit += m.predict(d.input.ids, d.input.segment_ids) == d.gold.index(m.taxonomy());
  return static_cast<double>(hit) / static_cast<double>(data.size());
}

void fit_classifier(ClassifierModel& model, const std::vector<LabeledInput>& data, const ClassifierOptions& opts,
                    std::mt19937_64& rng, std::vector<double>* losses) {
  if (data.empty()) return;
  AdamW opt(opts.optimizer);
  const int batch = std::max(opts.batch_size, 1);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch)) {
      if (opts.max_steps > 0 && opt.steps() >= opts.max_steps) return;
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch));
      const double inv = 1.0 / static_cast<double>(stop - start);
      double sum = 0.0;
      for (std::size_t j = start; j < stop; ++j) {
        const auto& d = data[order[j]];
        ag::Tape tape;
        const auto out = model.forward(tape, d.input.ids, d.input.segment_ids);
        const int gold = d.gold.index(model.taxonomy());
        const Var loss = ag::cross_entropy(out.logits, std::span<const int>(&gold, 1));
        check_finite(loss.scalar(), "classifier loss", opt.steps() + 1);
        sum += loss.scalar();
        tape.backward(loss, inv);
      }
      opt.step(model.params);
      if (losses != nullptr) losses->push_back(sum * inv);
    }
  }
}

}  // namespace

ClassifierSet train_classifiers(const Corpus& train, const Corpus* dev, const Vocabulary& vocab,
                                const PretrainModel& emotion_encoder, const PretrainModel& keyword_encoder,
                                const ClassifierOptions& opts, std::uint64_t seed, ClassifierReport* report) {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelConfig& cfg = emotion_encoder.config();
  ClassifierSet set;
  set.context_turns = opts.context_turns;
  set.emotion = ClassifierModel(cfg, Taxonomy::Emotion, seed + 1);
  set.cs = ClassifierModel(cfg, Taxonomy::CS, seed + 2);
  set.strategy = ClassifierModel(cfg, Taxonomy::Strategy, seed + 3);
  set.emotion.load_encoder(emotion_encoder);
  set.cs.load_encoder(keyword_encoder);
  set.strategy.load_encoder(keyword_encoder);

  const auto train_data = classifier_examples(train, vocab, opts.context_turns, cfg.max_len);
  const auto dev_data = dev != nullptr ? classifier_examples(*dev, vocab, opts.context_turns, cfg.max_len)
                                       : std::vector<LabeledInput>{};
  if (report != nullptr) *report = {};
  std::mt19937_64 rng(seed);
  for (Taxonomy t : kTaxonomies) {
    ClassifierModel& m = set.get(t);
    fit_classifier(m, train_data, opts, rng, report != nullptr ? &report->losses[t] : nullptr);
    if (report != nullptr) {
      report->train_accuracy[t] = accuracy_on(m, train_data);
      if (!dev_data.empty()) report->dev_accuracy[t] = accuracy_on(m, dev_data);
    }
  }
  if (report != nullptr) report->seconds = seconds_since(t0);
  return set;
}

std::map<Taxonomy, double> classifier_accuracy(ClassifierSet& cls, const Corpus& corpus, const Vocabulary& vocab) {
  const auto data = classifier_examples(corpus, vocab, cls.context_turns, cls.emotion.config().max_len);
  std::map<Taxonomy, double> acc;
  for (Taxonomy t : kTaxonomies) acc[t] = accuracy_on(cls.get(t), data);
  return acc;
}

// --- decoder -------------------------------------------------------------------

DecoderInput build_decoder_input(const Conversation& conv, std::size_t count, std::span<const LabelTriple> labels,
                                 const Vocabulary& vocab, int max_len, int reserve, bool with_labels,
                                 const Tokenizer& tok) {
  if (count > conv.utterances.size()) throw std::out_of_range("context longer than the conversation");
  if (with_labels && labels.size() < count) throw std::invalid_argument("one label triple per utterance is required");
  std::vector<std::vector<std::string>> toks(count);
  std::vector<std::size_t> block(count);
  for (std::size_t i = 0; i < count; ++i) {
    toks[i] = tok(conv.utterances[i].text);
    block[i] = toks[i].size() + (with_labels ? 3 : 0) + 1;
  }
  const std::size_t limit = static_cast<std::size_t>(std::max(max_len - reserve, 0));
  std::size_t total = 1 + std::accumulate(block.begin(), block.end(), std::size_t{0});
  std::size_t first = 0;
  while (total > limit && first < count) {
    total -= block[first];
    ++first;
  }
  if (total > limit || (count > 0 && first == count)) {
    throw TrainingError(TrainingError::Kind::LengthError, "the most recent utterance does not fit max_len");
  }

  DecoderInput in;
  in.first_utterance = first;
  in.ids.push_back(Vocabulary::kCls);
  in.segment_ids.push_back(0);
  for (std::size_t i = first; i < count; ++i) {
    const Role role = conv.utterances[i].role;
    const int seg = role == Role::Speaker ? 0 : 1;
    DecoderInput::Span s;
    s.begin = static_cast<int>(in.ids.size());
    for (const auto& t : toks[i]) {
      in.ids.push_back(vocab.id(t));
      in.segment_ids.push_back(seg);
    }
    s.end = static_cast<int>(in.ids.size());
    s.role = role;
    s.utterance = i;
    in.spans.push_back(s);
    if (with_labels) {
      for (Taxonomy t : {Taxonomy::Emotion, Taxonomy::CS, Taxonomy::Strategy}) {
        in.ids.push_back(vocab.label_token(t, labels[i].index(t)));
        in.segment_ids.push_back(seg);
      }
    }
    in.ids.push_back(Vocabulary::kSep);
    in.segment_ids.push_back(seg);
  }
  return in;
}

std::vector<LabelTriple> decode_label_tokens(std::span<const int> ids, const Vocabulary& vocab) {
  std::vector<LabelTriple> out;
  for (const auto& p : locate_label_positions(ids, vocab)) {
    if (p.source == Taxonomy::Emotion) out.emplace_back();
    const auto lab = vocab.label_of(ids[static_cast<std::size_t>(p.position)]);
    out.back().set(p.source, lab->second);
  }
  return out;
}

Var loss_generation(Var logits, std::span<const int> targets) { return ag::cross_entropy(logits, targets); }

double loss_generation(const Matrix& logits, std::span<const int> targets) {
  ag::Tape t(false);
  return ag::cross_entropy(t.constant(logits), targets).scalar();
}

namespace {

void require_same_length(std::size_t a, std::size_t b) {
  if (a != b || a == 0) {
    throw TrainingError(TrainingError::Kind::LengthMismatch,
                        "attention weights (" + std::to_string(a) + ") and targets (" + std::to_string(b) +
                            ") must have the same non-zero length");
  }
}

Var attention_mse(Var a, std::span<const double> eta) {
  require_same_length(static_cast<std::size_t>(a.cols()), eta.size());
  Matrix target(1, static_cast<Eigen::Index>(eta.size()));
  for (std::size_t j = 0; j < eta.size(); ++j) target(0, static_cast<Eigen::Index>(j)) = eta[j];
  return ag::mse(a, target);
}

double attention_mse(std::span<const double> a, std::span<const double> eta) {
  require_same_length(a.size(), eta.size());
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (eta[j] - a[j]) * (eta[j] - a[j]);
  return s / static_cast<double>(a.size());
}

}  // namespace

Var loss_emotion(Var a, std::span<const double> eta_emo) { return attention_mse(a, eta_emo); }
double loss_emotion(std::span<const double> a, std::span<const double> eta_emo) { return attention_mse(a, eta_emo); }
Var loss_keyword(Var a, std::span<const double> eta_kw) { return attention_mse(a, eta_kw); }
double loss_keyword(std::span<const double> a, std::span<const double> eta_kw) { return attention_mse(a, eta_kw); }

double joint_loss(double gen, double emo, double kw, const LossWeights& w) {
  return w.gamma1 * gen + w.gamma2 * emo + w.gamma3 * kw;
}

Var joint_loss(Var gen, Var emo, Var kw, const LossWeights& w) {
  return ag::add(ag::add(ag::scale(gen, w.gamma1), ag::scale(emo, w.gamma2)), ag::scale(kw, w.gamma3));
}

DecoderExample make_decoder_example(const Conversation& conv, std::size_t response,
                                    std::span<const LabelTriple> labels, const Vocabulary& vocab,
                                    const ModelConfig& cfg, const DecoderOptions& opts, const AblationConfig& abl,
                                    ClassifierSet* classifiers, const KnowledgeSources& knowledge,
                                    const Tokenizer& tok) {
  if (response == 0 || response >= conv.utterances.size()) throw std::out_of_range("response index out of range");
  std::vector<std::string> resp = tok(conv.utterances[response].text);
  if (opts.max_response_tokens > 0 && resp.size() > static_cast<std::size_t>(opts.max_response_tokens)) {
    resp.resize(static_cast<std::size_t>(opts.max_response_tokens));
  }
  DecoderExample ex;
  ex.context = build_decoder_input(conv, response, labels, vocab, cfg.max_len, static_cast<int>(resp.size()) + 1,
                                   abl.use_input_labels);
  ex.ids = ex.context.ids;
  for (const auto& t : resp) ex.ids.push_back(vocab.id(t));
  ex.ids.push_back(Vocabulary::kSep);
  ex.response_tokens = static_cast<int>(resp.size());
  ex.targets.assign(ex.ids.size(), -1);
  for (std::size_t t = ex.context.ids.size() - 1; t + 1 < ex.ids.size(); ++t) {
    ex.targets[t] = ex.ids[t + 1];
    ex.query_rows.push_back(static_cast<int>(t));
  }

  const bool splice = abl.use_input_labels && abl.use_cross_attention_splice;
  if (splice) {
    if (classifiers == nullptr) {
      throw TrainingError(TrainingError::Kind::MissingArtifact, "splicing needs trained classifiers");
    }
    ex.splice_points = locate_label_positions(ex.context.ids, vocab);
    ex.classifier_states = Matrix(static_cast<Eigen::Index>(ex.splice_points.size()), cfg.d_model);
    for (std::size_t s = 0; s < ex.context.spans.size(); ++s) {
      ex.classifier_states.middleRows(static_cast<Eigen::Index>(3 * s), 3) =
          classifiers->states(conv, ex.context.spans[s].utterance, vocab);
    }
  }

  if (abl.use_attention_loss) {
    if (knowledge.lexicon == nullptr || knowledge.extractor == nullptr) {
      throw TrainingError(TrainingError::Kind::MissingArtifact, "attention losses need a lexicon and an extractor");
    }
    for (auto it = ex.context.spans.rbegin(); it != ex.context.spans.rend(); ++it) {
      if (it->role != Role::Speaker || it->end <= it->begin) continue;
      ex.span_begin = it->begin;
      ex.span_end = it->end;
      const auto toks = tok(conv.utterances[it->utterance].text);
      ex.eta_emo = knowledge::emotion_intensity_per_token(toks, *knowledge.lexicon);
      if (opts.rescale_eta) {
        for (double& v : ex.eta_emo) v *= 0.5;
      }
      ex.eta_kw = knowledge::keyword_intensity(toks, *knowledge.extractor, opts.keywords_per_utterance);
      break;
    }
  }
  return ex;
}

std::vector<DecoderExample> make_decoder_examples(const Corpus& corpus, const Vocabulary& vocab,
                                                  const ModelConfig& cfg, const DecoderOptions& opts,
                                                  const AblationConfig& abl, ClassifierSet* classifiers,
                                                  const KnowledgeSources& knowledge) {
  std::vector<DecoderExample> out;
  for (const auto& conv : corpus.conversations) {
    std::vector<LabelTriple> labels;
    for (const auto& u : conv.utterances) labels.push_back(u.labels());
    for (std::size_t i = 1; i < conv.utterances.size(); ++i) {
      if (conv.utterances[i].role != Role::Listener) continue;
      out.push_back(make_decoder_example(conv, i, labels, vocab, cfg, opts, abl, classifiers, knowledge));
    }
  }
  return out;
}

ExampleLoss example_loss(ag::Tape& tape, GeneratorModel& model, const DecoderExample& ex, const LossWeights& w,
                         const AblationConfig& abl) {
  std::optional<SplicedStates> memory;
  if (model.cross_attention()) {
    const EncoderStates extra = model.extra_encode(tape, ex.context.ids, ex.context.segment_ids);
    memory = splice_hidden_states(extra, ex.splice_points, ex.classifier_states);
  }
  const auto out = model.decode(tape, ex.ids, memory ? &*memory : nullptr);
  ExampleLoss l;
  l.gen = ag::scale(loss_generation(out.logits, ex.targets), 1.0 / static_cast<double>(ex.query_rows.size()));
  if (abl.use_attention_loss && ex.span_end > ex.span_begin) {
    l.attention = attention_per_token(out.attention, ex.query_rows, ex.span_begin, ex.span_end);
    l.emo = loss_emotion(l.attention, ex.eta_emo);
    l.kw = loss_keyword(l.attention, ex.eta_kw);
  } else {
    l.emo = tape.constant(scalar(0.0));
    l.kw = tape.constant(scalar(0.0));
  }
  l.total = joint_loss(l.gen, l.emo, l.kw, w);
  return l;
}

void TrainReport::write_jsonl(std::ostream& out) const {
  for (const auto& s : steps) {
    out << nlohmann::json{{"step", s.step}, {"gen", s.gen},   {"emo", s.emo},
                          {"kw", s.kw},     {"total", s.total}, {"lr", s.lr}, {"grad_norm", s.grad_norm}}
               .dump()
        << '\n';
  }
  for (const auto& e : evals) out << e.dump() << '\n';
  out << nlohmann::json{{"seconds", seconds},
                        {"seed", seed},
                        {"gamma1", weights.gamma1},
                        {"gamma2", weights.gamma2},
                        {"gamma3", weights.gamma3}}
             .dump()
      << '\n';
}

GeneratorModel train_decoder(const std::vector<DecoderExample>& examples, const ModelConfig& cfg,
                             const DecoderOptions& opts, const AblationConfig& abl, std::uint64_t seed,
                             TrainReport* report) {
  if (examples.empty()) throw TrainingError(TrainingError::Kind::MissingArtifact, "no decoder training examples");
  const auto t0 = std::chrono::steady_clock::now();
  GeneratorModel model(cfg, abl.use_cross_attention_splice, seed);
  AdamW opt(opts.optimizer);
  LossWeights w = opts.weights;
  if (!abl.use_attention_loss) w.gamma2 = w.gamma3 = 0.0;
  if (report != nullptr) {
    *report = {};
    report->seed = seed;
    report->weights = w;
  }
  std::mt19937_64 rng(seed ^ 0xd1b54a32d192ed03ULL);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;
  const int batch = std::max(opts.batch_size, 1);

  for (long step = 1; step <= opts.steps; ++step) {
    double gen = 0.0, emo = 0.0, kw = 0.0, total = 0.0;
    for (int b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const DecoderExample& ex = examples[order[cursor++]];
      ag::Tape tape;
      const ExampleLoss l = example_loss(tape, model, ex, w, abl);
      check_finite(l.total.scalar(), "joint loss", step);
      gen += l.gen.scalar();
      emo += l.emo.scalar();
      kw += l.kw.scalar();
      total += l.total.scalar();
      tape.backward(l.total, 1.0 / batch);
    }
    opt.step(model.params);
    if (report != nullptr) {
      StepRecord r;
      r.step = step;
      r.gen = gen / batch;
      r.emo = emo / batch;
      r.kw = kw / batch;
      r.total = total / batch;
      r.lr = opt.last_lr();
      r.grad_norm = opt.last_grad_norm();
      report->steps.push_back(r);
    }
  }
  if (report != nullptr) report->seconds = seconds_since(t0);
  return model;
}

}  // namespace csd
