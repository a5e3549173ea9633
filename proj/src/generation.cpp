#include "csd/generation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "csd/text.hpp"

namespace csd {

void GenerationParams::validate() const {
  if (!greedy && !(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (top_k < 0) throw std::invalid_argument("top_k must be non-negative");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("top_p must lie in (0, 1]");
  if (max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be at least 1");
  if (min_new_tokens < 0) throw std::invalid_argument("min_new_tokens must be non-negative");
}

std::vector<double> filter_logits(std::span<const double> logits, const GenerationParams& params) {
  params.validate();
  const double temp = params.greedy ? 1.0 : params.temperature;
  std::vector<int> order;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (logits[i] != -std::numeric_limits<double>::infinity()) order.push_back(static_cast<int>(i));
  }
  std::vector<double> out(logits.size(), 0.0);
  if (order.empty()) return out;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return logits[a] > logits[b]; });
  if (params.greedy) {
    out[static_cast<std::size_t>(order.front())] = 1.0;
    return out;
  }
  if (params.top_k > 0 && order.size() > static_cast<std::size_t>(params.top_k)) order.resize(params.top_k);

  const double mx = logits[order.front()] / temp;
  std::vector<double> p(order.size());
  double z = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    p[i] = std::exp(logits[order[i]] / temp - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;

  std::size_t keep = 0;
  double cum = 0.0;
  while (keep < p.size()) {
    cum += p[keep];
    ++keep;
    if (cum >= params.top_p) break;
  }
  const double mass = std::accumulate(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(keep), 0.0);
  for (std::size_t i = 0; i < keep; ++i) out[static_cast<std::size_t>(order[i])] = p[i] / mass;
  return out;
}

std::vector<LabelTriple> predict_context_labels(const Conversation& context, ModelBundle& bundle) {
  std::vector<LabelTriple> labels;
  labels.reserve(context.utterances.size());
  for (std::size_t i = 0; i < context.utterances.size(); ++i) {
    labels.push_back(bundle.classifiers.predict(context, i, bundle.vocab));
  }
  return labels;
}

GeneratedResponse sample_response(const Conversation& context, ModelBundle& bundle, const GenerationParams& params,
                                  std::span<const LabelTriple> labels) {
  params.validate();
  GeneratedResponse r;
  if (labels.empty()) {
    r.context_labels = predict_context_labels(context, bundle);
  } else {
    if (labels.size() < context.utterances.size()) throw std::invalid_argument("one label triple per utterance");
    r.context_labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(context.utterances.size()));
  }
  for (std::size_t i = context.utterances.size(); i-- > 0;) {
    if (context.utterances[i].role == Role::Speaker) {
      r.labels = r.context_labels[i];
      break;
    }
  }

  const Vocabulary& vocab = bundle.vocab;
  const ModelConfig& cfg = bundle.config;
  const int budget = std::min(params.max_new_tokens, std::max(cfg.max_len - 2, 1));
  const DecoderInput in = build_decoder_input(context, context.utterances.size(), r.context_labels, vocab,
                                              cfg.max_len, budget, bundle.ablation.use_input_labels);

  // Encoder memory is computed once and replayed as a constant at every step.
  ag::Matrix memory;
  std::vector<bool> memory_mask;
  std::vector<SplicePoint> points;
  if (bundle.generator.cross_attention()) {
    ag::Tape t(false);
    const EncoderStates extra = bundle.generator.extra_encode(t, in.ids, in.segment_ids);
    ag::Matrix states;
    if (bundle.ablation.use_input_labels) {
      points = locate_label_positions(in.ids, vocab);
      states = ag::Matrix(static_cast<Eigen::Index>(points.size()), cfg.d_model);
      for (std::size_t s = 0; s < in.spans.size(); ++s) {
        states.middleRows(static_cast<Eigen::Index>(3 * s), 3) =
            bundle.classifiers.states(context, in.spans[s].utterance, vocab);
      }
    }
    const SplicedStates sp = splice_hidden_states(extra, points, states);
    memory = sp.hidden.value();
    memory_mask = sp.attention_mask;
  }

  std::vector<bool> banned(static_cast<std::size_t>(vocab.size()), false);
  for (int id = 0; id < vocab.first_text_id(); ++id) banned[static_cast<std::size_t>(id)] = id != Vocabulary::kSep;

  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<int> ids = in.ids;
  for (int step = 0; step < budget; ++step) {
    ag::Tape t(false);
    SplicedStates mem;
    if (bundle.generator.cross_attention()) {
      mem.hidden = t.constant(memory);
      mem.attention_mask = memory_mask;
      mem.replaced_positions = points;
    }
    const auto out = bundle.generator.decode(t, ids, bundle.generator.cross_attention() ? &mem : nullptr);
    const auto& lv = out.logits.value();
    std::vector<double> logits(static_cast<std::size_t>(lv.cols()));
    for (Eigen::Index c = 0; c < lv.cols(); ++c) {
      logits[static_cast<std::size_t>(c)] =
          banned[static_cast<std::size_t>(c)] ? -std::numeric_limits<double>::infinity() : lv(lv.rows() - 1, c);
    }
    if (step < params.min_new_tokens) logits[Vocabulary::kSep] = -std::numeric_limits<double>::infinity();
    const std::vector<double> dist = filter_logits(logits, params);
    StepAudit audit;
    for (std::size_t i = 0; i < dist.size(); ++i) {
      if (dist[i] > 0.0) audit.support.push_back(static_cast<int>(i));
    }
    int chosen = audit.support.back();
    const double x = u01(rng);
    double cum = 0.0;
    for (int id : audit.support) {
      cum += dist[static_cast<std::size_t>(id)];
      if (x < cum) {
        chosen = id;
        break;
      }
    }
    audit.chosen = chosen;
    r.audit.push_back(std::move(audit));
    if (chosen == Vocabulary::kSep) break;
    r.ids.push_back(chosen);
    r.tokens.push_back(vocab.token(chosen));
    ids.push_back(chosen);
  }
  r.text = text::detokenize(r.tokens);
  return r;
}

}  // namespace csd
