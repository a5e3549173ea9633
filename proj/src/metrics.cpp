#include "csd/metrics.hpp"

#include <cfloat>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "csd/text.hpp"

namespace csd {

namespace {

using NGram = std::vector<std::string>;

std::map<NGram, long> ngram_counts(const TokenSeq& s, int n) {
  std::map<NGram, long> c;
  if (static_cast<int>(s.size()) < n) return c;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i) {
    ++c[NGram(s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  }
  return c;
}

/// Unreduced fraction, kept as two integers.
struct Precision {
  long num = 0;
  long den = 1;
};

Precision modified_precision(const std::vector<TokenSeq>& refs, const TokenSeq& hyp, int n) {
  const auto counts = ngram_counts(hyp, n);
  std::map<NGram, long> max_ref;
  for (const auto& r : refs) {
    const auto rc = ngram_counts(r, n);
    for (const auto& [g, _] : counts) {
      const auto it = rc.find(g);
      max_ref[g] = std::max(max_ref[g], it == rc.end() ? 0L : it->second);
    }
  }
  Precision p;
  long total = 0;
  for (const auto& [g, c] : counts) {
    p.num += std::min(c, max_ref[g]);
    total += c;
  }
  p.den = std::max(1L, total);
  return p;
}

std::size_t closest_ref_length(const std::vector<TokenSeq>& refs, std::size_t hyp_len) {
  std::size_t best = refs.front().size();
  for (const auto& r : refs) {
    const auto d = [&](std::size_t l) { return l > hyp_len ? l - hyp_len : hyp_len - l; };
    if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
  }
  return best;
}

}  // namespace

double corpus_bleu(const std::vector<std::vector<TokenSeq>>& references, const std::vector<TokenSeq>& candidates,
                   int n, int smoothing) {
  if (candidates.empty()) throw MetricError(MetricError::Kind::EmptyInput, "BLEU needs at least one candidate");
  if (references.size() != candidates.size()) {
    throw MetricError(MetricError::Kind::LengthMismatch, "one reference list per candidate is required");
  }
  if (n < 1) throw MetricError(MetricError::Kind::BadArgument, "BLEU order must be positive");
  if (smoothing != 0 && smoothing != 7) {
    throw MetricError(MetricError::Kind::BadArgument, "supported smoothing ids are 0 and 7");
  }
  for (const auto& r : references) {
    if (r.empty()) throw MetricError(MetricError::Kind::EmptyInput, "every candidate needs a reference");
  }

  std::vector<long> num(static_cast<std::size_t>(n), 0), den(static_cast<std::size_t>(n), 0);
  std::size_t hyp_total = 0, ref_total = 0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    for (int i = 1; i <= n; ++i) {
      const Precision p = modified_precision(references[k], candidates[k], i);
      num[static_cast<std::size_t>(i - 1)] += p.num;
      den[static_cast<std::size_t>(i - 1)] += p.den;
    }
    hyp_total += candidates[k].size();
    ref_total += closest_ref_length(references[k], candidates[k].size());
  }
  double bp;
  if (hyp_total > ref_total) {
    bp = 1.0;
  } else if (hyp_total == 0) {
    bp = 0.0;
  } else {
    bp = std::exp(1.0 - static_cast<double>(ref_total) / static_cast<double>(hyp_total));
  }
  if (num[0] == 0) return 0.0;

  std::vector<double> p(static_cast<std::size_t>(n));
  if (smoothing == 0) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = num[i] != 0 ? static_cast<double>(num[i]) / static_cast<double>(den[i]) : DBL_MIN;
    }
  } else {
    // Method 4: geometric replacement for zero counts, scaled by the corpus
    // hypothesis length.
    int incvnt = 1;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (num[i] == 0 && hyp_total > 1) {
        const double numerator = 1.0 / (std::pow(2.0, incvnt) * 5.0 / std::log(static_cast<double>(hyp_total)));
        p[i] = numerator / static_cast<double>(den[i]);
        ++incvnt;
      } else {
        p[i] = static_cast<double>(num[i]) / static_cast<double>(den[i]);
      }
    }
    // Method 5: average each precision with its neighbours. The order above
    // the highest one is the 5-gram precision of the final pair, as in NLTK.
    const Precision p5 = modified_precision(references.back(), candidates.back(), 5);
    std::vector<double> next(p);
    next.push_back(static_cast<double>(p5.num) / static_cast<double>(p5.den));
    double prev = p[0] + 1.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = (prev + p[i] + next[i + 1]) / 3.0;
      prev = p[i];
    }
  }
  double s = 0.0;
  const double w = 1.0 / static_cast<double>(n);
  for (double v : p) {
    if (v > 0.0) s += w * std::log(v);
  }
  return bp * std::exp(s);
}

double bleu_n(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references, int n, int smoothing) {
  std::vector<std::vector<TokenSeq>> refs;
  refs.reserve(references.size());
  for (const auto& r : references) refs.push_back({r});
  return corpus_bleu(refs, candidates, n, smoothing);
}

double distinct_n(const std::vector<TokenSeq>& candidates, int n) {
  if (candidates.empty()) throw MetricError(MetricError::Kind::EmptyInput, "distinct-n needs candidates");
  if (n < 1) throw MetricError(MetricError::Kind::BadArgument, "distinct-n order must be positive");
  std::set<NGram> unique;
  std::size_t total = 0;
  for (const auto& c : candidates) {
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= c.size(); ++i) {
      unique.emplace(c.begin() + static_cast<std::ptrdiff_t>(i), c.begin() + static_cast<std::ptrdiff_t>(i) + n);
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(unique.size()) / static_cast<double>(total);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json acc = nlohmann::json::object();
  for (const auto& [t, v] : accuracy) acc[std::string(taxonomy_name(t))] = v;
  return {{"bleu2", bleu2},         {"bleu4", bleu4},         {"bleu2_raw", bleu2_raw}, {"bleu4_raw", bleu4_raw},
          {"distinct1", distinct1}, {"distinct2", distinct2}, {"accuracy", acc},        {"n_examples", n_examples}};
}

bool EvalReport::complete() const {
  for (double v : {bleu2, bleu4, bleu2_raw, bleu4_raw, distinct1, distinct2}) {
    if (!std::isfinite(v) || v < 0.0) return false;
  }
  if (bleu2_raw > 1.0 || bleu4_raw > 1.0 || distinct1 > 1.0 || distinct2 > 1.0) return false;
  if (accuracy.size() != kTaxonomies.size()) return false;
  for (const auto& [t, v] : accuracy) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
  }
  return n_examples > 0;
}

EvalReport run_eval(const Corpus& test, ModelBundle& bundle, const GenerationParams& params,
                    std::vector<TranscriptEntry>* transcript) {
  const Tokenizer tok = default_tokenizer();
  std::vector<TokenSeq> cands, refs;
  std::map<Taxonomy, std::vector<int>> pred, gold;
  for (std::size_t c = 0; c < test.conversations.size(); ++c) {
    const Conversation& conv = test.conversations[c];
    for (std::size_t i = 0; i < conv.utterances.size(); ++i) {
      const LabelTriple l = bundle.classifiers.predict(conv, i, bundle.vocab);
      for (Taxonomy t : kTaxonomies) {
        pred[t].push_back(l.index(t));
        gold[t].push_back(conv.utterances[i].labels().index(t));
      }
    }
    for (std::size_t i = 1; i < conv.utterances.size(); ++i) {
      if (conv.utterances[i].role != Role::Listener) continue;
      Conversation ctx;
      ctx.utterances.assign(conv.utterances.begin(), conv.utterances.begin() + static_cast<std::ptrdiff_t>(i));
      GenerationParams p = params;
      p.seed = params.seed + cands.size();
      const GeneratedResponse g = sample_response(ctx, bundle, p);
      cands.push_back(g.tokens);
      refs.push_back(tok(conv.utterances[i].text));
      if (transcript != nullptr) {
        std::string context;
        for (const auto& u : ctx.utterances) context += std::string(to_string(u.role)) + ": " + u.text + "\n";
        transcript->push_back({c, i, context, conv.utterances[i].text, g.text, g.labels});
      }
    }
  }
  EvalReport r;
  r.n_examples = static_cast<int>(cands.size());
  if (!cands.empty()) {
    r.bleu2 = bleu_n(cands, refs, 2, 7);
    r.bleu4 = bleu_n(cands, refs, 4, 7);
    r.bleu2_raw = bleu_n(cands, refs, 2, 0);
    r.bleu4_raw = bleu_n(cands, refs, 4, 0);
    r.distinct1 = distinct_n(cands, 1);
    r.distinct2 = distinct_n(cands, 2);
  }
  for (Taxonomy t : kTaxonomies) {
    if (!gold[t].empty()) r.accuracy[t] = classification_accuracy(pred[t], gold[t]);
  }
  return r;
}

void write_eval_report(const EvalReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write eval report: " + path);
  out << r.to_json().dump(2) << '\n';
}

void write_transcript(const std::vector<TranscriptEntry>& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write transcript: " + path);
  for (const auto& e : t) {
    out << nlohmann::json{{"conversation", e.conversation},
                          {"turn", e.turn},
                          {"context", e.context},
                          {"reference", e.reference},
                          {"generated", e.generated},
                          {"cs", std::string(to_string(e.labels.cs))},
                          {"emotion", std::string(to_string(e.labels.emo))},
                          {"strategy", std::string(to_string(e.labels.strategy))}}
               .dump()
        << '\n';
  }
}

}  // namespace csd
