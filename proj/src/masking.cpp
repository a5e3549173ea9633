#include "csd/masking.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace csd::masking {

MaskSchedule keyword_schedule() {
  MaskSchedule s;
  s.lambdas = {0.9, 0.9, 0.9, 0.9, 0.4};
  return s;
}

MaskSchedule emotion_schedule() {
  MaskSchedule s;
  s.lambdas = {0.5, 0.5, 0.4, 0.3, 0.2};
  return s;
}

void validate(const MaskSchedule& s) {
  for (double l : s.lambdas) {
    if (l < 0.0 || l > 1.0) throw std::invalid_argument("mask lambdas must lie in [0, 1]");
  }
  double prev = 0.0;
  for (double b : s.stage_boundaries) {
    if (!(b > prev)) throw std::invalid_argument("stage boundaries must be strictly increasing");
    prev = b;
  }
  if (std::abs(s.stage_boundaries.back() - 1.0) > 1e-12) throw std::invalid_argument("last stage boundary must be 1");
  if (std::abs(s.split_mask + s.split_random + s.split_keep - 1.0) > 1e-9) {
    throw std::invalid_argument("mask/random/keep split must sum to 1");
  }
  if (s.base_mask_rate < 0.0 || s.base_mask_rate > 1.0 || s.classic_token_rate < 0.0 || s.classic_token_rate > 1.0) {
    throw std::invalid_argument("mask rates must lie in [0, 1]");
  }
}

int current_stage(long step, long total, const MaskSchedule& s) {
  if (total <= 0) return 1;
  const double frac = static_cast<double>(std::clamp(step, 0L, total - 1)) / static_cast<double>(total);
  for (int k = 0; k < kStages; ++k) {
    if (frac < s.stage_boundaries[static_cast<std::size_t>(k)]) return k + 1;
  }
  return kStages;
}

PretrainSequence make_pretrain_sequence(std::span<const std::string> a, std::span<const std::string> b,
                                        const Vocabulary& vocab) {
  PretrainSequence seq;
  auto push = [&](int id, const std::string& tok, int seg) {
    seq.ids.push_back(id);
    seq.tokens.push_back(tok);
    seq.segment_ids.push_back(seg);
  };
  push(Vocabulary::kCls, vocab.token(Vocabulary::kCls), 0);
  const std::size_t a_begin = seq.ids.size();
  for (const auto& t : a) push(vocab.id(t), t, 0);
  seq.parts.emplace_back(a_begin, seq.ids.size());
  push(Vocabulary::kSep, vocab.token(Vocabulary::kSep), 0);
  if (!b.empty()) {
    const std::size_t b_begin = seq.ids.size();
    for (const auto& t : b) push(vocab.id(t), t, 1);
    seq.parts.emplace_back(b_begin, seq.ids.size());
    push(Vocabulary::kSep, vocab.token(Vocabulary::kSep), 1);
  }
  return seq;
}

namespace {

double uniform01(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

int random_text_token(const Vocabulary& vocab, std::mt19937_64& rng, int fallback) {
  if (vocab.size() <= vocab.first_text_id()) return fallback;
  return std::uniform_int_distribution<int>(vocab.first_text_id(), vocab.size() - 1)(rng);
}

void perturb(MaskedExample& ex, const PretrainSequence& seq, std::size_t begin, std::size_t len, MaskKind kind,
             const MaskSchedule& sched, const Vocabulary& vocab, std::mt19937_64& rng, bool always_mask) {
  double r = always_mask ? 0.0 : uniform01(rng);
  for (std::size_t p = begin; p < begin + len; ++p) {
    ex.mlm_targets[static_cast<int>(p)] = seq.ids[p];
    if (r < sched.split_mask) {
      ex.input_ids[p] = Vocabulary::kMask;
    } else if (r < sched.split_mask + sched.split_random) {
      ex.input_ids[p] = random_text_token(vocab, rng, seq.ids[p]);
    }
  }
  ex.spans.push_back({begin, len, kind});
}

}  // namespace

MaskedExample mask_example(const PretrainSequence& seq, const knowledge::KnowledgeDict& dict, int stage,
                           const MaskSchedule& sched, const Vocabulary& vocab, std::mt19937_64& rng) {
  MaskedExample ex;
  ex.input_ids = seq.ids;
  ex.segment_ids = seq.segment_ids;
  ex.nsp_label = seq.nsp_label;
  ex.stage = std::clamp(stage, 1, kStages);
  const std::span<const std::string> toks(seq.tokens);

  if (!sched.progressive) {
    for (const auto& [b, e] : seq.parts) {
      for (std::size_t p = b; p < e; ++p) {
        if (uniform01(rng) < sched.classic_token_rate) perturb(ex, seq, p, 1, MaskKind::Token, sched, vocab, rng, false);
      }
    }
    return ex;
  }

  std::vector<bool> taken(seq.ids.size(), false);
  const std::size_t si = static_cast<std::size_t>(ex.stage - 1);
  const double lambda = sched.lambdas[si];

  for (const auto& [b, e] : seq.parts) {
    if (ex.stage == kStages) {
      if (e > b && dict.contains_sentence(toks.subspan(b, e - b))) {
        ++ex.eligible[si];
        if (uniform01(rng) < lambda) {
          ++ex.masked[si];
          perturb(ex, seq, b, e - b, MaskKind::Progressive, sched, vocab, rng, true);
          std::fill(taken.begin() + static_cast<std::ptrdiff_t>(b), taken.begin() + static_cast<std::ptrdiff_t>(e), true);
        }
      }
      continue;
    }
    const auto k = static_cast<std::size_t>(ex.stage);
    std::size_t i = b;
    while (i + k <= e) {
      if (dict.contains_entity(toks.subspan(i, k))) {
        ++ex.eligible[si];
        if (uniform01(rng) < lambda) {
          ++ex.masked[si];
          perturb(ex, seq, i, k, MaskKind::Progressive, sched, vocab, rng, true);
          for (std::size_t p = i; p < i + k; ++p) taken[p] = true;
        }
        i += k;
      } else {
        ++i;
      }
    }
  }

  if (sched.base_mask_rate <= 0.0) return ex;

  // Pool for the classic 80/10/10 selection: untouched entities (longest match
  // first) or untouched single tokens.
  std::vector<std::pair<std::size_t, std::size_t>> pool;
  for (const auto& [b, e] : seq.parts) {
    std::size_t i = b;
    while (i < e) {
      if (taken[i]) {
        ++i;
        continue;
      }
      if (sched.base_on_tokens) {
        pool.emplace_back(i, 1);
        ++i;
        continue;
      }
      std::size_t len = 0;
      for (std::size_t l = std::min<std::size_t>(knowledge::kMaxEntityTokens, e - i); l >= 1; --l) {
        bool free = true;
        for (std::size_t p = i; p < i + l; ++p) free = free && !taken[p];
        if (free && dict.contains_entity(toks.subspan(i, l))) {
          len = l;
          break;
        }
      }
      if (len > 0) {
        pool.emplace_back(i, len);
        i += len;
      } else {
        ++i;
      }
    }
  }
  if (pool.empty()) return ex;
  std::size_t count = static_cast<std::size_t>(std::floor(static_cast<double>(pool.size()) * sched.base_mask_rate));
  count = std::max<std::size_t>(count, 1);
  for (std::size_t j = 0; j < count; ++j) {
    const std::size_t pick = std::uniform_int_distribution<std::size_t>(j, pool.size() - 1)(rng);
    std::swap(pool[j], pool[pick]);
    perturb(ex, seq, pool[j].first, pool[j].second, MaskKind::Classic, sched, vocab, rng, false);
  }
  return ex;
}

NspPair make_nsp_pair(const Corpus& corpus, std::mt19937_64& rng, std::optional<bool> force) {
  const std::size_t n = corpus.conversations.size();
  if (n == 0) throw std::invalid_argument("NSP pairs need a non-empty corpus");
  const bool is_next = force ? *force : uniform01(rng) < 0.5;
  NspPair p;
  p.is_next = is_next;
  p.conv_a = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  const std::size_t len_a = corpus.conversations[p.conv_a].utterances.size();
  if (is_next) {
    if (len_a < 2) throw std::invalid_argument("conversation too short for a consecutive pair");
    p.utt_a = std::uniform_int_distribution<std::size_t>(0, len_a - 2)(rng);
    p.conv_b = p.conv_a;
    p.utt_b = p.utt_a + 1;
    return p;
  }
  if (n < 2) throw std::invalid_argument("random NSP pairs need at least two conversations");
  p.utt_a = std::uniform_int_distribution<std::size_t>(0, len_a - 1)(rng);
  std::size_t other = std::uniform_int_distribution<std::size_t>(0, n - 2)(rng);
  if (other >= p.conv_a) ++other;
  p.conv_b = other;
  const std::size_t len_b = corpus.conversations[p.conv_b].utterances.size();
  p.utt_b = std::uniform_int_distribution<std::size_t>(0, len_b - 1)(rng);
  return p;
}

MaskRates measure_mask_rate(std::span<const MaskedExample> examples) {
  MaskRates r;
  for (const auto& ex : examples) {
    for (int k = 0; k < kStages; ++k) r.eligible[static_cast<std::size_t>(k)] += ex.eligible[static_cast<std::size_t>(k)];
    const auto si = static_cast<std::size_t>(std::clamp(ex.stage, 1, kStages) - 1);
    for (const auto& s : ex.spans) {
      if (s.kind == MaskKind::Progressive) ++r.masked[si];
    }
  }
  for (int k = 0; k < kStages; ++k) {
    const auto i = static_cast<std::size_t>(k);
    r.ratio[i] = r.eligible[i] > 0 ? static_cast<double>(r.masked[i]) / static_cast<double>(r.eligible[i]) : 0.0;
  }
  return r;
}

}  // namespace csd::masking
